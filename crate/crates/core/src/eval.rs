//! Ranking metrics, a popularity baseline and latent-user-count analysis.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::dataset::{Dataset, SyntheticGroundTruth};
use crate::error::{Error, Result};
use crate::model::{Model, Propagated};

/// 1-based rank of `target` when items are sorted by descending score, ties by
/// ascending item id.
pub fn rank_of(scores: &[f64], target: usize) -> usize {
    let t = scores[target];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(j, &s)| s > t || (s == t && j < target))
        .count()
}

pub fn recall_at_k(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0
    } else {
        0.0
    }
}

pub fn mrr_at_k(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0 / rank as f64
    } else {
        0.0
    }
}

/// Recall@K and MRR@K in percent.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub ks: Vec<usize>,
    pub recall: Vec<f64>,
    pub mrr: Vec<f64>,
    pub samples: usize,
}

impl MetricReport {
    pub fn from_ranks(ranks: &[usize], ks: &[usize]) -> MetricReport {
        let n = ranks.len().max(1) as f64;
        let mean = |f: fn(usize, usize) -> f64, k: usize| {
            100.0 * ranks.iter().map(|&r| f(r, k)).sum::<f64>() / n
        };
        MetricReport {
            ks: ks.to_vec(),
            recall: ks.iter().map(|&k| mean(recall_at_k, k)).collect(),
            mrr: ks.iter().map(|&k| mean(mrr_at_k, k)).collect(),
            samples: ranks.len(),
        }
    }

    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.recall[i])
    }

    pub fn mrr_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.mrr[i])
    }

    /// `metric,k,value` rows (two decimals) under `# `-prefixed comment lines.
    pub fn to_csv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            let _ = writeln!(out, "# {c}");
        }
        out.push_str("metric,k,value\n");
        for (i, k) in self.ks.iter().enumerate() {
            let _ = writeln!(out, "recall,{k},{:.2}", self.recall[i]);
        }
        for (i, k) in self.ks.iter().enumerate() {
            let _ = writeln!(out, "mrr,{k},{:.2}", self.mrr[i]);
        }
        out
    }
}

/// Metrics from a score row per sample.
pub fn evaluate_scores(scores: &[Vec<f64>], targets: &[usize], ks: &[usize]) -> MetricReport {
    let ranks: Vec<usize> = scores
        .iter()
        .zip(targets)
        .map(|(s, &t)| rank_of(s, t))
        .collect();
    MetricReport::from_ranks(&ranks, ks)
}

/// Ranks every test target against all items by the model's probabilities.
pub fn evaluate(
    model: &Model,
    prop: &Propagated,
    test: &Dataset,
    ks: &[usize],
) -> Result<MetricReport> {
    let ranks = test
        .sequences
        .par_iter()
        .map(|s| {
            let p = model.forward(prop, s.account, &s.items)?;
            Ok(rank_of(&p.probs, s.target))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::from_ranks(&ranks, ks))
}

/// Items by descending training frequency (inputs and targets), ties by id.
pub fn popularity_baseline(train: &Dataset) -> Result<Vec<usize>> {
    if train.is_empty() {
        return Err(Error::InvalidInput("popularity needs training data".into()));
    }
    let mut counts = vec![0usize; train.n_items];
    for s in &train.sequences {
        for &i in s.items.iter().chain(std::iter::once(&s.target)) {
            counts[i] += 1;
        }
    }
    Ok(ranking_from_counts(&counts))
}

pub fn ranking_from_counts(counts: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    order
}

/// Metrics of one fixed ranking applied to every test sequence.
pub fn evaluate_ranking(ranking: &[usize], test: &Dataset, ks: &[usize]) -> MetricReport {
    let mut position = vec![usize::MAX; test.n_items];
    for (p, &item) in ranking.iter().enumerate() {
        position[item] = p + 1;
    }
    let ranks: Vec<usize> = test.sequences.iter().map(|s| position[s.target]).collect();
    MetricReport::from_ranks(&ranks, ks)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CountRow {
    pub account: usize,
    pub inferred: usize,
    pub truth: Option<usize>,
}

/// Inferred user counts per account against the generator's truth.
#[derive(Clone, Debug, PartialEq)]
pub struct CountReport {
    pub rows: Vec<CountRow>,
    /// Spearman correlation of inferred vs. true counts (0 when degenerate).
    pub spearman: f64,
    /// Set when either side has zero variance or no truth is available.
    pub degenerate: bool,
    /// Percentage of accounts whose inferred count equals the true one.
    pub exact_match: Option<f64>,
}

impl CountReport {
    pub fn from_rows(rows: Vec<CountRow>) -> CountReport {
        let paired: Vec<(f64, f64)> = rows
            .iter()
            .filter_map(|r| r.truth.map(|k| (r.inferred as f64, k as f64)))
            .collect();
        let (xs, ys): (Vec<f64>, Vec<f64>) = paired.iter().copied().unzip();
        let rho = spearman(&xs, &ys);
        let exact_match = (!paired.is_empty()).then(|| {
            100.0 * paired.iter().filter(|(x, y)| x == y).count() as f64 / paired.len() as f64
        });
        CountReport {
            rows,
            spearman: rho.unwrap_or(0.0),
            degenerate: rho.is_none(),
            exact_match,
        }
    }

    pub fn inferred_is_constant(&self) -> bool {
        self.rows.windows(2).all(|w| w[0].inferred == w[1].inferred)
    }

    /// CSV `account_id,inferred_T,true_K` (empty `true_K` without truth).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("account_id,inferred_T,true_K\n");
        for r in &self.rows {
            let k = r.truth.map(|k| k.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{k}", r.account, r.inferred);
        }
        out
    }
}

/// Average ranks (1-based), ties share their mean rank.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation; `None` when either input has zero variance.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let mean = (x.len() as f64 + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mean) * (b - mean);
        sxx += (a - mean) * (a - mean);
        syy += (b - mean) * (b - mean);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Reasoning depth `T` per account (lower median over the account's
/// sequences), paired with the true user count when available.
pub fn latent_user_report(
    model: &Model,
    prop: &Propagated,
    dataset: &Dataset,
    truth: Option<&SyntheticGroundTruth>,
) -> Result<CountReport> {
    let steps = dataset
        .sequences
        .par_iter()
        .map(|s| model.trace(prop, s.account, &s.items).map(|t| t.steps()))
        .collect::<Result<Vec<_>>>()?;
    let mut per_account: Vec<Vec<usize>> = vec![Vec::new(); dataset.n_accounts];
    for (s, t) in dataset.sequences.iter().zip(steps) {
        per_account[s.account].push(t);
    }
    let known = truth.map(|t| t.k_by_account(dataset.n_accounts));
    let rows = per_account
        .into_iter()
        .enumerate()
        .filter(|(_, ts)| !ts.is_empty())
        .map(|(account, mut ts)| {
            ts.sort_unstable();
            CountRow {
                account,
                inferred: ts[(ts.len() - 1) / 2],
                truth: known.as_ref().and_then(|k| k[account]),
            }
        })
        .collect();
    Ok(CountReport::from_rows(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Sequence;
    use proptest::prelude::*;

    #[test]
    fn metric_examples() {
        assert_eq!(recall_at_k(1, 5), 1.0);
        assert_eq!(recall_at_k(6, 5), 0.0);
        assert_eq!(recall_at_k(20, 20), 1.0);
        assert_eq!(mrr_at_k(1, 5), 1.0);
        assert!((mrr_at_k(3, 5) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(mrr_at_k(6, 5), 0.0);
    }

    #[test]
    fn report_examples() {
        let r = MetricReport::from_ranks(&[1, 1, 1], &[5, 20]);
        assert_eq!((r.recall_at(5), r.mrr_at(5)), (Some(100.0), Some(100.0)));
        let r = MetricReport::from_ranks(&[21, 50], &[5, 20]);
        assert_eq!(r.recall, vec![0.0, 0.0]);
        assert_eq!(r.mrr, vec![0.0, 0.0]);
        let r = MetricReport::from_ranks(&[1, 4], &[5]);
        assert_eq!(r.recall_at(5), Some(100.0));
        assert!((r.mrr_at(5).unwrap() - 62.5).abs() < 1e-12);
        assert_eq!(
            r.to_csv(&["seed=1".into()]),
            "# seed=1\nmetric,k,value\nrecall,5,100.00\nmrr,5,62.50\n"
        );
    }

    #[test]
    fn ties_break_by_item_id() {
        assert_eq!(rank_of(&[0.5, 0.5, 0.5], 0), 1);
        assert_eq!(rank_of(&[0.5, 0.5, 0.5], 2), 3);
        assert_eq!(rank_of(&[0.1, 0.7, 0.2], 2), 2);
    }

    fn ds(items: &[&[usize]], n_items: usize) -> Dataset {
        Dataset::new(
            n_items,
            items.len(),
            items
                .iter()
                .enumerate()
                .map(|(a, s)| Sequence {
                    account: a,
                    items: s[..s.len() - 1].to_vec(),
                    target: s[s.len() - 1],
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn popularity_cases() {
        let d = ds(&[&[0, 0, 0, 1, 1], &[0, 0, 1, 2]], 3);
        assert_eq!(popularity_baseline(&d).unwrap(), vec![0, 1, 2]);
        assert_eq!(ranking_from_counts(&[2, 2, 2]), vec![0, 1, 2]);
        let d = ds(&[&[3, 3, 1]], 4);
        assert_eq!(popularity_baseline(&d).unwrap(), vec![3, 1, 0, 2]);
        let test = ds(&[&[0, 2]], 4);
        assert_eq!(
            evaluate_ranking(&[3, 1, 0, 2], &test, &[5]).mrr_at(5),
            Some(25.0)
        );
        assert!(popularity_baseline(&Dataset::new(3, 1, vec![]).unwrap()).is_err());
    }

    #[test]
    fn count_report_cases() {
        let rows = |pairs: &[(usize, usize)]| -> Vec<CountRow> {
            pairs
                .iter()
                .enumerate()
                .map(|(a, &(t, k))| CountRow {
                    account: a,
                    inferred: t,
                    truth: Some(k),
                })
                .collect()
        };
        let r = CountReport::from_rows(rows(&[(1, 1), (2, 2), (3, 3)]));
        assert!((r.spearman - 1.0).abs() < 1e-12);
        assert_eq!(r.exact_match, Some(100.0));
        let r = CountReport::from_rows(rows(&[(2, 1), (2, 2), (2, 3)]));
        assert_eq!((r.spearman, r.degenerate), (0.0, true));
        assert!(r.inferred_is_constant());
        let r = CountReport::from_rows(rows(&[(3, 1), (2, 2), (1, 3)]));
        assert!((r.spearman + 1.0).abs() < 1e-12);
        assert_eq!(
            r.to_csv(),
            "account_id,inferred_T,true_K\n0,3,1\n1,2,2\n2,1,3\n"
        );
    }

    #[test]
    fn spearman_with_ties_matches_pearson_on_ranks() {
        let x = [1.0, 2.0, 2.0, 3.0];
        let y = [1.0, 1.0, 2.0, 2.0];
        // ranks x: 1, 2.5, 2.5, 4; y: 1.5, 1.5, 3.5, 3.5 -> rho = 3/√18
        let expected = 1.0 / 2f64.sqrt();
        assert!((spearman(&x, &y).unwrap() - expected).abs() < 1e-12);
    }

    fn brute_force(scores: &[Vec<f64>], targets: &[usize], k: usize) -> (f64, f64) {
        let mut recall = 0.0;
        let mut mrr = 0.0;
        for (s, &t) in scores.iter().zip(targets) {
            let mut order: Vec<usize> = (0..s.len()).collect();
            order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap().then(a.cmp(&b)));
            let pos = order.iter().position(|&i| i == t).unwrap() + 1;
            if pos <= k {
                recall += 1.0;
                mrr += 1.0 / pos as f64;
            }
        }
        let n = scores.len() as f64;
        (100.0 * recall / n, 100.0 * mrr / n)
    }

    proptest! {
        #[test]
        fn matches_sorting_oracle_and_is_monotone(
            rows in prop::collection::vec(prop::collection::vec(0u8..6, 30), 1..=10),
            targets in prop::collection::vec(0usize..30, 10),
        ) {
            let scores: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
            let targets = &targets[..scores.len()];
            let rep = evaluate_scores(&scores, targets, &[5, 20]);
            for (i, &k) in [5usize, 20].iter().enumerate() {
                let (rc, mrr) = brute_force(&scores, targets, k);
                prop_assert!((rep.recall[i] - rc).abs() < 1e-9);
                prop_assert!((rep.mrr[i] - mrr).abs() < 1e-9);
            }
            prop_assert!(rep.recall[1] >= rep.recall[0] && rep.mrr[1] >= rep.mrr[0]);
            let mut rev_s = scores.clone();
            rev_s.reverse();
            let mut rev_t = targets.to_vec();
            rev_t.reverse();
            let rev = evaluate_scores(&rev_s, &rev_t, &[5, 20]);
            for i in 0..2 {
                prop_assert!((rev.recall[i] - rep.recall[i]).abs() < 1e-9);
                prop_assert!((rev.mrr[i] - rep.mrr[i]).abs() < 1e-9);
            }
        }
    }
}

//! Account sequences, the account–item incidence matrix, splitting and padding.

mod io;
mod synth;

pub use io::{read_dataset, read_ground_truth, write_dataset, write_ground_truth};
pub use synth::{generate_synthetic, splitmix64, SyntheticConfig};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One account history: the chronological input items and the held-out next item.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sequence {
    pub account: usize,
    pub items: Vec<usize>,
    pub target: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub n_items: usize,
    pub n_accounts: usize,
    pub sequences: Vec<Sequence>,
}

impl Dataset {
    pub fn new(n_items: usize, n_accounts: usize, sequences: Vec<Sequence>) -> Result<Self> {
        let d = Dataset {
            n_items,
            n_accounts,
            sequences,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        for (idx, s) in self.sequences.iter().enumerate() {
            if s.account >= self.n_accounts {
                return Err(Error::InvalidInput(format!(
                    "sequence {idx}: account {} out of range (n_accounts = {})",
                    s.account, self.n_accounts
                )));
            }
            if s.items.is_empty() {
                return Err(Error::InvalidInput(format!("sequence {idx} is empty")));
            }
            if let Some(bad) = s
                .items
                .iter()
                .chain(std::iter::once(&s.target))
                .find(|&&i| i >= self.n_items)
            {
                return Err(Error::InvalidInput(format!(
                    "sequence {idx}: item {bad} out of range (n_items = {})",
                    self.n_items
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Same vocabulary and accounts, selected sequences (in the given order).
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            n_items: self.n_items,
            n_accounts: self.n_accounts,
            sequences: indices.iter().map(|&i| self.sequences[i].clone()).collect(),
        }
    }

    pub fn mean_len(&self) -> f64 {
        if self.sequences.is_empty() {
            return 0.0;
        }
        self.sequences.iter().map(|s| s.items.len()).sum::<usize>() as f64
            / self.sequences.len() as f64
    }
}

/// Ground truth for one generated sequence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub account: usize,
    pub k: usize,
    /// Generating user of each input position.
    pub labels: Vec<usize>,
}

/// Per-sequence ground truth, aligned index-for-index with the dataset it came with.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SyntheticGroundTruth {
    pub records: Vec<TruthRecord>,
}

impl SyntheticGroundTruth {
    /// True user count per account (`None` for accounts without a record).
    pub fn k_by_account(&self, n_accounts: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; n_accounts];
        for r in &self.records {
            if r.account < n_accounts {
                out[r.account] = Some(r.k);
            }
        }
        out
    }
}

/// Binary account × item incidence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InteractionMatrix {
    pub n_accounts: usize,
    pub n_items: usize,
    /// Sorted, deduplicated `(account, item)` pairs.
    pub pairs: Vec<(usize, usize)>,
    pub account_degree: Vec<usize>,
    pub item_degree: Vec<usize>,
}

impl InteractionMatrix {
    pub fn from_pairs(
        n_accounts: usize,
        n_items: usize,
        mut pairs: Vec<(usize, usize)>,
    ) -> Result<Self> {
        if let Some(&(a, i)) = pairs
            .iter()
            .find(|&&(a, i)| a >= n_accounts || i >= n_items)
        {
            return Err(Error::InvalidInput(format!(
                "interaction ({a}, {i}) outside {n_accounts}x{n_items}"
            )));
        }
        pairs.sort_unstable();
        pairs.dedup();
        let mut account_degree = vec![0; n_accounts];
        let mut item_degree = vec![0; n_items];
        for &(a, i) in &pairs {
            account_degree[a] += 1;
            item_degree[i] += 1;
        }
        Ok(InteractionMatrix {
            n_accounts,
            n_items,
            pairs,
            account_degree,
            item_degree,
        })
    }

    pub fn contains(&self, account: usize, item: usize) -> bool {
        self.pairs.binary_search(&(account, item)).is_ok()
    }
}

/// Incidence of input items per account; held-out targets never enter.
pub fn build_interaction_matrix(dataset: &Dataset) -> InteractionMatrix {
    let pairs = dataset
        .sequences
        .iter()
        .flat_map(|s| s.items.iter().map(move |&i| (s.account, i)))
        .collect();
    InteractionMatrix::from_pairs(dataset.n_accounts, dataset.n_items, pairs)
        .expect("validated dataset yields in-range pairs")
}

/// Seeded shuffle, then the first `⌈ratio·N⌉` sequences go to train. Each part keeps
/// the original order.
pub fn split_train_test(dataset: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split ratio must be in (0, 1), got {ratio}"
        )));
    }
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ((ratio * n as f64).ceil() as usize).min(n);
    let mut train = order[..cut].to_vec();
    let mut test = order[cut..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((dataset.subset(&train), dataset.subset(&test)))
}

/// A sequence cut or left-padded to a fixed length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreparedSequence {
    pub ids: Vec<usize>,
    /// Number of real (non-padding) positions, all at the end of `ids`.
    pub valid_len: usize,
}

/// Keep the most recent `max_len` items and left-pad with `pad_id`.
pub fn prepare_sequence(
    items: &[usize],
    max_len: usize,
    pad_id: usize,
) -> Result<PreparedSequence> {
    if max_len == 0 {
        return Err(Error::InvalidConfig("max_len must be at least 1".into()));
    }
    let kept = &items[items.len().saturating_sub(max_len)..];
    let mut ids = vec![pad_id; max_len - kept.len()];
    ids.extend_from_slice(kept);
    Ok(PreparedSequence {
        ids,
        valid_len: kept.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(account: usize, items: &[usize], target: usize) -> Sequence {
        Sequence {
            account,
            items: items.to_vec(),
            target,
        }
    }

    #[test]
    fn interaction_matrix_by_hand() {
        let d = Dataset::new(2, 2, vec![seq(0, &[0, 1], 1), seq(1, &[1], 0)]).unwrap();
        let m = build_interaction_matrix(&d);
        assert_eq!(m.pairs, vec![(0, 0), (0, 1), (1, 1)]);
        assert_eq!(m.account_degree, vec![2, 1]);
        assert_eq!(m.item_degree, vec![1, 2]);
        // the target of account 1 (item 0) is not an interaction
        assert!(!m.contains(1, 0));
    }

    #[test]
    fn interaction_matrix_edge_cases() {
        let empty = Dataset::new(3, 2, vec![]).unwrap();
        let m = build_interaction_matrix(&empty);
        assert!(m.pairs.is_empty());
        assert_eq!(m.account_degree, vec![0, 0]);
        assert_eq!(m.item_degree, vec![0, 0, 0]);

        let dup = Dataset::new(3, 1, vec![seq(0, &[2, 2, 2], 1)]).unwrap();
        assert_eq!(build_interaction_matrix(&dup).pairs, vec![(0, 2)]);
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(2, 1, vec![seq(0, &[], 1)]).is_err());
        assert!(Dataset::new(2, 1, vec![seq(0, &[2], 1)]).is_err());
        assert!(Dataset::new(2, 1, vec![seq(1, &[0], 1)]).is_err());
        assert!(Dataset::new(2, 1, vec![seq(0, &[0], 2)]).is_err());
    }

    fn numbered(n: usize) -> Dataset {
        Dataset::new(100, n, (0..n).map(|i| seq(i, &[i % 100], 0)).collect()).unwrap()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let d = numbered(10);
        let (tr, te) = split_train_test(&d, 0.8, 7).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        let (tr2, te2) = split_train_test(&d, 0.8, 7).unwrap();
        assert_eq!(tr, tr2);
        assert_eq!(te, te2);

        let (a, b) = split_train_test(&numbered(2), 0.5, 1).unwrap();
        assert_eq!((a.len(), b.len()), (1, 1));

        assert!(split_train_test(&d, 1.0, 0).is_err());
        assert!(split_train_test(&d, 0.0, 0).is_err());
    }

    #[test]
    fn split_is_a_partition() {
        let d = numbered(37);
        let (tr, te) = split_train_test(&d, 0.8, 99).unwrap();
        let mut accounts: Vec<usize> = tr
            .sequences
            .iter()
            .chain(&te.sequences)
            .map(|s| s.account)
            .collect();
        accounts.sort_unstable();
        assert_eq!(accounts, (0..37).collect::<Vec<_>>());
    }

    #[test]
    fn prepare_sequence_cases() {
        let long: Vec<usize> = (0..60).collect();
        let p = prepare_sequence(&long, 50, 999).unwrap();
        assert_eq!(p.ids, (10..60).collect::<Vec<_>>());
        assert_eq!(p.valid_len, 50);

        let p = prepare_sequence(&[4, 5, 6], 50, 999).unwrap();
        assert_eq!(p.ids.len(), 50);
        assert!(p.ids[..47].iter().all(|&i| i == 999));
        assert_eq!(&p.ids[47..], &[4, 5, 6]);
        assert_eq!(p.valid_len, 3);

        let exact: Vec<usize> = (0..50).collect();
        assert_eq!(prepare_sequence(&exact, 50, 999).unwrap().ids, exact);

        assert!(prepare_sequence(&[1], 0, 9).is_err());
    }
}

//! Trains on a generated shared-account dataset and reports ranking metrics
//! against the popularity baseline plus user-count recovery.
//!
//! Hyperparameters can be overridden as `key=value` arguments, e.g.
//! `cargo run --release --example synthetic_run -- dim=32 epochs=10`.

use std::time::Instant;

use sharedrec_core::dataset::{generate_synthetic, split_train_test};
use sharedrec_core::eval::{evaluate, evaluate_ranking, latent_user_report, popularity_baseline};
use sharedrec_core::model::train;
use sharedrec_core::{Hyper, SyntheticConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut hyper = Hyper::default();
    for arg in std::env::args().skip(1) {
        let (k, v) = arg.split_once('=').ok_or("arguments are key=value")?;
        hyper.set(k, v)?;
    }
    let start = Instant::now();
    let (data, truth) = generate_synthetic(&SyntheticConfig {
        seed: hyper.seed,
        ..SyntheticConfig::default()
    })?;
    let (train_all, test) = split_train_test(&data, 0.8, hyper.seed)?;
    let (train_set, val) = split_train_test(&train_all, 1.0 - hyper.val_ratio, hyper.seed ^ 1)?;
    let (model, history) = train(&train_set, &val, &hyper)?;
    for e in &history.epochs {
        println!(
            "epoch {:2} loss {:.4} val R@5 {:.2} MRR@5 {:.2}",
            e.epoch,
            e.train_loss,
            e.val_recall5.unwrap_or(0.0),
            e.val_mrr5.unwrap_or(0.0)
        );
    }
    let prop = model.propagate()?;
    let report = evaluate(&model, &prop, &test, &[5, 20])?;
    let pop = evaluate_ranking(&popularity_baseline(&train_all)?, &test, &[5, 20]);
    println!(
        "model R@5 {:.2} R@20 {:.2} MRR@5 {:.2}",
        report.recall[0], report.recall[1], report.mrr[0]
    );
    println!(
        "popularity R@5 {:.2} R@20 {:.2}",
        pop.recall[0], pop.recall[1]
    );
    let counts = latent_user_report(&model, &prop, &data, Some(&truth))?;
    let mut hist = std::collections::BTreeMap::new();
    for r in &counts.rows {
        *hist.entry((r.truth.unwrap_or(0), r.inferred)).or_insert(0) += 1;
    }
    println!(
        "spearman {:.3} degenerate {} exact {:.1}%",
        counts.spearman,
        counts.degenerate,
        counts.exact_match.unwrap_or(0.0)
    );
    println!("(K, T) counts: {hist:?}");
    let mut by_k: std::collections::BTreeMap<usize, (f64, f64, usize)> = Default::default();
    let kk = truth.k_by_account(data.n_accounts);
    for s in &data.sequences {
        let t = model.trace(&prop, s.account, &s.items)?;
        let e = by_k.entry(kk[s.account].unwrap_or(0)).or_default();
        e.0 += t.similarities.first().copied().unwrap_or(0.0);
        e.1 += t.steps() as f64;
        e.2 += 1;
    }
    for (k, (sim, steps, n)) in by_k {
        println!(
            "K={k} mean first similarity {:.4} mean T {:.3}",
            sim / n as f64,
            steps / n as f64
        );
    }
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}

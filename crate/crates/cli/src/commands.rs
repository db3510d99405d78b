//! The five subcommands. Each writes its resolved config next to its outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sharedrec_core::dataset::{
    build_interaction_matrix, generate_synthetic, read_dataset, read_ground_truth,
    split_train_test, write_dataset, write_ground_truth,
};
use sharedrec_core::disentangle::spectrum_csv;
use sharedrec_core::eval::{evaluate, latent_user_report};
use sharedrec_core::model::{history_csv, read_checkpoint, train, write_checkpoint};
use sharedrec_core::selftest;
use sharedrec_core::{Dataset, Model};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const DATASET_FILE: &str = "dataset.txt";
pub const TRUTH_FILE: &str = "truth.jsonl";
pub const TRAIN_FILE: &str = "train.txt";
pub const TEST_FILE: &str = "test.txt";
pub const MODEL_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "history.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const COUNTS_FILE: &str = "counts.csv";
pub const SPECTRUM_FILE: &str = "spectrum.csv";
pub const TRACES_FILE: &str = "traces.csv";

/// Ranking cutoffs reported by `eval`.
pub const KS: [usize; 2] = [5, 20];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnalyzeOptions {
    /// Score a freshly initialized model instead of loading a checkpoint.
    pub untrained: bool,
    /// Dump the stage-one spectrum of this sequence index.
    pub spectrum: Option<usize>,
    /// Dump one reasoning trace row per sequence.
    pub traces: bool,
}

fn runtime(context: impl std::fmt::Display) -> impl FnOnce(std::io::Error) -> CliError {
    move |e| CliError::Runtime(format!("{context}: {e}"))
}

fn prepare_out(cfg: &RunConfig, command: &str) -> CliResult<()> {
    fs::create_dir_all(&cfg.out)
        .map_err(runtime(format!("cannot create {}", cfg.out.display())))?;
    let path = cfg.out.join(format!("{command}.conf"));
    fs::write(&path, cfg.to_text()).map_err(runtime(format!("cannot write {}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(runtime(format!("cannot write {}", path.display())))
}

fn default_path(slot: &mut Option<PathBuf>, out: &Path, file: &str) -> PathBuf {
    slot.get_or_insert_with(|| out.join(file)).clone()
}

pub fn gen_data(cfg: &RunConfig) -> CliResult<()> {
    prepare_out(cfg, "gen-data")?;
    let (data, truth) = generate_synthetic(&cfg.synth)?;
    write_dataset(&data, cfg.out.join(DATASET_FILE))?;
    write_ground_truth(&truth, cfg.out.join(TRUTH_FILE))?;
    println!(
        "wrote {} sequences over {} accounts (mean length {:.2}) to {}",
        data.len(),
        data.n_accounts,
        data.mean_len(),
        cfg.out.display()
    );
    Ok(())
}

pub fn train_cmd(mut cfg: RunConfig) -> CliResult<()> {
    let data_path = default_path(&mut cfg.data, &cfg.out, DATASET_FILE);
    prepare_out(&cfg, "train")?;
    let data = read_dataset(&data_path)?;
    let (train_all, test) = split_train_test(&data, cfg.train_ratio, cfg.hyper.seed)?;
    let (fit, val) = if cfg.hyper.val_ratio > 0.0 {
        split_train_test(&train_all, 1.0 - cfg.hyper.val_ratio, cfg.hyper.seed ^ 1)?
    } else {
        (
            train_all.clone(),
            Dataset::new(data.n_items, data.n_accounts, vec![])?,
        )
    };
    write_dataset(&train_all, cfg.out.join(TRAIN_FILE))?;
    write_dataset(&test, cfg.out.join(TEST_FILE))?;
    let (model, history) = train(&fit, &val, &cfg.hyper)?;
    for e in &history.epochs {
        let mrr = e
            .val_mrr5
            .map(|v| format!("{v:.2}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "epoch {:>3}  loss {:.4}  val MRR@5 {mrr}",
            e.epoch, e.train_loss
        );
    }
    println!(
        "kept epoch {}{}",
        history.best_epoch,
        if history.stopped_early {
            " (early stop)"
        } else {
            ""
        }
    );
    write_checkpoint(&model, cfg.out.join(MODEL_FILE))?;
    write_text(&cfg.out.join(HISTORY_FILE), &history_csv(&history))
}

fn load_model(path: &Path) -> CliResult<Model> {
    if !path.exists() {
        return Err(CliError::Config(format!(
            "no model at {} (run `train` first)",
            path.display()
        )));
    }
    Ok(read_checkpoint(path)?)
}

fn check_compatible(model: &Model, data: &Dataset) -> CliResult<()> {
    if model.n_items() != data.n_items || model.n_accounts() != data.n_accounts {
        return Err(CliError::Runtime(format!(
            "model covers {} items / {} accounts but the data has {} / {}",
            model.n_items(),
            model.n_accounts(),
            data.n_items,
            data.n_accounts
        )));
    }
    Ok(())
}

pub fn eval_cmd(mut cfg: RunConfig) -> CliResult<()> {
    let model_path = default_path(&mut cfg.model, &cfg.out, MODEL_FILE);
    let data_path = default_path(&mut cfg.data, &cfg.out, TEST_FILE);
    prepare_out(&cfg, "eval")?;
    let model = load_model(&model_path)?;
    let data = read_dataset(&data_path)?;
    check_compatible(&model, &data)?;
    let report = evaluate(&model, &model.propagate()?, &data, &KS)?;
    let hyper: Vec<String> = model
        .hyper()
        .to_pairs()
        .into_iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect();
    let comments = [
        format!("hyper {}", hyper.join(" ")),
        format!("seed={}", model.hyper().seed),
        format!("samples={}", report.samples),
    ];
    for (i, k) in report.ks.iter().enumerate() {
        println!(
            "Recall@{k} {:.2}  MRR@{k} {:.2}",
            report.recall[i], report.mrr[i]
        );
    }
    write_text(&cfg.out.join(METRICS_FILE), &report.to_csv(&comments))
}

pub fn analyze(mut cfg: RunConfig, opts: &AnalyzeOptions) -> CliResult<()> {
    let data_path = default_path(&mut cfg.data, &cfg.out, DATASET_FILE);
    if cfg.truth.is_none() && cfg.out.join(TRUTH_FILE).exists() {
        cfg.truth = Some(cfg.out.join(TRUTH_FILE));
    }
    if !opts.untrained {
        default_path(&mut cfg.model, &cfg.out, MODEL_FILE);
    }
    prepare_out(&cfg, "analyze")?;
    let data = read_dataset(&data_path)?;
    let model = match &cfg.model {
        Some(path) if !opts.untrained => load_model(path)?,
        _ => Model::new(cfg.hyper.clone(), build_interaction_matrix(&data))?,
    };
    check_compatible(&model, &data)?;
    let truth = cfg.truth.as_ref().map(read_ground_truth).transpose()?;
    let prop = model.propagate()?;
    let report = latent_user_report(&model, &prop, &data, truth.as_ref())?;
    write_text(&cfg.out.join(COUNTS_FILE), &report.to_csv())?;
    print!("{} accounts", report.rows.len());
    match report.exact_match {
        Some(exact) if !report.degenerate => {
            println!(", Spearman(T, K) {:.3}, exact {exact:.1}%", report.spearman)
        }
        Some(exact) => println!(", Spearman(T, K) undefined (constant T or K), exact {exact:.1}%"),
        None => println!(),
    }

    if let Some(idx) = opts.spectrum {
        let seq = data.sequences.get(idx).ok_or_else(|| {
            CliError::Config(format!(
                "sequence {idx} out of range ({} sequences)",
                data.len()
            ))
        })?;
        write_text(
            &cfg.out.join(SPECTRUM_FILE),
            &spectrum_csv(&model.decompose(&prop, &seq.items)?),
        )?;
    }
    if opts.traces {
        let mut out = String::from("account_id,T,stop_reason,similarities...\n");
        for s in &data.sequences {
            let _ = writeln!(
                out,
                "{}",
                model.trace(&prop, s.account, &s.items)?.csv_row(s.account)
            );
        }
        write_text(&cfg.out.join(TRACES_FILE), &out)?;
    }
    Ok(())
}

pub fn selftest_cmd(cfg: &RunConfig) -> CliResult<()> {
    let results = selftest::run_all(cfg.selftest_trials, cfg.hyper.seed);
    for r in &results {
        println!(
            "{} {}: {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        );
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(CliError::Runtime(format!(
            "{failed} self-test check(s) failed"
        )));
    }
    Ok(())
}

//! `sharedrec`: generate synthetic shared-account data, train, evaluate,
//! analyze inferred user counts and run the invariant self-test.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::AnalyzeOptions;
use error::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(name = "sharedrec", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset and its ground-truth user counts.
    GenData,
    /// Split the dataset, train, and write a checkpoint and loss history.
    Train,
    /// Score a checkpoint on a dataset (default: the test split from `train`).
    Eval,
    /// Report inferred user counts per account, optionally with spectrum and trace dumps.
    Analyze {
        /// Use a freshly initialized model instead of a checkpoint.
        #[arg(long)]
        untrained: bool,
        /// Dump the stage-one spectrum of this sequence index.
        #[arg(long, value_name = "INDEX")]
        spectrum: Option<usize>,
        /// Dump one reasoning trace per sequence.
        #[arg(long)]
        traces: bool,
    },
    /// Run the invariant checks of every module.
    Selftest,
}

#[derive(Args, Debug)]
struct Common {
    /// `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    #[arg(long, global = true)]
    truth: Option<PathBuf>,
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    #[arg(long, global = true)]
    bandwidth: Option<String>,
    #[arg(long, global = true)]
    layers: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    alpha: Option<String>,
    #[arg(long, global = true)]
    beta: Option<String>,
    #[arg(long, global = true)]
    tmax: Option<String>,
    #[arg(long, global = true)]
    maxlen: Option<String>,
    #[arg(long, global = true)]
    epochs: Option<String>,
    #[arg(long, global = true)]
    lr: Option<String>,
    #[arg(long, global = true)]
    batch: Option<String>,
    /// Any other config key, as `key=value` (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl Common {
    fn overrides(&self) -> CliResult<Vec<(String, String)>> {
        let mut out = Vec::new();
        for s in &self.sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects key=value, got `{s}`")))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        let paths = [
            ("out", &self.out),
            ("data", &self.data),
            ("truth", &self.truth),
            ("model", &self.model),
        ];
        for (k, v) in paths {
            if let Some(p) = v {
                out.push((k.into(), p.display().to_string()));
            }
        }
        if let Some(seed) = self.seed {
            out.push(("seed".into(), seed.to_string()));
        }
        let hyper = [
            ("bandwidth", &self.bandwidth),
            ("layers", &self.layers),
            ("alpha", &self.alpha),
            ("beta", &self.beta),
            ("tmax", &self.tmax),
            ("max_len", &self.maxlen),
            ("epochs", &self.epochs),
            ("lr", &self.lr),
            ("batch", &self.batch),
        ];
        for (k, v) in hyper {
            if let Some(v) = v {
                out.push((k.into(), v.clone()));
            }
        }
        Ok(out)
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = config::parse_config(cli.common.config.as_deref(), &cli.common.overrides()?)?;
    match cli.command {
        Command::GenData => commands::gen_data(&cfg),
        Command::Train => commands::train_cmd(cfg),
        Command::Eval => commands::eval_cmd(cfg),
        Command::Analyze {
            untrained,
            spectrum,
            traces,
        } => commands::analyze(
            cfg,
            &AnalyzeOptions {
                untrained,
                spectrum,
                traces,
            },
        ),
        Command::Selftest => commands::selftest_cmd(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("sharedrec").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_map_to_config_keys() {
        let cli = parse(&[
            "train", "--alpha", "-1", "--maxlen", "12", "--set", "dim=8", "--seed", "3",
        ]);
        let cfg = config::parse_config(None, &cli.common.overrides().unwrap()).unwrap();
        assert_eq!(
            (
                cfg.hyper.alpha,
                cfg.hyper.max_len,
                cfg.hyper.dim,
                cfg.hyper.seed
            ),
            (-1.0, 12, 8, 3)
        );
    }

    #[test]
    fn malformed_set_is_rejected() {
        let cli = parse(&["eval", "--set", "dim"]);
        assert_eq!(cli.common.overrides().unwrap_err().exit_code(), 1);
        assert!(Cli::try_parse_from(["sharedrec", "fly"]).is_err());
    }
}

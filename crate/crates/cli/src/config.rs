//! `key = value` run configuration: file values, then flag overrides, then defaults.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sharedrec_core::model::HYPER_KEYS;
use sharedrec_core::{Hyper, SyntheticConfig};

use crate::error::{CliError, CliResult};

const SYNTH_KEYS: &[&str] = &[
    "n_items",
    "n_accounts",
    "k_weights",
    "pool_size",
    "periods",
    "mean_len",
    "len_spread",
    "sequences_per_account",
];
const RUN_KEYS: &[&str] = &[
    "out",
    "data",
    "truth",
    "model",
    "train_ratio",
    "selftest_trials",
];

/// Every key a config file or `--set` may name.
pub fn known_keys() -> impl Iterator<Item = &'static str> {
    HYPER_KEYS.iter().chain(SYNTH_KEYS).chain(RUN_KEYS).copied()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub hyper: Hyper,
    pub synth: SyntheticConfig,
    pub out: PathBuf,
    pub data: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub model: Option<PathBuf>,
    /// Share of sequences `train` keeps for training; the rest is the test split.
    pub train_ratio: f64,
    pub selftest_trials: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let hyper = Hyper::default();
        RunConfig {
            synth: SyntheticConfig {
                seed: hyper.seed,
                ..SyntheticConfig::default()
            },
            hyper,
            out: PathBuf::from("out"),
            data: None,
            truth: None,
            model: None,
            train_ratio: 0.8,
            selftest_trials: 20,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse `{value}`")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<Vec<T>> {
    value.split(',').map(|v| parse_num(key, v.trim())).collect()
}

fn join<T: ToString>(values: &[T]) -> String {
    values
        .iter()
        .map(T::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let value = value.trim();
        let s = &mut self.synth;
        match key {
            "seed" => {
                self.hyper.set(key, value)?;
                s.seed = self.hyper.seed;
            }
            k if HYPER_KEYS.contains(&k) => self.hyper.set(k, value)?,
            "n_items" => s.n_items = parse_num(key, value)?,
            "n_accounts" => s.n_accounts = parse_num(key, value)?,
            "k_weights" => s.k_weights = parse_list(key, value)?,
            "pool_size" => s.pool_size = parse_num(key, value)?,
            "periods" => s.periods = parse_list(key, value)?,
            "mean_len" => s.mean_len = parse_num(key, value)?,
            "len_spread" => s.len_spread = parse_num(key, value)?,
            "sequences_per_account" => s.sequences_per_account = parse_num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "data" => self.data = Some(PathBuf::from(value)),
            "truth" => self.truth = Some(PathBuf::from(value)),
            "model" => self.model = Some(PathBuf::from(value)),
            "train_ratio" => self.train_ratio = parse_num(key, value)?,
            "selftest_trials" => self.selftest_trials = parse_num(key, value)?,
            other => {
                let known: Vec<&str> = known_keys().collect();
                return Err(CliError::Config(format!(
                    "unknown config key `{other}` (known: {})",
                    known.join(", ")
                )));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> CliResult<()> {
        self.hyper.validate()?;
        self.synth.validate()?;
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(CliError::Config(format!(
                "train_ratio must be in (0, 1), got {}",
                self.train_ratio
            )));
        }
        Ok(())
    }

    /// Fully resolved `key = value` text; parsing it back gives the same config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.hyper.to_pairs() {
            let _ = writeln!(out, "{k} = {v}");
        }
        let s = &self.synth;
        let synth = [
            ("n_items", s.n_items.to_string()),
            ("n_accounts", s.n_accounts.to_string()),
            ("k_weights", join(&s.k_weights)),
            ("pool_size", s.pool_size.to_string()),
            ("periods", join(&s.periods)),
            ("mean_len", s.mean_len.to_string()),
            ("len_spread", s.len_spread.to_string()),
            ("sequences_per_account", s.sequences_per_account.to_string()),
            ("train_ratio", format!("{:?}", self.train_ratio)),
            ("selftest_trials", self.selftest_trials.to_string()),
            ("out", self.out.display().to_string()),
        ];
        for (k, v) in synth {
            let _ = writeln!(out, "{k} = {v}");
        }
        for (k, v) in [
            ("data", &self.data),
            ("truth", &self.truth),
            ("model", &self.model),
        ] {
            if let Some(p) = v {
                let _ = writeln!(out, "{k} = {}", p.display());
            }
        }
        out
    }
}

/// Splits config text into `(key, value)` pairs; `#` starts a comment.
pub fn parse_pairs(text: &str, origin: &Path) -> CliResult<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!(
                "{}:{}: expected `key = value`",
                origin.display(),
                i + 1
            ))
        })?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

/// File values first, then `overrides` in order; the result is validated.
pub fn parse_config(file: Option<&Path>, overrides: &[(String, String)]) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        for (k, v) in parse_pairs(&text, path)? {
            cfg.set(&k, &v)?;
        }
    }
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(text: &str) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), text).unwrap();
        f
    }

    fn kv(k: &str, v: &str) -> (String, String) {
        (k.to_string(), v.to_string())
    }

    #[test]
    fn empty_file_gives_defaults() {
        let f = file("");
        let cfg = parse_config(Some(f.path()), &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
        let h = &cfg.hyper;
        assert_eq!(
            (h.bandwidth, h.layers, h.alpha, h.beta, h.max_len),
            (5, 3, 0.5, 1.0, 50)
        );
    }

    #[test]
    fn flags_override_file() {
        let f = file("alpha = 0.4\n# comment\nepochs = 3 # trailing\n");
        let cfg = parse_config(Some(f.path()), &[kv("alpha", "0.6")]).unwrap();
        assert_eq!(cfg.hyper.alpha, 0.6);
        assert_eq!(cfg.hyper.epochs, 3);
    }

    #[test]
    fn rejects_bad_keys_and_values() {
        let err = parse_config(None, &[kv("bandwidth", "0")]).unwrap_err();
        assert!(
            matches!(err, CliError::Config(ref m) if m.contains("bandwidth")),
            "{err}"
        );
        let err = parse_config(None, &[kv("colour", "red")]).unwrap_err();
        assert!(err.to_string().contains("colour"));
        let f = file("alpha 0.4\n");
        assert!(parse_config(Some(f.path()), &[])
            .unwrap_err()
            .to_string()
            .contains(":1:"));
        assert!(parse_config(None, &[kv("train_ratio", "1.0")]).is_err());
        assert!(parse_config(None, &[kv("k_weights", "1,x")]).is_err());
        assert_eq!(
            parse_config(Some(Path::new("/no/such/file")), &[])
                .unwrap_err()
                .exit_code(),
            1
        );
    }

    #[test]
    fn seed_drives_generator_and_model() {
        let cfg = parse_config(None, &[kv("seed", "9")]).unwrap();
        assert_eq!((cfg.hyper.seed, cfg.synth.seed), (9, 9));
    }

    #[test]
    fn resolved_text_round_trips() {
        let cfg = parse_config(
            None,
            &[
                kv("k_weights", "1,0.5"),
                kv("lr", "0.1"),
                kv("data", "d.txt"),
                kv("gate_pooling", "last"),
            ],
        )
        .unwrap();
        let f = file(&cfg.to_text());
        assert_eq!(parse_config(Some(f.path()), &[]).unwrap(), cfg);
        assert!(known_keys().all(|k| cfg.to_text().contains(k) || ["truth", "model"].contains(&k)));
    }
}

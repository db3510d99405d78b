use crate::disentangle::GatePooling;
use crate::error::{Error, Result};

/// When graph propagation is recomputed during training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GraphRefresh {
    #[default]
    Epoch,
    Batch,
}

impl std::str::FromStr for GraphRefresh {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epoch" => Ok(GraphRefresh::Epoch),
            "batch" => Ok(GraphRefresh::Batch),
            other => Err(Error::InvalidConfig(format!(
                "unknown graph refresh `{other}` (epoch|batch)"
            ))),
        }
    }
}

impl std::fmt::Display for GraphRefresh {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GraphRefresh::Epoch => "epoch",
            GraphRefresh::Batch => "batch",
        })
    }
}

/// Model and training hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Hyper {
    /// Embedding dimension `d`.
    pub dim: usize,
    /// Graph propagation layers `L`.
    pub layers: usize,
    /// Band width `B` in frequency bins.
    pub bandwidth: usize,
    /// Similarity threshold that ends reasoning.
    pub alpha: f64,
    /// Weight of the auxiliary per-user loss.
    pub beta: f64,
    pub lr: f64,
    pub t_max: usize,
    pub max_len: usize,
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub include_layer0: bool,
    pub gate_pooling: GatePooling,
    pub refresh: GraphRefresh,
    /// Share of training sequences held out for early stopping.
    pub val_ratio: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            dim: 64,
            layers: 3,
            bandwidth: 5,
            alpha: 0.5,
            beta: 1.0,
            lr: 5e-3,
            t_max: 8,
            max_len: 50,
            epochs: 20,
            patience: 5,
            batch_size: 64,
            seed: 42,
            include_layer0: false,
            gate_pooling: GatePooling::Mean,
            refresh: GraphRefresh::Epoch,
            val_ratio: 0.1,
        }
    }
}

/// Keys accepted by [`Hyper::set`], in the order [`Hyper::to_pairs`] emits them.
pub const HYPER_KEYS: &[&str] = &[
    "dim",
    "layers",
    "bandwidth",
    "alpha",
    "beta",
    "lr",
    "tmax",
    "max_len",
    "epochs",
    "patience",
    "batch",
    "seed",
    "include_layer0",
    "gate_pooling",
    "refresh",
    "val_ratio",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse `{value}`")))
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim),
            ("layers", self.layers),
            ("bandwidth", self.bandwidth),
            ("tmax", self.t_max),
            ("max_len", self.max_len),
            ("epochs", self.epochs),
            ("batch", self.batch_size),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v < 1) {
            return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
        }
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "beta must be non-negative, got {}",
                self.beta
            )));
        }
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "lr must be non-negative, got {}",
                self.lr
            )));
        }
        if !self.alpha.is_finite() {
            return Err(Error::InvalidConfig("alpha must be finite".into()));
        }
        if !(0.0..1.0).contains(&self.val_ratio) {
            return Err(Error::InvalidConfig(format!(
                "val_ratio must be in [0, 1), got {}",
                self.val_ratio
            )));
        }
        Ok(())
    }

    /// Set one field from its textual form. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dim" => self.dim = parse(key, value)?,
            "layers" => self.layers = parse(key, value)?,
            "bandwidth" => self.bandwidth = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "tmax" => self.t_max = parse(key, value)?,
            "max_len" => self.max_len = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "batch" => self.batch_size = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "include_layer0" => self.include_layer0 = parse(key, value)?,
            "gate_pooling" => self.gate_pooling = value.trim().parse()?,
            "refresh" => self.refresh = value.trim().parse()?,
            "val_ratio" => self.val_ratio = parse(key, value)?,
            other => return Err(Error::InvalidConfig(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("dim", self.dim.to_string()),
            ("layers", self.layers.to_string()),
            ("bandwidth", self.bandwidth.to_string()),
            ("alpha", format!("{:?}", self.alpha)),
            ("beta", format!("{:?}", self.beta)),
            ("lr", format!("{:?}", self.lr)),
            ("tmax", self.t_max.to_string()),
            ("max_len", self.max_len.to_string()),
            ("epochs", self.epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("batch", self.batch_size.to_string()),
            ("seed", self.seed.to_string()),
            ("include_layer0", self.include_layer0.to_string()),
            ("gate_pooling", self.gate_pooling.to_string()),
            ("refresh", self.refresh.to_string()),
            ("val_ratio", format!("{:?}", self.val_ratio)),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let h = Hyper::default();
        h.validate().unwrap();
        assert_eq!(
            (h.bandwidth, h.layers, h.alpha, h.beta, h.max_len),
            (5, 3, 0.5, 1.0, 50)
        );
    }

    #[test]
    fn pairs_round_trip_through_set() {
        let mut h = Hyper {
            alpha: 0.123456789,
            refresh: GraphRefresh::Batch,
            gate_pooling: GatePooling::Last,
            ..Hyper::default()
        };
        h.lr = 3.3e-7;
        let mut back = Hyper::default();
        for (k, v) in h.to_pairs() {
            back.set(k, &v).unwrap();
        }
        assert_eq!(back, h);
        assert_eq!(
            h.to_pairs().iter().map(|(k, _)| *k).collect::<Vec<_>>(),
            HYPER_KEYS
        );
    }

    #[test]
    fn rejects_bad_values() {
        let mut h = Hyper::default();
        assert!(h.set("nope", "1").is_err());
        assert!(h.set("dim", "x").is_err());
        h.set("bandwidth", "0").unwrap();
        assert!(h.validate().is_err());
        let h = Hyper {
            beta: -0.1,
            ..Hyper::default()
        };
        assert!(h.validate().is_err());
    }
}

//! Text checkpoint holding hyperparameters, the training interactions and
//! every parameter group. Floats use Rust's shortest round-trip formatting, so
//! a write/read cycle is exact.
//!
//! ```text
//! #sharedrec-checkpoint-v1
//! hyper <key>=<value> ...
//! graph n_items=<n> n_accounts=<m> pairs=<k>
//! <account> <item>            (k lines)
//! group <name> <rows> <cols>
//! <v> <v> ...                 (one line per row)
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Hyper, Model, ModelParams, Shapes, GROUP_NAMES};
use crate::dataset::InteractionMatrix;
use crate::error::{Error, Result};
use crate::numeric::RealMatrix;

const MAGIC: &str = "#sharedrec-checkpoint-v1";

/// Everything needed to rebuild a trained [`Model`].
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub hyper: Hyper,
    pub interactions: InteractionMatrix,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn from_model(model: &Model) -> Self {
        Checkpoint {
            hyper: model.hyper().clone(),
            interactions: model.interactions().clone(),
            params: model.params().clone(),
        }
    }

    pub fn into_model(self) -> Result<Model> {
        Model::from_parts(self.hyper, self.params, self.interactions)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        out.push_str("hyper");
        for (k, v) in self.hyper.to_pairs() {
            let _ = write!(out, " {k}={v}");
        }
        out.push('\n');
        let m = &self.interactions;
        let _ = writeln!(
            out,
            "graph n_items={} n_accounts={} pairs={}",
            m.n_items,
            m.n_accounts,
            m.pairs.len()
        );
        for (a, i) in &m.pairs {
            let _ = writeln!(out, "{a} {i}");
        }
        for (name, mat) in self.params.groups() {
            let _ = writeln!(out, "group {name} {} {}", mat.rows(), mat.cols());
            for r in 0..mat.rows() {
                let row: Vec<String> = mat.row(r).iter().map(|v| format!("{v:?}")).collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Checkpoint> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| {
            lines.next().ok_or_else(|| {
                Error::parse(path, 0, format!("unexpected end of file, expected {what}"))
            })
        };
        let (n, magic) = next("header")?;
        if magic != MAGIC {
            return Err(Error::parse(path, n, format!("expected `{MAGIC}`")));
        }

        let (n, line) = next("hyper line")?;
        let rest = line
            .strip_prefix("hyper")
            .ok_or_else(|| Error::parse(path, n, "expected `hyper ...`"))?;
        let mut hyper = Hyper::default();
        for kv in rest.split_whitespace() {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::parse(path, n, format!("bad hyper entry `{kv}`")))?;
            hyper
                .set(k, v)
                .map_err(|e| Error::parse(path, n, e.to_string()))?;
        }

        let (n, line) = next("graph line")?;
        let fields: Vec<usize> = line
            .strip_prefix("graph ")
            .map(|r| {
                r.split_whitespace()
                    .filter_map(|kv| kv.split_once('=').and_then(|(_, v)| v.parse().ok()))
                    .collect()
            })
            .unwrap_or_default();
        let [n_items, n_accounts, count] = fields[..] else {
            return Err(Error::parse(
                path,
                n,
                "expected `graph n_items=.. n_accounts=.. pairs=..`",
            ));
        };
        let mut pairs = Vec::with_capacity(count);
        for _ in 0..count {
            let (n, line) = next("interaction pair")?;
            let mut it = line.split_whitespace().map(str::parse::<usize>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(a)), Some(Ok(i)), None) => pairs.push((a, i)),
                _ => return Err(Error::parse(path, n, "expected `<account> <item>`")),
            }
        }
        let interactions = InteractionMatrix::from_pairs(n_accounts, n_items, pairs)
            .map_err(|e| Error::parse(path, n, e.to_string()))?;

        let mut groups = Vec::with_capacity(GROUP_NAMES.len());
        for expected in GROUP_NAMES {
            let (n, line) = next("parameter group")?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            let (rows, cols) = match parts[..] {
                ["group", name, r, c] if name == expected => match (r.parse(), c.parse()) {
                    (Ok(r), Ok(c)) => (r, c),
                    _ => return Err(Error::parse(path, n, "bad group shape")),
                },
                _ => {
                    return Err(Error::parse(
                        path,
                        n,
                        format!("expected `group {expected} <rows> <cols>`"),
                    ))
                }
            };
            let mut values = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (n, line) = next("parameter row")?;
                let before = values.len();
                for tok in line.split_whitespace() {
                    values.push(
                        tok.parse::<f64>()
                            .map_err(|_| Error::parse(path, n, format!("bad number `{tok}`")))?,
                    );
                }
                if values.len() - before != cols {
                    return Err(Error::parse(path, n, format!("expected {cols} values")));
                }
            }
            groups.push(
                RealMatrix::from_vec(rows, cols, values)
                    .map_err(|e| Error::parse(path, n, e.to_string()))?,
            );
        }
        let mut params = ModelParams::zeros(Shapes {
            n_accounts: 0,
            n_items: 0,
            dim: 0,
            seq_bands: 0,
            vec_bands: 0,
        });
        for ((_, slot), value) in params.groups_mut().into_iter().zip(groups) {
            *slot = value;
        }
        Ok(Checkpoint {
            hyper,
            interactions,
            params,
        })
    }
}

pub fn write_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, Checkpoint::from_model(model).to_text()).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::parse(&text, path)?.into_model()
}

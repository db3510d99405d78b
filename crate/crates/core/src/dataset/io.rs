//! Dataset and ground-truth files.
//!
//! Dataset: a `#disenreason-v1 n_items=<n> n_accounts=<m>` header, then one
//! line per sequence, `<account>\t<item> <item> ...\t<target>`.
//!
//! Ground truth: JSON lines `{"account": .., "k": .., "labels": [..]}`, one
//! per sequence in dataset order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Dataset, Sequence, SyntheticGroundTruth, TruthRecord};
use crate::error::{Error, Result};

const MAGIC: &str = "#disenreason-v1";

pub fn format_dataset(dataset: &Dataset) -> String {
    let mut out = format!(
        "{MAGIC} n_items={} n_accounts={}\n",
        dataset.n_items, dataset.n_accounts
    );
    for s in &dataset.sequences {
        let _ = write!(out, "{}\t", s.account);
        for (i, item) in s.items.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{item}");
        }
        let _ = writeln!(out, "\t{}", s.target);
    }
    out
}

pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_dataset(dataset)).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, path)
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut parts = line.split_whitespace();
    if parts.next()? != MAGIC {
        return None;
    }
    let n_items = parts.next()?.strip_prefix("n_items=")?.parse().ok()?;
    let n_accounts = parts.next()?.strip_prefix("n_accounts=")?.parse().ok()?;
    parts.next().is_none().then_some((n_items, n_accounts))
}

pub(crate) fn parse_dataset(text: &str, path: &Path) -> Result<Dataset> {
    let mut lines = text.lines().enumerate();
    let (n_items, n_accounts) = match lines.next() {
        Some((_, header)) => parse_header(header).ok_or_else(|| {
            Error::parse(
                path,
                1,
                format!("expected `{MAGIC} n_items=<n> n_accounts=<m>`"),
            )
        })?,
        None => return Err(Error::parse(path, 1, "missing header")),
    };
    let mut sequences = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let err = |msg: String| Error::parse(path, lineno, msg);
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(err(format!(
                "expected 3 tab-separated fields, found {}",
                fields.len()
            )));
        }
        let id = |field: &str, what: &str| {
            field
                .trim()
                .parse::<usize>()
                .map_err(|_| err(format!("bad {what} `{field}`")))
        };
        let account = id(fields[0], "account id")?;
        if account >= n_accounts {
            return Err(err(format!("account {account} >= n_accounts {n_accounts}")));
        }
        let items = fields[1]
            .split_whitespace()
            .map(|f| id(f, "item id"))
            .collect::<Result<Vec<_>>>()?;
        if items.is_empty() {
            return Err(err("empty sequence".into()));
        }
        let target = id(fields[2], "target id")?;
        if let Some(bad) = items
            .iter()
            .chain(std::iter::once(&target))
            .find(|&&i| i >= n_items)
        {
            return Err(err(format!("item {bad} >= n_items {n_items}")));
        }
        sequences.push(Sequence {
            account,
            items,
            target,
        });
    }
    Dataset::new(n_items, n_accounts, sequences)
}

pub fn write_ground_truth(truth: &SyntheticGroundTruth, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for r in &truth.records {
        out.push_str(&serde_json::to_string(r).expect("plain record serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<SyntheticGroundTruth> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: TruthRecord =
            serde_json::from_str(line).map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
        if r.k == 0 || r.labels.iter().any(|&l| l >= r.k) {
            return Err(Error::parse(
                path,
                idx + 1,
                "labels must lie in [0, k) with k >= 1",
            ));
        }
        records.push(r);
    }
    Ok(SyntheticGroundTruth { records })
}

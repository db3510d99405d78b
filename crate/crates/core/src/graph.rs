//! LightGCN-style propagation over the account–item bipartite graph.
//!
//! Accounts and items exchange messages through the symmetrically normalized
//! incidence `M̃_ij = 1/√(deg_A(i)·deg_V(j))`:
//!
//! ```text
//! A^{l+1} = M̃ · V^l        V^{l+1} = M̃ᵀ · A^l
//! ```
//!
//! and the outputs average layers `1..=L` (or `0..=L` with `include_layer0`).
//! Item tables carry one extra trailing row for the padding id; that row stays
//! out of the graph and is copied through unchanged.

use crate::dataset::{InteractionMatrix, PreparedSequence};
use crate::error::{Error, Result};
use crate::numeric::{axpy, RealMatrix};

#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency {
    pub n_accounts: usize,
    pub n_items: usize,
    /// `(account, item, weight)` for every interaction, sorted by account then item.
    pub entries: Vec<(usize, usize, f64)>,
}

pub fn normalize_adjacency(m: &InteractionMatrix) -> NormalizedAdjacency {
    let entries = m
        .pairs
        .iter()
        .map(|&(a, i)| {
            let w = 1.0 / ((m.account_degree[a] * m.item_degree[i]) as f64).sqrt();
            (a, i, w)
        })
        .collect();
    NormalizedAdjacency {
        n_accounts: m.n_accounts,
        n_items: m.n_items,
        entries,
    }
}

impl NormalizedAdjacency {
    /// Dense `m × n` form, for small-graph checks.
    pub fn to_dense(&self) -> RealMatrix {
        let mut out = RealMatrix::zeros(self.n_accounts, self.n_items);
        for &(a, i, w) in &self.entries {
            out.set(a, i, w);
        }
        out
    }

    /// `M̃ · items` (items has at least `n_items` rows; extra rows are ignored).
    fn to_accounts(&self, items: &RealMatrix) -> RealMatrix {
        let mut out = RealMatrix::zeros(self.n_accounts, items.cols());
        for &(a, i, w) in &self.entries {
            axpy(out.row_mut(a), w, items.row(i));
        }
        out
    }

    /// `M̃ᵀ · accounts`, with `rows` output rows (rows past `n_items` stay zero).
    fn to_items(&self, accounts: &RealMatrix, rows: usize) -> RealMatrix {
        let mut out = RealMatrix::zeros(rows, accounts.cols());
        for &(a, i, w) in &self.entries {
            axpy(out.row_mut(i), w, accounts.row(a));
        }
        out
    }
}

fn check_shapes(
    adj: &NormalizedAdjacency,
    accounts: &RealMatrix,
    items: &RealMatrix,
    layers: usize,
) -> Result<()> {
    if layers < 1 {
        return Err(Error::InvalidConfig(
            "propagation needs at least one layer".into(),
        ));
    }
    if accounts.rows() != adj.n_accounts
        || items.rows() != adj.n_items + 1
        || accounts.cols() != items.cols()
    {
        return Err(Error::InvalidInput(format!(
            "embedding shapes {:?}/{:?} do not fit a {}x{} graph (+1 padding row)",
            accounts.shape(),
            items.shape(),
            adj.n_accounts,
            adj.n_items
        )));
    }
    Ok(())
}

/// Propagated `(H_A, H_V)` from initial `(E_A, E_V)`.
pub fn propagate(
    e_accounts: &RealMatrix,
    e_items: &RealMatrix,
    adj: &NormalizedAdjacency,
    layers: usize,
    include_layer0: bool,
) -> Result<(RealMatrix, RealMatrix)> {
    check_shapes(adj, e_accounts, e_items, layers)?;
    let rows_v = e_items.rows();
    let mut sum_a = RealMatrix::zeros(e_accounts.rows(), e_accounts.cols());
    let mut sum_v = RealMatrix::zeros(rows_v, e_items.cols());
    if include_layer0 {
        sum_a.add_scaled(e_accounts, 1.0);
        sum_v.add_scaled(e_items, 1.0);
    }
    let mut a = e_accounts.clone();
    let mut v = e_items.clone();
    for _ in 0..layers {
        let next_a = adj.to_accounts(&v);
        let next_v = adj.to_items(&a, rows_v);
        a = next_a;
        v = next_v;
        sum_a.add_scaled(&a, 1.0);
        sum_v.add_scaled(&v, 1.0);
    }
    let count = (layers + include_layer0 as usize) as f64;
    sum_a.scale(1.0 / count);
    sum_v.scale(1.0 / count);
    let pad = adj.n_items;
    sum_v.row_mut(pad).copy_from_slice(e_items.row(pad));
    Ok((sum_a, sum_v))
}

/// Adjoint of [`propagate`]: maps `(∂L/∂H_A, ∂L/∂H_V)` to `(∂L/∂E_A, ∂L/∂E_V)`.
pub fn propagate_backward(
    grad_accounts: &RealMatrix,
    grad_items: &RealMatrix,
    adj: &NormalizedAdjacency,
    layers: usize,
    include_layer0: bool,
) -> Result<(RealMatrix, RealMatrix)> {
    check_shapes(adj, grad_accounts, grad_items, layers)?;
    let rows_v = grad_items.rows();
    let pad = adj.n_items;
    let count = (layers + include_layer0 as usize) as f64;
    let mut seed_a = grad_accounts.clone();
    seed_a.scale(1.0 / count);
    let mut seed_v = grad_items.clone();
    seed_v.scale(1.0 / count);
    seed_v.row_mut(pad).iter_mut().for_each(|g| *g = 0.0);

    // adjoint of layer l receives the output seed plus what flows back from l+1
    let mut ga = seed_a.clone();
    let mut gv = seed_v.clone();
    for l in (0..layers).rev() {
        let prev_a = adj.to_accounts(&gv);
        let prev_v = adj.to_items(&ga, rows_v);
        ga = prev_a;
        gv = prev_v;
        if l > 0 || include_layer0 {
            ga.add_scaled(&seed_a, 1.0);
            gv.add_scaled(&seed_v, 1.0);
        }
    }
    gv.row_mut(pad).copy_from_slice(grad_items.row(pad));
    Ok((ga, gv))
}

/// Rows of `items` at the prepared ids.
pub fn lookup_sequence(items: &RealMatrix, seq: &PreparedSequence) -> Result<RealMatrix> {
    let d = items.cols();
    let mut out = RealMatrix::zeros(seq.ids.len(), d);
    for (t, &id) in seq.ids.iter().enumerate() {
        if id >= items.rows() {
            return Err(Error::InvalidInput(format!(
                "item id {id} outside embedding table of {} rows",
                items.rows()
            )));
        }
        out.row_mut(t).copy_from_slice(items.row(id));
    }
    Ok(out)
}

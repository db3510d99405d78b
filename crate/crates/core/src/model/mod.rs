//! The end-to-end recommender: forward pass, prediction heads, losses,
//! analytic gradients and training.

mod checkpoint;
mod grad;
mod hyper;
mod params;
mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use grad::LossBreakdown;
pub use hyper::{GraphRefresh, Hyper, HYPER_KEYS};
pub use params::{ModelParams, Shapes, GROUP_NAMES};
pub use train::{history_csv, train, EpochRecord, History};

use crate::dataset::{prepare_sequence, InteractionMatrix, PreparedSequence};
use crate::disentangle::{self, BandLayout, BehaviorDecomposition, PhiParts};
use crate::error::{Error, Result};
use crate::graph::{self, NormalizedAdjacency};
use crate::numeric::{softmax, RealMatrix};
use crate::reason::{self, ReasoningTrace};

/// Clamp applied to probabilities before taking logarithms.
pub const LOG_EPS: f64 = 1e-12;

/// Graph-propagated embedding tables for one parameter generation.
#[derive(Clone, Debug)]
pub struct Propagated {
    /// `H_A`, `m × d`.
    pub accounts: RealMatrix,
    /// `H_V`, `(n + 1) × d`.
    pub items: RealMatrix,
    generation: u64,
}

/// Result of a forward pass for one sequence.
#[derive(Clone, Debug)]
pub struct Prediction {
    /// Next-item distribution over the `n` real items.
    pub probs: Vec<f64>,
    pub trace: ReasoningTrace,
}

pub struct Model {
    hyper: Hyper,
    params: ModelParams,
    interactions: InteractionMatrix,
    adjacency: NormalizedAdjacency,
    seq_layout: BandLayout,
    seq_ops: Vec<RealMatrix>,
    vec_layout: BandLayout,
    vec_ops: Vec<RealMatrix>,
    generation: u64,
}

/// Everything the backward pass needs from one forward pass.
pub(crate) struct SampleCache {
    pub account: usize,
    pub seq: PreparedSequence,
    pub pooled: Vec<f64>,
    pub seq_gates: Vec<f64>,
    /// Last row of every band pattern.
    pub pattern_last: Vec<Vec<f64>>,
    pub trace: ReasoningTrace,
    pub phi: Vec<PhiParts>,
    pub h_final: Vec<f64>,
    pub h_account: Vec<f64>,
    pub probs: Vec<f64>,
    pub aux_probs: Vec<Vec<f64>>,
}

impl Model {
    /// Fresh model over the given training interactions, initialized from `hyper.seed`.
    pub fn new(hyper: Hyper, interactions: InteractionMatrix) -> Result<Model> {
        hyper.validate()?;
        let shapes = Self::shapes_for(&hyper, &interactions)?;
        let params = ModelParams::init(shapes, hyper.seed);
        Self::from_parts(hyper, params, interactions)
    }

    pub fn from_parts(
        hyper: Hyper,
        params: ModelParams,
        interactions: InteractionMatrix,
    ) -> Result<Model> {
        hyper.validate()?;
        let shapes = Self::shapes_for(&hyper, &interactions)?;
        params.check_shapes(shapes)?;
        let seq_layout = BandLayout::new(hyper.max_len, hyper.bandwidth)?;
        let vec_layout = BandLayout::new(hyper.dim, hyper.bandwidth)?;
        Ok(Model {
            seq_ops: seq_layout.operators()?,
            vec_ops: vec_layout.operators()?,
            seq_layout,
            vec_layout,
            adjacency: graph::normalize_adjacency(&interactions),
            interactions,
            params,
            hyper,
            generation: 0,
        })
    }

    fn shapes_for(hyper: &Hyper, interactions: &InteractionMatrix) -> Result<Shapes> {
        Ok(Shapes {
            n_accounts: interactions.n_accounts,
            n_items: interactions.n_items,
            dim: hyper.dim,
            seq_bands: BandLayout::new(hyper.max_len, hyper.bandwidth)?.n_bands(),
            vec_bands: BandLayout::new(hyper.dim, hyper.bandwidth)?.n_bands(),
        })
    }

    pub fn hyper(&self) -> &Hyper {
        &self.hyper
    }

    /// Change the termination threshold (it carries no parameters).
    pub fn set_alpha(&mut self, alpha: f64) {
        self.hyper.alpha = alpha;
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Mutable parameters; invalidates every earlier [`Propagated`].
    pub fn params_mut(&mut self) -> &mut ModelParams {
        self.generation += 1;
        &mut self.params
    }

    pub fn interactions(&self) -> &InteractionMatrix {
        &self.interactions
    }

    pub fn n_items(&self) -> usize {
        self.interactions.n_items
    }

    pub fn n_accounts(&self) -> usize {
        self.interactions.n_accounts
    }

    pub fn padding_id(&self) -> usize {
        self.interactions.n_items
    }

    pub fn seq_layout(&self) -> &BandLayout {
        &self.seq_layout
    }

    pub fn vec_layout(&self) -> &BandLayout {
        &self.vec_layout
    }

    pub fn propagate(&self) -> Result<Propagated> {
        let (accounts, items) = graph::propagate(
            &self.params.account_emb,
            &self.params.item_emb,
            &self.adjacency,
            self.hyper.layers,
            self.hyper.include_layer0,
        )?;
        Ok(Propagated {
            accounts,
            items,
            generation: self.generation,
        })
    }

    pub(crate) fn check_fresh(&self, prop: &Propagated) -> Result<()> {
        if prop.generation != self.generation {
            return Err(Error::StaleEmbeddings {
                computed: prop.generation,
                current: self.generation,
            });
        }
        Ok(())
    }

    pub fn prepare(&self, items: &[usize]) -> Result<PreparedSequence> {
        prepare_sequence(items, self.hyper.max_len, self.padding_id())
    }

    fn check_account(&self, account: usize) -> Result<()> {
        if account >= self.n_accounts() {
            return Err(Error::InvalidInput(format!(
                "account {account} outside the {} known accounts",
                self.n_accounts()
            )));
        }
        Ok(())
    }

    /// Stage one for one sequence, through the FFT path.
    pub fn decompose(&self, prop: &Propagated, items: &[usize]) -> Result<BehaviorDecomposition> {
        self.check_fresh(prop)?;
        let seq = self.prepare(items)?;
        let h_seq = graph::lookup_sequence(&prop.items, &seq)?;
        disentangle::decompose(
            &h_seq,
            seq.valid_len,
            self.hyper.bandwidth,
            self.hyper.gate_pooling,
            &self.params.seq_gate_w,
            self.params.seq_gate_b.as_slice(),
        )
    }

    /// The reasoning function `φ` with the current vector gate.
    pub fn phi(&self, state: &[f64]) -> Result<Vec<f64>> {
        disentangle::phi_vector(
            state,
            &self.vec_layout,
            &self.params.vec_gate_w,
            self.params.vec_gate_b.as_slice(),
        )
    }

    /// Full forward pass: scores over the `n` items and the reasoning trace.
    pub fn forward(
        &self,
        prop: &Propagated,
        account: usize,
        items: &[usize],
    ) -> Result<Prediction> {
        self.check_fresh(prop)?;
        let cache = self.forward_cache(prop, account, items)?;
        Ok(Prediction {
            probs: cache.probs,
            trace: cache.trace,
        })
    }

    /// Reasoning trace only (skips the prediction heads).
    pub fn trace(
        &self,
        prop: &Propagated,
        account: usize,
        items: &[usize],
    ) -> Result<ReasoningTrace> {
        self.check_fresh(prop)?;
        self.check_account(account)?;
        let decomp = self.decompose(prop, items)?;
        reason::run_reasoning(
            &decomp.pivot,
            self.params.reason_pos.as_slice(),
            |r| self.phi(r),
            self.hyper.alpha,
            self.hyper.t_max,
        )
    }

    pub(crate) fn forward_cache(
        &self,
        prop: &Propagated,
        account: usize,
        items: &[usize],
    ) -> Result<SampleCache> {
        self.check_account(account)?;
        let p = &self.params;
        let seq = self.prepare(items)?;
        let h_seq = graph::lookup_sequence(&prop.items, &seq)?;
        let decomp = disentangle::decompose(
            &h_seq,
            seq.valid_len,
            self.hyper.bandwidth,
            self.hyper.gate_pooling,
            &p.seq_gate_w,
            p.seq_gate_b.as_slice(),
        )?;
        let last = h_seq.rows() - 1;
        let pattern_last = decomp
            .patterns
            .iter()
            .map(|m| m.row(last).to_vec())
            .collect();
        let pooled = disentangle::pool(&h_seq, seq.valid_len, self.hyper.gate_pooling);

        let mut phi = Vec::new();
        let trace = reason::run_reasoning(
            &decomp.pivot,
            p.reason_pos.as_slice(),
            |r| {
                let parts = disentangle::phi_parts(
                    r,
                    &self.vec_layout,
                    &p.vec_gate_w,
                    p.vec_gate_b.as_slice(),
                )?;
                let out = parts.output.clone();
                phi.push(parts);
                Ok(out)
            },
            self.hyper.alpha,
            self.hyper.t_max,
        )?;
        let h_final = reason::aggregate(&trace.users)?;
        let h_account = prop.accounts.row(account).to_vec();
        let probs = predict(&h_final, &h_account, &p.pred_w, p.pred_b.as_slice())?;
        let aux_probs = trace
            .users
            .iter()
            .map(|u| predict(u, &h_account, &p.aux_w, p.aux_b.as_slice()))
            .collect::<Result<Vec<_>>>()?;
        Ok(SampleCache {
            account,
            seq,
            pooled,
            seq_gates: decomp.weights,
            pattern_last,
            trace,
            phi,
            h_final,
            h_account,
            probs,
            aux_probs,
        })
    }
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(a.len() + b.len());
    x.extend_from_slice(a);
    x.extend_from_slice(b);
    x
}

/// `softmax(Wᵀ·[h_final; h_account] + b)` over the `n` real items.
pub fn predict(
    h_final: &[f64],
    h_account: &[f64],
    weight: &RealMatrix,
    bias: &[f64],
) -> Result<Vec<f64>> {
    if weight.rows() != h_final.len() + h_account.len() || weight.cols() != bias.len() {
        return Err(Error::InvalidInput(format!(
            "prediction head {:?} / bias {} does not fit inputs of {} + {}",
            weight.shape(),
            bias.len(),
            h_final.len(),
            h_account.len()
        )));
    }
    let mut logits = weight.transpose_mul_vec(&concat(h_final, h_account));
    logits.iter_mut().zip(bias).for_each(|(l, b)| *l += b);
    Ok(softmax(&logits))
}

/// Categorical cross-entropy `−ln p[target]`.
pub fn rec_loss(probs: &[f64], target: usize) -> Result<f64> {
    let p = probs.get(target).ok_or_else(|| {
        Error::InvalidInput(format!("target {target} outside {} items", probs.len()))
    })?;
    Ok(-p.max(LOG_EPS).ln())
}

/// `Σ_t −ln softmax(W_uᵀ·[uᵗ; h_account] + b_u)[target]` with one shared head.
pub fn aux_loss(
    users: &[Vec<f64>],
    h_account: &[f64],
    weight: &RealMatrix,
    bias: &[f64],
    target: usize,
) -> Result<f64> {
    if users.is_empty() {
        return Err(Error::InvalidInput(
            "auxiliary loss needs at least one user".into(),
        ));
    }
    users
        .iter()
        .map(|u| rec_loss(&predict(u, h_account, weight, bias)?, target))
        .sum()
}

pub fn total_loss(rec: f64, aux: f64, beta: f64) -> f64 {
    rec + beta * aux
}

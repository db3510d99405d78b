//! Reverse-mode gradients of the training objective.
//!
//! Band projections are linear in their input, so their adjoints are the
//! transposed band operators of [`BandLayout::operators`](crate::disentangle::BandLayout::operators).
//! The termination test is control flow only: gradients follow the realized
//! trace. Propagated-embedding gradients are pulled back to the initial
//! embeddings through the adjoint of graph propagation.

use rayon::prelude::*;

use super::{concat, Model, ModelParams, Propagated, SampleCache};
use crate::dataset::Sequence;
use crate::disentangle::GatePooling;
use crate::error::{Error, Result};
use crate::graph;
use crate::numeric::{axpy, dot, softmax_backward, RealMatrix};

/// Samples per reduction chunk. Chunk boundaries are independent of the
/// thread count, so gradient sums are bitwise reproducible.
const CHUNK: usize = 8;

/// Batch-mean losses.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub rec: f64,
    pub aux: f64,
    pub total: f64,
    pub samples: usize,
}

struct Accumulator {
    params: ModelParams,
    h_accounts: RealMatrix,
    h_items: RealMatrix,
    losses: Vec<f64>,
    rec: f64,
    aux: f64,
}

impl Accumulator {
    fn new(model: &Model) -> Self {
        let params = model.params.zeros_like();
        Accumulator {
            h_accounts: RealMatrix::zeros(params.account_emb.rows(), params.account_emb.cols()),
            h_items: RealMatrix::zeros(params.item_emb.rows(), params.item_emb.cols()),
            params,
            losses: Vec::new(),
            rec: 0.0,
            aux: 0.0,
        }
    }

    fn merge(&mut self, other: Accumulator) {
        self.params.add_scaled(&other.params, 1.0);
        self.h_accounts.add_scaled(&other.h_accounts, 1.0);
        self.h_items.add_scaled(&other.h_items, 1.0);
        self.losses.extend(other.losses);
        self.rec += other.rec;
        self.aux += other.aux;
    }
}

/// `head += x ⊗ dlogits`, `bias += dlogits`; returns `head · dlogits`.
fn head_backward(
    weight: &RealMatrix,
    grad_w: &mut RealMatrix,
    grad_b: &mut RealMatrix,
    x: &[f64],
    dlogits: &[f64],
) -> Vec<f64> {
    for (i, &xi) in x.iter().enumerate() {
        if xi != 0.0 {
            axpy(grad_w.row_mut(i), xi, dlogits);
        }
    }
    axpy(grad_b.as_mut_slice(), 1.0, dlogits);
    weight.mul_vec(dlogits)
}

fn softmax_ce_grad(probs: &[f64], target: usize, scale: f64) -> Vec<f64> {
    let mut g: Vec<f64> = probs.iter().map(|p| p * scale).collect();
    g[target] -= scale;
    g
}

impl Model {
    fn backward_sample(&self, c: &SampleCache, target: usize, scale: f64, acc: &mut Accumulator) {
        let p = &self.params;
        let g = &mut acc.params;
        let d = self.hyper.dim;
        let beta = self.hyper.beta;
        let steps = c.trace.steps();

        // prediction head
        let dlogits = softmax_ce_grad(&c.probs, target, scale);
        let dx = head_backward(
            &p.pred_w,
            &mut g.pred_w,
            &mut g.pred_b,
            &concat(&c.h_final, &c.h_account),
            &dlogits,
        );
        let mut d_account = dx[d..].to_vec();
        let mut d_users: Vec<Vec<f64>> =
            vec![dx[..d].iter().map(|v| v / steps as f64).collect(); steps];

        // auxiliary head on every inferred user
        if beta != 0.0 {
            for (t, (u, q)) in c.trace.users.iter().zip(&c.aux_probs).enumerate() {
                let dl = softmax_ce_grad(q, target, scale * beta);
                let dx = head_backward(
                    &p.aux_w,
                    &mut g.aux_w,
                    &mut g.aux_b,
                    &concat(u, &c.h_account),
                    &dl,
                );
                axpy(&mut d_users[t], 1.0, &dx[..d]);
                axpy(&mut d_account, 1.0, &dx[d..]);
            }
        }

        // residual reasoning, last step first
        let mut d_state = vec![0.0; d];
        for t in (1..=steps).rev() {
            let parts = &c.phi[t - 1];
            let input = c.trace.state(t - 1);
            let mut d_user = d_users[t - 1].clone();
            axpy(&mut d_user, -1.0, &d_state);
            let mut d_prev = d_state;
            let d_gates: Vec<f64> = parts
                .components
                .iter()
                .map(|comp| dot(&d_user, comp))
                .collect();
            for (op, &gz) in self.vec_ops.iter().zip(&parts.gates) {
                axpy(&mut d_prev, gz, &op.transpose_mul_vec(&d_user));
            }
            let dlogit = softmax_backward(&parts.gates, &d_gates);
            axpy(g.vec_gate_b.as_mut_slice(), 1.0, &dlogit);
            for (i, &ri) in input.iter().enumerate() {
                axpy(g.vec_gate_w.row_mut(i), ri, &dlogit);
            }
            axpy(&mut d_prev, 1.0, &p.vec_gate_w.mul_vec(&dlogit));
            d_state = d_prev;
        }
        axpy(g.reason_pos.as_mut_slice(), 1.0, &d_state);
        let d_pivot = d_state;

        // pivot = Σ_z w_z · (P_z H_seq)[s-1]
        let len = c.seq.ids.len();
        let d_weights: Vec<f64> = c
            .pattern_last
            .iter()
            .map(|row| dot(&d_pivot, row))
            .collect();
        let mut coef = vec![0.0; len];
        for (op, &wz) in self.seq_ops.iter().zip(&c.seq_gates) {
            axpy(&mut coef, wz, op.row(len - 1));
        }
        let mut d_hseq = RealMatrix::zeros(len, d);
        for (j, &cj) in coef.iter().enumerate() {
            axpy(d_hseq.row_mut(j), cj, &d_pivot);
        }

        // fusion gate
        let dlogit = softmax_backward(&c.seq_gates, &d_weights);
        axpy(g.seq_gate_b.as_mut_slice(), 1.0, &dlogit);
        for (i, &xi) in c.pooled.iter().enumerate() {
            axpy(g.seq_gate_w.row_mut(i), xi, &dlogit);
        }
        let d_pooled = p.seq_gate_w.mul_vec(&dlogit);
        match self.hyper.gate_pooling {
            GatePooling::Last => axpy(d_hseq.row_mut(len - 1), 1.0, &d_pooled),
            GatePooling::Mean => {
                let valid = c.seq.valid_len.clamp(1, len);
                for j in len - valid..len {
                    axpy(d_hseq.row_mut(j), 1.0 / valid as f64, &d_pooled);
                }
            }
        }

        for (j, &id) in c.seq.ids.iter().enumerate() {
            axpy(acc.h_items.row_mut(id), 1.0, d_hseq.row(j));
        }
        axpy(acc.h_accounts.row_mut(c.account), 1.0, &d_account);
    }

    fn accumulate(
        &self,
        prop: &Propagated,
        samples: &[&Sequence],
        scale: f64,
    ) -> Result<Accumulator> {
        let mut acc = Accumulator::new(self);
        for s in samples {
            let cache = self.forward_cache(prop, s.account, &s.items)?;
            let rec = super::rec_loss(&cache.probs, s.target)?;
            let aux = cache
                .aux_probs
                .iter()
                .map(|q| super::rec_loss(q, s.target))
                .sum::<Result<f64>>()?;
            acc.losses
                .push(super::total_loss(rec, aux, self.hyper.beta));
            acc.rec += rec;
            acc.aux += aux;
            self.backward_sample(&cache, s.target, scale, &mut acc);
        }
        Ok(acc)
    }

    /// Batch-mean loss and its gradient with respect to every parameter group.
    /// `prop` must be current.
    pub fn compute_gradients(
        &self,
        prop: &Propagated,
        batch: &[&Sequence],
    ) -> Result<(LossBreakdown, ModelParams)> {
        self.check_fresh(prop)?;
        self.gradients_unchecked(prop, batch)
            .map(|(loss, grads, _)| (loss, grads))
    }

    /// As [`Model::compute_gradients`] but accepts embeddings propagated from
    /// earlier parameters; also returns each sample's total loss.
    pub(crate) fn gradients_unchecked(
        &self,
        prop: &Propagated,
        batch: &[&Sequence],
    ) -> Result<(LossBreakdown, ModelParams, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        let scale = 1.0 / batch.len() as f64;
        let parts: Vec<Accumulator> = batch
            .par_chunks(CHUNK)
            .map(|chunk| self.accumulate(prop, chunk, scale))
            .collect::<Result<_>>()?;
        let mut parts = parts.into_iter();
        let mut acc = parts.next().expect("non-empty batch");
        for part in parts {
            acc.merge(part);
        }

        let (ga, gv) = graph::propagate_backward(
            &acc.h_accounts,
            &acc.h_items,
            &self.adjacency,
            self.hyper.layers,
            self.hyper.include_layer0,
        )?;
        acc.params.account_emb = ga;
        acc.params.item_emb = gv;
        if let Some(group) = acc.params.first_non_finite() {
            return Err(Error::NonFinite(format!("gradient of {group}")));
        }
        let n = batch.len() as f64;
        let loss = LossBreakdown {
            rec: acc.rec / n,
            aux: acc.aux / n,
            total: (acc.rec + self.hyper.beta * acc.aux) / n,
            samples: batch.len(),
        };
        Ok((loss, acc.params, acc.losses))
    }

    /// Batch-mean objective with freshly propagated embeddings.
    pub fn batch_loss(&self, batch: &[&Sequence]) -> Result<LossBreakdown> {
        let prop = self.propagate()?;
        let mut rec = 0.0;
        let mut aux = 0.0;
        for s in batch {
            let c = self.forward_cache(&prop, s.account, &s.items)?;
            rec += super::rec_loss(&c.probs, s.target)?;
            aux += c
                .aux_probs
                .iter()
                .map(|q| super::rec_loss(q, s.target))
                .sum::<Result<f64>>()?;
        }
        let n = batch.len() as f64;
        Ok(LossBreakdown {
            rec: rec / n,
            aux: aux / n,
            total: (rec + self.hyper.beta * aux) / n,
            samples: batch.len(),
        })
    }
}

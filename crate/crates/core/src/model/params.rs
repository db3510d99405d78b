use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numeric::RealMatrix;

/// Every learnable tensor of the model.
///
/// Vectors are stored as `1 × n` matrices so that all groups share one shape
/// type and can be walked uniformly by optimizers, checkpoints and gradient checks.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    /// `E_A`, `m × d`.
    pub account_emb: RealMatrix,
    /// `E_V`, `(n + 1) × d`; the last row embeds the padding id.
    pub item_emb: RealMatrix,
    /// Sequence fusion gate, `d × Z` and `1 × Z`.
    pub seq_gate_w: RealMatrix,
    pub seq_gate_b: RealMatrix,
    /// Reasoning-function gate, `d × Z'` and `1 × Z'`.
    pub vec_gate_w: RealMatrix,
    pub vec_gate_b: RealMatrix,
    /// Reasoning position embedding `r_p`, `1 × d`.
    pub reason_pos: RealMatrix,
    /// Prediction head, `2d × n` and `1 × n`.
    pub pred_w: RealMatrix,
    pub pred_b: RealMatrix,
    /// Auxiliary head shared by every reasoning step, `2d × n` and `1 × n`.
    pub aux_w: RealMatrix,
    pub aux_b: RealMatrix,
}

pub const GROUP_NAMES: [&str; 11] = [
    "account_emb",
    "item_emb",
    "seq_gate_w",
    "seq_gate_b",
    "vec_gate_w",
    "vec_gate_b",
    "reason_pos",
    "pred_w",
    "pred_b",
    "aux_w",
    "aux_b",
];

/// Sizes that fix every parameter shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shapes {
    pub n_accounts: usize,
    pub n_items: usize,
    pub dim: usize,
    pub seq_bands: usize,
    pub vec_bands: usize,
}

impl ModelParams {
    pub fn zeros(s: Shapes) -> Self {
        ModelParams {
            account_emb: RealMatrix::zeros(s.n_accounts, s.dim),
            item_emb: RealMatrix::zeros(s.n_items + 1, s.dim),
            seq_gate_w: RealMatrix::zeros(s.dim, s.seq_bands),
            seq_gate_b: RealMatrix::zeros(1, s.seq_bands),
            vec_gate_w: RealMatrix::zeros(s.dim, s.vec_bands),
            vec_gate_b: RealMatrix::zeros(1, s.vec_bands),
            reason_pos: RealMatrix::zeros(1, s.dim),
            pred_w: RealMatrix::zeros(2 * s.dim, s.n_items),
            pred_b: RealMatrix::zeros(1, s.n_items),
            aux_w: RealMatrix::zeros(2 * s.dim, s.n_items),
            aux_b: RealMatrix::zeros(1, s.n_items),
        }
    }

    /// Uniform `±1/√fan_in` initialization; biases start at zero.
    pub fn init(s: Shapes, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ModelParams::zeros(s);
        let fill = |m: &mut RealMatrix, fan_in: usize, rng: &mut ChaCha8Rng| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            m.as_mut_slice()
                .iter_mut()
                .for_each(|v| *v = dist.sample(rng));
        };
        fill(&mut p.account_emb, s.dim, &mut rng);
        fill(&mut p.item_emb, s.dim, &mut rng);
        fill(&mut p.seq_gate_w, s.dim, &mut rng);
        fill(&mut p.vec_gate_w, s.dim, &mut rng);
        fill(&mut p.reason_pos, s.dim, &mut rng);
        fill(&mut p.pred_w, 2 * s.dim, &mut rng);
        fill(&mut p.aux_w, 2 * s.dim, &mut rng);
        p
    }

    pub fn shapes(&self) -> Shapes {
        Shapes {
            n_accounts: self.account_emb.rows(),
            n_items: self.pred_b.cols(),
            dim: self.account_emb.cols(),
            seq_bands: self.seq_gate_b.cols(),
            vec_bands: self.vec_gate_b.cols(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams::zeros(self.shapes())
    }

    pub fn groups(&self) -> [(&'static str, &RealMatrix); 11] {
        [
            (GROUP_NAMES[0], &self.account_emb),
            (GROUP_NAMES[1], &self.item_emb),
            (GROUP_NAMES[2], &self.seq_gate_w),
            (GROUP_NAMES[3], &self.seq_gate_b),
            (GROUP_NAMES[4], &self.vec_gate_w),
            (GROUP_NAMES[5], &self.vec_gate_b),
            (GROUP_NAMES[6], &self.reason_pos),
            (GROUP_NAMES[7], &self.pred_w),
            (GROUP_NAMES[8], &self.pred_b),
            (GROUP_NAMES[9], &self.aux_w),
            (GROUP_NAMES[10], &self.aux_b),
        ]
    }

    pub fn groups_mut(&mut self) -> [(&'static str, &mut RealMatrix); 11] {
        [
            (GROUP_NAMES[0], &mut self.account_emb),
            (GROUP_NAMES[1], &mut self.item_emb),
            (GROUP_NAMES[2], &mut self.seq_gate_w),
            (GROUP_NAMES[3], &mut self.seq_gate_b),
            (GROUP_NAMES[4], &mut self.vec_gate_w),
            (GROUP_NAMES[5], &mut self.vec_gate_b),
            (GROUP_NAMES[6], &mut self.reason_pos),
            (GROUP_NAMES[7], &mut self.pred_w),
            (GROUP_NAMES[8], &mut self.pred_b),
            (GROUP_NAMES[9], &mut self.aux_w),
            (GROUP_NAMES[10], &mut self.aux_b),
        ]
    }

    pub fn group(&self, name: &str) -> Option<&RealMatrix> {
        self.groups()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, m)| m)
    }

    pub fn group_mut(&mut self, name: &str) -> Option<&mut RealMatrix> {
        self.groups_mut()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, m)| m)
    }

    pub fn add_scaled(&mut self, other: &ModelParams, factor: f64) {
        for ((_, a), (_, b)) in self.groups_mut().into_iter().zip(other.groups()) {
            a.add_scaled(b, factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.groups().iter().all(|(_, m)| m.is_finite())
    }

    /// Name of the first group holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.groups()
            .iter()
            .find(|(_, m)| !m.is_finite())
            .map(|(n, _)| *n)
    }

    pub(crate) fn check_shapes(&self, expected: Shapes) -> Result<()> {
        let want = ModelParams::zeros(expected);
        for ((name, have), (_, want)) in self.groups().iter().zip(want.groups()) {
            if have.shape() != want.shape() {
                return Err(Error::InvalidInput(format!(
                    "parameter group {name} has shape {:?}, expected {:?}",
                    have.shape(),
                    want.shape()
                )));
            }
        }
        Ok(())
    }
}

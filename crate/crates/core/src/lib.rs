//! Shared-account sequential recommendation with frequency-domain behavior
//! disentanglement and progressive residual reasoning.
//!
//! The pipeline for one account sequence is:
//!
//! 1. look up item embeddings propagated over the account–item graph ([`graph`]),
//! 2. split the sequence spectrum into equal-width bands, return each band to the
//!    time domain and fuse the resulting behavioral patterns with a softmax gate
//!    ([`disentangle`]); the last fused position is the reasoning pivot,
//! 3. repeatedly peel latent users off the pivot until two consecutive users look
//!    alike ([`reason`]),
//! 4. score the vocabulary from the averaged users and the account embedding
//!    ([`model`]).
//!
//! [`dataset`] generates synthetic shared accounts with known user counts and
//! [`eval`] computes ranking metrics and user-count recovery.

pub mod dataset;
pub mod disentangle;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod numeric;
pub mod reason;
pub mod selftest;

pub use dataset::{
    Dataset, InteractionMatrix, PreparedSequence, Sequence, SyntheticConfig, SyntheticGroundTruth,
};
pub use disentangle::{BandLayout, BehaviorDecomposition, GatePooling};
pub use error::{Error, Result};
pub use eval::{CountReport, MetricReport};
pub use graph::NormalizedAdjacency;
pub use model::{Checkpoint, GraphRefresh, History, Hyper, Model, ModelParams};
pub use numeric::{AdamState, RealMatrix};
pub use reason::{ReasoningTrace, StopReason};

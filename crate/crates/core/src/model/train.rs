use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{GraphRefresh, Hyper, Model};
use crate::dataset::{build_interaction_matrix, splitmix64, Dataset, Sequence};
use crate::error::{Error, Result};
use crate::eval;
use crate::numeric::{adam_step, AdamConfig, AdamState};

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sample objective over the epoch.
    pub train_loss: f64,
    /// Validation Recall@5 / MRR@5 in percent (`None` without validation data).
    pub val_recall5: Option<f64>,
    pub val_mrr5: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// CSV `epoch,train_loss,val_recall5,val_mrr5`.
pub fn history_csv(history: &History) -> String {
    let mut out = String::from("epoch,train_loss,val_recall5,val_mrr5\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
    for r in &history.epochs {
        let _ = writeln!(
            out,
            "{},{:.10},{},{}",
            r.epoch,
            r.train_loss,
            opt(r.val_recall5),
            opt(r.val_mrr5)
        );
    }
    out
}

/// Adam over every parameter group with early stopping on validation MRR@5.
///
/// The graph is built from the input portions of `train`. Shuffling, batching
/// and initialization all derive from `hyper.seed`.
pub fn train(train: &Dataset, val: &Dataset, hyper: &Hyper) -> Result<(Model, History)> {
    hyper.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    if train.n_items != val.n_items || train.n_accounts != val.n_accounts {
        return Err(Error::InvalidConfig(
            "training and validation data disagree on vocabulary or accounts".into(),
        ));
    }
    let mut model = Model::new(hyper.clone(), build_interaction_matrix(train))?;
    let adam = AdamConfig::with_lr(hyper.lr);
    let mut states: Vec<AdamState> = model
        .params()
        .groups()
        .iter()
        .map(|(_, m)| AdamState::new(m.as_slice().len()))
        .collect();

    let mut history = History::default();
    let mut best: Option<(f64, super::ModelParams)> = None;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=hyper.epochs {
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(splitmix64(
            hyper.seed ^ epoch as u64,
        )));
        let mut sample_loss = vec![0.0; train.len()];
        let mut prop = model.propagate()?;
        for idx in order.chunks(hyper.batch_size) {
            if hyper.refresh == GraphRefresh::Batch {
                prop = model.propagate()?;
            }
            let batch: Vec<&Sequence> = idx.iter().map(|&i| &train.sequences[i]).collect();
            let (_, grads, losses) = model.gradients_unchecked(&prop, &batch)?;
            for (&i, l) in idx.iter().zip(losses) {
                sample_loss[i] = l;
            }
            let params = model.params_mut();
            for (((_, p), (_, g)), state) in params
                .groups_mut()
                .into_iter()
                .zip(grads.groups())
                .zip(&mut states)
            {
                adam_step(p.as_mut_slice(), g.as_slice(), state, &adam)?;
            }
            if let Some(group) = model.params().first_non_finite() {
                return Err(Error::NonFinite(format!(
                    "parameter group {group} after epoch {epoch}"
                )));
            }
        }
        let train_loss = sample_loss.iter().sum::<f64>() / train.len() as f64;

        let (val_recall5, val_mrr5) = if val.is_empty() {
            (None, None)
        } else {
            let report = eval::evaluate(&model, &model.propagate()?, val, &[5])?;
            (Some(report.recall[0]), Some(report.mrr[0]))
        };
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_recall5,
            val_mrr5,
        });

        match val_mrr5 {
            None => history.best_epoch = epoch,
            Some(score) => {
                if best.as_ref().is_none_or(|(b, _)| score > *b) {
                    best = Some((score, model.params().clone()));
                    history.best_epoch = epoch;
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best >= hyper.patience.max(1) {
                        history.stopped_early = true;
                        break;
                    }
                }
            }
        }
    }

    if let Some((_, params)) = best {
        *model.params_mut() = params;
    }
    Ok((model, history))
}

//! Synthetic shared accounts with known latent users.
//!
//! The vocabulary is cut into topics of `pool_size` items after a seeded
//! shuffle. Every account draws `K` users from the configured distribution and
//! gives each user its own topic (so pools never overlap inside an account) and
//! its own block period. Users take turns round-robin: the active user emits
//! `period` consecutive interactions, each an item drawn uniformly from its
//! pool, then hands over to the next user. The last event of a sequence is the
//! held-out target.

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Dataset, Sequence, SyntheticGroundTruth, TruthRecord};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub n_items: usize,
    pub n_accounts: usize,
    /// Relative weight of `K = 1, 2, ...` latent users per account.
    pub k_weights: Vec<f64>,
    pub pool_size: usize,
    /// Candidate block periods; users of one account get distinct periods while they last.
    pub periods: Vec<usize>,
    pub mean_len: usize,
    /// Input lengths are uniform on `mean_len ± len_spread`.
    pub len_spread: usize,
    pub sequences_per_account: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_items: 200,
            n_accounts: 500,
            k_weights: vec![1.0, 1.0, 1.0],
            pool_size: 10,
            periods: vec![2, 3, 4, 6],
            mean_len: 15,
            len_spread: 5,
            sequences_per_account: 4,
            seed: 42,
        }
    }
}

impl SyntheticConfig {
    pub fn k_max(&self) -> usize {
        self.k_weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.k_weights.is_empty() || self.k_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return bad(format!(
                "k_weights must be non-empty and non-negative: {:?}",
                self.k_weights
            ));
        }
        if self.k_weights.iter().sum::<f64>() <= 0.0 {
            return bad("k_weights sum to zero".into());
        }
        if self.pool_size == 0 {
            return bad("pool_size must be at least 1".into());
        }
        if self.k_max() * self.pool_size > self.n_items {
            return bad(format!(
                "k_max ({}) x pool_size ({}) exceeds n_items ({})",
                self.k_max(),
                self.pool_size,
                self.n_items
            ));
        }
        if self.periods.is_empty() || self.periods.contains(&0) {
            return bad(format!(
                "periods must be non-empty and positive: {:?}",
                self.periods
            ));
        }
        if self.mean_len == 0 || self.len_spread >= self.mean_len {
            return bad(format!(
                "mean_len ({}) must exceed len_spread ({})",
                self.mean_len, self.len_spread
            ));
        }
        if self.sequences_per_account == 0 {
            return bad("sequences_per_account must be at least 1".into());
        }
        Ok(())
    }
}

/// SplitMix64 finalizer, used to derive independent per-account seeds.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct LatentUser<'a> {
    pool: &'a [usize],
    period: usize,
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<(Dataset, SyntheticGroundTruth)> {
    cfg.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut perm: Vec<usize> = (0..cfg.n_items).collect();
    perm.shuffle(&mut master);
    let topics: Vec<&[usize]> = perm.chunks_exact(cfg.pool_size).collect();
    let k_dist =
        WeightedIndex::new(&cfg.k_weights).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let account_seed = master.gen::<u64>();

    let per_account: Vec<Vec<(Sequence, TruthRecord)>> = (0..cfg.n_accounts)
        .into_par_iter()
        .map(|account| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(splitmix64(account_seed ^ splitmix64(account as u64)));
            let k = k_dist.sample(&mut rng) + 1;
            let topic_ids = rand::seq::index::sample(&mut rng, topics.len(), k);
            let mut periods = cfg.periods.clone();
            periods.shuffle(&mut rng);
            let users: Vec<LatentUser> = topic_ids
                .iter()
                .enumerate()
                .map(|(u, t)| LatentUser {
                    pool: topics[t],
                    period: periods[u % periods.len()],
                })
                .collect();
            (0..cfg.sequences_per_account)
                .map(|_| sample_sequence(account, &users, cfg, &mut rng))
                .collect()
        })
        .collect();

    let (sequences, records) = per_account.into_iter().flatten().unzip();
    let dataset = Dataset::new(cfg.n_items, cfg.n_accounts, sequences)?;
    Ok((dataset, SyntheticGroundTruth { records }))
}

fn sample_sequence(
    account: usize,
    users: &[LatentUser],
    cfg: &SyntheticConfig,
    rng: &mut ChaCha8Rng,
) -> (Sequence, TruthRecord) {
    let len = rng.gen_range(cfg.mean_len - cfg.len_spread..=cfg.mean_len + cfg.len_spread);
    let mut active = rng.gen_range(0..users.len());
    let mut left = rng.gen_range(1..=users[active].period);
    let mut items = Vec::with_capacity(len + 1);
    let mut labels = Vec::with_capacity(len + 1);
    for _ in 0..=len {
        let user = &users[active];
        items.push(*user.pool.choose(rng).expect("pools are non-empty"));
        labels.push(active);
        left -= 1;
        if left == 0 {
            active = (active + 1) % users.len();
            left = users[active].period;
        }
    }
    let target = items.pop().expect("at least one event");
    labels.pop();
    (
        Sequence {
            account,
            items,
            target,
        },
        TruthRecord {
            account,
            k: users.len(),
            labels,
        },
    )
}

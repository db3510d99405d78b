//! Invariant checks over every module, runnable from a release binary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{build_interaction_matrix, Dataset, InteractionMatrix, Sequence};
use crate::disentangle::{
    self, band_energies, partition_bands, to_frequency, BandLayout, GatePooling,
};
use crate::error::Result;
use crate::graph;
use crate::model::{Hyper, Model, ModelParams};
use crate::numeric::{irfft, naive_dft, rfft, RealMatrix};
use crate::reason;

/// Outcome of one named check.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        CheckResult {
            name,
            passed,
            detail,
        }
    }
}

/// Hyperparameters of the small model used for gradient checks:
/// `d = 8`, `s = 12`, `B = 3` (three sequence bands, two feature bands).
pub fn tiny_hyper() -> Hyper {
    Hyper {
        dim: 8,
        layers: 2,
        bandwidth: 3,
        alpha: 1.5,
        t_max: 3,
        max_len: 12,
        seed: 7,
        ..Hyper::default()
    }
}

/// Tiny model over 5 accounts and 20 items plus a handful of sequences,
/// some shorter than `max_len` (padded) and some longer (truncated).
pub fn tiny_fixture(seed: u64) -> Result<(Model, Dataset)> {
    let (n_items, n_accounts) = (20, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sequences = (0..10)
        .map(|k| {
            let len = rng.gen_range(4..=15);
            Sequence {
                account: k % n_accounts,
                items: (0..len).map(|_| rng.gen_range(0..n_items)).collect(),
                target: rng.gen_range(0..n_items),
            }
        })
        .collect();
    let data = Dataset::new(n_items, n_accounts, sequences)?;
    let hyper = Hyper {
        seed,
        ..tiny_hyper()
    };
    let mut model = Model::new(hyper, build_interaction_matrix(&data))?;
    // larger than the default init so every group has a visible gradient
    let mut params = ModelParams::init(model.params().shapes(), seed ^ 0x5eed);
    for (_, g) in params.groups_mut() {
        for v in g.as_mut_slice() {
            *v = 0.5 * (*v + rng.gen_range(-0.3..0.3));
        }
    }
    *model.params_mut() = params;
    Ok((model, data))
}

/// Per-group `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)` from central
/// differences of the batch-mean loss with step `h`.
pub fn gradient_check(
    model: &mut Model,
    batch: &[&Sequence],
    h: f64,
) -> Result<Vec<(&'static str, f64)>> {
    let prop = model.propagate()?;
    let (_, analytic) = model.compute_gradients(&prop, batch)?;
    let mut out = Vec::new();
    for (name, grad) in analytic.groups() {
        let mut diff = 0.0;
        let mut na = 0.0;
        let mut nn = 0.0;
        for idx in 0..grad.as_slice().len() {
            let original = model.params().group(name).expect("known group").as_slice()[idx];
            let mut eval = |v: f64| -> Result<f64> {
                model
                    .params_mut()
                    .group_mut(name)
                    .expect("known group")
                    .as_mut_slice()[idx] = v;
                Ok(model.batch_loss(batch)?.total)
            };
            let plus = eval(original + h)?;
            let minus = eval(original - h)?;
            eval(original)?;
            let numeric = (plus - minus) / (2.0 * h);
            let a = grad.as_slice()[idx];
            diff += (a - numeric) * (a - numeric);
            na += a * a;
            nn += numeric * numeric;
        }
        let scale = na.sqrt().max(nn.sqrt()).max(1e-10);
        out.push((name, diff.sqrt() / scale));
    }
    Ok(out)
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> RealMatrix {
    RealMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

fn check_fft(rng: &mut ChaCha8Rng, trials: usize) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        for s in 1..=64 {
            let x: Vec<f64> = (0..s).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let spec = rfft(&x)?;
            let back = irfft(&spec, s)?;
            let oracle = naive_dft(&x)?;
            for (a, b) in x.iter().zip(&back) {
                worst = worst.max((a - b).abs());
            }
            for (a, b) in spec.iter().zip(&oracle) {
                worst = worst.max((a - b).norm());
            }
        }
    }
    Ok(CheckResult::new(
        "fft round trip and DFT oracle",
        worst < 1e-9,
        format!("max error {worst:.2e}"),
    ))
}

fn check_bands(rng: &mut ChaCha8Rng, trials: usize) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let s = rng.gen_range(4..=64);
        let d = rng.gen_range(2..=32);
        let b = [1, 3, 5, 7, 9][rng.gen_range(0..5)];
        let h = random_matrix(rng, s, d);
        let spec = to_frequency(&h)?;
        let bands = partition_bands(&spec, b)?;
        let mut sum = RealMatrix::zeros(s, d);
        for band in &bands {
            sum.add_scaled(&disentangle::band_to_time(band, s)?, 1.0);
        }
        worst = worst.max(sum.max_abs_diff(&h));
        let energy: f64 = band_energies(&bands).iter().sum();
        worst = worst.max((energy - spec.energy()).abs() / spec.energy().max(1.0));
    }
    Ok(CheckResult::new(
        "band reconstruction and energy",
        worst < 1e-8,
        format!("max error {worst:.2e}"),
    ))
}

fn check_gate(rng: &mut ChaCha8Rng, trials: usize) -> Result<CheckResult> {
    let mut ok = true;
    for _ in 0..trials {
        let d = rng.gen_range(1..=16);
        let z = rng.gen_range(1..=8);
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let bias: Vec<f64> = (0..z).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let w = disentangle::gate(&x, &random_matrix(rng, d, z), &bias)?;
        ok &= w.iter().all(|&v| v >= 0.0) && (w.iter().sum::<f64>() - 1.0).abs() < 1e-9;
    }
    Ok(CheckResult::new(
        "fusion gate simplex",
        ok,
        format!("{trials} gate inputs"),
    ))
}

/// `(H_A, H_V)` via dense matrix products, layer-by-layer.
fn dense_propagate(
    adj: &RealMatrix,
    ea: &RealMatrix,
    ev: &RealMatrix,
    layers: usize,
) -> Result<(RealMatrix, RealMatrix)> {
    let adj_t = adj.transpose();
    let (mut a, mut v) = (ea.clone(), ev.clone());
    let mut sa = RealMatrix::zeros(ea.rows(), ea.cols());
    let mut sv = RealMatrix::zeros(ev.rows(), ev.cols());
    for _ in 0..layers {
        let na = adj.matmul(&v)?;
        let nv = adj_t.matmul(&a)?;
        a = na;
        v = nv;
        sa.add_scaled(&a, 1.0 / layers as f64);
        sv.add_scaled(&v, 1.0 / layers as f64);
    }
    Ok((sa, sv))
}

fn check_lightgcn(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    let mut graphs = 0;
    for m in 1..=3 {
        for n in 1..=3 {
            for mask in 0u32..(1 << (m * n)) {
                let pairs = (0..m * n)
                    .filter(|b| mask >> b & 1 == 1)
                    .map(|b| (b / n, b % n))
                    .collect();
                let adj = graph::normalize_adjacency(&InteractionMatrix::from_pairs(m, n, pairs)?);
                let ea = random_matrix(rng, m, 3);
                let ev = random_matrix(rng, n + 1, 3);
                for layers in 1..=3 {
                    let (ha, hv) = graph::propagate(&ea, &ev, &adj, layers, false)?;
                    let dense = adj.to_dense();
                    let mut ev_real = RealMatrix::zeros(n, 3);
                    for i in 0..n {
                        ev_real.row_mut(i).copy_from_slice(ev.row(i));
                    }
                    let (da, dv) = dense_propagate(&dense, &ea, &ev_real, layers)?;
                    worst = worst.max(ha.max_abs_diff(&da));
                    for i in 0..n {
                        for j in 0..3 {
                            worst = worst.max((hv.get(i, j) - dv.get(i, j)).abs());
                        }
                    }
                    worst = worst.max(
                        hv.row(n)
                            .iter()
                            .zip(ev.row(n))
                            .map(|(a, b)| (a - b).abs())
                            .fold(0.0, f64::max),
                    );
                }
                graphs += 1;
            }
        }
    }
    Ok(CheckResult::new(
        "graph propagation vs dense",
        worst < 1e-10,
        format!("{graphs} graphs, max error {worst:.2e}"),
    ))
}

fn check_reasoning(rng: &mut ChaCha8Rng, trials: usize) -> Result<CheckResult> {
    let d = 8;
    let t_max = 6;
    let layout = BandLayout::new(d, 2)?;
    let mut failures = Vec::new();
    for trial in 0..trials {
        let pivot: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let pos: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let w = random_matrix(rng, d, layout.n_bands());
        let bias = vec![0.0; layout.n_bands()];
        for alpha in [-1.0, 0.3, 0.5, 0.7, 1.5] {
            let trace = reason::run_reasoning(
                &pivot,
                &pos,
                |r| disentangle::phi_vector(r, &layout, &w, &bias),
                alpha,
                t_max,
            )?;
            let t = trace.steps();
            let mut recon = trace.states[t - 1].clone();
            for u in &trace.users {
                crate::numeric::axpy(&mut recon, 1.0, u);
            }
            let telescoping = recon
                .iter()
                .zip(&trace.initial)
                .all(|(a, b)| (a - b).abs() < 1e-9);
            let first_hit = trace.similarities[..trace.similarities.len().saturating_sub(1)]
                .iter()
                .all(|&s| s <= alpha);
            let expected = match alpha {
                a if a < -1.0 + 1e-12 => t == 2,
                a if a > 1.0 => t == t_max,
                _ => (1..=t_max).contains(&t),
            };
            if !(telescoping && first_hit && expected) {
                failures.push(format!("trial {trial} alpha {alpha}: T={t}"));
            }
        }
    }
    Ok(CheckResult::new(
        "reasoning trace invariants",
        failures.is_empty(),
        failures
            .first()
            .cloned()
            .unwrap_or_else(|| format!("{trials} pivots")),
    ))
}

fn check_gradients() -> Result<CheckResult> {
    let (mut model, data) = tiny_fixture(11)?;
    let batch: Vec<&Sequence> = data.sequences.iter().collect();
    let errors = gradient_check(&mut model, &batch, 1e-5)?;
    let (name, worst) = errors
        .iter()
        .copied()
        .fold(("", 0.0), |acc, e| if e.1 > acc.1 { e } else { acc });
    Ok(CheckResult::new(
        "analytic gradients",
        worst < 1e-3,
        format!("worst group {name}: {worst:.2e}"),
    ))
}

fn check_ablations() -> Result<CheckResult> {
    let (model, data) = tiny_fixture(13)?;
    let mut hyper = model.hyper().clone();
    hyper.beta = 0.0;
    let model = Model::from_parts(hyper, model.params().clone(), model.interactions().clone())?;
    let prop = model.propagate()?;
    let batch: Vec<&Sequence> = data.sequences.iter().collect();
    let (_, grads) = model.compute_gradients(&prop, &batch)?;
    let aux_zero = grads
        .aux_w
        .as_slice()
        .iter()
        .chain(grads.aux_b.as_slice())
        .all(|&g| g == 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let h = random_matrix(&mut rng, 12, 8);
    let w = random_matrix(&mut rng, 8, 1);
    let d = disentangle::decompose(&h, 12, 12, GatePooling::Mean, &w, &[0.0])?;
    let fused_err = d.fused.max_abs_diff(&h);
    Ok(CheckResult::new(
        "ablation limits",
        aux_zero && fused_err < 1e-9,
        format!("aux gradients zero: {aux_zero}, single-band error {fused_err:.2e}"),
    ))
}

/// Runs every check; `trials` scales the randomized suites.
pub fn run_all(trials: usize, seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trials = trials.max(1);
    let checks: Vec<(&'static str, Result<CheckResult>)> = vec![
        ("fft", check_fft(&mut rng, trials.div_ceil(10))),
        ("bands", check_bands(&mut rng, trials)),
        ("gate", check_gate(&mut rng, trials * 10)),
        ("graph", check_lightgcn(&mut rng)),
        ("reasoning", check_reasoning(&mut rng, trials * 10)),
        ("gradients", check_gradients()),
        ("ablations", check_ablations()),
    ];
    checks
        .into_iter()
        .map(|(name, r)| r.unwrap_or_else(|e| CheckResult::new(name, false, e.to_string())))
        .collect()
}

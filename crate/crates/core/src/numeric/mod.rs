//! Numeric primitives: dense matrices, the real FFT pair, Adam, and a few
//! vector helpers shared by the model.

mod adam;
mod fft;
mod matrix;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use fft::{irfft, naive_dft, rfft, rfft_len, ComplexVector, SpectralPlan};
pub use matrix::{axpy, dot, norm, RealMatrix};
pub use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};

/// Cosine of the angle between `a` and `b`; zero when either vector has zero norm.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "cosine similarity of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}

/// Vector-Jacobian product of softmax: given `p = softmax(l)` and `∂L/∂p`, returns `∂L/∂l`.
pub fn softmax_backward(probs: &[f64], grad_probs: &[f64]) -> Vec<f64> {
    let inner = dot(probs, grad_probs);
    probs
        .iter()
        .zip(grad_probs)
        .map(|(p, g)| p * (g - inner))
        .collect()
}

/// Central finite-difference gradient of `f` at `x` with step `h`.
pub fn finite_diff_grad<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if h.is_nan() || h <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe);
        probe[i] = orig - h;
        let down = f(&probe);
        probe[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!("objective at coordinate {i}")));
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_examples() {
        let v = [0.3, -2.0, 1.5];
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine_similarity(&v, &[0.0; 3]).unwrap(), 0.0);
        assert!(cosine_similarity(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn softmax_examples() {
        for p in softmax(&[0.0, 0.0, 0.0]) {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = softmax(&[1f64.ln(), 3f64.ln()]);
        assert!((p[0] - 0.25).abs() < 1e-12 && (p[1] - 0.75).abs() < 1e-12);
        let a = softmax(&[0.2, -1.0]);
        let b = softmax(&[1000.2, 999.0]);
        assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    }

    #[test]
    fn finite_difference_examples() {
        let g = finite_diff_grad(|x| x[0] * x[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);
        let g = finite_diff_grad(|x| x.iter().sum(), &[1.0, -4.0, 2.5], 1e-5).unwrap();
        assert!(g.iter().all(|v| (v - 1.0).abs() < 1e-9));
        assert!(finite_diff_grad(|x| x[0].ln(), &[0.0], 1e-5).is_err());
        assert!(finite_diff_grad(|x| x[0], &[0.0], 0.0).is_err());
    }

    #[test]
    fn softmax_backward_matches_finite_differences() {
        let logits = [0.4, -1.1, 2.0, 0.0];
        let weights = [1.0, -2.0, 0.5, 3.0];
        let analytic = softmax_backward(&softmax(&logits), &weights);
        let numeric = finite_diff_grad(|l| dot(&softmax(l), &weights), &logits, 1e-6).unwrap();
        for (a, n) in analytic.iter().zip(&numeric) {
            assert!((a - n).abs() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution(l in prop::collection::vec(-50.0f64..50.0, 1..20)) {
            let p = softmax(&l);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|v| *v > 0.0));
        }

        #[test]
        fn cosine_symmetric_and_scale_invariant(
            ab in (1usize..10).prop_flat_map(|n| (
                prop::collection::vec(-5.0f64..5.0, n),
                prop::collection::vec(-5.0f64..5.0, n),
            )),
            scale in 0.01f64..100.0,
        ) {
            let (a, b) = ab;
            let s = cosine_similarity(&a, &b).unwrap();
            prop_assert!((s - cosine_similarity(&b, &a).unwrap()).abs() < 1e-12);
            let scaled: Vec<f64> = a.iter().map(|v| v * scale).collect();
            prop_assert!((s - cosine_similarity(&scaled, &b).unwrap()).abs() < 1e-9);
            prop_assert!((-1.0..=1.0).contains(&s));
        }
    }
}

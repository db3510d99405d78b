//! Real-input discrete Fourier transform pair.
//!
//! Forward transforms use the `e^{-2πi·nk/s}` kernel and keep the `⌊s/2⌋+1`
//! non-redundant bins of a real signal: bin 0 is DC and, for even `s`, the last
//! bin is Nyquist. The inverse rebuilds the hermitian spectrum, runs a complex
//! inverse transform and keeps the real part scaled by `1/s`.
//!
//! [`naive_dft`] evaluates the defining double sum directly and exists as an
//! independent oracle for the fast path.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub type ComplexVector = Vec<Complex64>;

/// Number of non-redundant bins of a real signal of length `len`.
#[inline]
pub fn rfft_len(len: usize) -> usize {
    len / 2 + 1
}

/// Cached forward/inverse plans for one signal length.
#[derive(Clone)]
pub struct SpectralPlan {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralPlan")
            .field("len", &self.len)
            .finish()
    }
}

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<usize, SpectralPlan>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

impl SpectralPlan {
    /// Plan for signals of length `len`, shared per thread.
    pub fn for_len(len: usize) -> Result<SpectralPlan> {
        if len == 0 {
            return Err(Error::InvalidInput(
                "transform length must be at least 1".into(),
            ));
        }
        Ok(PLANS.with(|cell| {
            let (planner, cache) = &mut *cell.borrow_mut();
            cache
                .entry(len)
                .or_insert_with(|| SpectralPlan {
                    len,
                    forward: planner.plan_fft_forward(len),
                    inverse: planner.plan_fft_inverse(len),
                })
                .clone()
        }))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bins(&self) -> usize {
        rfft_len(self.len)
    }

    pub fn rfft(&self, signal: &[f64]) -> Result<ComplexVector> {
        if signal.len() != self.len {
            return Err(Error::InvalidInput(format!(
                "signal length {} does not match plan length {}",
                signal.len(),
                self.len
            )));
        }
        if signal.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("rfft input".into()));
        }
        let mut buf: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward.process(&mut buf);
        buf.truncate(self.bins());
        Ok(buf)
    }

    pub fn irfft(&self, spectrum: &[Complex64]) -> Result<Vec<f64>> {
        let bins = self.bins();
        if spectrum.len() != bins {
            return Err(Error::InvalidInput(format!(
                "spectrum has {} bins, length {} needs {}",
                spectrum.len(),
                self.len,
                bins
            )));
        }
        let n = self.len;
        let mut buf = Vec::with_capacity(n);
        buf.extend_from_slice(spectrum);
        for j in bins..n {
            buf.push(spectrum[n - j].conj());
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / n as f64;
        Ok(buf.into_iter().map(|c| c.re * scale).collect())
    }
}

/// Non-redundant half spectrum of a real signal.
pub fn rfft(signal: &[f64]) -> Result<ComplexVector> {
    if signal.is_empty() {
        return Err(Error::InvalidInput("rfft of an empty signal".into()));
    }
    SpectralPlan::for_len(signal.len())?.rfft(signal)
}

/// Inverse of [`rfft`] for a signal of length `len`.
pub fn irfft(spectrum: &[Complex64], len: usize) -> Result<Vec<f64>> {
    SpectralPlan::for_len(len)?.irfft(spectrum)
}

/// Full-length DFT by direct summation, `O(s²)`.
pub fn naive_dft(signal: &[f64]) -> Result<ComplexVector> {
    if signal.is_empty() {
        return Err(Error::InvalidInput("dft of an empty signal".into()));
    }
    let n = signal.len();
    Ok((0..n)
        .map(|k| {
            signal
                .iter()
                .enumerate()
                .fold(Complex64::new(0.0, 0.0), |acc, (i, &x)| {
                    // reduce the phase index first so large products stay exact
                    let angle = -2.0 * PI * ((i * k) % n) as f64 / n as f64;
                    acc + Complex64::new(x * angle.cos(), x * angle.sin())
                })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn assert_close(a: &[Complex64], b: &[Complex64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).norm() < tol, "{x} vs {y}");
        }
    }

    #[test]
    fn rfft_examples() {
        assert_close(
            &rfft(&[1.0, 1.0, 1.0, 1.0]).unwrap(),
            &[c(4.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            1e-12,
        );
        assert_close(
            &rfft(&[1.0, 0.0, 0.0, 0.0]).unwrap(),
            &[c(1.0, 0.0); 3],
            1e-12,
        );
        assert_close(
            &rfft(&[0.0, 1.0, 0.0, 1.0]).unwrap(),
            &[c(2.0, 0.0), c(0.0, 0.0), c(-2.0, 0.0)],
            1e-12,
        );
        assert!(matches!(rfft(&[]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn irfft_examples() {
        let x = irfft(&[c(4.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)], 4).unwrap();
        for v in x {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let x = irfft(&[c(1.0, 0.0); 3], 4).unwrap();
        for (v, e) in x.iter().zip([1.0, 0.0, 0.0, 0.0]) {
            assert!((v - e).abs() < 1e-12);
        }
        assert!(irfft(&[c(1.0, 0.0); 2], 4).is_err());
    }

    #[test]
    fn naive_dft_examples() {
        assert_close(
            &naive_dft(&[1.0; 4]).unwrap(),
            &[c(4.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            1e-12,
        );
        assert_close(
            &naive_dft(&[0.0, 1.0, 0.0, 1.0]).unwrap(),
            &[c(2.0, 0.0), c(0.0, 0.0), c(-2.0, 0.0), c(0.0, 0.0)],
            1e-12,
        );
        assert_close(&naive_dft(&[2.5]).unwrap(), &[c(2.5, 0.0)], 1e-15);
    }

    #[test]
    fn length_one_and_two() {
        assert_eq!(rfft(&[3.0]).unwrap().len(), 1);
        assert_eq!(irfft(&rfft(&[3.0]).unwrap(), 1).unwrap(), vec![3.0]);
        let x = irfft(&rfft(&[1.0, -2.0]).unwrap(), 2).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] + 2.0).abs() < 1e-12);
    }

    fn signal() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, 1..=64)
    }

    proptest! {
        #[test]
        fn round_trip(x in signal()) {
            let back = irfft(&rfft(&x).unwrap(), x.len()).unwrap();
            for (a, b) in back.iter().zip(&x) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn matches_naive_oracle(x in signal()) {
            let fast = rfft(&x).unwrap();
            let slow = naive_dft(&x).unwrap();
            for (a, b) in fast.iter().zip(&slow) {
                prop_assert!((a - b).norm() < 1e-9);
            }
        }

        #[test]
        fn linearity(pair in (1usize..=64).prop_flat_map(|n| (
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(-5.0f64..5.0, n),
            -3.0f64..3.0,
            -3.0f64..3.0,
        ))) {
            let (x, y, a, b) = pair;
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = rfft(&mix).unwrap();
            let fx = rfft(&x).unwrap();
            let fy = rfft(&y).unwrap();
            for k in 0..lhs.len() {
                prop_assert!((lhs[k] - (fx[k] * a + fy[k] * b)).norm() < 1e-9);
            }
        }

        #[test]
        fn parseval(x in signal()) {
            let energy: f64 = x.iter().map(|v| v * v).sum();
            let spec: f64 = naive_dft(&x).unwrap().iter().map(|c| c.norm_sqr()).sum::<f64>() / x.len() as f64;
            prop_assert!((energy - spec).abs() <= 1e-6 * energy.max(1e-12));
        }
    }
}

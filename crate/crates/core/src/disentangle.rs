//! Stage one: frequency-band decomposition of a sequence representation and
//! gated fusion of the resulting behavioral patterns.
//!
//! Each embedding dimension is treated as a real signal over time. Its
//! half-spectrum (`f = ⌊s/2⌋+1` bins) is cut into `Z = ⌈f/B⌉` contiguous bands
//! of `B` bins (the last may be narrower). Putting one band back into an
//! otherwise empty spectrum and inverting gives that band's time-domain
//! pattern; the patterns of all bands sum back to the input. A softmax gate
//! over a pooled summary of the input weights the patterns, and the last row of
//! the weighted sum is the reasoning pivot.
//!
//! [`phi_vector`] applies the same band machinery to a single `d`-vector, using
//! the feature axis as the signal axis.

use std::fmt::Write as _;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::numeric::{rfft_len, softmax, Complex64, RealMatrix, SpectralPlan};

/// How the fusion gate summarizes a sequence before its affine projection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GatePooling {
    /// Mean over the non-padding positions.
    #[default]
    Mean,
    /// The final position.
    Last,
}

impl std::str::FromStr for GatePooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(GatePooling::Mean),
            "last" => Ok(GatePooling::Last),
            other => Err(Error::InvalidConfig(format!(
                "unknown gate pooling `{other}` (mean|last)"
            ))),
        }
    }
}

impl std::fmt::Display for GatePooling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GatePooling::Mean => "mean",
            GatePooling::Last => "last",
        })
    }
}

/// Band partition of the half-spectrum of a length-`len` signal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BandLayout {
    len: usize,
    bandwidth: usize,
    bands: Vec<Range<usize>>,
}

impl BandLayout {
    pub fn new(len: usize, bandwidth: usize) -> Result<Self> {
        if bandwidth < 1 {
            return Err(Error::InvalidConfig("bandwidth must be at least 1".into()));
        }
        if len < 1 {
            return Err(Error::InvalidConfig(
                "signal length must be at least 1".into(),
            ));
        }
        let bins = rfft_len(len);
        let bands = (0..bins.div_ceil(bandwidth))
            .map(|z| z * bandwidth..((z + 1) * bandwidth).min(bins))
            .collect();
        Ok(BandLayout {
            len,
            bandwidth,
            bands,
        })
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

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn n_bands(&self) -> usize {
        self.bands.len()
    }

    pub fn bands(&self) -> &[Range<usize>] {
        &self.bands
    }

    /// The real `len × len` matrix of each band's time-domain projection, built
    /// by pushing unit impulses through the FFT path. Used for adjoints.
    pub fn operators(&self) -> Result<Vec<RealMatrix>> {
        let plan = SpectralPlan::for_len(self.len)?;
        let mut ops = vec![RealMatrix::zeros(self.len, self.len); self.n_bands()];
        let mut impulse = vec![0.0; self.len];
        for j in 0..self.len {
            impulse[j] = 1.0;
            let spec = plan.rfft(&impulse)?;
            impulse[j] = 0.0;
            for (op, range) in ops.iter_mut().zip(&self.bands) {
                let column = plan.irfft(&masked(&spec, range))?;
                for (i, v) in column.into_iter().enumerate() {
                    op.set(i, j, v);
                }
            }
        }
        Ok(ops)
    }
}

fn masked(spec: &[Complex64], keep: &Range<usize>) -> Vec<Complex64> {
    spec.iter()
        .enumerate()
        .map(|(k, &c)| {
            if keep.contains(&k) {
                c
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect()
}

/// Complex `bins × dims` matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub bins: usize,
    pub dims: usize,
    pub data: Vec<Complex64>,
}

impl Spectrum {
    pub fn get(&self, bin: usize, dim: usize) -> Complex64 {
        self.data[bin * self.dims + dim]
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    fn column(&self, dim: usize) -> Vec<Complex64> {
        (0..self.bins).map(|k| self.get(k, dim)).collect()
    }
}

/// One slice of a [`Spectrum`], remembering where it starts.
#[derive(Clone, Debug, PartialEq)]
pub struct Band {
    pub start: usize,
    pub spectrum: Spectrum,
}

/// rfft of every column of `h` (time runs down the rows).
pub fn to_frequency(h: &RealMatrix) -> Result<Spectrum> {
    let (len, dims) = h.shape();
    let plan = SpectralPlan::for_len(len)?;
    let bins = plan.bins();
    let mut data = vec![Complex64::new(0.0, 0.0); bins * dims];
    for j in 0..dims {
        for (k, c) in plan.rfft(&h.column(j))?.into_iter().enumerate() {
            data[k * dims + j] = c;
        }
    }
    Ok(Spectrum { bins, dims, data })
}

pub fn partition_bands(spectrum: &Spectrum, bandwidth: usize) -> Result<Vec<Band>> {
    if bandwidth < 1 {
        return Err(Error::InvalidConfig("bandwidth must be at least 1".into()));
    }
    let dims = spectrum.dims;
    Ok((0..spectrum.bins.div_ceil(bandwidth))
        .map(|z| {
            let start = z * bandwidth;
            let end = (start + bandwidth).min(spectrum.bins);
            Band {
                start,
                spectrum: Spectrum {
                    bins: end - start,
                    dims,
                    data: spectrum.data[start * dims..end * dims].to_vec(),
                },
            }
        })
        .collect())
}

/// Zero-pad `band` back to the full `rfft_len(len)` bins and invert each column.
pub fn band_to_time(band: &Band, len: usize) -> Result<RealMatrix> {
    let plan = SpectralPlan::for_len(len)?;
    let bins = plan.bins();
    if band.start + band.spectrum.bins > bins {
        return Err(Error::InvalidInput(format!(
            "band [{}, {}) exceeds the {bins} bins of length {len}",
            band.start,
            band.start + band.spectrum.bins
        )));
    }
    let dims = band.spectrum.dims;
    let mut out = RealMatrix::zeros(len, dims);
    let mut padded = vec![Complex64::new(0.0, 0.0); bins];
    for j in 0..dims {
        for (k, c) in band.spectrum.column(j).into_iter().enumerate() {
            padded[band.start + k] = c;
        }
        for (t, v) in plan.irfft(&padded)?.into_iter().enumerate() {
            out.set(t, j, v);
        }
    }
    Ok(out)
}

/// Gate summary of `h`: mean of the last `valid_len` rows, or the final row.
pub fn pool(h: &RealMatrix, valid_len: usize, pooling: GatePooling) -> Vec<f64> {
    let (len, dims) = h.shape();
    match pooling {
        GatePooling::Last => h.row(len - 1).to_vec(),
        GatePooling::Mean => {
            let valid = valid_len.clamp(1, len);
            let mut out = vec![0.0; dims];
            for t in len - valid..len {
                crate::numeric::axpy(&mut out, 1.0, h.row(t));
            }
            out.iter_mut().for_each(|v| *v /= valid as f64);
            out
        }
    }
}

/// `softmax(weightᵀ · input + bias)`; `weight` is `d × Z`.
pub fn gate(input: &[f64], weight: &RealMatrix, bias: &[f64]) -> Result<Vec<f64>> {
    if weight.rows() != input.len() || weight.cols() != bias.len() {
        return Err(Error::InvalidInput(format!(
            "gate projection {:?} with bias {} does not accept a {}-vector",
            weight.shape(),
            bias.len(),
            input.len()
        )));
    }
    let mut logits = weight.transpose_mul_vec(input);
    logits.iter_mut().zip(bias).for_each(|(l, b)| *l += b);
    Ok(softmax(&logits))
}

pub fn fusion_weights(
    h_seq: &RealMatrix,
    valid_len: usize,
    pooling: GatePooling,
    weight: &RealMatrix,
    bias: &[f64],
) -> Result<Vec<f64>> {
    gate(&pool(h_seq, valid_len, pooling), weight, bias)
}

/// Weighted sum of the patterns and its final row.
pub fn fuse_and_pivot(patterns: &[RealMatrix], weights: &[f64]) -> Result<(RealMatrix, Vec<f64>)> {
    let first = patterns
        .first()
        .ok_or_else(|| Error::InvalidInput("no patterns to fuse".into()))?;
    if patterns.len() != weights.len() || patterns.iter().any(|p| p.shape() != first.shape()) {
        return Err(Error::InvalidInput(
            "patterns and fusion weights disagree".into(),
        ));
    }
    let mut fused = RealMatrix::zeros(first.rows(), first.cols());
    for (p, &w) in patterns.iter().zip(weights) {
        fused.add_scaled(p, w);
    }
    let pivot = fused.row(fused.rows() - 1).to_vec();
    Ok((fused, pivot))
}

/// Everything stage one computes for one sequence.
#[derive(Clone, Debug)]
pub struct BehaviorDecomposition {
    pub spectrum: Spectrum,
    pub bands: Vec<Band>,
    pub patterns: Vec<RealMatrix>,
    pub weights: Vec<f64>,
    pub fused: RealMatrix,
    pub pivot: Vec<f64>,
}

pub fn decompose(
    h_seq: &RealMatrix,
    valid_len: usize,
    bandwidth: usize,
    pooling: GatePooling,
    weight: &RealMatrix,
    bias: &[f64],
) -> Result<BehaviorDecomposition> {
    let spectrum = to_frequency(h_seq)?;
    let bands = partition_bands(&spectrum, bandwidth)?;
    let patterns = bands
        .iter()
        .map(|b| band_to_time(b, h_seq.rows()))
        .collect::<Result<Vec<_>>>()?;
    let weights = fusion_weights(h_seq, valid_len, pooling, weight, bias)?;
    if weights.len() != patterns.len() {
        return Err(Error::InvalidInput(format!(
            "gate has {} outputs for {} bands",
            weights.len(),
            patterns.len()
        )));
    }
    let (fused, pivot) = fuse_and_pivot(&patterns, &weights)?;
    Ok(BehaviorDecomposition {
        spectrum,
        bands,
        patterns,
        weights,
        fused,
        pivot,
    })
}

/// Intermediate values of [`phi_vector`], kept for backpropagation.
#[derive(Clone, Debug)]
pub struct PhiParts {
    /// Band components of the input, one `d`-vector per band.
    pub components: Vec<Vec<f64>>,
    pub gates: Vec<f64>,
    pub output: Vec<f64>,
}

pub fn phi_parts(
    r: &[f64],
    layout: &BandLayout,
    weight: &RealMatrix,
    bias: &[f64],
) -> Result<PhiParts> {
    if r.len() != layout.len() {
        return Err(Error::InvalidInput(format!(
            "state of length {} for a layout of length {}",
            r.len(),
            layout.len()
        )));
    }
    let plan = SpectralPlan::for_len(r.len())?;
    let spec = plan.rfft(r)?;
    let components = layout
        .bands()
        .iter()
        .map(|range| plan.irfft(&masked(&spec, range)))
        .collect::<Result<Vec<_>>>()?;
    let gates = gate(r, weight, bias)?;
    if gates.len() != components.len() {
        return Err(Error::InvalidInput(format!(
            "vector gate has {} outputs for {} bands",
            gates.len(),
            components.len()
        )));
    }
    let mut output = vec![0.0; r.len()];
    for (c, &g) in components.iter().zip(&gates) {
        crate::numeric::axpy(&mut output, g, c);
    }
    Ok(PhiParts {
        components,
        gates,
        output,
    })
}

/// Map a reasoning state to one latent user: gated band components of `r`
/// along its feature axis.
pub fn phi_vector(
    r: &[f64],
    layout: &BandLayout,
    weight: &RealMatrix,
    bias: &[f64],
) -> Result<Vec<f64>> {
    phi_parts(r, layout, weight, bias).map(|p| p.output)
}

/// CSV `band,bin,dimension,magnitude` of a decomposition's spectrum.
pub fn spectrum_csv(decomp: &BehaviorDecomposition) -> String {
    let mut out = String::from("band,bin,dimension,magnitude\n");
    for (z, band) in decomp.bands.iter().enumerate() {
        for k in 0..band.spectrum.bins {
            for j in 0..band.spectrum.dims {
                let _ = writeln!(
                    out,
                    "{z},{},{j},{}",
                    band.start + k,
                    band.spectrum.get(k, j).norm()
                );
            }
        }
    }
    out
}

/// Energy of each band of a spectrum (sum of squared magnitudes).
pub fn band_energies(bands: &[Band]) -> Vec<f64> {
    bands.iter().map(|b| b.spectrum.energy()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::naive_dft;
    use proptest::prelude::*;

    fn random(rows: usize, cols: usize, seed: u64) -> RealMatrix {
        let mut state = seed;
        RealMatrix::from_fn(rows, cols, |_, _| {
            state = crate::dataset::splitmix64(state);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
    }

    fn patterns(h: &RealMatrix, bandwidth: usize) -> Vec<RealMatrix> {
        let spec = to_frequency(h).unwrap();
        partition_bands(&spec, bandwidth)
            .unwrap()
            .iter()
            .map(|b| band_to_time(b, h.rows()).unwrap())
            .collect()
    }

    #[test]
    fn constant_sequence_is_dc_only() {
        let h = RealMatrix::from_fn(6, 3, |_, j| j as f64 + 0.5);
        let spec = to_frequency(&h).unwrap();
        for k in 1..spec.bins {
            for j in 0..3 {
                assert!(spec.get(k, j).norm() < 1e-12);
            }
        }
        assert!((spec.get(0, 2).re - 15.0).abs() < 1e-12);
    }

    #[test]
    fn alternating_column_matches_oracle() {
        let h = RealMatrix::from_vec(4, 1, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let spec = to_frequency(&h).unwrap();
        let oracle = naive_dft(&[0.0, 1.0, 0.0, 1.0]).unwrap();
        for (k, o) in oracle.iter().take(3).enumerate() {
            assert!((spec.get(k, 0) - o).norm() < 1e-12);
        }
        assert!((spec.get(2, 0).re + 2.0).abs() < 1e-12);
    }

    #[test]
    fn band_partition_shapes() {
        let layout = BandLayout::new(50, 5).unwrap();
        assert_eq!(layout.bins(), 26);
        let widths: Vec<usize> = layout.bands().iter().map(|r| r.len()).collect();
        assert_eq!(widths, vec![5, 5, 5, 5, 5, 1]);
        assert_eq!(BandLayout::new(50, 26).unwrap().n_bands(), 1);
        assert_eq!(BandLayout::new(50, 40).unwrap().n_bands(), 1);
        assert_eq!(BandLayout::new(50, 1).unwrap().n_bands(), 26);
        assert!(BandLayout::new(50, 0).is_err());

        let spec = to_frequency(&random(50, 2, 1)).unwrap();
        let bands = partition_bands(&spec, 5).unwrap();
        assert_eq!(
            bands.iter().map(|b| b.spectrum.bins).collect::<Vec<_>>(),
            widths
        );
        assert!(partition_bands(&spec, 0).is_err());
    }

    #[test]
    fn single_band_reconstructs_input() {
        let h = random(12, 4, 2);
        let p = patterns(&h, 100);
        assert_eq!(p.len(), 1);
        assert!(p[0].max_abs_diff(&h) < 1e-9);
    }

    #[test]
    fn dc_band_is_the_column_mean() {
        let h = random(9, 3, 3);
        let p = patterns(&h, 1);
        for j in 0..3 {
            let mean = h.column(j).iter().sum::<f64>() / 9.0;
            for t in 0..9 {
                assert!((p[0].get(t, j) - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gate_examples() {
        let h = random(5, 3, 4);
        let w = fusion_weights(
            &h,
            5,
            GatePooling::Mean,
            &RealMatrix::zeros(3, 4),
            &[0.0; 4],
        )
        .unwrap();
        assert!(w.iter().all(|v| (v - 0.25).abs() < 1e-15));
        let w = fusion_weights(
            &h,
            5,
            GatePooling::Mean,
            &RealMatrix::zeros(3, 2),
            &[1f64.ln(), 3f64.ln()],
        )
        .unwrap();
        assert!((w[0] - 0.25).abs() < 1e-12 && (w[1] - 0.75).abs() < 1e-12);
        assert!(fusion_weights(
            &h,
            5,
            GatePooling::Mean,
            &RealMatrix::zeros(2, 2),
            &[0.0; 2]
        )
        .is_err());
    }

    #[test]
    fn mean_pooling_skips_padding() {
        let h = RealMatrix::from_vec(3, 1, vec![100.0, 1.0, 3.0]).unwrap();
        assert_eq!(pool(&h, 2, GatePooling::Mean), vec![2.0]);
        assert_eq!(pool(&h, 2, GatePooling::Last), vec![3.0]);
    }

    #[test]
    fn fusion_cases() {
        let h = random(10, 3, 5);
        let p = patterns(&h, 2);
        let z = p.len();
        let (fused, pivot) = fuse_and_pivot(&p, &vec![1.0 / z as f64; z]).unwrap();
        let mut expected = h.clone();
        expected.scale(1.0 / z as f64);
        assert!(fused.max_abs_diff(&expected) < 1e-9);
        assert_eq!(pivot, fused.row(9).to_vec());

        let mut one_hot = vec![0.0; z];
        one_hot[1] = 1.0;
        let (fused, _) = fuse_and_pivot(&p, &one_hot).unwrap();
        assert!(fused.max_abs_diff(&p[1]) < 1e-15);

        let single = patterns(&h, 100);
        let (fused, pivot) = fuse_and_pivot(&single, &[1.0]).unwrap();
        assert!(fused.max_abs_diff(&h) < 1e-9);
        assert!(pivot
            .iter()
            .zip(h.row(9))
            .all(|(a, b)| (a - b).abs() < 1e-9));
        assert!(fuse_and_pivot(&p, &[1.0]).is_err());
    }

    #[test]
    fn phi_cases() {
        let r: Vec<f64> = random(1, 8, 6).into_vec();
        let wide = BandLayout::new(8, 5).unwrap();
        assert_eq!(wide.n_bands(), 1);
        let u = phi_vector(&r, &wide, &RealMatrix::zeros(8, 1), &[0.0]).unwrap();
        assert!(u.iter().zip(&r).all(|(a, b)| (a - b).abs() < 1e-9));

        let split = BandLayout::new(8, 3).unwrap();
        assert_eq!(split.n_bands(), 2);
        let w = random(8, 2, 7);
        let zero = phi_vector(&[0.0; 8], &split, &w, &[0.3, -0.1]).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));

        // one-hot gate on band 0: keep bins 0..3 of the full DFT (and their mirrors)
        let u = phi_vector(&r, &split, &RealMatrix::zeros(8, 2), &[1e6, -1e6]).unwrap();
        let full = naive_dft(&r).unwrap();
        let oracle: Vec<f64> = (0..8)
            .map(|t| {
                (0..8)
                    .filter(|&k| k.min(8 - k) < 3)
                    .map(|k| {
                        let angle = 2.0 * std::f64::consts::PI * (k * t) as f64 / 8.0;
                        (full[k] * Complex64::new(angle.cos(), angle.sin())).re
                    })
                    .sum::<f64>()
                    / 8.0
            })
            .collect();
        for (a, b) in u.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn operators_match_the_fft_path() {
        let h = random(11, 3, 8);
        let layout = BandLayout::new(11, 2).unwrap();
        let ops = layout.operators().unwrap();
        let p = patterns(&h, 2);
        for (op, pat) in ops.iter().zip(&p) {
            assert!(op.matmul(&h).unwrap().max_abs_diff(pat) < 1e-12);
        }
    }

    #[test]
    fn spectrum_dump_has_one_row_per_bin_and_dimension() {
        let h = random(8, 2, 9);
        let d = decompose(
            &h,
            8,
            2,
            GatePooling::Mean,
            &RealMatrix::zeros(2, 3),
            &[0.0; 3],
        )
        .unwrap();
        let csv = spectrum_csv(&d);
        assert_eq!(csv.lines().count(), 1 + 5 * 2);
        assert!(csv.starts_with("band,bin,dimension,magnitude\n0,0,0,"));
    }

    proptest! {
        #[test]
        fn bands_reconstruct_and_partition_energy(
            len in 4usize..=64,
            dims in 2usize..=8,
            b in prop::sample::select(vec![1usize, 3, 5, 7, 9]),
            seed in any::<u64>(),
        ) {
            let h = random(len, dims, seed);
            let spec = to_frequency(&h).unwrap();
            let bands = partition_bands(&spec, b).unwrap();
            let mut sum = RealMatrix::zeros(len, dims);
            for band in &bands {
                sum.add_scaled(&band_to_time(band, len).unwrap(), 1.0);
            }
            prop_assert!(sum.max_abs_diff(&h) < 1e-8);
            let parts: f64 = band_energies(&bands).iter().sum();
            prop_assert!((parts - spec.energy()).abs() <= 1e-12 * spec.energy().max(1.0));
        }

        #[test]
        fn fusion_weights_are_a_simplex(seed in any::<u64>(), z in 1usize..8) {
            let h = random(6, 4, seed);
            let mut w = random(4, z, seed ^ 1);
            w.scale(10.0);
            let bias = random(1, z, seed ^ 2).into_vec();
            let g = fusion_weights(&h, 4, GatePooling::Mean, &w, &bias).unwrap();
            prop_assert!(g.iter().all(|v| *v >= 0.0));
            prop_assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

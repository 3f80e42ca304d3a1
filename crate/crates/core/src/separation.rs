//! Soft time-frequency masks from a factorisation and waveform
//! reconstruction with the mixture phase.

use ndarray::{Array2, Axis};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::TimeSignal;
use crate::solver::{self, FactorPair, IterationTrace, SolverConfig, ZERO_ROW_THRESHOLD};
use crate::stft::{amplitude, istft, stft, Spectrogram, WindowSpec};
use crate::EVAL_FLOOR;

/// One mask per source, each `bins x frames` with entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    masks: Vec<Array2<f64>>,
}

impl MaskSet {
    /// Checks that all masks share a shape and lie in `[0, 1]`.
    pub fn new(masks: Vec<Array2<f64>>) -> Result<Self> {
        let Some(first) = masks.first() else {
            return Err(Error::InvalidArgument("a mask set needs at least one mask".into()));
        };
        let dim = first.dim();
        if masks.iter().any(|m| m.dim() != dim) {
            return Err(Error::DimensionMismatch("masks differ in shape".into()));
        }
        if masks.iter().flatten().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::InvalidArgument("mask entries must lie in [0, 1]".into()));
        }
        Ok(Self { masks })
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn masks(&self) -> &[Array2<f64>] {
        &self.masks
    }

    pub fn get(&self, k: usize) -> Option<&Array2<f64>> {
        self.masks.get(k)
    }

    /// `(bins, frames)`.
    pub fn dim(&self) -> (usize, usize) {
        self.masks[0].dim()
    }
}

/// `mask_k = W(:,k)H(k,:) ⊘ WH`.
///
/// Where `WH < 1e-12` every mask takes the value `1/K` so the masks still
/// sum to one.
pub fn compute_masks(w: &Array2<f64>, h: &Array2<f64>) -> Result<MaskSet> {
    if w.ncols() != h.nrows() || w.ncols() == 0 {
        return Err(Error::DimensionMismatch(format!("W has {} columns, H has {} rows", w.ncols(), h.nrows())));
    }
    if w.iter().chain(h.iter()).any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(Error::InvalidArgument("factors must be finite and nonnegative".into()));
    }
    let k = w.ncols();
    let total = w.dot(h);
    let uniform = 1.0 / k as f64;
    let masks = (0..k)
        .map(|j| {
            let col = w.column(j).insert_axis(Axis(1));
            let row = h.row(j).insert_axis(Axis(0));
            let mut part = col.dot(&row);
            part.zip_mut_with(&total, |p, &t| *p = if t < EVAL_FLOOR { uniform } else { (*p / t).min(1.0) });
            part
        })
        .collect();
    MaskSet::new(masks)
}

/// `istft(mask_k ⊙ X)` for every mask.
pub fn reconstruct_sources(mixture: &Spectrogram, masks: &MaskSet) -> Result<Vec<TimeSignal>> {
    if masks.dim() != mixture.values().dim() {
        return Err(Error::DimensionMismatch(format!(
            "masks are {:?}, spectrogram is {:?}",
            masks.dim(),
            mixture.values().dim()
        )));
    }
    masks.masks().iter().map(|m| apply_mask(mixture, m)).collect()
}

fn apply_mask(mixture: &Spectrogram, mask: &Array2<f64>) -> Result<TimeSignal> {
    let mut values = mixture.values().clone();
    values.zip_mut_with(mask, |z, &m| *z *= Complex64::new(m, 0.0));
    Ok(istft(&mixture.with_values(values)?))
}

/// Output of [`separate`].
#[derive(Debug, Clone)]
pub struct SeparationResult {
    pub sources: Vec<TimeSignal>,
    pub masks: MaskSet,
    pub factors: FactorPair,
    pub trace: IterationTrace,
    /// Rows of `H` below the zero-source threshold.
    pub zeroed_sources: Vec<usize>,
    pub spectrogram: Spectrogram,
}

impl SeparationResult {
    /// Recombines rank-one sources: output `i` uses the sum of the masks
    /// listed in `groups[i]`.
    pub fn grouped_sources(&self, groups: &[Vec<usize>]) -> Result<Vec<TimeSignal>> {
        groups
            .iter()
            .map(|group| {
                if group.is_empty() {
                    return Err(Error::InvalidArgument("empty source group".into()));
                }
                let mut mask = Array2::zeros(self.masks.dim());
                for &k in group {
                    let m = self
                        .masks
                        .get(k)
                        .ok_or_else(|| Error::InvalidArgument(format!("source {k} does not exist")))?;
                    mask += m;
                }
                mask.mapv_inplace(|x: f64| x.min(1.0));
                apply_mask(&self.spectrogram, &mask)
            })
            .collect()
    }

    /// The line search kept a previous iterate at least once.
    pub fn line_search_exhausted(&self) -> bool {
        self.trace.line_search_exhausted()
    }
}

/// STFT, amplitude, factorisation, masks and reconstruction.
pub fn separate(mixture: &TimeSignal, window: WindowSpec, config: &SolverConfig) -> Result<SeparationResult> {
    if mixture.len() < window.size() {
        return Err(Error::InvalidSignal(format!(
            "mixture has {} samples, shorter than the {}-sample window",
            mixture.len(),
            window.size()
        )));
    }
    let spectrogram = stft(mixture, window);
    let v = amplitude(&spectrogram);
    let (factors, trace) = solver::solve(&v, config)?;
    let masks = compute_masks(&factors.w, &factors.h)?;
    let sources = reconstruct_sources(&spectrogram, &masks)?;
    let zeroed_sources = crate::evaluation::count_zero_sources(&factors.h, ZERO_ROW_THRESHOLD);
    Ok(SeparationResult { sources, masks, factors, trace, zeroed_sources, spectrogram })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stft::WindowKind;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_mask_is_all_ones() {
        let m = compute_masks(&array![[0.2], [0.8]], &array![[1.0, 3.0, 0.0]]).unwrap();
        assert_eq!(m.len(), 1);
        assert!(m.masks()[0].iter().all(|&x| x == 1.0));
    }

    #[test]
    fn disjoint_supports_give_indicators() {
        let w = array![[0.5, 0.0], [0.5, 0.0], [0.0, 1.0]];
        let h = array![[1.0, 2.0], [3.0, 0.5]];
        let m = compute_masks(&w, &h).unwrap();
        assert_eq!(m.masks()[0], array![[1.0, 1.0], [1.0, 1.0], [0.0, 0.0]]);
        assert_eq!(m.masks()[1], array![[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]]);
    }

    #[test]
    fn masks_sum_to_one_with_uniform_fallback() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = Array2::from_shape_fn((9, 4), |_| rng.random_range(0.0..1.0));
        let mut h = Array2::from_shape_fn((4, 7), |_| rng.random_range(0.0..1.0));
        h.column_mut(3).fill(0.0);
        let m = compute_masks(&w, &h).unwrap();
        for f in 0..9 {
            for n in 0..7 {
                let s: f64 = m.masks().iter().map(|mk| mk[[f, n]]).sum();
                assert!((s - 1.0).abs() < 1e-10);
            }
            assert!(m.masks().iter().all(|mk| mk[[f, 3]] == 0.25));
        }
        assert!(compute_masks(&w, &array![[1.0]]).is_err());
        assert!(MaskSet::new(vec![array![[1.5]]]).is_err());
    }

    fn tone(freq: f64, len: usize, rate: u32) -> Vec<f64> {
        (0..len).map(|t| 0.4 * (2.0 * std::f64::consts::PI * freq * t as f64 / rate as f64).sin()).collect()
    }

    #[test]
    fn identity_and_zero_masks() {
        let x = TimeSignal::new(tone(440.0, 4000, 8000), 8000).unwrap();
        let spec = WindowSpec::new(256, 128, WindowKind::Hamming).unwrap();
        let xs = stft(&x, spec);
        let ones = MaskSet::new(vec![Array2::ones(xs.values().dim())]).unwrap();
        let out = &reconstruct_sources(&xs, &ones).unwrap()[0];
        let round = istft(&xs);
        assert_eq!(out.samples(), round.samples());
        assert_eq!(out.len(), x.len());

        let zeros = MaskSet::new(vec![Array2::zeros(xs.values().dim())]).unwrap();
        assert!(reconstruct_sources(&xs, &zeros).unwrap()[0].samples().iter().all(|&s| s == 0.0));
        let wrong = MaskSet::new(vec![Array2::ones((3, 3))]).unwrap();
        assert!(reconstruct_sources(&xs, &wrong).is_err());
    }

    #[test]
    fn oracle_band_masks_recover_tones() {
        let rate = 8000;
        let (a, b) = (tone(300.0, 8000, rate), tone(2000.0, 8000, rate));
        let mixture = TimeSignal::new(a.iter().zip(&b).map(|(x, y)| x + y).collect(), rate).unwrap();
        let spec = WindowSpec::new(512, 256, WindowKind::Hamming).unwrap();
        let xs = stft(&mixture, spec);
        let (bins, frames) = xs.values().dim();
        let cut = 1150 * 512 / rate as usize;
        let low = Array2::from_shape_fn((bins, frames), |(f, _)| if f < cut { 1.0 } else { 0.0 });
        let high = low.mapv(|x| 1.0 - x);
        let out = reconstruct_sources(&xs, &MaskSet::new(vec![low, high]).unwrap()).unwrap();
        for (est, truth) in out.iter().zip([&a, &b]) {
            let dot: f64 = est.samples().iter().zip(truth.iter()).map(|(x, y)| x * y).sum();
            let corr = dot / (est.energy().sqrt() * truth.iter().map(|y| y * y).sum::<f64>().sqrt());
            assert!(corr > 0.99, "correlation {corr}");
        }
    }

    #[test]
    fn sources_sum_to_mixture() {
        let rate = 8000;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<f64> = (0..6000).map(|_| rng.random_range(-0.5..0.5)).collect();
        let x = TimeSignal::new(samples, rate).unwrap();
        let spec = WindowSpec::new(256, 128, WindowKind::Hamming).unwrap();
        let cfg = SolverConfig::new(3).with_max_iters(20);
        let res = separate(&x, spec, &cfg).unwrap();
        assert_eq!(res.sources.len(), 3);
        let round = istft(&stft(&x, spec));
        let n = x.len();
        let mut err = 0.0;
        let mut den = 0.0;
        for t in 256..n - 256 {
            let s: f64 = res.sources.iter().map(|src| src.samples()[t]).sum();
            err += (s - round.samples()[t]).powi(2);
            den += round.samples()[t].powi(2);
        }
        assert!((err / den).sqrt() < 1e-5);
        for src in &res.sources {
            assert_eq!((src.len(), src.sample_rate()), (n, rate));
        }
        let grouped = res.grouped_sources(&[vec![0, 1, 2]]).unwrap();
        let gerr: f64 = grouped[0].samples().iter().zip(round.samples()).skip(256).take(n - 512).map(|(a, b)| (a - b).powi(2)).sum();
        assert!((gerr / den).sqrt() < 1e-5);
        assert!(res.grouped_sources(&[vec![]]).is_err());
        assert!(res.grouped_sources(&[vec![7]]).is_err());
    }

    #[test]
    fn permuted_factors_permute_sources() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<f64> = (0..3000).map(|_| rng.random_range(-0.5..0.5)).collect();
        let x = TimeSignal::new(samples, 8000).unwrap();
        let xs = stft(&x, WindowSpec::new(256, 128, WindowKind::Hann).unwrap());
        let (bins, frames) = xs.values().dim();
        let fp = FactorPair {
            w: Array2::from_shape_fn((bins, 3), |_| rng.random_range(0.01..1.0)),
            h: Array2::from_shape_fn((3, frames), |_| rng.random_range(0.01..1.0)),
        };
        let order = [2, 0, 1];
        let base = reconstruct_sources(&xs, &compute_masks(&fp.w, &fp.h).unwrap()).unwrap();
        let perm = fp.permuted(&order);
        let permuted = reconstruct_sources(&xs, &compute_masks(&perm.w, &perm.h).unwrap()).unwrap();
        for (i, &k) in order.iter().enumerate() {
            let diff = permuted[i].samples().iter().zip(base[k].samples()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-12);
        }
    }

    #[test]
    fn silence_and_short_input() {
        let x = TimeSignal::silence(3000, 8000).unwrap();
        let spec = WindowSpec::new(256, 128, WindowKind::Hamming).unwrap();
        let res = separate(&x, spec, &SolverConfig::new(2).with_max_iters(10)).unwrap();
        for src in &res.sources {
            assert!(src.samples().iter().all(|&s| s == 0.0));
        }
        assert!(res.factors.w.iter().chain(res.factors.h.iter()).all(|x| x.is_finite()));
        let short = TimeSignal::silence(100, 8000).unwrap();
        assert!(separate(&short, spec, &SolverConfig::new(2)).is_err());
    }
}

//! Separation metrics, factor matching, synthetic identifiable instances and
//! zero-source detection.

use itertools::Itertools;
use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::signal::TimeSignal;
use crate::stft::NonnegMatrix;

/// Metrics are clamped to `±METRIC_CAP_DB`.
pub const METRIC_CAP_DB: f64 = 200.0;

/// Above this many candidates the assignment search is greedy.
pub const EXHAUSTIVE_LIMIT: usize = 8;

/// Fraction of zeros in the generic part of a synthetic `H`.
pub const SYNTH_SPARSITY: f64 = 0.6;

/// Smallest admissible K-th singular value of a synthetic `V`.
pub const SYNTH_RANK_TOL: f64 = 1e-8;

const SYNTH_ATTEMPTS: usize = 10;

fn db(num: f64, den: f64) -> f64 {
    if den <= 0.0 {
        return if num > 0.0 { METRIC_CAP_DB } else { -METRIC_CAP_DB };
    }
    if num <= 0.0 {
        return -METRIC_CAP_DB;
    }
    (10.0 * (num / den).log10()).clamp(-METRIC_CAP_DB, METRIC_CAP_DB)
}

/// SDR, SIR and SAR (dB) per reference source.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BssMetrics {
    pub sdr: Vec<f64>,
    pub sir: Vec<f64>,
    pub sar: Vec<f64>,
    /// `permutation[j]` is the estimate matched to reference `j`.
    pub permutation: Vec<usize>,
}

/// One JSON line of a metrics report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BssRecord {
    pub source: usize,
    pub sdr_db: f64,
    pub sir_db: f64,
    pub sar_db: f64,
    pub permutation: Vec<usize>,
}

impl BssMetrics {
    pub fn records(&self) -> Vec<BssRecord> {
        (0..self.sdr.len())
            .map(|j| BssRecord {
                source: j,
                sdr_db: self.sdr[j],
                sir_db: self.sir[j],
                sar_db: self.sar[j],
                permutation: self.permutation.clone(),
            })
            .collect()
    }

    pub fn mean_sdr(&self) -> f64 {
        self.sdr.iter().sum::<f64>() / self.sdr.len() as f64
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Best injective assignment of rows (targets) to columns (candidates) of
/// `score`, maximising the total. Exhaustive for up to eight candidates,
/// greedy otherwise.
fn best_assignment(score: &Array2<f64>) -> Vec<usize> {
    let (targets, candidates) = score.dim();
    if candidates <= EXHAUSTIVE_LIMIT {
        (0..candidates)
            .permutations(targets)
            .max_by(|p, q| {
                let sp: f64 = p.iter().enumerate().map(|(j, &i)| score[[j, i]]).sum();
                let sq: f64 = q.iter().enumerate().map(|(j, &i)| score[[j, i]]).sum();
                sp.total_cmp(&sq)
            })
            .unwrap_or_default()
    } else {
        let mut assignment = vec![usize::MAX; targets];
        let mut used = vec![false; candidates];
        let mut pairs: Vec<(usize, usize)> = (0..targets).cartesian_product(0..candidates).collect();
        pairs.sort_by(|a, b| score[[b.0, b.1]].total_cmp(&score[[a.0, a.1]]));
        for (j, i) in pairs {
            if assignment[j] == usize::MAX && !used[i] {
                assignment[j] = i;
                used[i] = true;
            }
        }
        assignment
    }
}

/// BSS metrics with time-invariant global projections.
///
/// Each estimate `ŝ` is projected onto the span of all references. For
/// reference `j`, `s_target` is the projection onto `s_j`, `e_interf` the
/// remainder of the span projection and `e_artif = ŝ − P_S ŝ`. Estimates are
/// matched to references to maximise the total SDR; there may be more
/// estimates than references.
pub fn bss_eval(estimates: &[TimeSignal], references: &[TimeSignal]) -> Result<BssMetrics> {
    if references.is_empty() || estimates.len() < references.len() {
        return Err(Error::InvalidArgument(format!(
            "need at least as many estimates ({}) as references ({}), and at least one reference",
            estimates.len(),
            references.len()
        )));
    }
    let len = references[0].len();
    if let Some(s) = references.iter().chain(estimates).find(|s| s.len() != len) {
        return Err(Error::DimensionMismatch(format!("signal of length {} differs from {len}", s.len())));
    }
    let refs: Vec<&[f64]> = references.iter().map(|s| s.samples()).collect();
    let k = refs.len();
    let gram = Array2::from_shape_fn((k, k), |(i, j)| dot(refs[i], refs[j]));
    for j in 0..k {
        if gram[[j, j]] <= 0.0 {
            return Err(Error::DegenerateReference(j));
        }
        let leading = gram.slice(ndarray::s![..=j, ..=j]).to_owned();
        if linalg::spd_logdet(&leading).is_err() {
            return Err(Error::DegenerateReference(j));
        }
    }

    let n_est = estimates.len();
    let mut sdr = Array2::zeros((k, n_est));
    let mut sir = Array2::zeros((k, n_est));
    let mut sar = Array2::zeros((k, n_est));
    for (i, est) in estimates.iter().enumerate() {
        let s = est.samples();
        let rhs = Array1::from_iter(refs.iter().map(|r| dot(s, r)));
        let coeffs = linalg::spd_solve(&gram, &rhs)?;
        let mut proj = vec![0.0; len];
        for (c, r) in coeffs.iter().zip(&refs) {
            proj.iter_mut().zip(r.iter()).for_each(|(p, x)| *p += c * x);
        }
        let artif: f64 = s.iter().zip(&proj).map(|(a, p)| (a - p).powi(2)).sum();
        let proj_energy = dot(&proj, &proj);
        for j in 0..k {
            let c = rhs[j] / gram[[j, j]];
            let (mut target, mut interf, mut distortion) = (0.0, 0.0, 0.0);
            for t in 0..len {
                let st = c * refs[j][t];
                target += st * st;
                interf += (proj[t] - st).powi(2);
                distortion += (s[t] - st).powi(2);
            }
            sdr[[j, i]] = db(target, distortion);
            sir[[j, i]] = db(target, interf);
            sar[[j, i]] = db(proj_energy, artif);
        }
    }
    let permutation = best_assignment(&sdr);
    let pick = |m: &Array2<f64>| permutation.iter().enumerate().map(|(j, &i)| m[[j, i]]).collect();
    Ok(BssMetrics { sdr: pick(&sdr), sir: pick(&sir), sar: pick(&sar), permutation })
}

/// Result of [`match_factors`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorMatch {
    /// `permutation[k]` is the estimated column matched to true column `k`.
    pub permutation: Vec<usize>,
    /// `Σ_k ‖W_est(:,π(k)) − W_true(:,k)‖₁ / Σ_k ‖W_true(:,k)‖₁`.
    pub relative_error: f64,
}

fn l1_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum()
}

/// Column matching under the ℓ1 distance. `W_est` may have more columns than
/// `W_true`; surplus columns are left unmatched.
pub fn match_factors(w_est: &Array2<f64>, w_true: &Array2<f64>) -> Result<FactorMatch> {
    if w_est.nrows() != w_true.nrows() || w_est.ncols() < w_true.ncols() || w_true.ncols() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "W_est is {}x{}, W_true is {}x{}",
            w_est.nrows(),
            w_est.ncols(),
            w_true.nrows(),
            w_true.ncols()
        )));
    }
    let cost = Array2::from_shape_fn((w_true.ncols(), w_est.ncols()), |(k, i)| {
        -l1_distance(w_est.column(i), w_true.column(k))
    });
    let permutation = best_assignment(&cost);
    let total: f64 = permutation.iter().enumerate().map(|(k, &i)| -cost[[k, i]]).sum();
    let norm: f64 = w_true.iter().map(|x| x.abs()).sum();
    Ok(FactorMatch { permutation, relative_error: total / norm })
}

/// Noiseless (or noisy) `V = W_true H_true` with a separable `H_true`.
#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub v: NonnegMatrix,
    pub w_true: Array2<f64>,
    pub h_true: Array2<f64>,
}

/// Generates `W_true` (F x K, uniform entries, simplex columns) and
/// `H_true = [c I_K, G]` with columns shuffled, where `G` is uniform with 60%
/// zeros and `c` is the mean column sum of `G`. Nonnegative noise with
/// Frobenius norm `noise_level · ‖W_true H_true‖_F` is added to `V`.
///
/// The draw is repeated (up to ten times) until the K-th singular value of
/// the noiseless product exceeds 1e-8.
pub fn synth_scattered_instance(f: usize, n: usize, k: usize, seed: u64, noise_level: f64) -> Result<SyntheticInstance> {
    if k == 0 || f < k || n < 5 * k {
        return Err(Error::InvalidArgument(format!("need K >= 1, F >= K and N >= 5K, got F={f}, N={n}, K={k}")));
    }
    if !(noise_level >= 0.0 && noise_level.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise level must be non-negative, got {noise_level}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..SYNTH_ATTEMPTS {
        let mut w = Array2::from_shape_simple_fn((f, k), || 1.0 - rng.random::<f64>());
        for mut col in w.columns_mut() {
            let s = col.sum();
            col /= s;
        }
        let g = Array2::from_shape_simple_fn((k, n - k), || {
            if rng.random::<f64>() < SYNTH_SPARSITY {
                0.0
            } else {
                1.0 - rng.random::<f64>()
            }
        });
        let col_sums = g.sum_axis(ndarray::Axis(0));
        let c = col_sums.mean().filter(|&m| m > 0.0).unwrap_or(1.0);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut h = Array2::zeros((k, n));
        for (src, &dst) in order.iter().enumerate() {
            if src < k {
                h[[src, dst]] = c;
            } else {
                h.column_mut(dst).assign(&g.column(src - k));
            }
        }
        let clean = w.dot(&h);
        if linalg::singular_values(&clean)[k - 1] <= SYNTH_RANK_TOL {
            continue;
        }
        let v = if noise_level > 0.0 {
            let noise = Array2::from_shape_simple_fn((f, n), || rng.random::<f64>());
            let scale = noise_level * frobenius(&clean) / frobenius(&noise);
            &clean + &(noise * scale)
        } else {
            clean
        };
        return Ok(SyntheticInstance { v: NonnegMatrix::new(v)?, w_true: w, h_true: h });
    }
    Err(Error::Generation(format!("no rank-{k} instance after {SYNTH_ATTEMPTS} draws")))
}

fn frobenius(m: &Array2<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// For every row `k` there is a column of `h` whose only positive entry is
/// at `k`.
pub fn is_separable(h: &Array2<f64>) -> bool {
    (0..h.nrows()).all(|k| {
        h.columns().into_iter().any(|col| col[k] > 0.0 && col.iter().enumerate().all(|(j, &x)| j == k || x == 0.0))
    })
}

/// Rows `k` with `max_n H[k, n] < rel_threshold · max(H)`.
pub fn count_zero_sources(h: &Array2<f64>, rel_threshold: f64) -> Vec<usize> {
    let max = h.iter().copied().fold(0.0, f64::max);
    h.rows()
        .into_iter()
        .enumerate()
        .filter(|(_, row)| row.iter().copied().fold(0.0, f64::max) < rel_threshold * max)
        .map(|(k, _)| k)
        .collect()
}

/// Two stems with disjoint frequency bands and staggered on/off patterns:
/// a low note (330 Hz plus its octave) and a high note (2.6 kHz plus a
/// partial at 3.9 kHz), at amplitude 0.3 per partial.
pub fn two_tone_stems(sample_rate: u32, duration_secs: f64) -> Result<[TimeSignal; 2]> {
    if !(duration_secs > 0.0) || sample_rate < 8000 {
        return Err(Error::InvalidArgument("two-tone stems need a positive duration and at least 8 kHz".into()));
    }
    let len = (duration_secs * sample_rate as f64).round() as usize;
    let rate = sample_rate as f64;
    // Active intervals as fractions of the duration.
    let low_on = [(0.0, 0.45), (0.7, 0.9)];
    let high_on = [(0.3, 0.6), (0.8, 1.0)];
    let fade = 0.01 * rate;
    let gate = |t: usize, spans: &[(f64, f64)]| -> f64 {
        spans
            .iter()
            .map(|&(a, b)| {
                let (start, end) = (a * len as f64, b * len as f64);
                let t = t as f64;
                if t < start || t >= end {
                    0.0
                } else {
                    ((t - start) / fade).min((end - t) / fade).min(1.0)
                }
            })
            .fold(0.0, f64::max)
    };
    let partials = |t: usize, freqs: [f64; 2]| -> f64 {
        freqs.iter().map(|fr| 0.3 * (2.0 * std::f64::consts::PI * fr * t as f64 / rate).sin()).sum()
    };
    let low: Vec<f64> = (0..len).map(|t| gate(t, &low_on) * partials(t, [330.0, 660.0])).collect();
    let high: Vec<f64> = (0..len).map(|t| gate(t, &high_on) * partials(t, [2600.0, 3900.0])).collect();
    Ok([TimeSignal::new(low, sample_rate)?, TimeSignal::new(high, sample_rate)?])
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use proptest::prelude::*;

    fn sig(v: Vec<f64>) -> TimeSignal {
        TimeSignal::new(v, 8000).unwrap()
    }

    fn sines(len: usize) -> (Vec<f64>, Vec<f64>) {
        let a = (0..len).map(|t| (t as f64 * 0.05).sin()).collect();
        let b = (0..len).map(|t| (t as f64 * 0.31).cos() * 0.5).collect();
        (a, b)
    }

    #[test]
    fn perfect_estimate_is_capped() {
        let (a, b) = sines(1000);
        let m = bss_eval(&[sig(a.clone()), sig(b.clone())], &[sig(a), sig(b)]).unwrap();
        assert_eq!(m.permutation, vec![0, 1]);
        assert!(m.sdr.iter().all(|&x| x == METRIC_CAP_DB));
    }

    #[test]
    fn scale_and_order_invariance() {
        let (a, b) = sines(800);
        let noisy_a: Vec<f64> = a.iter().zip(&b).enumerate().map(|(t, (x, y))| x + 0.1 * y + 0.05 * (t as f64).sin()).collect();
        let refs = [sig(a.clone()), sig(b.clone())];
        let base = bss_eval(&[sig(noisy_a.clone()), sig(b.clone())], &refs).unwrap();
        let scaled = bss_eval(&[sig(noisy_a.iter().map(|x| 0.3 * x).collect()), sig(b.clone())], &refs).unwrap();
        for (x, y) in base.sdr.iter().chain(&base.sir).chain(&base.sar).zip(scaled.sdr.iter().chain(&scaled.sir).chain(&scaled.sar)) {
            assert!((x - y).abs() < 1e-9);
        }
        let swapped = bss_eval(&[sig(b), sig(noisy_a)], &refs).unwrap();
        assert_eq!(swapped.permutation, vec![1, 0]);
        assert_eq!(swapped.sdr, base.sdr);
    }

    #[test]
    fn orthogonal_noise_oracle() {
        // Reference: sinusoid with an exact number of periods; noise: another
        // frequency on the same grid, hence orthogonal.
        let len = 1000;
        let r: Vec<f64> = (0..len).map(|t| (2.0 * std::f64::consts::PI * 5.0 * t as f64 / len as f64).sin()).collect();
        let noise: Vec<f64> = (0..len).map(|t| (2.0 * std::f64::consts::PI * 40.0 * t as f64 / len as f64).sin()).collect();
        let est: Vec<f64> = r.iter().zip(&noise).map(|(x, n)| x + 0.1 * n).collect();
        let m = bss_eval(&[sig(est)], &[sig(r)]).unwrap();
        assert!((m.sdr[0] - 20.0).abs() < 0.1);
        assert!((m.sar[0] - 20.0).abs() < 0.1);
        assert!(m.sir[0] > 100.0);
    }

    #[test]
    fn bss_errors() {
        let (a, b) = sines(100);
        assert!(matches!(bss_eval(&[sig(a.clone())], &[sig(vec![0.0; 100])]), Err(Error::DegenerateReference(0))));
        let dup = [sig(a.clone()), sig(a.iter().map(|x| 2.0 * x).collect())];
        assert!(matches!(bss_eval(&dup, &dup), Err(Error::DegenerateReference(1))));
        assert!(bss_eval(&[sig(a.clone())], &[sig(a.clone()), sig(b)]).is_err());
        assert!(bss_eval(&[sig(vec![1.0; 50])], &[sig(a)]).is_err());
    }

    #[test]
    fn extra_estimates_are_ignored() {
        let (a, b) = sines(500);
        let m = bss_eval(&[sig(b.clone()), sig(vec![0.01; 500]), sig(a.clone())], &[sig(a), sig(b)]).unwrap();
        assert_eq!(m.permutation, vec![2, 0]);
        let records = m.records();
        assert_eq!(records.len(), 2);
        assert_eq!(records[1].source, 1);
    }

    #[test]
    fn factor_matching() {
        let w = array![[0.2, 0.5, 0.1], [0.3, 0.25, 0.6], [0.5, 0.25, 0.3]];
        let m = match_factors(&w, &w).unwrap();
        assert_eq!((m.permutation, m.relative_error), (vec![0, 1, 2], 0.0));
        let swapped = w.select(ndarray::Axis(1), &[1, 0, 2]);
        let m = match_factors(&swapped, &w).unwrap();
        assert_eq!((m.permutation, m.relative_error), (vec![1, 0, 2], 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut noisy = w.mapv(|x| x + rng.random_range(0.0..1e-3));
        for mut col in noisy.columns_mut() {
            let s = col.sum();
            col /= s;
        }
        assert!(match_factors(&noisy, &w).unwrap().relative_error < 2e-3);
        assert!(match_factors(&w.select(ndarray::Axis(1), &[0]), &w).is_err());
    }

    #[test]
    fn greedy_matching_for_many_columns() {
        let inst = synth_scattered_instance(30, 60, 10, 2, 0.0).unwrap();
        let order: Vec<usize> = (0..10).rev().collect();
        let est = inst.w_true.select(ndarray::Axis(1), &order);
        let m = match_factors(&est, &inst.w_true).unwrap();
        assert_eq!(m.relative_error, 0.0);
        assert_eq!(m.permutation, order);
    }

    proptest! {
        #[test]
        fn matching_error_symmetric_under_joint_permutation(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Array2::from_shape_fn((6, 4), |_| rng.random_range(0.0..1.0));
            let b = Array2::from_shape_fn((6, 4), |_| rng.random_range(0.0..1.0));
            let mut order: Vec<usize> = (0..4).collect();
            order.shuffle(&mut rng);
            let e1 = match_factors(&a, &b).unwrap().relative_error;
            let e2 = match_factors(&a.select(ndarray::Axis(1), &order), &b.select(ndarray::Axis(1), &order)).unwrap().relative_error;
            prop_assert!((e1 - e2).abs() < 1e-12);
        }
    }

    #[test]
    fn synthetic_instance_properties() {
        let inst = synth_scattered_instance(40, 60, 4, 7, 0.0).unwrap();
        assert_eq!(inst.v.values(), &inst.w_true.dot(&inst.h_true));
        assert!(linalg::singular_values(inst.v.values())[3] > SYNTH_RANK_TOL);
        assert!(is_separable(&inst.h_true));
        for col in inst.w_true.columns() {
            assert!((col.sum() - 1.0).abs() < 1e-12);
        }
        let zeros = inst.h_true.iter().filter(|&&x| x == 0.0).count() as f64;
        let generic = (4 * 56) as f64;
        assert!(zeros > 0.4 * generic && zeros < 0.8 * generic + 12.0);
        let again = synth_scattered_instance(40, 60, 4, 7, 0.0).unwrap();
        assert_eq!(again.h_true, inst.h_true);

        let noisy = synth_scattered_instance(40, 60, 4, 7, 0.1).unwrap();
        let diff = noisy.v.values() - &inst.v.values().clone();
        assert!(diff.iter().all(|&x| x >= 0.0));
        assert!((frobenius(&diff) / frobenius(inst.v.values()) - 0.1).abs() < 1e-12);
        assert!(synth_scattered_instance(40, 10, 4, 0, 0.0).is_err());
        assert!(!is_separable(&array![[1.0, 1.0], [1.0, 1.0]]));
    }

    #[test]
    fn zero_source_detection() {
        let h = array![[1.0, 2.0], [0.0, 0.0], [0.5, 0.1]];
        assert_eq!(count_zero_sources(&h, 1e-6), vec![1]);
        assert!(count_zero_sources(&array![[1.0, 0.5], [0.7, 0.9]], 1e-6).is_empty());
    }

    #[test]
    fn tone_stems_shape() {
        let [low, high] = two_tone_stems(16000, 1.0).unwrap();
        assert_eq!((low.len(), high.len()), (16000, 16000));
        assert!(low.samples().iter().chain(high.samples()).all(|x| x.abs() <= 0.6));
        assert_eq!(low.samples()[(0.5 * 16000.0) as usize], 0.0);
        assert!(two_tone_stems(16000, 0.0).is_err());
    }
}

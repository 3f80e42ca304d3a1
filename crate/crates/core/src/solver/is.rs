use ndarray::Array2;

use super::{cubic_roots, floor_in_place, run_minvol, FactorPair, GramInverse, IterationTrace, SolverConfig};
use crate::divergences::check_conformable;
use crate::error::{Error, Result};
use crate::stft::NonnegMatrix;
use crate::{EVAL_FLOOR, FACTOR_FLOOR};

/// IS multiplicative update of the activations,
/// `H ⊙ Wᵀ(V ⊙ (WH)^{-2}) ⊘ Wᵀ(WH)^{-1}`, floored.
pub fn update_h_is(v: &NonnegMatrix, w: &Array2<f64>, h: &Array2<f64>) -> Result<Array2<f64>> {
    check_conformable(v, w, h)?;
    let wh = w.dot(h).mapv(|y| y.max(EVAL_FLOOR));
    let inv = wh.mapv(f64::recip);
    let weighted = v.values() * &inv * &inv;
    let mut out = h * &w.t().dot(&weighted);
    out /= &w.t().dot(&inv);
    floor_in_place(&mut out);
    Ok(out)
}

/// Coefficients of `ã w³ + b̃ w² + d̃`, the stationarity condition of the
/// one-dimensional IS auxiliary `φ(w) = −d̃/w + b̃ w + (ã/2) w²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicCoefficients {
    pub a: f64,
    pub b: f64,
    pub d: f64,
}

impl CubicCoefficients {
    /// `φ(w)`; infinite at `w = 0` when `d̃ < 0`.
    pub fn auxiliary(&self, w: f64) -> f64 {
        if w == 0.0 {
            return if self.d < 0.0 { f64::INFINITY } else { 0.0 };
        }
        -self.d / w + self.b * w + 0.5 * self.a * w * w
    }

    /// The minimiser of `φ` over `{0} ∪ {nonnegative real roots}`, floored.
    pub fn minimiser(&self) -> f64 {
        let best = cubic_roots(self.a, self.b, self.d)
            .into_iter()
            .filter(|&r| r >= 0.0)
            .chain(std::iter::once(0.0))
            .map(|r| (r, self.auxiliary(r)))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .map_or(0.0, |(r, _)| r);
        best.max(FACTOR_FLOOR)
    }
}

fn check_inputs(v: &NonnegMatrix, w_tilde: &Array2<f64>, h: &Array2<f64>, lambda: f64, gram: &GramInverse) -> Result<()> {
    check_conformable(v, w_tilde, h)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    if gram.rank() != w_tilde.ncols() {
        return Err(Error::DimensionMismatch(format!("Y is {0}x{0}, W has {1} columns", gram.rank(), w_tilde.ncols())));
    }
    Ok(())
}

/// Coefficients for entry `(f, k)`:
/// `ã = 2λ[(Y⁺ + Y⁻)w̃ / w̃]_k`, `b̃ = Σ_n h_kn/ṽ_n − 4λ[Y⁻w̃]_k` and
/// `d̃ = −w̃_k² Σ_n h_kn v_n/ṽ_n²`, where `w̃` is row `f` of `W̃` and `ṽ = w̃H`.
pub fn is_cubic_coefficients(
    v: &NonnegMatrix,
    w_tilde: &Array2<f64>,
    h: &Array2<f64>,
    lambda: f64,
    gram: &GramInverse,
    f: usize,
    k: usize,
) -> Result<CubicCoefficients> {
    check_inputs(v, w_tilde, h, lambda, gram)?;
    if f >= w_tilde.nrows() || k >= w_tilde.ncols() {
        return Err(Error::InvalidArgument(format!("entry ({f}, {k}) is outside W")));
    }
    let wt = w_tilde.row(f);
    let v_tilde = wt.dot(h).mapv(|y| y.max(EVAL_FLOOR));
    let v_row = v.values().row(f);
    let hk = h.row(k);
    let a = 2.0 * lambda * gram.abs().row(k).dot(&wt) / wt[k];
    let b = hk.iter().zip(v_tilde.iter()).map(|(h, vt)| h / vt).sum::<f64>() - 4.0 * lambda * gram.y_minus.row(k).dot(&wt);
    let s: f64 = hk.iter().zip(v_tilde.iter()).zip(v_row.iter()).map(|((h, vt), x)| h * x / (vt * vt)).sum();
    Ok(CubicCoefficients { a, b, d: -wt[k] * wt[k] * s })
}

/// Coordinate-wise minimiser of the separable min-vol IS auxiliary in `W`.
///
/// Every entry solves its own cubic; the candidates are the nonnegative real
/// roots and zero, and the one with the smallest auxiliary value is kept
/// (floored at 1e-16). Entries are visited row-major.
pub fn update_w_minvol_is(
    v: &NonnegMatrix,
    w_tilde: &Array2<f64>,
    h: &Array2<f64>,
    lambda: f64,
    gram: &GramInverse,
) -> Result<Array2<f64>> {
    check_inputs(v, w_tilde, h, lambda, gram)?;
    let v_tilde = w_tilde.dot(h).mapv(|y| y.max(EVAL_FLOOR));
    let inv = v_tilde.mapv(f64::recip);
    let b_fit = inv.dot(&h.t());
    let d_fit = (v.values() * &inv * &inv).dot(&h.t());
    let abs_w = w_tilde.dot(&gram.abs());
    let minus_w = w_tilde.dot(&gram.y_minus);

    let mut out = Array2::zeros(w_tilde.raw_dim());
    for ((f, k), slot) in out.indexed_iter_mut() {
        let wt = w_tilde[[f, k]];
        let coeffs = CubicCoefficients {
            a: 2.0 * lambda * abs_w[[f, k]] / wt,
            b: b_fit[[f, k]] - 4.0 * lambda * minus_w[[f, k]],
            d: -wt * wt * d_fit[[f, k]],
        };
        *slot = coeffs.minimiser();
    }
    Ok(out)
}

/// Min-vol IS-NMF. `V` is floored at 1e-12 before solving.
pub fn solve_minvol_is(v: &NonnegMatrix, config: &SolverConfig) -> Result<(FactorPair, IterationTrace)> {
    solve_minvol_is_from(v, config, None)
}

pub(crate) fn solve_minvol_is_from(
    v: &NonnegMatrix,
    config: &SolverConfig,
    init: Option<&FactorPair>,
) -> Result<(FactorPair, IterationTrace)> {
    if config.beta.value() != 0.0 {
        return Err(Error::InvalidConfig(format!("min-vol IS requires beta = 0, got {}", config.beta)));
    }
    run_minvol(&v.floored(EVAL_FLOOR), config, init, update_h_is, update_w_minvol_is)
}

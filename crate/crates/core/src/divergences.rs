//! β-divergences and the min-vol objective
//! `D_β(V | WH) + λ logdet(WᵀW + δI)`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::stft::NonnegMatrix;
use crate::EVAL_FLOOR;

/// The β parameter of the divergence family.
///
/// Any finite value can be evaluated; the solvers only accept 0 (IS), 1 (KL)
/// and, for the baseline, 2 (Euclidean).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Beta(f64);

impl Beta {
    pub const ITAKURA_SAITO: Beta = Beta(0.0);
    pub const KULLBACK_LEIBLER: Beta = Beta(1.0);
    pub const EUCLIDEAN: Beta = Beta(2.0);

    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::InvalidArgument(format!("beta must be finite, got {value}")));
        }
        Ok(Beta(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl std::fmt::Display for Beta {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Objective split into its data-fitting and regularisation terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub total: f64,
    pub fit: f64,
    /// `λ·logdet(WᵀW + δI)` for min-vol, `μ·ΣH` for sparse KL, zero for the
    /// baseline.
    pub penalty: f64,
}

impl ObjectiveValue {
    pub fn new(fit: f64, penalty: f64) -> Self {
        Self { total: fit + penalty, fit, penalty }
    }
}

/// Scalar β-divergence `d_β(x | y)`.
///
/// `y` is floored at [`EVAL_FLOOR`]; for β ≤ 0 so is `x`, which turns the
/// IS singularity at `x = 0` into a large finite value instead of NaN. At
/// β = 1 the convention `0·log 0 = 0` applies.
pub fn beta_div(x: f64, y: f64, beta: Beta) -> f64 {
    let y = y.max(EVAL_FLOOR);
    let b = beta.0;
    if b == 1.0 {
        if x == 0.0 {
            y
        } else {
            x * (x / y).ln() - x + y
        }
    } else if b == 0.0 {
        let r = x.max(EVAL_FLOOR) / y;
        r - r.ln() - 1.0
    } else if b == 2.0 {
        0.5 * (x - y) * (x - y)
    } else {
        let x = if b <= 0.0 { x.max(EVAL_FLOOR) } else { x };
        (x.powf(b) + (b - 1.0) * y.powf(b) - b * x * y.powf(b - 1.0)) / (b * (b - 1.0))
    }
}

/// `Σ d_β(V | WH)` given the product directly. Shapes are not checked.
pub(crate) fn beta_div_sum(v: &Array2<f64>, wh: &Array2<f64>, beta: Beta) -> f64 {
    v.iter().zip(wh.iter()).map(|(&x, &y)| beta_div(x, y, beta)).sum()
}

pub(crate) fn check_conformable(v: &NonnegMatrix, w: &Array2<f64>, h: &Array2<f64>) -> Result<()> {
    if w.ncols() != h.nrows() || v.nrows() != w.nrows() || v.ncols() != h.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "V is {}x{}, W is {}x{}, H is {}x{}",
            v.nrows(),
            v.ncols(),
            w.nrows(),
            w.ncols(),
            h.nrows(),
            h.ncols()
        )));
    }
    Ok(())
}

/// `D_β(V | WH) = Σ_{f,n} d_β(V_fn | [WH]_fn)`.
pub fn matrix_beta_div(v: &NonnegMatrix, w: &Array2<f64>, h: &Array2<f64>, beta: Beta) -> Result<f64> {
    check_conformable(v, w, h)?;
    Ok(beta_div_sum(v.values(), &w.dot(h), beta))
}

/// `logdet(WᵀW + δI)` through a Cholesky factorisation.
pub fn logdet_volume(w: &Array2<f64>, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    linalg::spd_logdet(&linalg::gram_plus_delta(w, delta))
}

/// Min-vol objective `D_β(V | WH) + λ logdet(WᵀW + δI)`.
pub fn objective(
    v: &NonnegMatrix,
    w: &Array2<f64>,
    h: &Array2<f64>,
    beta: Beta,
    lambda: f64,
    delta: f64,
) -> Result<ObjectiveValue> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be non-negative, got {lambda}")));
    }
    let fit = matrix_beta_div(v, w, h, beta)?;
    let volume = logdet_volume(w, delta)?;
    Ok(ObjectiveValue::new(fit, lambda * volume))
}

/// Convex, concave and constant parts (in `y`) of `d_β(x | y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionParts {
    pub convex: f64,
    pub concave: f64,
    pub constant: f64,
}

impl DecompositionParts {
    pub fn sum(&self) -> f64 {
        self.convex + self.concave + self.constant
    }
}

/// Convex-concave-constant split used to build the majorisers.
///
/// For β = 0 the parts are `x/y`, `log y` and `-log x - 1`; for β ∈ [1, 2]
/// the divergence is already convex in `y`.
pub fn decomposition_parts(x: f64, y: f64, beta: Beta) -> Result<DecompositionParts> {
    if !(y > 0.0) {
        return Err(Error::InvalidArgument(format!("y must be positive, got {y}")));
    }
    match beta.0 {
        b if b == 0.0 => {
            if !(x > 0.0) {
                return Err(Error::InvalidArgument(format!("x must be positive for beta = 0, got {x}")));
            }
            Ok(DecompositionParts { convex: x / y, concave: y.ln(), constant: -x.ln() - 1.0 })
        }
        b if (1.0..=2.0).contains(&b) => {
            Ok(DecompositionParts { convex: beta_div(x, y, beta), concave: 0.0, constant: 0.0 })
        }
        b => Err(Error::InvalidArgument(format!("no decomposition implemented for beta = {b}"))),
    }
}

//! Majorisers of the min-vol objective, exposed for verification.
//!
//! With `Y = (W̃ᵀW̃ + δI)⁻¹`, the objective `D_β(V | WH) + λ logdet(WᵀW + δI)`
//! is bounded above by
//!
//! `F̄(W | W̃) = Σ_f G(w_f | w̃_f) + λ (Σ_f l̄(w_f | w̃_f) + c)`
//!
//! with `c = δ tr(Y) + logdet(Y⁻¹) − K`, touching at `W = W̃`. Both `G` and
//! `l̄` are separable in the entries of the row `w_f`.

use ndarray::{Array2, ArrayView1};

use super::gram::{compute_y, GramInverse};
use crate::divergences::{check_conformable, Beta};
use crate::error::{Error, Result};
use crate::linalg;
use crate::stft::NonnegMatrix;
use crate::EVAL_FLOOR;

/// First-order bound `tr(Y(WᵀW + δI)) + logdet(Y⁻¹) − K` on
/// `logdet(WᵀW + δI)`, with `Y = (ZᵀZ + δI)⁻¹`. Equal to the log-det at
/// `W = Z`.
pub fn logdet_majorizer(w: &Array2<f64>, z: &Array2<f64>, delta: f64) -> Result<f64> {
    if w.ncols() != z.ncols() {
        return Err(Error::DimensionMismatch(format!("W has {} columns, Z has {}", w.ncols(), z.ncols())));
    }
    let gz = linalg::gram_plus_delta(z, delta);
    let y = compute_y(z, delta)?;
    let gw = linalg::gram_plus_delta(w, delta);
    let trace: f64 = (&y.y * &gw).sum();
    Ok(trace + linalg::spd_logdet(&gz)? - w.ncols() as f64)
}

/// Separable quadratic bound `l̄(w | w̃)` on `wᵀYw` at a positive row `w̃`:
/// `Σ_k [(Y⁺ + Y⁻)w̃]_k / w̃_k · w_k² − 4 (Y⁻w̃)ᵀw + 2 w̃ᵀY⁻w̃`.
pub fn quadratic_majorizer(w: ArrayView1<f64>, w_tilde: ArrayView1<f64>, gram: &GramInverse) -> f64 {
    let abs_w = gram.abs().dot(&w_tilde);
    let minus_w = gram.y_minus.dot(&w_tilde);
    let quad: f64 = abs_w.iter().zip(w_tilde.iter()).zip(w.iter()).map(|((a, t), x)| a / t * x * x).sum();
    quad - 4.0 * minus_w.dot(&w) + 2.0 * minus_w.dot(&w_tilde)
}

/// Jensen-type bound `G(w | w̃)` on `Σ_n d_β(v_n | [wH]_n)` for β ∈ {0, 1}.
///
/// For KL the `−v log y` term is split with weights `w̃_k h_kn / ṽ_n`. For IS
/// the convex part `v/y` is split the same way and the concave `log y` is
/// replaced by its tangent at `ṽ = w̃H`.
pub fn fit_majorizer(
    v_row: ArrayView1<f64>,
    w: ArrayView1<f64>,
    w_tilde: ArrayView1<f64>,
    h: &Array2<f64>,
    beta: Beta,
) -> Result<f64> {
    if w.len() != h.nrows() || w_tilde.len() != h.nrows() || v_row.len() != h.ncols() {
        return Err(Error::DimensionMismatch("row, W row and H do not conform".into()));
    }
    let v_tilde = w_tilde.dot(h).mapv(|y| y.max(EVAL_FLOOR));
    let y = w.dot(h);
    let mut total = 0.0;
    match beta.value() {
        b if b == 1.0 => {
            for (n, &x) in v_row.iter().enumerate() {
                total += y[n];
                if x > 0.0 {
                    let mut split = 0.0;
                    for k in 0..w.len() {
                        let rho = w_tilde[k] * h[[k, n]] / v_tilde[n];
                        if rho > 0.0 {
                            split += rho * (w[k] * v_tilde[n] / w_tilde[k]).ln();
                        }
                    }
                    total += x * x.ln() - x - x * split;
                }
            }
        }
        b if b == 0.0 => {
            for (n, &x) in v_row.iter().enumerate() {
                let x = x.max(EVAL_FLOOR);
                let vt = v_tilde[n];
                let convex: f64 = (0..w.len()).map(|k| x * w_tilde[k] * w_tilde[k] * h[[k, n]] / (vt * vt * w[k])).sum();
                total += convex + vt.ln() + y[n] / vt - 1.0 - x.ln() - 1.0;
            }
        }
        b => return Err(Error::InvalidArgument(format!("fit majoriser is defined for beta in {{0, 1}}, got {b}"))),
    }
    Ok(total)
}

/// `F̄(W | W̃)` summed over all rows of `W`.
pub fn objective_majorizer(
    v: &NonnegMatrix,
    w: &Array2<f64>,
    w_tilde: &Array2<f64>,
    h: &Array2<f64>,
    beta: Beta,
    lambda: f64,
    delta: f64,
) -> Result<f64> {
    check_conformable(v, w, h)?;
    check_conformable(v, w_tilde, h)?;
    let gram = compute_y(w_tilde, delta)?;
    let k = w.ncols() as f64;
    let c = delta * gram.y.diag().sum() + linalg::spd_logdet(&linalg::gram_plus_delta(w_tilde, delta))? - k;
    let mut fit = 0.0;
    let mut vol = 0.0;
    for f in 0..w.nrows() {
        fit += fit_majorizer(v.values().row(f), w.row(f), w_tilde.row(f), h, beta)?;
        vol += quadratic_majorizer(w.row(f), w_tilde.row(f), &gram);
    }
    Ok(fit + lambda * (vol + c))
}

/// `M_ij = w̃_i [Φ(w̃) − 2Y]_ij w̃_j`, whose diagonal dominance makes the
/// quadratic bound valid.
pub fn dominance_matrix(w_tilde: ArrayView1<f64>, gram: &GramInverse) -> Array2<f64> {
    let phi = gram.phi_diag(w_tilde);
    Array2::from_shape_fn((w_tilde.len(), w_tilde.len()), |(i, j)| {
        let d = if i == j { phi[i] } else { 0.0 };
        w_tilde[i] * (d - 2.0 * gram.y[[i, j]]) * w_tilde[j]
    })
}

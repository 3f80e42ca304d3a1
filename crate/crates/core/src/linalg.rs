//! Small dense linear algebra on K x K matrices, delegated to nalgebra.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// `W^T W + delta I`.
pub(crate) fn gram_plus_delta(w: &Array2<f64>, delta: f64) -> Array2<f64> {
    let mut g = w.t().dot(w);
    g.diag_mut().mapv_inplace(|d| d + delta);
    g
}

fn cholesky(a: &Array2<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    to_na(a)
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite(format!("{}x{} Cholesky factorisation failed", a.nrows(), a.ncols())))
}

pub(crate) fn spd_logdet(a: &Array2<f64>) -> Result<f64> {
    let l = cholesky(a)?;
    Ok(2.0 * l.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

pub(crate) fn spd_inverse(a: &Array2<f64>) -> Result<Array2<f64>> {
    let m = to_na(a);
    let inv = cholesky(a)?.inverse();
    // One step of iterative refinement, then symmetrise.
    let residual = DMatrix::identity(m.nrows(), m.ncols()) - &m * &inv;
    let inv = &inv + &inv * residual;
    let inv = (&inv + inv.transpose()) * 0.5;
    Ok(from_na(&inv))
}

pub(crate) fn spd_solve(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    let rhs = nalgebra::DVector::from_iterator(b.len(), b.iter().copied());
    let x = cholesky(a)?.solve(&rhs);
    Ok(Array1::from_iter(x.iter().copied()))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub(crate) fn symmetric_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = to_na(a).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Singular values, descending.
pub(crate) fn singular_values(a: &Array2<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = to_na(a).singular_values().iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::linalg;

/// `Y = (WᵀW + δI)⁻¹` split into its positive and negative parts,
/// `Y = Y⁺ − Y⁻`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramInverse {
    pub y: Array2<f64>,
    pub y_plus: Array2<f64>,
    pub y_minus: Array2<f64>,
}

impl GramInverse {
    pub fn from_inverse(y: Array2<f64>) -> Self {
        let y_plus = y.mapv(|v| v.max(0.0));
        let y_minus = y.mapv(|v| (-v).max(0.0));
        Self { y, y_plus, y_minus }
    }

    pub fn rank(&self) -> usize {
        self.y.nrows()
    }

    /// `|Y| = Y⁺ + Y⁻`.
    pub fn abs(&self) -> Array2<f64> {
        &self.y_plus + &self.y_minus
    }

    /// Diagonal of `Φ(w̃) = diag(2 (Y⁺ + Y⁻) w̃ / w̃)`, the curvature of the
    /// separable majoriser of `wᵀYw` at `w̃ > 0`.
    pub fn phi_diag(&self, w_tilde: ArrayView1<f64>) -> Array1<f64> {
        let abs_w = self.abs().dot(&w_tilde);
        Array1::from_iter(abs_w.iter().zip(w_tilde.iter()).map(|(a, w)| 2.0 * a / w))
    }
}

/// Inverts `WᵀW + δI` through its Cholesky factor.
pub fn compute_y(w: &Array2<f64>, delta: f64) -> Result<GramInverse> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    let y = linalg::spd_inverse(&linalg::gram_plus_delta(w, delta))?;
    Ok(GramInverse::from_inverse(y))
}

/// Spectral condition number of `WᵀW + δI`.
pub fn gram_condition_number(w: &Array2<f64>, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    let ev = linalg::symmetric_eigenvalues(&linalg::gram_plus_delta(w, delta));
    Ok(ev[ev.len() - 1] / ev[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::init_factors;
    use ndarray::array;

    #[test]
    fn identity_case() {
        let g = compute_y(&Array2::eye(2), 1.0).unwrap();
        assert_eq!(g.y, array![[0.5, 0.0], [0.0, 0.5]]);
        assert_eq!(g.y_plus, g.y);
        assert!(g.y_minus.iter().all(|&x| x == 0.0));
        assert!(compute_y(&Array2::eye(2), 0.0).is_err());
    }

    #[test]
    fn inverse_and_split() {
        for seed in 0..20 {
            let w = init_factors(12, 1, 5, seed).w;
            let g = compute_y(&w, 1.0).unwrap();
            let mut a = w.t().dot(&w);
            a.diag_mut().mapv_inplace(|d| d + 1.0);
            let prod = g.y.dot(&a);
            let eye = Array2::<f64>::eye(5);
            assert!(prod.iter().zip(eye.iter()).all(|(p, e)| (p - e).abs() < 1e-10));
            for ((y, p), m) in g.y.iter().zip(g.y_plus.iter()).zip(g.y_minus.iter()) {
                assert_eq!(*y, p - m);
                assert!(*p >= 0.0 && *m >= 0.0 && (*p == 0.0 || *m == 0.0));
            }
            assert!(linalg::symmetric_eigenvalues(&g.y)[0] > 0.0);
        }
    }

    #[test]
    fn condition_number_bound() {
        for seed in 0..30 {
            let k = 1 + (seed as usize % 10);
            let w = init_factors(20, 1, k, seed).w;
            for delta in [0.5, 1.0, 2.0] {
                let c = gram_condition_number(&w, delta).unwrap();
                assert!(c >= 1.0 && c <= 1.0 + k as f64 / delta);
            }
        }
    }

    #[test]
    fn phi_is_exact_for_diagonal_y() {
        let g = GramInverse::from_inverse(array![[0.7, 0.0, 0.0], [0.0, 0.2, 0.0], [0.0, 0.0, 1.3]]);
        for w in [array![0.1, 2.0, 5.0], array![1.0, 1.0, 1.0], array![3e-4, 7.0, 0.5]] {
            let phi = g.phi_diag(w.view());
            for k in 0..3 {
                assert!((phi[k] - 2.0 * g.y[[k, k]]).abs() < 1e-14);
            }
        }
    }
}

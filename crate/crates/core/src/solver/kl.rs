use ndarray::{Array2, Axis};

use super::{floor_in_place, run_minvol, FactorPair, GramInverse, IterationTrace, SolverConfig};
use crate::divergences::check_conformable;
use crate::error::{Error, Result};
use crate::stft::NonnegMatrix;
use crate::EVAL_FLOOR;

/// `V ⊘ (WH)` with the product floored.
pub(crate) fn ratio(v: &NonnegMatrix, w: &Array2<f64>, h: &Array2<f64>) -> Array2<f64> {
    let mut wh = w.dot(h);
    wh.zip_mut_with(v.values(), |y, &x| *y = x / y.max(EVAL_FLOOR));
    wh
}

/// KL multiplicative update of the activations,
/// `H ⊙ Wᵀ(V ⊘ WH) ⊘ WᵀJ`, floored.
pub fn update_h_kl(v: &NonnegMatrix, w: &Array2<f64>, h: &Array2<f64>) -> Result<Array2<f64>> {
    check_conformable(v, w, h)?;
    let num = w.t().dot(&ratio(v, w, h));
    let col_sums = w.sum_axis(Axis(0));
    let mut out = h * &num;
    for (mut row, &s) in out.rows_mut().into_iter().zip(col_sums.iter()) {
        row.mapv_inplace(|x| x / s);
    }
    floor_in_place(&mut out);
    Ok(out)
}

/// Closed-form minimiser of the separable min-vol KL auxiliary in `W`.
///
/// With `A = JHᵀ − 4λW̃Y⁻`, `B = W̃(Y⁺ + Y⁻)` and `C = (V ⊘ W̃H)Hᵀ` the update
/// is `W̃ ⊙ (√(A² + 8λ B ⊙ C) − A) ⊘ (4λB)`, the positive root of
/// `2λB w² + A w̃ w − C w̃² = 0` per entry. Where `A ≥ 0` the algebraically
/// equal form `W̃ ⊙ 2C ⊘ (√(A² + 8λBC) + A)` is used to avoid cancellation.
pub fn update_w_minvol_kl(
    v: &NonnegMatrix,
    w_tilde: &Array2<f64>,
    h: &Array2<f64>,
    lambda: f64,
    gram: &GramInverse,
) -> Result<Array2<f64>> {
    check_conformable(v, w_tilde, h)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    if gram.rank() != w_tilde.ncols() {
        return Err(Error::DimensionMismatch(format!("Y is {0}x{0}, W has {1} columns", gram.rank(), w_tilde.ncols())));
    }
    let row_sums_h = h.sum_axis(Axis(1));
    let mut a = w_tilde.dot(&gram.y_minus) * (-4.0 * lambda);
    for mut row in a.rows_mut() {
        row += &row_sums_h;
    }
    let b = w_tilde.dot(&gram.abs());
    let c = ratio(v, w_tilde, h).dot(&h.t());

    let mut out = w_tilde.clone();
    ndarray::Zip::from(&mut out).and(&a).and(&b).and(&c).for_each(|w, &a, &b, &c| {
        let root = (a * a + 8.0 * lambda * b * c).sqrt();
        let factor = if a >= 0.0 { 2.0 * c / (root + a) } else { (root - a) / (4.0 * lambda * b) };
        *w *= factor;
    });
    floor_in_place(&mut out);
    Ok(out)
}

/// Min-vol KL-NMF: `D_KL(V | WH) + λ logdet(WᵀW + δI)` with simplex columns.
pub fn solve_minvol_kl(v: &NonnegMatrix, config: &SolverConfig) -> Result<(FactorPair, IterationTrace)> {
    solve_minvol_kl_from(v, config, None)
}

pub(crate) fn solve_minvol_kl_from(
    v: &NonnegMatrix,
    config: &SolverConfig,
    init: Option<&FactorPair>,
) -> Result<(FactorPair, IterationTrace)> {
    if config.beta.value() != 1.0 {
        return Err(Error::InvalidConfig(format!("min-vol KL requires beta = 1, got {}", config.beta)));
    }
    run_minvol(v, config, init, update_h_kl, update_w_minvol_kl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergences::{matrix_beta_div, Beta};
    use crate::solver::{compute_y, Lambda};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.random_range(0.05..2.0))
    }

    fn one(x: f64) -> Array2<f64> {
        array![[x]]
    }

    #[test]
    fn scalar_w_update() {
        let v = NonnegMatrix::new(one(1.0)).unwrap();
        let gram = compute_y(&one(1.0), 1.0).unwrap();
        assert_eq!(gram.y, one(0.5));
        let w = update_w_minvol_kl(&v, &one(1.0), &one(1.0), 0.5, &gram).unwrap();
        assert!((w[[0, 0]] - (3f64.sqrt() - 1.0)).abs() < 1e-15);
        assert!((w[[0, 0]] - 0.732051).abs() < 1e-6);
    }

    #[test]
    fn h_update_examples() {
        let v = NonnegMatrix::new(one(2.0)).unwrap();
        assert_eq!(update_h_kl(&v, &one(1.0), &one(1.0)).unwrap(), one(2.0));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (w, h) = (random(&mut rng, 6, 3), random(&mut rng, 3, 5));
        let v = NonnegMatrix::new(w.dot(&h)).unwrap();
        let h2 = update_h_kl(&v, &w, &h).unwrap();
        assert!(h.iter().zip(h2.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn h_update_decreases_kl() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let v = NonnegMatrix::new(random(&mut rng, 8, 7)).unwrap();
            let (w, h) = (random(&mut rng, 8, 3), random(&mut rng, 3, 7));
            let before = matrix_beta_div(&v, &w, &h, Beta::KULLBACK_LEIBLER).unwrap();
            let h2 = update_h_kl(&v, &w, &h).unwrap();
            let after = matrix_beta_div(&v, &w, &h2, Beta::KULLBACK_LEIBLER).unwrap();
            assert!(after <= before + 1e-12);
        }
    }

    #[test]
    fn w_update_positive_and_near_standard_mu_for_tiny_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let v = NonnegMatrix::new(random(&mut rng, 9, 6)).unwrap();
            let (w, h) = (random(&mut rng, 9, 3), random(&mut rng, 3, 6));
            let gram = compute_y(&w, 1.0).unwrap();
            for lambda in [1e-3, 1.0, 50.0] {
                let w_plus = update_w_minvol_kl(&v, &w, &h, lambda, &gram).unwrap();
                assert!(w_plus.iter().all(|&x| x > 0.0 && x.is_finite()));
            }
            let w_plus = update_w_minvol_kl(&v, &w, &h, 1e-8, &gram).unwrap();
            let standard = crate::solver::update_w_kl(&v, &w, &h).unwrap();
            for (a, b) in w_plus.iter().zip(standard.iter()) {
                assert!((a - b).abs() <= 1e-5 * b.abs());
            }
        }
    }

    #[test]
    fn argument_checks() {
        let v = NonnegMatrix::new(one(1.0)).unwrap();
        let gram = compute_y(&one(1.0), 1.0).unwrap();
        assert!(update_w_minvol_kl(&v, &one(1.0), &one(1.0), 0.0, &gram).is_err());
        let wide = array![[1.0, 1.0]];
        assert!(update_w_minvol_kl(&v, &wide, &array![[1.0], [1.0]], 1.0, &gram).is_err());
        assert!(update_h_kl(&v, &wide, &one(1.0)).is_err());
        let cfg = SolverConfig::new(1).with_beta(Beta::ITAKURA_SAITO);
        assert!(solve_minvol_kl(&v, &cfg).is_err());
    }

    #[test]
    fn solver_is_monotone_and_keeps_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let v = NonnegMatrix::new(random(&mut rng, 50, 40)).unwrap();
        let cfg = SolverConfig::new(3).with_seed(4);
        let (fp, trace) = solve_minvol_kl(&v, &cfg).unwrap();
        assert_eq!(trace.records.len(), 200);
        assert!(trace.is_non_increasing(1e-9), "max increase {}", trace.max_increase());
        for col in fp.w.columns() {
            assert!((col.sum() - 1.0).abs() < 1e-10);
        }
        assert!(fp.w.iter().chain(fp.h.iter()).all(|&x| x >= crate::FACTOR_FLOOR));

        let fixed = cfg.with_lambda(Lambda::Fixed(0.3)).with_max_iters(30);
        let (_, trace) = solve_minvol_kl(&v, &fixed).unwrap();
        assert_eq!(trace.penalty_weight, 0.3);
        assert!(trace.is_non_increasing(1e-9));
    }
}

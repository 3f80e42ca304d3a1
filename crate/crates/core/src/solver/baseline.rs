use ndarray::{Array2, Axis};

use super::kl::{ratio, update_h_kl};
use super::{
    floor_in_place, line_search_accept, normalize, start_factors, zero_row_flags, FactorPair, IterationRecord,
    IterationTrace, SolverConfig, Variant,
};
use crate::divergences::{beta_div_sum, check_conformable, Beta, ObjectiveValue};
use crate::error::{Error, Result};
use crate::stft::NonnegMatrix;
use crate::EVAL_FLOOR;

/// KL multiplicative update of the dictionary,
/// `W ⊙ (V ⊘ WH)Hᵀ ⊘ JHᵀ`, floored.
pub fn update_w_kl(v: &NonnegMatrix, w: &Array2<f64>, h: &Array2<f64>) -> Result<Array2<f64>> {
    check_conformable(v, w, h)?;
    let num = ratio(v, w, h).dot(&h.t());
    let row_sums = h.sum_axis(Axis(1));
    let mut out = w * &num;
    for mut row in out.rows_mut() {
        row /= &row_sums;
    }
    floor_in_place(&mut out);
    Ok(out)
}

/// `(V ⊙ (WH)^{β−2}, (WH)^{β−1})` for the generic β update.
fn mu_terms(v: &NonnegMatrix, w: &Array2<f64>, h: &Array2<f64>, beta: f64) -> (Array2<f64>, Array2<f64>) {
    let wh = w.dot(h).mapv(|y| y.max(EVAL_FLOOR));
    let num = v.values() * &wh.mapv(|y| y.powf(beta - 2.0));
    let den = wh.mapv(|y| y.powf(beta - 1.0));
    (num, den)
}

fn update_h_beta(v: &NonnegMatrix, w: &Array2<f64>, h: &Array2<f64>, beta: f64) -> Result<Array2<f64>> {
    if beta == 1.0 {
        return update_h_kl(v, w, h);
    }
    check_conformable(v, w, h)?;
    let (num, den) = mu_terms(v, w, h, beta);
    let mut out = h * &w.t().dot(&num);
    out /= &w.t().dot(&den);
    floor_in_place(&mut out);
    Ok(out)
}

fn update_w_beta(v: &NonnegMatrix, w: &Array2<f64>, h: &Array2<f64>, beta: f64) -> Result<Array2<f64>> {
    if beta == 1.0 {
        return update_w_kl(v, w, h);
    }
    check_conformable(v, w, h)?;
    let (num, den) = mu_terms(v, w, h, beta);
    let mut out = w * &num.dot(&h.t());
    out /= &den.dot(&h.t());
    floor_in_place(&mut out);
    Ok(out)
}

/// Classical alternating multiplicative updates for β ∈ {0, 1, 2}.
///
/// No constraint is imposed on `W` while iterating; the returned factors are
/// normalised once at the end. Objective values are recorded only when
/// `config.log_objective` is set.
pub fn solve_baseline(v: &NonnegMatrix, config: &SolverConfig) -> Result<(FactorPair, IterationTrace)> {
    solve_baseline_from(v, config, None)
}

pub(crate) fn solve_baseline_from(
    v: &NonnegMatrix,
    config: &SolverConfig,
    init: Option<&FactorPair>,
) -> Result<(FactorPair, IterationTrace)> {
    let config = SolverConfig { variant: Variant::Baseline, ..config.clone() };
    config.validate()?;
    let beta = config.beta;
    let floored;
    let v = if beta.value() == 0.0 {
        floored = v.floored(EVAL_FLOOR);
        &floored
    } else {
        v
    };
    let FactorPair { mut w, mut h } = start_factors(v, &config, init)?;
    let log = config.log_objective;
    let fit = |w: &Array2<f64>, h: &Array2<f64>| ObjectiveValue::new(beta_div_sum(v.values(), &w.dot(h), beta), 0.0);

    let mut trace = IterationTrace::new(log.then(|| fit(&w, &h)), 0.0, config.max_iters);
    for _ in 0..config.max_iters {
        h = update_h_beta(v, &w, &h, beta.value())?;
        w = update_w_beta(v, &w, &h, beta.value())?;
        trace.records.push(IterationRecord {
            objective: log.then(|| fit(&w, &h)),
            gamma: 1.0,
            backtracks: 0,
            exhausted: false,
            zero_rows: zero_row_flags(&h),
        });
    }
    let (w, h) = normalize(&w, &h)?;
    Ok((FactorPair { w, h }, trace))
}

/// KL update of `H` for the ℓ1-penalised objective,
/// `H ⊙ Wᵀ(V ⊘ WH) ⊘ (WᵀJ + μ)`, floored.
pub fn update_h_sparse_kl(v: &NonnegMatrix, w: &Array2<f64>, h: &Array2<f64>, mu: f64) -> Result<Array2<f64>> {
    check_conformable(v, w, h)?;
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::InvalidArgument(format!("sparse weight must be non-negative, got {mu}")));
    }
    let num = w.t().dot(&ratio(v, w, h));
    let col_sums = w.sum_axis(Axis(0));
    let mut out = h * &num;
    for (mut row, &s) in out.rows_mut().into_iter().zip(col_sums.iter()) {
        row.mapv_inplace(|x| x / (s + mu));
    }
    floor_in_place(&mut out);
    Ok(out)
}

/// Sparse KL-NMF: `D_KL(V | WH) + μ ΣH` with simplex columns of `W`.
///
/// `H` takes the penalised multiplicative step, `W` the standard KL step,
/// followed by the same normalise-and-backtrack acceptance as the min-vol
/// solvers.
pub fn solve_sparse_kl(v: &NonnegMatrix, config: &SolverConfig) -> Result<(FactorPair, IterationTrace)> {
    solve_sparse_kl_from(v, config, None)
}

pub(crate) fn solve_sparse_kl_from(
    v: &NonnegMatrix,
    config: &SolverConfig,
    init: Option<&FactorPair>,
) -> Result<(FactorPair, IterationTrace)> {
    let config = SolverConfig { variant: Variant::Sparse, ..config.clone() };
    config.validate()?;
    let mu = config.sparse_weight;
    let FactorPair { mut w, mut h } = start_factors(v, &config, init)?;
    let eval = |w: &Array2<f64>, h: &Array2<f64>| -> Result<ObjectiveValue> {
        Ok(ObjectiveValue::new(beta_div_sum(v.values(), &w.dot(h), Beta::KULLBACK_LEIBLER), mu * h.sum()))
    };

    let mut trace = IterationTrace::new(Some(eval(&w, &h)?), mu, config.max_iters);
    let mut gamma = 1.0;
    for _ in 0..config.max_iters {
        h = update_h_sparse_kl(v, &w, &h, mu)?;
        let current = eval(&w, &h)?;
        let w_plus = update_w_kl(v, &w, &h)?;
        let step = line_search_accept(&eval, &w, &h, &current, &w_plus, gamma)?;
        gamma = step.gamma;
        w = step.w;
        h = step.h;
        trace.records.push(IterationRecord {
            objective: Some(step.objective),
            gamma: step.gamma_used,
            backtracks: step.backtracks,
            exhausted: step.exhausted,
            zero_rows: zero_row_flags(&h),
        });
    }
    Ok((FactorPair { w, h }, trace))
}

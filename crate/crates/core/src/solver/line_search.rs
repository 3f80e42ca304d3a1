use ndarray::Array2;

use super::normalize;
use crate::divergences::ObjectiveValue;
use crate::error::Result;

/// Step shrink factor applied on every rejected candidate.
pub const BACKTRACK_FACTOR: f64 = 0.8;
/// Step growth factor applied after an accepted candidate (capped at 1).
pub const GROWTH_FACTOR: f64 = 1.2;
/// Rejected candidates allowed before falling back to the previous iterate.
pub const MAX_BACKTRACKS: usize = 100;

/// Result of [`line_search_accept`].
#[derive(Debug, Clone)]
pub struct LineSearchOutcome {
    pub w: Array2<f64>,
    pub h: Array2<f64>,
    pub objective: ObjectiveValue,
    /// Interpolation weight of the accepted candidate (1 for the full step).
    pub gamma_used: f64,
    /// Step size to carry into the next iteration.
    pub gamma: f64,
    pub backtracks: usize,
    /// All backtracks were spent; `(w, h)` is the previous iterate.
    pub exhausted: bool,
}

/// Normalises the candidate `W⁺` together with `H` and backtracks along
/// `(1 − γ)W + γW⁺` until the objective does not exceed `current`.
///
/// The first candidate is the full step `W⁺`. Each rejection multiplies the
/// carried `γ` by 0.8; after acceptance the step grows to `min(1, 1.2γ)`. If
/// 100 candidates are rejected the previous iterate is kept and `exhausted`
/// is set.
pub fn line_search_accept<F>(
    mut objective: F,
    w: &Array2<f64>,
    h: &Array2<f64>,
    current: &ObjectiveValue,
    w_plus: &Array2<f64>,
    gamma: f64,
) -> Result<LineSearchOutcome>
where
    F: FnMut(&Array2<f64>, &Array2<f64>) -> Result<ObjectiveValue>,
{
    let mut gamma = gamma;
    let mut gamma_used = 1.0;
    let (mut cand_w, mut cand_h) = normalize(w_plus, h)?;
    let mut value = objective(&cand_w, &cand_h)?;
    let mut backtracks = 0;
    // NaN totals are rejected as well.
    while !(value.total <= current.total) {
        if backtracks == MAX_BACKTRACKS {
            return Ok(LineSearchOutcome {
                w: w.clone(),
                h: h.clone(),
                objective: *current,
                gamma_used: 0.0,
                gamma,
                backtracks,
                exhausted: true,
            });
        }
        gamma *= BACKTRACK_FACTOR;
        gamma_used = gamma;
        backtracks += 1;
        let interp = w * (1.0 - gamma) + w_plus * gamma;
        (cand_w, cand_h) = normalize(&interp, h)?;
        value = objective(&cand_w, &cand_h)?;
    }
    Ok(LineSearchOutcome {
        w: cand_w,
        h: cand_h,
        objective: value,
        gamma_used,
        gamma: (gamma * GROWTH_FACTOR).min(1.0),
        backtracks,
        exhausted: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergences::{logdet_volume, matrix_beta_div, Beta};
    use crate::stft::NonnegMatrix;
    use ndarray::array;

    fn minvol_eval(v: &NonnegMatrix, lambda: f64) -> impl FnMut(&Array2<f64>, &Array2<f64>) -> Result<ObjectiveValue> + '_ {
        move |w, h| {
            Ok(ObjectiveValue::new(
                matrix_beta_div(v, w, h, Beta::KULLBACK_LEIBLER)?,
                lambda * logdet_volume(w, 1.0)?,
            ))
        }
    }

    #[test]
    fn descending_step_is_accepted_immediately() {
        let w = array![[0.5, 0.2], [0.5, 0.8]];
        let h = array![[1.0, 2.0], [2.0, 1.0]];
        let v = NonnegMatrix::new(array![[0.9, 1.1], [2.1, 1.9]]).unwrap();
        let mut eval = minvol_eval(&v, 0.1);
        let current = eval(&w, &h).unwrap();
        // The objective at W itself never exceeds `current`.
        let out = line_search_accept(&mut eval, &w, &h, &current, &w, 0.5).unwrap();
        assert_eq!(out.backtracks, 0);
        assert!(!out.exhausted);
        assert_eq!(out.w, w);
        assert_eq!(out.objective.total, current.total);
        assert!((out.gamma - 0.6).abs() < 1e-15);

        let out = line_search_accept(&mut eval, &w, &h, &current, &w, 1.0).unwrap();
        assert_eq!((out.backtracks, out.gamma), (0, 1.0));
    }

    #[test]
    fn backtracks_until_decrease() {
        let w = array![[0.5, 0.2], [0.5, 0.8]];
        let h = array![[1.0, 2.0], [2.0, 1.0]];
        let v = NonnegMatrix::new(w.dot(&h)).unwrap();
        let mut eval = minvol_eval(&v, 0.0);
        // Objective rises far from W; only short steps toward W⁺ are accepted.
        let w_plus = array![[0.9, 0.1], [0.1, 0.9]];
        let current = ObjectiveValue::new(0.05, 0.0);
        let out = line_search_accept(&mut eval, &w, &h, &current, &w_plus, 1.0).unwrap();
        assert!(out.backtracks > 0 && !out.exhausted);
        assert!(out.objective.total <= current.total);
        assert!((out.gamma_used - BACKTRACK_FACTOR.powi(out.backtracks as i32)).abs() < 1e-12);
        for col in out.w.columns() {
            assert!((col.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn exhaustion_falls_back() {
        let w = array![[0.5, 0.2], [0.5, 0.8]];
        let h = array![[1.0, 2.0], [2.0, 1.0]];
        // An objective that is strictly above `current` for every candidate.
        let eval = |_: &Array2<f64>, _: &Array2<f64>| Ok(ObjectiveValue::new(2.0, 0.0));
        let current = ObjectiveValue::new(1.0, 0.0);
        let out = line_search_accept(eval, &w, &h, &current, &array![[0.9, 0.1], [0.1, 0.9]], 1.0).unwrap();
        assert!(out.exhausted);
        assert_eq!(out.backtracks, MAX_BACKTRACKS);
        assert_eq!((out.w, out.h), (w, h));
        assert!((out.gamma - BACKTRACK_FACTOR.powi(100)).abs() < 1e-25);
    }
}

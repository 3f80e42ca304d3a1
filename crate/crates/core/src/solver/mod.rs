//! Multiplicative-update solvers for β-NMF.
//!
//! Four variants share one skeleton (update `H`, update `W`, record the
//! objective):
//!
//! - min-vol KL ([`solve_minvol_kl`]) and min-vol IS ([`solve_minvol_is`]):
//!   majorisation-minimisation updates for `D_β(V|WH) + λ logdet(WᵀW + δI)`
//!   with the columns of `W` on the unit simplex. The `W` step is followed by
//!   normalisation and a backtracking line search so the objective never
//!   increases.
//! - baseline β-NMF ([`solve_baseline`]): the classical multiplicative
//!   updates for β ∈ {0, 1, 2}.
//! - sparse KL ([`solve_sparse_kl`]): KL with an ℓ1 penalty on `H` and
//!   normalised `W`.

pub mod auxiliary;
mod baseline;
mod cubic;
mod gram;
mod is;
mod kl;
mod line_search;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::divergences::{self, Beta, ObjectiveValue};
use crate::error::{Error, Result};
use crate::stft::NonnegMatrix;

pub use baseline::{solve_baseline, solve_sparse_kl, update_h_sparse_kl, update_w_kl};
pub use cubic::cubic_roots;
pub use gram::{compute_y, gram_condition_number, GramInverse};
pub use is::{is_cubic_coefficients, solve_minvol_is, update_h_is, update_w_minvol_is, CubicCoefficients};
pub use kl::{solve_minvol_kl, update_h_kl, update_w_minvol_kl};
pub use line_search::{line_search_accept, LineSearchOutcome, BACKTRACK_FACTOR, GROWTH_FACTOR, MAX_BACKTRACKS};

/// Fraction of the initial fit that the volume term represents when λ is
/// chosen automatically.
pub const AUTO_LAMBDA_RATIO: f64 = 0.1;

/// A row `k` of `H` counts as a zeroed source when `max_n H[k, n]` is below
/// this fraction of `max(H)`.
pub const ZERO_ROW_THRESHOLD: f64 = 1e-6;

/// Dictionary `W` (F x K) and activations `H` (K x N).
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    pub w: Array2<f64>,
    pub h: Array2<f64>,
}

impl FactorPair {
    pub fn rank(&self) -> usize {
        self.w.ncols()
    }

    pub fn product(&self) -> Array2<f64> {
        self.w.dot(&self.h)
    }

    /// Rescales so that every column of `W` sums to one, keeping `WH`.
    pub fn normalized(&self) -> Result<FactorPair> {
        let (w, h) = normalize(&self.w, &self.h)?;
        Ok(FactorPair { w, h })
    }

    /// Reorders the rank-one factors: new factor `i` is old factor `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> FactorPair {
        FactorPair { w: self.w.select(Axis(1), order), h: self.h.select(Axis(0), order) }
    }
}

/// Entries i.i.d. uniform on (0, 1] from a seeded ChaCha generator, then the
/// columns of `W` are normalised to the unit simplex.
pub fn init_factors(f: usize, n: usize, k: usize, seed: u64) -> FactorPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || 1.0 - rng.random::<f64>();
    let mut w = Array2::from_shape_simple_fn((f, k), &mut draw);
    let h = Array2::from_shape_simple_fn((k, n), &mut draw);
    for mut col in w.columns_mut() {
        let s = col.sum();
        col.mapv_inplace(|x| x / s);
    }
    FactorPair { w, h }
}

/// `W'(:,k) = W(:,k)/σ_k` and `H'(k,:) = σ_k H(k,:)` with `σ_k` the column sum
/// of `W`, so that `W'H' = WH`.
pub fn normalize(w: &Array2<f64>, h: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
    if w.ncols() != h.nrows() {
        return Err(Error::DimensionMismatch(format!("W has {} columns, H has {} rows", w.ncols(), h.nrows())));
    }
    let sums = w.sum_axis(Axis(0));
    if let Some(k) = sums.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidArgument(format!("column {k} of W has non-positive sum {}", sums[k])));
    }
    let mut wn = w.clone();
    let mut hn = h.clone();
    for (k, &s) in sums.iter().enumerate() {
        wn.column_mut(k).mapv_inplace(|x| x / s);
        hn.row_mut(k).mapv_inplace(|x| x * s);
    }
    Ok((wn, hn))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    MinVol,
    Baseline,
    Sparse,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minvol" | "min-vol" => Ok(Variant::MinVol),
            "baseline" => Ok(Variant::Baseline),
            "sparse" => Ok(Variant::Sparse),
            other => Err(Error::InvalidArgument(format!("unknown variant `{other}`"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::MinVol => "minvol",
            Variant::Baseline => "baseline",
            Variant::Sparse => "sparse",
        })
    }
}

/// Weight of the volume penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lambda {
    /// `λ = 0.1 · fit₀ / |vol₀|` at the initial factors.
    Auto,
    Fixed(f64),
}

impl Lambda {
    /// Resolves the weight for the given initial fit and log-det volume.
    pub fn resolve(self, initial_fit: f64, initial_volume: f64) -> f64 {
        match self {
            Lambda::Fixed(l) => l,
            Lambda::Auto => {
                let vol = initial_volume.abs();
                if vol > f64::EPSILON {
                    AUTO_LAMBDA_RATIO * initial_fit / vol
                } else {
                    AUTO_LAMBDA_RATIO * initial_fit
                }
            }
        }
    }
}

impl FromStr for Lambda {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Lambda::Auto);
        }
        s.parse::<f64>()
            .map(Lambda::Fixed)
            .map_err(|_| Error::InvalidArgument(format!("lambda must be `auto` or a number, got `{s}`")))
    }
}

impl fmt::Display for Lambda {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lambda::Auto => f.write_str("auto"),
            Lambda::Fixed(l) => write!(f, "{l}"),
        }
    }
}

impl Serialize for Lambda {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Lambda::Auto => s.serialize_str("auto"),
            Lambda::Fixed(l) => s.serialize_f64(*l),
        }
    }
}

impl<'de> Deserialize<'de> for Lambda {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(l) => Ok(Lambda::Fixed(l)),
            Repr::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Everything a solver run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub beta: Beta,
    pub rank: usize,
    pub lambda: Lambda,
    pub delta: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub variant: Variant,
    /// ℓ1 weight μ on `H` for the sparse variant.
    pub sparse_weight: f64,
    /// Record the objective of the baseline at every iteration. The min-vol
    /// and sparse variants always record it because their line search needs
    /// it anyway.
    pub log_objective: bool,
}

impl SolverConfig {
    /// Min-vol KL with automatic λ, δ = 1 and 200 iterations.
    pub fn new(rank: usize) -> Self {
        Self {
            beta: Beta::KULLBACK_LEIBLER,
            rank,
            lambda: Lambda::Auto,
            delta: 1.0,
            max_iters: 200,
            seed: 0,
            variant: Variant::MinVol,
            sparse_weight: 0.0,
            log_objective: true,
        }
    }

    pub fn with_beta(mut self, beta: Beta) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_lambda(mut self, lambda: Lambda) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_sparse_weight(mut self, mu: f64) -> Self {
        self.sparse_weight = mu;
        self
    }

    pub fn with_log_objective(mut self, on: bool) -> Self {
        self.log_objective = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.rank == 0 {
            return bad("rank must be at least 1".into());
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        let beta = self.beta.value();
        match self.variant {
            Variant::MinVol => {
                if beta != 0.0 && beta != 1.0 {
                    return bad(format!("min-vol updates exist for beta in {{0, 1}}, got {beta}"));
                }
                if let Lambda::Fixed(l) = self.lambda {
                    if !(l > 0.0 && l.is_finite()) {
                        return bad(format!("min-vol lambda must be positive, got {l}"));
                    }
                }
            }
            Variant::Baseline => {
                if beta != 0.0 && beta != 1.0 && beta != 2.0 {
                    return bad(format!("baseline updates exist for beta in {{0, 1, 2}}, got {beta}"));
                }
            }
            Variant::Sparse => {
                if beta != 1.0 {
                    return bad(format!("sparse variant is KL only, got beta = {beta}"));
                }
                if !(self.sparse_weight >= 0.0 && self.sparse_weight.is_finite()) {
                    return bad(format!("sparse weight must be non-negative, got {}", self.sparse_weight));
                }
            }
        }
        Ok(())
    }
}

/// One completed iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub objective: Option<ObjectiveValue>,
    /// Step size used for the accepted `W` candidate.
    pub gamma: f64,
    pub backtracks: usize,
    /// The line search ran out of backtracks and kept the previous iterate.
    pub exhausted: bool,
    /// Per row of `H`, whether it is below the zero-source threshold.
    pub zero_rows: Vec<bool>,
}

/// Objective values and line-search statistics of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationTrace {
    /// Objective at the initial factors (before any update).
    pub initial: Option<ObjectiveValue>,
    pub records: Vec<IterationRecord>,
    /// Resolved penalty weight (λ for min-vol, μ for sparse, 0 for baseline).
    pub penalty_weight: f64,
}

impl IterationTrace {
    fn new(initial: Option<ObjectiveValue>, penalty_weight: f64, capacity: usize) -> Self {
        Self { initial, records: Vec::with_capacity(capacity), penalty_weight }
    }

    /// Total objective after each iteration (skips unrecorded ones).
    pub fn totals(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.objective.map(|o| o.total)).collect()
    }

    /// Initial objective followed by every recorded iteration.
    pub fn totals_with_initial(&self) -> Vec<f64> {
        self.initial.iter().map(|o| o.total).chain(self.totals()).collect()
    }

    /// Largest increase between consecutive recorded totals (zero or negative
    /// when the trace is monotone).
    pub fn max_increase(&self) -> f64 {
        self.totals_with_initial().windows(2).map(|p| p[1] - p[0]).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_non_increasing(&self, tol: f64) -> bool {
        self.totals_with_initial().windows(2).all(|p| p[1] <= p[0] + tol)
    }

    pub fn line_search_exhausted(&self) -> bool {
        self.records.iter().any(|r| r.exhausted)
    }

    pub fn final_objective(&self) -> Option<ObjectiveValue> {
        self.records.last().and_then(|r| r.objective)
    }
}

pub(crate) fn zero_row_flags(h: &Array2<f64>) -> Vec<bool> {
    let max = h.iter().copied().fold(0.0, f64::max);
    h.rows().into_iter().map(|row| row.iter().copied().fold(0.0, f64::max) < ZERO_ROW_THRESHOLD * max).collect()
}

pub(crate) fn floor_in_place(m: &mut Array2<f64>) {
    m.mapv_inplace(|x| if x > crate::FACTOR_FLOOR { x } else { crate::FACTOR_FLOOR });
}

/// Runs the variant selected by `config`.
pub fn solve(v: &NonnegMatrix, config: &SolverConfig) -> Result<(FactorPair, IterationTrace)> {
    config.validate()?;
    match (config.variant, config.beta.value()) {
        (Variant::MinVol, b) if b == 1.0 => solve_minvol_kl(v, config),
        (Variant::MinVol, _) => solve_minvol_is(v, config),
        (Variant::Baseline, _) => solve_baseline(v, config),
        (Variant::Sparse, _) => solve_sparse_kl(v, config),
    }
}

/// Like [`solve`] but starting from `init` (rescaled so that the columns of
/// `W` lie on the simplex) instead of a seeded random draw.
pub fn solve_from(v: &NonnegMatrix, config: &SolverConfig, init: &FactorPair) -> Result<(FactorPair, IterationTrace)> {
    config.validate()?;
    match (config.variant, config.beta.value()) {
        (Variant::MinVol, b) if b == 1.0 => kl::solve_minvol_kl_from(v, config, Some(init)),
        (Variant::MinVol, _) => is::solve_minvol_is_from(v, config, Some(init)),
        (Variant::Baseline, _) => baseline::solve_baseline_from(v, config, Some(init)),
        (Variant::Sparse, _) => baseline::solve_sparse_kl_from(v, config, Some(init)),
    }
}

/// Initial factors: `init` normalised, or a seeded draw.
pub(crate) fn start_factors(v: &NonnegMatrix, config: &SolverConfig, init: Option<&FactorPair>) -> Result<FactorPair> {
    let fp = match init {
        Some(fp) => {
            if fp.rank() != config.rank {
                return Err(Error::InvalidConfig(format!("initial factors have rank {}, config has {}", fp.rank(), config.rank)));
            }
            let mut fp = fp.normalized()?;
            floor_in_place(&mut fp.w);
            floor_in_place(&mut fp.h);
            fp
        }
        None => init_factors(v.nrows(), v.ncols(), config.rank, config.seed),
    };
    divergences::check_conformable(v, &fp.w, &fp.h)?;
    Ok(fp)
}

/// Shared min-vol loop: H update, `Y`, W update, normalise, line search.
pub(crate) fn run_minvol<HU, WU>(
    v: &NonnegMatrix,
    config: &SolverConfig,
    init: Option<&FactorPair>,
    update_h: HU,
    update_w: WU,
) -> Result<(FactorPair, IterationTrace)>
where
    HU: Fn(&NonnegMatrix, &Array2<f64>, &Array2<f64>) -> Result<Array2<f64>>,
    WU: Fn(&NonnegMatrix, &Array2<f64>, &Array2<f64>, f64, &GramInverse) -> Result<Array2<f64>>,
{
    config.validate()?;
    let beta = config.beta;
    let delta = config.delta;
    let FactorPair { mut w, mut h } = start_factors(v, config, init)?;

    let initial_fit = divergences::beta_div_sum(v.values(), &w.dot(&h), beta);
    let initial_volume = divergences::logdet_volume(&w, delta)?;
    let lambda = config.lambda.resolve(initial_fit, initial_volume);
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidConfig(format!("resolved lambda {lambda} is not positive")));
    }

    let eval = |w: &Array2<f64>, h: &Array2<f64>| -> Result<ObjectiveValue> {
        let fit = divergences::beta_div_sum(v.values(), &w.dot(h), beta);
        Ok(ObjectiveValue::new(fit, lambda * divergences::logdet_volume(w, delta)?))
    };

    let initial = ObjectiveValue::new(initial_fit, lambda * initial_volume);
    let mut trace = IterationTrace::new(Some(initial), lambda, config.max_iters);
    let mut gamma = 1.0;
    for _ in 0..config.max_iters {
        h = update_h(v, &w, &h)?;
        let current = eval(&w, &h)?;
        let gram = compute_y(&w, delta)?;
        let w_plus = update_w(v, &w, &h, lambda, &gram)?;
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

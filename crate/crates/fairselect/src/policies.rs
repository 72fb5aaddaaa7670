//! Selection policies and their benchmarks.
//!
//! All policies are pure functions of immutable inputs.  The interesting ones
//! share a common shape: compute a per-candidate ranking score, find the best
//! candidate of each subgroup, and decide which subgroup wins.  Ranking by
//! raw predicted performance ("parity of treatment") ignores the protected
//! attribute functionally but not statistically; the fair policies instead
//! compare the subgroup bests against a quantile threshold chosen so that the
//! winning subgroup's probability equals its share of the pool, making the
//! decision independent of the attribute vector.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::Error;
use crate::estimation::{ols_fit, FittedSelector};
use crate::model::{CandidatePool, DataGeneratingProcess, HistoryDataset, PopulationTable};
use crate::rng::{Purpose, RngStream};
use crate::Result;

/// Grid resolution for quantile computation on analytic score laws.
const ANALYTIC_GRID_POINTS: usize = 4096;
/// Grid half-width in units of the wider subgroup score deviation.
const ANALYTIC_GRID_SPAN_SDS: f64 = 12.0;
/// Bisection tolerance for the analytic quantile.
const ANALYTIC_QUANTILE_TOL: f64 = 1e-8;
/// Pairwise penalty weights below this are dropped.
const PAIRWISE_WEIGHT_FLOOR: f64 = 1e-5;
/// Systems with condition number beyond this are rejected.
const MAX_CONDITION: f64 = 1e12;

/// Outcome of applying a policy to a candidate pool.
#[derive(Debug, Clone)]
pub struct PolicyDecision {
    /// Index of the selected candidate in the pool.
    pub selected_index: usize,
    /// Subgroup of the selected candidate.
    pub selected_subgroup: u8,
    /// Best ranking value within subgroup 0, if the pool contains it.
    pub r_hat_0: Option<f64>,
    /// Best ranking value within subgroup 1, if the pool contains it.
    pub r_hat_1: Option<f64>,
    /// Quantile threshold the subgroup comparison used, for thresholded
    /// policies on mixed pools.
    pub threshold: Option<f64>,
    /// Per-candidate ranking values the policy used.
    pub scores: Vec<f64>,
}

/// A conditional score distribution for one subgroup.
#[derive(Debug, Clone)]
pub enum ScoreLaw {
    /// Score is normal with the given mean and standard deviation
    /// (`sd = 0` degenerates to a point mass).
    Gaussian { mean: f64, sd: f64 },
    /// Score is drawn uniformly from a finite multiset of atoms.
    Finite { atoms: Vec<f64> },
}

impl ScoreLaw {
    pub fn gaussian(mean: f64, sd: f64) -> Result<Self> {
        if !mean.is_finite() || !sd.is_finite() || sd < 0.0 {
            return Err(Error::param("score law", "mean/sd must be finite, sd >= 0"));
        }
        Ok(ScoreLaw::Gaussian { mean, sd })
    }

    pub fn finite(mut atoms: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::param("score law", "finite law needs atoms"));
        }
        if atoms.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("score law", "atoms must be finite"));
        }
        atoms.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(ScoreLaw::Finite { atoms })
    }

    /// `P(score <= r)`.
    pub fn cdf(&self, r: f64) -> f64 {
        match self {
            ScoreLaw::Gaussian { mean, sd } => {
                if *sd == 0.0 {
                    if r >= *mean {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    // Parameters are validated at construction.
                    Normal::new(*mean, *sd).unwrap().cdf(r)
                }
            }
            ScoreLaw::Finite { atoms } => {
                atoms.partition_point(|&v| v <= r) as f64 / atoms.len() as f64
            }
        }
    }

    /// Maximum of `k` independent draws.
    pub fn sample_max(&self, k: usize, stream: &mut RngStream) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for _ in 0..k {
            let draw = match self {
                ScoreLaw::Gaussian { mean, sd } => mean + sd * stream.standard_normal(),
                ScoreLaw::Finite { atoms } => atoms[stream.index(atoms.len())],
            };
            best = best.max(draw);
        }
        best
    }
}

/// Known-model inputs for the ideal policy: the true coefficients (when they
/// exist) and the true conditional score law of each subgroup.
///
/// Models built from a finite population have no coefficient vector; their
/// performance standard is the recorded response, so callers must supply
/// candidate scores explicitly (see [`policy_ideal_fair_with_scores`]).
#[derive(Debug, Clone)]
pub struct IdealModel {
    pub beta: Option<DVector<f64>>,
    /// Conditional score laws, indexed by subgroup.
    pub laws: [ScoreLaw; 2],
}

impl IdealModel {
    pub fn new(beta: Option<DVector<f64>>, law0: ScoreLaw, law1: ScoreLaw) -> Self {
        IdealModel {
            beta,
            laws: [law0, law1],
        }
    }

    /// Exact score laws of a synthetic Gaussian process: the score
    /// `beta' X | Z=z` is normal with mean `beta' mu_z` and variance
    /// `beta' C_z beta`.
    pub fn from_synthetic(dgp: &DataGeneratingProcess) -> Result<Self> {
        let beta = dgp
            .beta()
            .ok_or_else(|| Error::param("dgp", "synthetic process required"))?
            .clone();
        let law0 = ScoreLaw::gaussian(dgp.score_mean(0).unwrap(), dgp.score_sd(0).unwrap())?;
        let law1 = ScoreLaw::gaussian(dgp.score_mean(1).unwrap(), dgp.score_sd(1).unwrap())?;
        Ok(IdealModel::new(Some(beta), law0, law1))
    }

    /// Exact score laws of a finite population, with the recorded response as
    /// the performance score.
    pub fn from_population(pop: &PopulationTable) -> Result<Self> {
        let mut atoms = [Vec::new(), Vec::new()];
        for (i, &z) in pop.z.iter().enumerate() {
            atoms[z as usize].push(pop.y[i]);
        }
        Ok(IdealModel::new(
            None,
            ScoreLaw::finite(std::mem::take(&mut atoms[0]))?,
            ScoreLaw::finite(std::mem::take(&mut atoms[1]))?,
        ))
    }

    /// True scores `beta' x` for a pool; requires the model to carry
    /// coefficients.
    pub fn scores_for(&self, pool: &CandidatePool) -> Result<Vec<f64>> {
        let beta = self.beta.as_ref().ok_or_else(|| {
            Error::param("model", "no coefficient vector; supply scores explicitly")
        })?;
        if beta.len() != pool.features.ncols() {
            return Err(Error::param("model", "coefficient dimension mismatch"));
        }
        Ok((&pool.features * beta).iter().copied().collect())
    }
}

/// How to compute the ideal quantile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IdealQuantileMethod {
    /// Numerical integration of the score-gap cdf on a grid, refined by
    /// bisection.  Requires Gaussian laws.
    AnalyticGrid,
    /// Exhaustive convolution over atoms.  Requires finite laws.
    ExactFinite,
    /// Monte Carlo sample quantile with the given sample count; the draw
    /// stream is derived from the given seed.
    MonteCarlo { samples: usize, seed: u64 },
}

/// The `K0/K`-quantile of the conditional law of `R(1) - R(0)`, where `R(z)`
/// is the best true score among the `K_z` subgroup-`z` candidates: the
/// smallest `q` with `P(R(1) - R(0) <= q) >= K0/K`.
pub fn ideal_quantile(
    model: &IdealModel,
    k0: usize,
    k1: usize,
    method: IdealQuantileMethod,
) -> Result<f64> {
    if k0 == 0 || k1 == 0 {
        return Err(Error::param("K0/K1", "both subgroup counts must be positive"));
    }
    let alpha = k0 as f64 / (k0 + k1) as f64;
    match method {
        IdealQuantileMethod::AnalyticGrid => analytic_quantile(model, k0, k1, alpha),
        IdealQuantileMethod::ExactFinite => finite_quantile(model, k0, k1, alpha),
        IdealQuantileMethod::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(Error::param("samples", "need at least one draw"));
            }
            let mut stream = RngStream::derive(seed, 0, Purpose::Simulation);
            let mut diffs: Vec<f64> = (0..samples)
                .map(|_| {
                    let r1 = model.laws[1].sample_max(k1, &mut stream);
                    let r0 = model.laws[0].sample_max(k0, &mut stream);
                    r1 - r0
                })
                .collect();
            diffs.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
            let pos = (k0 * samples).div_ceil(k0 + k1);
            Ok(diffs[pos - 1])
        }
    }
}

fn analytic_quantile(model: &IdealModel, k0: usize, k1: usize, alpha: f64) -> Result<f64> {
    let (m0, s0) = match model.laws[0] {
        ScoreLaw::Gaussian { mean, sd } => (mean, sd),
        ScoreLaw::Finite { .. } => {
            return Err(Error::param("method", "analytic grid requires Gaussian laws"))
        }
    };
    let (m1, s1) = match model.laws[1] {
        ScoreLaw::Gaussian { mean, sd } => (mean, sd),
        ScoreLaw::Finite { .. } => {
            return Err(Error::param("method", "analytic grid requires Gaussian laws"))
        }
    };

    // Degenerate subgroups have closed forms.
    if s0 == 0.0 && s1 == 0.0 {
        return Ok(m1 - m0);
    }
    if s1 == 0.0 {
        // P(m1 - R(0) <= t) = 1 - F0(m1 - t)^K0.
        let f0 = Normal::new(m0, s0).unwrap();
        let target = (1.0 - alpha).powf(1.0 / k0 as f64);
        return Ok(m1 - f0.inverse_cdf(target));
    }
    if s0 == 0.0 {
        // P(R(1) - m0 <= t) = F1(m0 + t)^K1.
        let f1 = Normal::new(m1, s1).unwrap();
        let target = alpha.powf(1.0 / k1 as f64);
        return Ok(f1.inverse_cdf(target) - m0);
    }

    let f0 = Normal::new(m0, s0).unwrap();
    let f1 = Normal::new(m1, s1).unwrap();
    let sd_max = s0.max(s1);
    let lo = m0.min(m1) - ANALYTIC_GRID_SPAN_SDS * sd_max;
    let hi = m0.max(m1) + ANALYTIC_GRID_SPAN_SDS * sd_max;
    let n = ANALYTIC_GRID_POINTS;
    let step = (hi - lo) / (n - 1) as f64;

    // Precompute grid values of the subgroup-0 max density
    // K0 * F0(u)^(K0-1) * f0(u); the gap cdf at t is then the trapezoid
    // integral of F1(u + t)^K1 against it.
    let us: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
    let w0: Vec<f64> = us
        .iter()
        .map(|&u| k0 as f64 * f0.cdf(u).powi(k0 as i32 - 1) * f0.pdf(u))
        .collect();
    let gap_cdf = |t: f64| -> f64 {
        let mut acc = 0.0;
        let mut prev = f1.cdf(us[0] + t).powi(k1 as i32) * w0[0];
        for i in 1..n {
            let cur = f1.cdf(us[i] + t).powi(k1 as i32) * w0[i];
            acc += 0.5 * (prev + cur) * step;
            prev = cur;
        }
        acc
    };

    let (mut t_lo, mut t_hi) = (lo - hi, hi - lo);
    if !(gap_cdf(t_lo) <= alpha && gap_cdf(t_hi) >= alpha) {
        return Err(Error::Numeric("gap cdf does not bracket the quantile".into()));
    }
    while t_hi - t_lo > ANALYTIC_QUANTILE_TOL {
        let mid = 0.5 * (t_lo + t_hi);
        if gap_cdf(mid) >= alpha {
            t_hi = mid;
        } else {
            t_lo = mid;
        }
    }
    let q = 0.5 * (t_lo + t_hi);
    if !q.is_finite() {
        return Err(Error::Numeric("analytic quantile overflowed".into()));
    }
    Ok(q)
}

fn finite_quantile(model: &IdealModel, k0: usize, k1: usize, alpha: f64) -> Result<f64> {
    let atoms = |z: usize| -> Result<&[f64]> {
        match &model.laws[z] {
            ScoreLaw::Finite { atoms } => Ok(atoms),
            ScoreLaw::Gaussian { .. } => {
                Err(Error::param("method", "exact finite requires finite laws"))
            }
        }
    };
    let a0 = atoms(0)?;
    let a1 = atoms(1)?;
    Ok(discrete_max_gap_quantile(a0, a1, k0, k1, alpha))
}

/// Quantile of `max(K1 draws from atoms1) - max(K0 draws from atoms0)` by
/// exhaustive convolution: every pair of distinct atoms contributes a gap
/// whose probability is the product of max-law point masses.
pub(crate) fn discrete_max_gap_quantile(
    atoms0: &[f64],
    atoms1: &[f64],
    k0: usize,
    k1: usize,
    alpha: f64,
) -> f64 {
    let max_law = |sorted: &[f64], k: usize| -> Vec<(f64, f64)> {
        let n = sorted.len() as f64;
        let mut out = Vec::new();
        let mut prev = 0.0;
        let mut count = 0usize;
        let mut i = 0;
        while i < sorted.len() {
            let v = sorted[i];
            while i < sorted.len() && sorted[i] == v {
                i += 1;
                count += 1;
            }
            let cum = (count as f64 / n).powi(k as i32);
            out.push((v, cum - prev));
            prev = cum;
        }
        out
    };
    let mut s0 = atoms0.to_vec();
    let mut s1 = atoms1.to_vec();
    s0.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    s1.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let law0 = max_law(&s0, k0);
    let law1 = max_law(&s1, k1);

    let mut gaps: Vec<(f64, f64)> = Vec::with_capacity(law0.len() * law1.len());
    for &(v1, p1) in &law1 {
        for &(v0, p0) in &law0 {
            gaps.push((v1 - v0, p1 * p0));
        }
    }
    gaps.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut cum = 0.0;
    for &(gap, p) in &gaps {
        cum += p;
        if cum >= alpha {
            return gap;
        }
    }
    gaps.last().map(|g| g.0).unwrap_or(f64::NAN)
}

fn argmax_lowest(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Best index and value among candidates of subgroup `z`.
fn subgroup_best(scores: &[f64], z: &[u8], target: u8) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (&s, &zi)) in scores.iter().zip(z.iter()).enumerate() {
        if zi == target && best.map_or(true, |(_, bv)| s > bv) {
            best = Some((i, s));
        }
    }
    best
}

fn decision_from_scores(scores: Vec<f64>, z: &[u8], selected: usize, threshold: Option<f64>) -> PolicyDecision {
    let r0 = subgroup_best(&scores, z, 0).map(|(_, v)| v);
    let r1 = subgroup_best(&scores, z, 1).map(|(_, v)| v);
    PolicyDecision {
        selected_index: selected,
        selected_subgroup: z[selected],
        r_hat_0: r0,
        r_hat_1: r1,
        threshold,
        scores,
    }
}

/// Unconstrained argmax of predicted performance (`arg max beta' x`): the
/// parity-of-treatment baseline.  Ties break to the lowest index.
pub fn policy_parity_of_treatment(
    coefficients: &DVector<f64>,
    pool: &CandidatePool,
) -> Result<PolicyDecision> {
    if coefficients.len() != pool.features.ncols() {
        return Err(Error::param("coefficients", "dimension mismatch with pool"));
    }
    let scores: Vec<f64> = (&pool.features * coefficients).iter().copied().collect();
    let selected = argmax_lowest(&scores);
    Ok(decision_from_scores(scores, &pool.z, selected, None))
}

/// Ranking by a penalized-regression coefficient vector; identical contract
/// to [`policy_parity_of_treatment`] with the penalized coefficients in place
/// of the OLS ones.
pub fn policy_penalized(theta: &DVector<f64>, pool: &CandidatePool) -> Result<PolicyDecision> {
    policy_parity_of_treatment(theta, pool)
}

fn percentile_rank_decision(
    raw_scores: Vec<f64>,
    percentiles: Vec<f64>,
    z: &[u8],
) -> PolicyDecision {
    let k0 = z.iter().filter(|&&v| v == 0).count();
    let k1 = z.len() - k0;
    let selected = if k0 == 0 || k1 == 0 {
        // One subgroup only: the percentile transform is monotone within a
        // subgroup, so rank by raw score; this also sidesteps spurious ties
        // on empirical-cdf plateaus.
        argmax_lowest(&raw_scores)
    } else {
        argmax_lowest(&percentiles)
    };
    decision_from_scores(percentiles, z, selected, None)
}

/// Ranking by within-subgroup percentile `U = F_Z(score)` under the true
/// model laws.  Fair, but not optimal: a high percentile in a short-tailed
/// subgroup can hide a weaker absolute score.
pub fn policy_fair_prediction_ideal(
    model: &IdealModel,
    pool: &CandidatePool,
) -> Result<PolicyDecision> {
    let raw = model.scores_for(pool)?;
    let percentiles: Vec<f64> = raw
        .iter()
        .zip(pool.z.iter())
        .map(|(&s, &z)| model.laws[z as usize].cdf(s))
        .collect();
    Ok(percentile_rank_decision(raw, percentiles, &pool.z))
}

/// Plug-in percentile ranking: `U = F^_Z(beta^' x)` with the empirical
/// subgroup cdfs of the fitted selector.
pub fn policy_fair_prediction_plugin(
    selector: &FittedSelector,
    pool: &CandidatePool,
) -> Result<PolicyDecision> {
    let raw = selector.scores_for(&pool.features);
    let cdf0 = selector.cdf(0);
    let cdf1 = selector.cdf(1);
    let percentiles: Vec<f64> = raw
        .iter()
        .zip(pool.z.iter())
        .map(|(&s, &z)| if z == 1 { cdf1.eval(s) } else { cdf0.eval(s) })
        .collect();
    Ok(percentile_rank_decision(raw, percentiles, &pool.z))
}

fn threshold_select(scores: &[f64], z: &[u8], threshold: f64) -> (usize, Option<f64>) {
    let best0 = subgroup_best(scores, z, 0);
    let best1 = subgroup_best(scores, z, 1);
    match (best0, best1) {
        (Some((i0, r0)), Some((i1, r1))) => {
            let pick1 = r1 - r0 >= threshold;
            (if pick1 { i1 } else { i0 }, Some(threshold))
        }
        (Some((i0, _)), None) => (i0, None),
        (None, Some((i1, _))) => (i1, None),
        (None, None) => unreachable!("pools are nonempty"),
    }
}

/// The ideal fair policy with candidate scores supplied by the caller
/// (needed when the model's performance standard is a recorded response
/// rather than `beta' x`).
pub fn policy_ideal_fair_with_scores(
    model: &IdealModel,
    pool: &CandidatePool,
    scores: Vec<f64>,
) -> Result<PolicyDecision> {
    if scores.len() != pool.len() {
        return Err(Error::param("scores", "length must equal pool size"));
    }
    let k0 = pool.subgroup_count(0);
    let k1 = pool.subgroup_count(1);
    if k0 == 0 || k1 == 0 {
        // Single-subgroup pool: the decision is the within-group argmax.
        let selected = argmax_lowest(&scores);
        return Ok(decision_from_scores(scores, &pool.z, selected, None));
    }
    let method = match (&model.laws[0], &model.laws[1]) {
        (ScoreLaw::Gaussian { .. }, ScoreLaw::Gaussian { .. }) => IdealQuantileMethod::AnalyticGrid,
        (ScoreLaw::Finite { .. }, ScoreLaw::Finite { .. }) => IdealQuantileMethod::ExactFinite,
        _ => {
            return Err(Error::param(
                "model",
                "mixed law kinds have no exact quantile method",
            ))
        }
    };
    let q = ideal_quantile(model, k0, k1, method)?;
    let (selected, threshold) = threshold_select(&scores, &pool.z, q);
    Ok(decision_from_scores(scores, &pool.z, selected, threshold))
}

/// The ideal fair policy: pick the subgroup-1 best when
/// `R(1) - R(0) >= q`, with `q` the exact `K0/K`-quantile of the conditional
/// gap law, otherwise the subgroup-0 best.  Among all policies whose
/// decision is independent of the attribute vector, this one maximizes
/// expected performance.
pub fn policy_ideal_fair(model: &IdealModel, pool: &CandidatePool) -> Result<PolicyDecision> {
    let scores = model.scores_for(pool)?;
    policy_ideal_fair_with_scores(model, pool, scores)
}

/// Ideal thresholds for every subgroup split of a fixed pool size, so studies
/// that apply the ideal policy to many pools compute each quantile once.
#[derive(Debug, Clone)]
pub struct ThresholdTable {
    k: usize,
    /// `qs[k1 - 1]` is the quantile for a pool with `k1` subgroup-1 members.
    qs: Vec<f64>,
}

impl ThresholdTable {
    /// Precompute `q(K0, K1)` for all mixed splits of a pool of size `k`,
    /// with the exact method matching the model's law family.
    pub fn build(model: &IdealModel, k: usize) -> Result<Self> {
        if k < 2 {
            return Ok(ThresholdTable { k, qs: Vec::new() });
        }
        let method = match (&model.laws[0], &model.laws[1]) {
            (ScoreLaw::Gaussian { .. }, ScoreLaw::Gaussian { .. }) => {
                IdealQuantileMethod::AnalyticGrid
            }
            (ScoreLaw::Finite { .. }, ScoreLaw::Finite { .. }) => IdealQuantileMethod::ExactFinite,
            _ => {
                return Err(Error::param(
                    "model",
                    "mixed law kinds have no exact quantile method",
                ))
            }
        };
        let qs = (1..k)
            .map(|k1| ideal_quantile(model, k - k1, k1, method))
            .collect::<Result<Vec<f64>>>()?;
        Ok(ThresholdTable { k, qs })
    }

    /// Threshold for a pool with `k1` subgroup-1 members.
    pub fn threshold(&self, k1: usize) -> Option<f64> {
        if k1 == 0 || k1 >= self.k {
            return None;
        }
        self.qs.get(k1 - 1).copied()
    }
}

/// The ideal fair policy with precomputed thresholds; scores are the true
/// performance values of the pool's candidates.
pub fn policy_ideal_fair_cached(
    table: &ThresholdTable,
    pool: &CandidatePool,
    scores: Vec<f64>,
) -> Result<PolicyDecision> {
    if scores.len() != pool.len() || pool.len() != table.k {
        return Err(Error::param("scores", "pool size must match the table"));
    }
    let k1 = pool.subgroup_count(1);
    match table.threshold(k1) {
        None => {
            let selected = argmax_lowest(&scores);
            Ok(decision_from_scores(scores, &pool.z, selected, None))
        }
        Some(q) => {
            let (selected, threshold) = threshold_select(&scores, &pool.z, q);
            Ok(decision_from_scores(scores, &pool.z, selected, threshold))
        }
    }
}

/// Quantile estimator used by the empirical fair policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantileMode {
    /// Exact frontier-walk computation.
    Exact,
    /// Bootstrap with the given number of resampling draws.
    Bootstrap { reps: usize },
}

/// The empirical fair policy: the ideal rule with OLS scores and the
/// estimated selection quantile plugged in.
///
/// `stream` is only consumed in bootstrap mode.
pub fn policy_empirical_fair(
    selector: &FittedSelector,
    pool: &CandidatePool,
    mode: QuantileMode,
    stream: Option<&mut RngStream>,
) -> Result<PolicyDecision> {
    let scores = selector.scores_for(&pool.features);
    let k0 = pool.subgroup_count(0);
    let k1 = pool.subgroup_count(1);
    if k0 == 0 || k1 == 0 {
        let selected = argmax_lowest(&scores);
        return Ok(decision_from_scores(scores, &pool.z, selected, None));
    }
    let q = match mode {
        QuantileMode::Exact => selector.exact_quantile(k0, k1)?,
        QuantileMode::Bootstrap { reps } => {
            let stream = stream
                .ok_or_else(|| Error::param("stream", "bootstrap mode needs an rng stream"))?;
            selector.bootstrap_quantile(k0, k1, reps, stream)?
        }
    };
    let (selected, threshold) = threshold_select(&scores, &pool.z, q);
    Ok(decision_from_scores(scores, &pool.z, selected, threshold))
}

/// Which fairness penalty a penalized regression uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Penalty {
    /// Similarity-weighted pairwise score-gap penalty across subgroups:
    /// `sum w(y_m, y_m') (theta'(x_m - x_m'))^2 / (n1 n0)` with
    /// `w(y, y') = exp(-(y - y')^2)`, weights below 1e-5 dropped.
    PairwiseWeighted,
    /// Squared gap between subgroup mean residuals.
    GroupMeanResidual,
}

impl Penalty {
    pub fn id(self) -> &'static str {
        match self {
            Penalty::PairwiseWeighted => "pairwise_weighted",
            Penalty::GroupMeanResidual => "group_mean_residual",
        }
    }
}

/// Precomputed pieces of the penalized least-squares problem, so a sweep over
/// the tradeoff parameter only re-solves a `p x p` system per point.
#[derive(Debug, Clone)]
pub struct PenalizedFitter {
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
    /// Pairwise penalty quadratic form.
    pairwise: DMatrix<f64>,
    /// Subgroup feature-mean gap.
    mean_gap_x: DVector<f64>,
    /// Subgroup response-mean gap.
    mean_gap_y: f64,
}

impl PenalizedFitter {
    pub fn new(history: &HistoryDataset) -> Result<Self> {
        let (n, p) = (history.len(), history.dim());
        if history.n0 == 0 {
            return Err(Error::MissingSubgroup { z: 0 });
        }
        if history.n1 == 0 {
            return Err(Error::MissingSubgroup { z: 1 });
        }
        if n < p {
            return Err(Error::SingularDesign { cond: f64::INFINITY });
        }
        let x = &history.features;
        let xtx = x.transpose() * x;
        let xty = x.transpose() * &history.y;

        let idx0: Vec<usize> = (0..n).filter(|&m| history.z[m] == 0).collect();
        let idx1: Vec<usize> = (0..n).filter(|&m| history.z[m] == 1).collect();

        let mut pairwise = DMatrix::zeros(p, p);
        let mut diff = DVector::zeros(p);
        for &m1 in &idx1 {
            for &m0 in &idx0 {
                let w = (-(history.y[m1] - history.y[m0]).powi(2)).exp();
                if w < PAIRWISE_WEIGHT_FLOOR {
                    continue;
                }
                for j in 0..p {
                    diff[j] = x[(m1, j)] - x[(m0, j)];
                }
                pairwise.syger(w, &diff, &diff, 1.0);
            }
        }
        // syger fills one triangle; symmetrize.
        pairwise.fill_upper_triangle_with_lower_triangle();
        pairwise /= (idx0.len() * idx1.len()) as f64;

        let mean_of = |idx: &[usize]| -> (DVector<f64>, f64) {
            let mut mx = DVector::zeros(p);
            let mut my = 0.0;
            for &m in idx {
                mx += x.row(m).transpose();
                my += history.y[m];
            }
            (mx / idx.len() as f64, my / idx.len() as f64)
        };
        let (mx1, my1) = mean_of(&idx1);
        let (mx0, my0) = mean_of(&idx0);

        Ok(PenalizedFitter {
            xtx,
            xty,
            pairwise,
            mean_gap_x: mx1 - mx0,
            mean_gap_y: my1 - my0,
        })
    }

    /// Minimize `|Y - X theta|^2 + lambda * L(theta)`.  Both penalties are
    /// quadratic in `theta`, so the minimizer solves one linear system.
    pub fn fit(&self, penalty: Penalty, lambda: f64) -> Result<DVector<f64>> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::param("lambda", "must be finite and nonnegative"));
        }
        let (system, rhs) = match penalty {
            Penalty::PairwiseWeighted => (&self.xtx + &self.pairwise * lambda, self.xty.clone()),
            Penalty::GroupMeanResidual => {
                let c = &self.mean_gap_x;
                (
                    &self.xtx + (c * c.transpose()) * lambda,
                    &self.xty + c * (lambda * self.mean_gap_y),
                )
            }
        };
        solve_checked(system, &rhs)
    }

    /// The pairwise penalty quadratic form (symmetric positive semidefinite).
    pub fn pairwise_matrix(&self) -> &DMatrix<f64> {
        &self.pairwise
    }

    /// Subgroup mean gaps `(mean1 X - mean0 X, mean1 Y - mean0 Y)`.
    pub fn mean_gaps(&self) -> (&DVector<f64>, f64) {
        (&self.mean_gap_x, self.mean_gap_y)
    }
}

/// One-shot penalized fit; see [`PenalizedFitter`] for sweeps.
pub fn penalized_fit(
    history: &HistoryDataset,
    penalty: Penalty,
    lambda: f64,
) -> Result<DVector<f64>> {
    PenalizedFitter::new(history)?.fit(penalty, lambda)
}

fn solve_checked(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !cond.is_finite() || cond > MAX_CONDITION {
        return Err(Error::SingularDesign { cond });
    }
    svd.solve(b, 0.0).map_err(|e| Error::Numeric(e.to_string()))
}

/// OLS coefficients for a pool-ranking baseline; kept here so callers do not
/// need the estimation module for the unconstrained policy.
pub fn fit_parity_coefficients(history: &HistoryDataset) -> Result<DVector<f64>> {
    ols_fit(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Purpose;

    fn pool_1d(scores: &[f64], z: &[u8]) -> CandidatePool {
        CandidatePool::new(
            DMatrix::from_iterator(scores.len(), 1, scores.iter().copied()),
            z.to_vec(),
        )
        .unwrap()
    }

    fn unit_beta() -> DVector<f64> {
        DVector::from_row_slice(&[1.0])
    }

    #[test]
    fn parity_selects_argmax() {
        let pool = pool_1d(&[3.0, 1.0, 2.0], &[0, 1, 0]);
        let d = policy_parity_of_treatment(&unit_beta(), &pool).unwrap();
        assert_eq!(d.selected_index, 0);
        assert_eq!(d.selected_subgroup, 0);
        assert!(d.threshold.is_none());
        assert_eq!(d.r_hat_1, Some(1.0));
    }

    #[test]
    fn parity_breaks_ties_low() {
        let pool = pool_1d(&[2.0, 2.0], &[1, 0]);
        let d = policy_parity_of_treatment(&unit_beta(), &pool).unwrap();
        assert_eq!(d.selected_index, 0);
    }

    #[test]
    fn parity_matches_scan_oracle() {
        let mut stream = RngStream::derive(15, 0, Purpose::Simulation);
        for _ in 0..50 {
            let scores: Vec<f64> = (0..10).map(|_| stream.standard_normal()).collect();
            let z: Vec<u8> = (0..10).map(|_| u8::from(stream.bernoulli(0.4))).collect();
            let pool = pool_1d(&scores, &z);
            let d = policy_parity_of_treatment(&unit_beta(), &pool).unwrap();
            let mut best = 0;
            for i in 1..scores.len() {
                if scores[i] > scores[best] {
                    best = i;
                }
            }
            assert_eq!(d.selected_index, best);
        }
    }

    #[test]
    fn penalized_zero_vector_ties_to_index_zero() {
        let pool = pool_1d(&[5.0, -1.0, 3.0], &[0, 1, 1]);
        let theta = DVector::from_row_slice(&[0.0]);
        let d = policy_penalized(&theta, &pool).unwrap();
        assert_eq!(d.selected_index, 0);
    }

    #[test]
    fn scale_invariance_of_argmax_policies() {
        let mut stream = RngStream::derive(23, 0, Purpose::Simulation);
        for _ in 0..50 {
            let scores: Vec<f64> = (0..8).map(|_| stream.standard_normal()).collect();
            let z: Vec<u8> = (0..8).map(|_| u8::from(stream.bernoulli(0.5))).collect();
            let pool = pool_1d(&scores, &z);
            let c = 0.1 + 10.0 * stream.uniform();
            let a = policy_parity_of_treatment(&unit_beta(), &pool).unwrap();
            let b = policy_parity_of_treatment(&(unit_beta() * c), &pool).unwrap();
            assert_eq!(a.selected_index, b.selected_index);
        }
    }

    #[test]
    fn ideal_quantile_symmetric_laws_is_zero() {
        let law = ScoreLaw::gaussian(0.0, 1.0).unwrap();
        let model = IdealModel::new(Some(unit_beta()), law.clone(), law);
        for (k0, k1) in [(1, 1), (2, 2), (3, 3)] {
            let q = ideal_quantile(&model, k0, k1, IdealQuantileMethod::AnalyticGrid).unwrap();
            assert!(q.abs() < 1e-6, "k0={k0}: q={q}");
        }
    }

    #[test]
    fn ideal_quantile_point_masses() {
        let model = IdealModel::new(
            Some(unit_beta()),
            ScoreLaw::gaussian(0.5, 0.0).unwrap(),
            ScoreLaw::gaussian(2.0, 0.0).unwrap(),
        );
        let q = ideal_quantile(&model, 2, 3, IdealQuantileMethod::AnalyticGrid).unwrap();
        assert_eq!(q, 1.5);
    }

    #[test]
    fn ideal_quantile_counterexample_laws_is_zero() {
        // Symmetric discretizations of U[3/8, 5/8] and U[0, 1] chosen so the
        // gap law has an atom at zero: both gap-symmetric, so the median of
        // the difference is exactly zero.
        let atoms1: Vec<f64> = (1..=16).map(|i| (2 * i - 1) as f64 / 32.0).collect();
        let atoms0: Vec<f64> = vec![13.0 / 32.0, 15.0 / 32.0, 17.0 / 32.0, 19.0 / 32.0];
        let model = IdealModel::new(
            None,
            ScoreLaw::finite(atoms0).unwrap(),
            ScoreLaw::finite(atoms1).unwrap(),
        );
        let q = ideal_quantile(&model, 1, 1, IdealQuantileMethod::ExactFinite).unwrap();
        assert_eq!(q, 0.0);
    }

    #[test]
    fn monte_carlo_quantile_near_exact() {
        let atoms0 = vec![0.0, 0.5, 1.0];
        let atoms1 = vec![0.2, 0.9];
        let model = IdealModel::new(
            None,
            ScoreLaw::finite(atoms0).unwrap(),
            ScoreLaw::finite(atoms1).unwrap(),
        );
        let exact = ideal_quantile(&model, 2, 1, IdealQuantileMethod::ExactFinite).unwrap();
        let mc = ideal_quantile(
            &model,
            2,
            1,
            IdealQuantileMethod::MonteCarlo {
                samples: 200_000,
                seed: 5,
            },
        )
        .unwrap();
        // Discrete support: at this sample count the MC quantile should hit
        // the exact atom.
        assert_eq!(mc, exact);
    }

    #[test]
    fn ideal_fair_single_subgroup_argmax() {
        let model = IdealModel::new(
            Some(unit_beta()),
            ScoreLaw::gaussian(0.0, 1.0).unwrap(),
            ScoreLaw::gaussian(0.0, 0.5).unwrap(),
        );
        let pool = pool_1d(&[1.0, 5.0, 3.0], &[1, 1, 1]);
        let d = policy_ideal_fair(&model, &pool).unwrap();
        assert_eq!(d.selected_index, 1);
        assert!(d.threshold.is_none());
    }

    #[test]
    fn ideal_fair_equal_laws_matches_parity() {
        let law = ScoreLaw::gaussian(0.0, 1.0).unwrap();
        let model = IdealModel::new(Some(unit_beta()), law.clone(), law);
        let mut stream = RngStream::derive(44, 0, Purpose::Simulation);
        for _ in 0..40 {
            let scores: Vec<f64> = (0..6).map(|_| stream.standard_normal()).collect();
            let z = vec![0, 1, 0, 1, 0, 1];
            let pool = pool_1d(&scores, &z);
            let ideal = policy_ideal_fair(&model, &pool).unwrap();
            let parity = policy_parity_of_treatment(&unit_beta(), &pool).unwrap();
            // q = 0 for equal laws and balanced pools, so the decisions agree
            // outside ties (measure zero here).
            assert_eq!(ideal.selected_index, parity.selected_index);
        }
    }

    #[test]
    fn fair_prediction_single_subgroup_matches_parity() {
        let model = IdealModel::new(
            Some(unit_beta()),
            ScoreLaw::gaussian(0.0, 2.0).unwrap(),
            ScoreLaw::gaussian(0.0, 1.0).unwrap(),
        );
        let pool = pool_1d(&[0.3, 0.9, -0.4], &[0, 0, 0]);
        let fair = policy_fair_prediction_ideal(&model, &pool).unwrap();
        let parity = policy_parity_of_treatment(&unit_beta(), &pool).unwrap();
        assert_eq!(fair.selected_index, parity.selected_index);
        // Percentile values are recorded as the ranking scores.
        assert!(fair.scores.iter().all(|&u| (0.0..=1.0).contains(&u)));
    }

    #[test]
    fn fair_prediction_percentiles_match_counting_oracle() {
        let atoms0 = vec![0.0, 1.0, 2.0, 3.0];
        let atoms1 = vec![-1.0, 4.0];
        let model = IdealModel::new(
            Some(unit_beta()),
            ScoreLaw::finite(atoms0.clone()).unwrap(),
            ScoreLaw::finite(atoms1.clone()).unwrap(),
        );
        let pool = pool_1d(&[1.5, 0.2], &[0, 1]);
        let d = policy_fair_prediction_ideal(&model, &pool).unwrap();
        let u0 = atoms0.iter().filter(|&&v| v <= 1.5).count() as f64 / atoms0.len() as f64;
        let u1 = atoms1.iter().filter(|&&v| v <= 0.2).count() as f64 / atoms1.len() as f64;
        assert_eq!(d.scores, vec![u0, u1]);
        assert_eq!(d.selected_index, usize::from(u1 > u0));
    }

    #[test]
    fn empirical_fair_single_subgroup() {
        let sel = FittedSelector::from_scores(unit_beta(), vec![0.0], vec![1.0]).unwrap();
        let pool = pool_1d(&[0.2, 0.9], &[0, 0]);
        let d = policy_empirical_fair(&sel, &pool, QuantileMode::Exact, None).unwrap();
        assert_eq!(d.selected_index, 1);
        assert!(d.threshold.is_none());
    }

    #[test]
    fn empirical_fair_point_mass_threshold() {
        let sel =
            FittedSelector::from_scores(unit_beta(), vec![0.5, 0.5], vec![2.0, 2.0, 2.0]).unwrap();
        // q = 1.5 exactly; subgroup 1 wins iff its best minus group-0 best
        // reaches 1.5.
        let pool = pool_1d(&[0.4, 1.9], &[0, 1]);
        let d = policy_empirical_fair(&sel, &pool, QuantileMode::Exact, None).unwrap();
        assert_eq!(d.threshold, Some(1.5));
        assert_eq!(d.selected_subgroup, 1);

        let pool = pool_1d(&[0.5, 1.9], &[0, 1]);
        let d = policy_empirical_fair(&sel, &pool, QuantileMode::Exact, None).unwrap();
        assert_eq!(d.selected_subgroup, 0);
    }

    #[test]
    fn empirical_fair_threshold_invariant() {
        let mut stream = RngStream::derive(61, 0, Purpose::Simulation);
        for _ in 0..30 {
            let s0: Vec<f64> = (0..6).map(|_| stream.standard_normal()).collect();
            let s1: Vec<f64> = (0..5).map(|_| stream.standard_normal()).collect();
            let sel = FittedSelector::from_scores(unit_beta(), s0, s1).unwrap();
            let scores: Vec<f64> = (0..5).map(|_| stream.standard_normal()).collect();
            let z = vec![0, 1, 1, 0, 1];
            let pool = pool_1d(&scores, &z);
            let d = policy_empirical_fair(&sel, &pool, QuantileMode::Exact, None).unwrap();
            let q = d.threshold.unwrap();
            let gap = d.r_hat_1.unwrap() - d.r_hat_0.unwrap();
            assert_eq!(d.selected_subgroup == 1, gap >= q);
        }
    }

    #[test]
    fn penalized_lambda_zero_is_ols() {
        let mut stream = RngStream::derive(71, 0, Purpose::Simulation);
        let x = DMatrix::from_fn(30, 3, |_, _| stream.standard_normal());
        let y = DVector::from_fn(30, |_, _| stream.standard_normal());
        let z: Vec<u8> = (0..30).map(|m| u8::from(m % 3 == 0)).collect();
        let h = HistoryDataset::new(x, z, y).unwrap();
        let ols = ols_fit(&h).unwrap();
        for penalty in [Penalty::PairwiseWeighted, Penalty::GroupMeanResidual] {
            let theta = penalized_fit(&h, penalty, 0.0).unwrap();
            assert!((&theta - &ols).amax() < 1e-10, "{penalty:?}");
        }
    }

    #[test]
    fn group_mean_penalty_inactive_when_means_equal() {
        // Mirrored subgroups: identical feature means, so the penalty term is
        // constant in theta and every lambda returns OLS.
        let mut stream = RngStream::derive(72, 0, Purpose::Simulation);
        let half = 12;
        let base = DMatrix::from_fn(half, 2, |_, _| stream.standard_normal());
        let mut x = DMatrix::zeros(2 * half, 2);
        let mut z = Vec::new();
        for m in 0..half {
            x.row_mut(2 * m).copy_from(&base.row(m));
            x.row_mut(2 * m + 1).copy_from(&base.row(m));
            z.push(0);
            z.push(1);
        }
        let y = DVector::from_fn(2 * half, |_, _| stream.standard_normal());
        let h = HistoryDataset::new(x, z, y).unwrap();
        let ols = ols_fit(&h).unwrap();
        for lambda in [0.1, 1.0, 100.0, 1e4] {
            let theta = penalized_fit(&h, Penalty::GroupMeanResidual, lambda).unwrap();
            assert!((&theta - &ols).amax() < 1e-8, "lambda={lambda}");
        }
    }

    #[test]
    fn penalized_gradient_vanishes_fd_oracle() {
        // Finite-difference gradient of the full objective at the returned
        // minimizer, both penalties, random instances.
        let mut stream = RngStream::derive(73, 0, Purpose::Simulation);
        for case in 0..10 {
            let (n, p) = (30, 3);
            let x = DMatrix::from_fn(n, p, |_, _| stream.standard_normal());
            let y = DVector::from_fn(n, |_, _| stream.standard_normal());
            let z: Vec<u8> = (0..n).map(|_| u8::from(stream.bernoulli(0.4))).collect();
            if !z.contains(&0) || !z.contains(&1) {
                continue;
            }
            let h = HistoryDataset::new(x, z, y).unwrap();
            for penalty in [Penalty::PairwiseWeighted, Penalty::GroupMeanResidual] {
                let theta = penalized_fit(&h, penalty, 1.0).unwrap();
                let grad = fd_gradient(&h, penalty, 1.0, &theta);
                assert!(
                    grad.norm() < 1e-6,
                    "case {case} {penalty:?}: |grad| = {}",
                    grad.norm()
                );
            }
        }
    }

    #[test]
    fn penalized_matches_descent_oracle() {
        // Exact-line-search gradient descent on the quadratic objective.
        let mut stream = RngStream::derive(74, 0, Purpose::Simulation);
        let (n, p) = (30, 3);
        let x = DMatrix::from_fn(n, p, |_, _| stream.standard_normal());
        let y = DVector::from_fn(n, |_, _| stream.standard_normal());
        let z: Vec<u8> = (0..n).map(|m| u8::from(m % 2 == 0)).collect();
        let h = HistoryDataset::new(x, z, y).unwrap();
        for penalty in [Penalty::PairwiseWeighted, Penalty::GroupMeanResidual] {
            let theta = penalized_fit(&h, penalty, 1.0).unwrap();
            let mut cur = DVector::zeros(p);
            for _ in 0..20_000 {
                let g = fd_gradient(&h, penalty, 1.0, &cur);
                if g.norm() < 1e-9 {
                    break;
                }
                // Quadratic objective: optimal step = |g|^2 / (g' H g), with
                // the Hessian action estimated by differencing the gradient.
                let hg = (fd_gradient(&h, penalty, 1.0, &(&cur + &g * 1e-4)) - &g) / 1e-4;
                let denom = g.dot(&hg);
                if denom <= 0.0 {
                    break;
                }
                let step = g.norm_squared() / denom;
                cur -= g * step;
            }
            assert!((&cur - &theta).amax() < 1e-5, "{penalty:?}");
        }
    }

    fn objective(h: &HistoryDataset, penalty: Penalty, lambda: f64, theta: &DVector<f64>) -> f64 {
        let resid = &h.y - &h.features * theta;
        let loss = resid.norm_squared();
        let pen = match penalty {
            Penalty::PairwiseWeighted => {
                let mut acc = 0.0;
                for m1 in 0..h.len() {
                    if h.z[m1] != 1 {
                        continue;
                    }
                    for m0 in 0..h.len() {
                        if h.z[m0] != 0 {
                            continue;
                        }
                        let w = (-(h.y[m1] - h.y[m0]).powi(2)).exp();
                        if w < PAIRWISE_WEIGHT_FLOOR {
                            continue;
                        }
                        let gap = (h.features.row(m1) - h.features.row(m0)).transpose();
                        acc += w * theta.dot(&gap).powi(2);
                    }
                }
                acc / (h.n0 * h.n1) as f64
            }
            Penalty::GroupMeanResidual => {
                let mean_resid = |zv: u8| {
                    let mut acc = 0.0;
                    let mut cnt = 0;
                    for m in 0..h.len() {
                        if h.z[m] == zv {
                            acc += h.y[m] - h.features.row(m).transpose().dot(theta);
                            cnt += 1;
                        }
                    }
                    acc / cnt as f64
                };
                (mean_resid(1) - mean_resid(0)).powi(2)
            }
        };
        loss + lambda * pen
    }

    fn fd_gradient(
        h: &HistoryDataset,
        penalty: Penalty,
        lambda: f64,
        theta: &DVector<f64>,
    ) -> DVector<f64> {
        let eps = 1e-6;
        DVector::from_fn(theta.len(), |j, _| {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[j] += eps;
            dn[j] -= eps;
            (objective(h, penalty, lambda, &up) - objective(h, penalty, lambda, &dn)) / (2.0 * eps)
        })
    }

    #[test]
    fn pairwise_matrix_is_psd() {
        let mut stream = RngStream::derive(75, 0, Purpose::Simulation);
        let (n, p) = (20, 4);
        let x = DMatrix::from_fn(n, p, |_, _| stream.standard_normal());
        let y = DVector::from_fn(n, |_, _| stream.standard_normal());
        let z: Vec<u8> = (0..n).map(|m| u8::from(m % 2 == 0)).collect();
        let h = HistoryDataset::new(x, z, y).unwrap();
        let fitter = PenalizedFitter::new(&h).unwrap();
        let m = fitter.pairwise_matrix().clone();
        assert!((&m - m.transpose()).amax() < 1e-12);
        let eig = m.symmetric_eigenvalues();
        assert!(eig.min() >= -1e-10, "min eigenvalue {}", eig.min());
    }
}

//! Macro-replication studies and their CSV outputs.
//!
//! One macro-replication draws a history, fits each policy's estimator,
//! draws an independent candidate pool, and records the selected candidate's
//! true payoff and subgroup.  Replications use streams derived from
//! `(seed, replication, purpose)`, and results are reduced in replication
//! order, so a study's output is byte-identical across runs and thread
//! counts.
//!
//! Four study designs are provided: performance/parity curves over the
//! training sample size, a tradeoff-parameter sweep for the penalized
//! benchmarks, a deviation-rate estimate for the empirical policy against
//! the ideal one, and an extreme-value exclusion study for the unconstrained
//! argmax policy.  A fifth routine replays the two-candidate counterexample
//! separating percentile ranking from the optimal fair rule.

use std::io::Write;

use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::Error;
use crate::estimation::FittedSelector;
use crate::model::{sample_history, sample_scored_pool, DataGeneratingProcess};
use crate::policies::{
    policy_empirical_fair, policy_fair_prediction_plugin, policy_ideal_fair_cached,
    policy_parity_of_treatment, IdealModel, Penalty, PenalizedFitter, PolicyDecision,
    QuantileMode, ThresholdTable,
};
use crate::rng::{Purpose, RngStream};
use crate::Result;

/// Fraction of replications allowed to fail (e.g. singular designs at tiny
/// sample sizes) before a study aborts.
const FAILURE_BUDGET: f64 = 0.01;

/// A policy as named in an experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    /// Unconstrained argmax of fitted scores.
    ParityOfTreatment,
    /// Empirical fair policy (OLS + estimated selection quantile).
    EmpiricalFair,
    /// Plug-in within-subgroup percentile ranking.
    FairPredictionPlugin,
    /// Ideal fair policy with the true model (synthetic or finite-population
    /// processes only).
    IdealFair,
    /// Penalized-regression benchmark at a fixed tradeoff parameter.
    Penalized { penalty: Penalty, lambda: f64 },
}

impl PolicySpec {
    /// Stable identifier used in CSV output.
    pub fn id(&self) -> String {
        match self {
            PolicySpec::ParityOfTreatment => "pi_max".into(),
            PolicySpec::EmpiricalFair => "pi_hat".into(),
            PolicySpec::FairPredictionPlugin => "pi_u".into(),
            PolicySpec::IdealFair => "pi_star".into(),
            PolicySpec::Penalized { penalty, lambda } => {
                format!("{}:{}", penalty.id(), format_sig(*lambda))
            }
        }
    }
}

/// Configuration of a selection experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dgp: DataGeneratingProcess,
    /// Pool size per decision.
    pub k: usize,
    /// Training sample sizes, strictly increasing; the history drawn per
    /// replication has the largest size and each point sees a prefix.
    pub schedule: Vec<usize>,
    pub macro_reps: usize,
    pub policies: Vec<PolicySpec>,
    pub quantile_mode: QuantileMode,
    pub seed: u64,
}

impl ExperimentConfig {
    fn validate(&self) -> Result<()> {
        if self.schedule.is_empty() {
            return Err(Error::param("schedule", "needs at least one sample size"));
        }
        if self.schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("schedule", "must be strictly increasing"));
        }
        if self.schedule[0] == 0 {
            return Err(Error::param("schedule", "sample sizes must be positive"));
        }
        if self.macro_reps == 0 {
            return Err(Error::param("reps", "needs at least one replication"));
        }
        if self.k == 0 {
            return Err(Error::param("K", "pool size must be positive"));
        }
        if self.policies.is_empty() {
            return Err(Error::param("policies", "needs at least one policy"));
        }
        Ok(())
    }
}

/// Aggregated metrics for one policy at one training size.
#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub policy: String,
    pub m: usize,
    /// Estimate of the expected true payoff of the selected candidate.
    pub mean_performance: f64,
    pub se_performance: f64,
    /// Estimate of the probability of selecting a subgroup-1 candidate.
    pub parity: f64,
    pub se_parity: f64,
    pub replications: usize,
}

struct CellOutcome {
    performance: f64,
    minority: bool,
}

/// Ideal-policy thresholds precomputed once per study.
fn ideal_thresholds(dgp: &DataGeneratingProcess, k: usize) -> Result<ThresholdTable> {
    let model = match dgp.population() {
        Some(pop) => IdealModel::from_population(pop)?,
        None => IdealModel::from_synthetic(dgp)?,
    };
    ThresholdTable::build(&model, k)
}

/// Run one macro-replication of the selection experiment: returns outcomes
/// for every `(schedule point, policy)` cell, in that order.
fn run_replication(
    config: &ExperimentConfig,
    ideal: Option<&ThresholdTable>,
    rep: u64,
) -> Result<Vec<CellOutcome>> {
    let n = *config.schedule.last().unwrap();
    let mut history_stream = RngStream::derive(config.seed, rep, Purpose::History);
    let history = sample_history(&config.dgp, n, &mut history_stream)?;

    let needs_selector = config.policies.iter().any(|p| {
        matches!(
            p,
            PolicySpec::EmpiricalFair | PolicySpec::FairPredictionPlugin
        )
    });
    let needs_parity = config
        .policies
        .iter()
        .any(|p| matches!(p, PolicySpec::ParityOfTreatment));
    let needs_penalized = config
        .policies
        .iter()
        .any(|p| matches!(p, PolicySpec::Penalized { .. }));

    let mut outcomes = Vec::with_capacity(config.schedule.len() * config.policies.len());
    for (mi, &m) in config.schedule.iter().enumerate() {
        let prefix = if m == n { history.clone() } else { history.prefix(m)? };

        let selector = if needs_selector {
            Some(FittedSelector::fit(&prefix)?)
        } else {
            None
        };
        let parity_beta = if needs_parity {
            Some(match &selector {
                Some(s) => s.beta_hat.clone(),
                None => crate::estimation::ols_fit(&prefix)?,
            })
        } else {
            None
        };
        let pen_fitter = if needs_penalized {
            Some(PenalizedFitter::new(&prefix)?)
        } else {
            None
        };

        let mut pool_stream = RngStream::derive_sub(config.seed, rep, Purpose::Pool, mi as u64);
        let (pool, payoffs) = sample_scored_pool(&config.dgp, config.k, &mut pool_stream)?;

        for policy in &config.policies {
            let decision: PolicyDecision = match policy {
                PolicySpec::ParityOfTreatment => {
                    policy_parity_of_treatment(parity_beta.as_ref().unwrap(), &pool)?
                }
                PolicySpec::EmpiricalFair => {
                    let mut boot_stream =
                        RngStream::derive_sub(config.seed, rep, Purpose::Bootstrap, mi as u64);
                    policy_empirical_fair(
                        selector.as_ref().unwrap(),
                        &pool,
                        config.quantile_mode,
                        Some(&mut boot_stream),
                    )?
                }
                PolicySpec::FairPredictionPlugin => {
                    policy_fair_prediction_plugin(selector.as_ref().unwrap(), &pool)?
                }
                PolicySpec::IdealFair => {
                    let table = ideal.ok_or_else(|| {
                        Error::Experiment("ideal policy requested but model unavailable".into())
                    })?;
                    policy_ideal_fair_cached(table, &pool, payoffs.clone())?
                }
                PolicySpec::Penalized { penalty, lambda } => {
                    let theta = pen_fitter.as_ref().unwrap().fit(*penalty, *lambda)?;
                    policy_parity_of_treatment(&theta, &pool)?
                }
            };
            outcomes.push(CellOutcome {
                performance: payoffs[decision.selected_index],
                minority: decision.selected_subgroup == 1,
            });
        }
    }
    Ok(outcomes)
}

fn aggregate_cells(
    per_rep: &[Vec<CellOutcome>],
    cell: usize,
) -> (f64, f64, f64, f64) {
    let r = per_rep.len();
    let mut sum = 0.0;
    let mut minority = 0usize;
    for rep in per_rep {
        sum += rep[cell].performance;
        minority += usize::from(rep[cell].minority);
    }
    let mean = sum / r as f64;
    let mut ss = 0.0;
    for rep in per_rep {
        ss += (rep[cell].performance - mean).powi(2);
    }
    let se_perf = if r > 1 {
        (ss / (r - 1) as f64).sqrt() / (r as f64).sqrt()
    } else {
        0.0
    };
    let parity = minority as f64 / r as f64;
    let se_parity = (parity * (1.0 - parity) / r as f64).sqrt();
    (mean, se_perf, parity, se_parity)
}

fn check_failure_budget(total: usize, failures: usize) -> Result<()> {
    if failures as f64 > FAILURE_BUDGET * total as f64 {
        return Err(Error::Experiment(format!(
            "{failures} of {total} replications failed (budget {:.0}%)",
            FAILURE_BUDGET * 100.0
        )));
    }
    Ok(())
}

/// Performance/parity curves: every policy evaluated at every training size,
/// averaged over macro-replications.
pub fn run_selection_experiment(config: &ExperimentConfig) -> Result<Vec<MetricsRow>> {
    config.validate()?;
    let ideal = if config.policies.contains(&PolicySpec::IdealFair) {
        Some(ideal_thresholds(&config.dgp, config.k)?)
    } else {
        None
    };

    let results: Vec<Result<Vec<CellOutcome>>> = (0..config.macro_reps as u64)
        .into_par_iter()
        .map(|rep| run_replication(config, ideal.as_ref(), rep))
        .collect();

    let mut successes = Vec::with_capacity(results.len());
    let mut failures = 0usize;
    for r in results {
        match r {
            Ok(v) => successes.push(v),
            Err(_) => failures += 1,
        }
    }
    check_failure_budget(config.macro_reps, failures)?;
    if successes.is_empty() {
        return Err(Error::Experiment("no successful replications".into()));
    }

    let mut rows = Vec::new();
    for (mi, &m) in config.schedule.iter().enumerate() {
        for (pi, policy) in config.policies.iter().enumerate() {
            let cell = mi * config.policies.len() + pi;
            let (mean, se_perf, parity, se_parity) = aggregate_cells(&successes, cell);
            rows.push(MetricsRow {
                policy: policy.id(),
                m,
                mean_performance: mean,
                se_performance: se_perf,
                parity,
                se_parity,
                replications: successes.len(),
            });
        }
    }
    Ok(rows)
}

/// One row of the tradeoff-parameter sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub penalty: String,
    pub lambda: f64,
    pub performance: f64,
    pub parity: f64,
}

/// Penalized benchmarks at full sample size over a grid of tradeoff
/// parameters.  The penalty's quadratic form is assembled once per
/// replication and re-solved per grid point.
pub fn run_lambda_sweep(
    config: &ExperimentConfig,
    penalty: Penalty,
    lambdas: &[f64],
) -> Result<Vec<SweepRow>> {
    config.validate()?;
    if lambdas.is_empty() {
        return Err(Error::param("lambdas", "needs at least one value"));
    }
    let n = *config.schedule.last().unwrap();

    let results: Vec<Result<Vec<CellOutcome>>> = (0..config.macro_reps as u64)
        .into_par_iter()
        .map(|rep| -> Result<Vec<CellOutcome>> {
            let mut history_stream = RngStream::derive(config.seed, rep, Purpose::History);
            let history = sample_history(&config.dgp, n, &mut history_stream)?;
            let fitter = PenalizedFitter::new(&history)?;
            let mut pool_stream = RngStream::derive_sub(config.seed, rep, Purpose::Pool, 0);
            let (pool, payoffs) = sample_scored_pool(&config.dgp, config.k, &mut pool_stream)?;
            lambdas
                .iter()
                .map(|&lambda| {
                    let theta = fitter.fit(penalty, lambda)?;
                    let d = policy_parity_of_treatment(&theta, &pool)?;
                    Ok(CellOutcome {
                        performance: payoffs[d.selected_index],
                        minority: d.selected_subgroup == 1,
                    })
                })
                .collect()
        })
        .collect();

    let mut successes = Vec::new();
    let mut failures = 0usize;
    for r in results {
        match r {
            Ok(v) => successes.push(v),
            Err(_) => failures += 1,
        }
    }
    check_failure_budget(config.macro_reps, failures)?;
    if successes.is_empty() {
        return Err(Error::Experiment("no successful replications".into()));
    }

    Ok(lambdas
        .iter()
        .enumerate()
        .map(|(cell, &lambda)| {
            let (mean, _, parity, _) = aggregate_cells(&successes, cell);
            SweepRow {
                penalty: penalty.id().into(),
                lambda,
                performance: mean,
                parity,
            }
        })
        .collect())
}

/// One sample-size point of the deviation-rate study.
#[derive(Debug, Clone)]
pub struct RatePoint {
    pub n: usize,
    pub p_deviation: f64,
    pub se: f64,
}

/// Deviation-rate study output: per-size deviation frequencies plus the
/// fitted log-log slope.
#[derive(Debug, Clone)]
pub struct RateStudy {
    pub points: Vec<RatePoint>,
    /// Slope of `log p` on `log n` over points with nonzero deviation.
    pub slope: f64,
    pub intercept: f64,
    pub points_used: usize,
}

/// Estimate `P(empirical policy != ideal policy)` over a schedule of
/// training sizes and fit the rate of decay.
pub fn estimate_deviation_rate(
    dgp: &DataGeneratingProcess,
    k: usize,
    n_schedule: &[usize],
    macro_reps: usize,
    seed: u64,
) -> Result<RateStudy> {
    if n_schedule.is_empty() || n_schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("n_schedule", "must be nonempty and increasing"));
    }
    if macro_reps == 0 {
        return Err(Error::param("reps", "needs at least one replication"));
    }
    if k < 2 {
        return Err(Error::param("K", "deviation study needs pools of size >= 2"));
    }
    let table = ideal_thresholds(dgp, k)?;

    let mut points = Vec::new();
    for (ni, &n) in n_schedule.iter().enumerate() {
        let results: Vec<Result<bool>> = (0..macro_reps as u64)
            .into_par_iter()
            .map(|rep| -> Result<bool> {
                let mut hs = RngStream::derive_sub(seed, rep, Purpose::History, ni as u64);
                let history = sample_history(dgp, n, &mut hs)?;
                let selector = FittedSelector::fit(&history)?;
                let mut ps = RngStream::derive_sub(seed, rep, Purpose::Pool, ni as u64);
                let (pool, payoffs) = sample_scored_pool(dgp, k, &mut ps)?;
                let empirical =
                    policy_empirical_fair(&selector, &pool, QuantileMode::Exact, None)?;
                let ideal_d = policy_ideal_fair_cached(&table, &pool, payoffs)?;
                Ok(empirical.selected_index != ideal_d.selected_index)
            })
            .collect();

        let mut deviations = 0usize;
        let mut failures = 0usize;
        let mut successes = 0usize;
        for r in results {
            match r {
                Ok(dev) => {
                    successes += 1;
                    deviations += usize::from(dev);
                }
                Err(_) => failures += 1,
            }
        }
        check_failure_budget(macro_reps, failures)?;
        if successes == 0 {
            return Err(Error::Experiment("no successful replications".into()));
        }
        let p = deviations as f64 / successes as f64;
        points.push(RatePoint {
            n,
            p_deviation: p,
            se: (p * (1.0 - p) / successes as f64).sqrt(),
        });
    }

    // Log-log fit over points with nonzero deviation frequency; zero points
    // carry no information about the decay exponent.
    let included: Vec<&RatePoint> = points.iter().filter(|pt| pt.p_deviation > 0.0).collect();
    let (slope, intercept) = if included.len() >= 2 {
        let xs: Vec<f64> = included.iter().map(|pt| (pt.n as f64).ln()).collect();
        let ys: Vec<f64> = included.iter().map(|pt| pt.p_deviation.ln()).collect();
        let mx = xs.iter().sum::<f64>() / xs.len() as f64;
        let my = ys.iter().sum::<f64>() / ys.len() as f64;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        (sxy / sxx, my - sxy / sxx * mx)
    } else {
        (f64::NAN, f64::NAN)
    };

    Ok(RateStudy {
        slope,
        intercept,
        points_used: included.len(),
        points,
    })
}

/// One pool-size point of the extreme-value exclusion study.
#[derive(Debug, Clone)]
pub struct ExtremePoint {
    pub k: usize,
    pub p_minority: f64,
    pub se: f64,
}

/// Selection frequency of the minority subgroup under the unconstrained
/// argmax policy, as the pool grows.
///
/// Scores are simulated from their conditional laws directly:
/// `score | Z=z ~ N(0, tau_z)`, sharing a unit base scale so that equal
/// `tau` values make the subgroups exchangeable.
pub fn run_extreme_value_study(
    tau0: f64,
    tau1: f64,
    rho: f64,
    k_schedule: &[usize],
    macro_reps: usize,
    seed: u64,
) -> Result<Vec<ExtremePoint>> {
    for (name, v) in [("tau0", tau0), ("tau1", tau1)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::param(name, "must be positive"));
        }
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::param("rho", "must lie in (0,1)"));
    }
    if k_schedule.is_empty() || macro_reps == 0 {
        return Err(Error::param("schedule/reps", "must be nonempty"));
    }
    let sd = [tau0.sqrt(), tau1.sqrt()];

    let mut out = Vec::new();
    for (ki, &k) in k_schedule.iter().enumerate() {
        if k == 0 {
            return Err(Error::param("K", "pool sizes must be positive"));
        }
        let counts: Vec<u32> = (0..macro_reps as u64)
            .into_par_iter()
            .map(|rep| {
                let mut stream = RngStream::derive_sub(seed, rep, Purpose::Simulation, ki as u64);
                let mut best = f64::NEG_INFINITY;
                let mut best_z = 0u8;
                for _ in 0..k {
                    let z = u8::from(stream.bernoulli(rho));
                    let score = sd[z as usize] * stream.standard_normal();
                    if score > best {
                        best = score;
                        best_z = z;
                    }
                }
                u32::from(best_z == 1)
            })
            .collect();
        let minority: u64 = counts.iter().map(|&c| u64::from(c)).sum();
        let p = minority as f64 / macro_reps as f64;
        out.push(ExtremePoint {
            k,
            p_minority: p,
            se: (p * (1.0 - p) / macro_reps as f64).sqrt(),
        });
    }
    Ok(out)
}

/// Monte Carlo estimates for the two-candidate counterexample.
#[derive(Debug, Clone, Copy)]
pub struct CounterexampleEstimates {
    /// Percentile-ranking policy value.
    pub pi_u_value: f64,
    /// The simple fair alternative: take candidate 2 when its percentile
    /// exceeds one half.
    pub alt_policy_value: f64,
    /// Ideal fair policy (threshold zero on the score gap).
    pub pi_star_value: f64,
}

/// Estimate the conditional expected performance of three fair policies on
/// the fixed two-candidate pool with subgroup scores `3/8 + U1/4` (group 0)
/// and `U2` (group 1).
///
/// All three policies are evaluated on common uniform draws, so the value
/// ordering is estimated with far less noise than the individual values.
pub fn verify_counterexample(mc_samples: usize, seed: u64) -> Result<CounterexampleEstimates> {
    if mc_samples < 10_000 {
        return Err(Error::param("samples", "needs at least 1e4 draws"));
    }
    let mut stream = RngStream::derive(seed, 0, Purpose::Simulation);
    let (mut sum_u, mut sum_alt, mut sum_star) = (0.0, 0.0, 0.0);
    for _ in 0..mc_samples {
        let u1 = stream.uniform();
        let u2 = stream.uniform();
        let score0 = 3.0 / 8.0 + u1 / 4.0;
        let score1 = u2;
        // Percentile ranking: candidate percentiles are exactly u1 and u2.
        sum_u += if u1 >= u2 { score0 } else { score1 };
        // Alternative fair rule from the counterexample.
        sum_alt += if u2 > 0.5 { score1 } else { score0 };
        // Ideal rule: the score-gap law is symmetric, so the threshold is 0.
        sum_star += if score1 - score0 >= 0.0 { score1 } else { score0 };
    }
    let n = mc_samples as f64;
    Ok(CounterexampleEstimates {
        pi_u_value: sum_u / n,
        alt_policy_value: sum_alt / n,
        pi_star_value: sum_star / n,
    })
}

/// Goodness-of-fit p-value for the hypothesis that counts are uniform over
/// their cells.
pub fn chi_square_uniform_pvalue(counts: &[u64]) -> f64 {
    let cells = counts.len();
    if cells < 2 {
        return 1.0;
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 1.0;
    }
    let expected = total as f64 / cells as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let chi = ChiSquared::new((cells - 1) as f64).unwrap();
    1.0 - chi.cdf(stat)
}

/// Format a number with six significant digits, the precision used in all
/// emitted CSV files.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        let decimals = (5 - mag).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.5e}")
    }
}

/// `policy,m,mean_performance,se_performance,parity,se_parity,replications`
pub fn write_metrics_csv(rows: &[MetricsRow], w: &mut (impl Write + ?Sized)) -> std::io::Result<()> {
    writeln!(
        w,
        "policy,m,mean_performance,se_performance,parity,se_parity,replications"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.policy,
            r.m,
            format_sig(r.mean_performance),
            format_sig(r.se_performance),
            format_sig(r.parity),
            format_sig(r.se_parity),
            r.replications
        )?;
    }
    Ok(())
}

/// `penalty,lambda,performance,parity`
pub fn write_sweep_csv(rows: &[SweepRow], w: &mut (impl Write + ?Sized)) -> std::io::Result<()> {
    writeln!(w, "penalty,lambda,performance,parity")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            r.penalty,
            format_sig(r.lambda),
            format_sig(r.performance),
            format_sig(r.parity)
        )?;
    }
    Ok(())
}

/// `n,p_deviation,se`
pub fn write_rate_csv(study: &RateStudy, w: &mut (impl Write + ?Sized)) -> std::io::Result<()> {
    writeln!(w, "n,p_deviation,se")?;
    for pt in &study.points {
        writeln!(
            w,
            "{},{},{}",
            pt.n,
            format_sig(pt.p_deviation),
            format_sig(pt.se)
        )?;
    }
    Ok(())
}

/// `slope,intercept,points_used` (one data line)
pub fn write_slope_csv(study: &RateStudy, w: &mut (impl Write + ?Sized)) -> std::io::Result<()> {
    writeln!(w, "slope,intercept,points_used")?;
    writeln!(
        w,
        "{},{},{}",
        format_sig(study.slope),
        format_sig(study.intercept),
        study.points_used
    )
}

/// `K,p_minority,se`
pub fn write_extreme_csv(points: &[ExtremePoint], w: &mut (impl Write + ?Sized)) -> std::io::Result<()> {
    writeln!(w, "K,p_minority,se")?;
    for pt in points {
        writeln!(
            w,
            "{},{},{}",
            pt.k,
            format_sig(pt.p_minority),
            format_sig(pt.se)
        )?;
    }
    Ok(())
}

/// `policy,value`
pub fn write_counterexample_csv(
    est: &CounterexampleEstimates,
    w: &mut (impl Write + ?Sized),
) -> std::io::Result<()> {
    writeln!(w, "policy,value")?;
    writeln!(w, "pi_u,{}", format_sig(est.pi_u_value))?;
    writeln!(w, "alternative,{}", format_sig(est.alt_policy_value))?;
    writeln!(w, "pi_star,{}", format_sig(est.pi_star_value))
}

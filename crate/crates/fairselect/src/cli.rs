//! Command-line front end.
//!
//! Subcommands: `ingest`, `experiment`, `lambda-sweep`, `rates`, `prop1`,
//! `counterexample`.  Run settings come from a flat `key = value` config
//! file plus the global flags `--config`, `--seed`, `--out`, `--threads`,
//! and `--quantile`, with flags overriding file keys.  Every subcommand is a
//! pure function from (config bytes, seed, input files) to output bytes:
//! the thread count changes wall time only, never output.
//!
//! Exit codes: 0 success, 2 configuration errors, 1 runtime errors.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{parse_config, ConfigMap};
use crate::error::Error;
use crate::experiments::{
    estimate_deviation_rate, run_extreme_value_study, run_lambda_sweep, run_selection_experiment,
    verify_counterexample, write_counterexample_csv, write_extreme_csv, write_metrics_csv,
    write_rate_csv, write_slope_csv, write_sweep_csv, ExperimentConfig, PolicySpec,
};
use crate::ingest::{load_population_csv, summarize};
use crate::model::DataGeneratingProcess;
use crate::policies::{Penalty, QuantileMode};
use crate::Result;

#[derive(Debug, Parser)]
#[command(
    name = "fairselect",
    about = "Statistically fair candidate selection: policies, estimation, and studies",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run-configuration file (`key = value` lines, `#` comments).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; all randomness derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for CSV files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (0 = library default).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Selection-quantile estimator: `exact` or `bootstrap:REPS`.
    #[arg(long, global = true)]
    quantile: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a population CSV and print its summary.
    Ingest {
        /// Population CSV path (`x1,...,xp,z,y`).
        csv: PathBuf,
        /// Only validate; print `ok` instead of the summary.
        #[arg(long)]
        validate_only: bool,
    },
    /// Performance/parity curves over training sample size.
    Experiment,
    /// Penalized-benchmark sweep over the tradeoff parameter.
    LambdaSweep,
    /// Deviation rate of the empirical policy from the ideal one.
    Rates,
    /// Extreme-value exclusion study for the argmax policy.
    Prop1,
    /// Golden-value check of the two-candidate counterexample.
    Counterexample,
}

/// Parse a `--quantile` specification.
pub fn parse_quantile_spec(spec: &str) -> Result<QuantileMode> {
    if spec == "exact" {
        return Ok(QuantileMode::Exact);
    }
    if let Some(rest) = spec.strip_prefix("bootstrap:") {
        let reps: usize = rest
            .parse()
            .map_err(|_| Error::Config(format!("bad bootstrap rep count `{rest}`")))?;
        if reps == 0 {
            return Err(Error::Config("bootstrap rep count must be positive".into()));
        }
        return Ok(QuantileMode::Bootstrap { reps });
    }
    Err(Error::Config(format!(
        "bad quantile spec `{spec}` (expected `exact` or `bootstrap:REPS`)"
    )))
}

/// Parse a policy identifier from an experiment configuration.
pub fn parse_policy_spec(id: &str) -> Result<PolicySpec> {
    match id {
        "pi_max" => Ok(PolicySpec::ParityOfTreatment),
        "pi_hat" => Ok(PolicySpec::EmpiricalFair),
        "pi_u" => Ok(PolicySpec::FairPredictionPlugin),
        "pi_star" => Ok(PolicySpec::IdealFair),
        other => {
            let (name, lambda) = other.split_once(':').ok_or_else(|| {
                Error::Config(format!("unknown policy `{other}`"))
            })?;
            let penalty = parse_penalty(name)?;
            let lambda: f64 = lambda
                .parse()
                .map_err(|_| Error::Config(format!("bad lambda in policy `{other}`")))?;
            Ok(PolicySpec::Penalized { penalty, lambda })
        }
    }
}

fn parse_penalty(name: &str) -> Result<Penalty> {
    match name {
        "pairwise" => Ok(Penalty::PairwiseWeighted),
        "groupmean" => Ok(Penalty::GroupMeanResidual),
        other => Err(Error::Config(format!("unknown penalty `{other}`"))),
    }
}

/// Entry point; returns the process exit code.
pub fn run(args: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidParameter { .. } => 2,
                _ => 1,
            }
        }
    }
}

/// Settings shared by the study subcommands.
struct RunSettings {
    cfg: ConfigMap,
    seed: u64,
    out: PathBuf,
    threads: usize,
    quantile: QuantileMode,
}

fn settings(cli: &Cli) -> Result<RunSettings> {
    let mut cfg = match &cli.config {
        Some(path) => parse_config(&fs::read_to_string(path)?)?,
        None => ConfigMap::default(),
    };
    let seed = match cli.seed {
        Some(s) => {
            cfg.get("seed");
            s
        }
        None => cfg
            .get_u64("seed")?
            .ok_or_else(|| Error::Config("missing required key `seed`".into()))?,
    };
    let out = match &cli.out {
        Some(p) => {
            cfg.get("out");
            p.clone()
        }
        None => PathBuf::from(cfg.get_str("out").unwrap_or_else(|| ".".into())),
    };
    let threads = match cli.threads {
        Some(t) => {
            cfg.get("threads");
            t
        }
        None => cfg.get_usize("threads")?.unwrap_or(0),
    };
    let quantile = match &cli.quantile {
        Some(spec) => {
            cfg.get("quantile");
            parse_quantile_spec(spec)?
        }
        None => match cfg.get_str("quantile") {
            Some(spec) => parse_quantile_spec(&spec)?,
            None => QuantileMode::Exact,
        },
    };
    Ok(RunSettings {
        cfg,
        seed,
        out,
        threads,
        quantile,
    })
}

fn dgp_from_config(cfg: &mut ConfigMap, seed: u64) -> Result<DataGeneratingProcess> {
    let kind = cfg.require("dgp")?.to_string();
    match kind.as_str() {
        "synthetic" => {
            let p = cfg.require_usize("p")?;
            let rho = cfg.require_f64("rho")?;
            let tau0 = cfg.require_f64("tau0")?;
            let tau1 = cfg.require_f64("tau1")?;
            let noise_sd = cfg.require_f64("noise_sd")?;
            DataGeneratingProcess::synthetic(p, rho, tau0, tau1, noise_sd, seed)
        }
        "population" => {
            let path = cfg.require("population_csv")?.to_string();
            let pop = load_population_csv(Path::new(&path))?;
            DataGeneratingProcess::empirical(pop)
        }
        other => Err(Error::Config(format!(
            "key `dgp`: expected `synthetic` or `population`, found `{other}`"
        ))),
    }
}

fn in_pool<T: Send>(threads: usize, body: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Experiment(e.to_string()))?;
    pool.install(body)
}

fn write_file(path: &Path, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    body(&mut w)?;
    w.flush()?;
    println!("wrote {}", path.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest { csv, validate_only } => {
            let pop = load_population_csv(csv)?;
            if *validate_only {
                println!("ok");
            } else {
                let s = summarize(&pop);
                println!("records = {}", s.records);
                println!("dim = {}", s.dim);
                println!("count_z0 = {}", s.count0);
                println!("count_z1 = {}", s.count1);
                println!("mean_y_z0 = {}", s.mean_y0);
                println!("mean_y_z1 = {}", s.mean_y1);
                println!("disparity = {}", s.disparity());
            }
            Ok(())
        }
        Command::Experiment => {
            let mut st = settings(&cli)?;
            let dgp = dgp_from_config(&mut st.cfg, st.seed)?;
            let k = st.cfg.require_usize("k")?;
            let schedule = st.cfg.require_usize_list("schedule")?;
            let reps = st.cfg.require_usize("reps")?;
            let policies = st
                .cfg
                .require_str_list("policies")?
                .iter()
                .map(|id| parse_policy_spec(id))
                .collect::<Result<Vec<_>>>()?;
            st.cfg.finish()?;
            let config = ExperimentConfig {
                dgp,
                k,
                schedule,
                macro_reps: reps,
                policies,
                quantile_mode: st.quantile,
                seed: st.seed,
            };
            let rows = in_pool(st.threads, || run_selection_experiment(&config))?;
            write_file(&st.out.join("experiment.csv"), |w| {
                write_metrics_csv(&rows, w)
            })
        }
        Command::LambdaSweep => {
            let mut st = settings(&cli)?;
            let dgp = dgp_from_config(&mut st.cfg, st.seed)?;
            let k = st.cfg.require_usize("k")?;
            let n = st.cfg.require_usize("n")?;
            let reps = st.cfg.require_usize("reps")?;
            let penalty_key = st.cfg.require("penalty")?.to_string();
            let lambdas = st.cfg.require_f64_list("lambdas")?;
            st.cfg.finish()?;
            let penalties = match penalty_key.as_str() {
                "both" => vec![Penalty::PairwiseWeighted, Penalty::GroupMeanResidual],
                one => vec![parse_penalty(one)?],
            };
            let config = ExperimentConfig {
                dgp,
                k,
                schedule: vec![n],
                macro_reps: reps,
                policies: vec![PolicySpec::ParityOfTreatment],
                quantile_mode: st.quantile,
                seed: st.seed,
            };
            let mut rows = Vec::new();
            for penalty in penalties {
                rows.extend(in_pool(st.threads, || {
                    run_lambda_sweep(&config, penalty, &lambdas)
                })?);
            }
            write_file(&st.out.join("lambda_sweep.csv"), |w| {
                write_sweep_csv(&rows, w)
            })
        }
        Command::Rates => {
            let mut st = settings(&cli)?;
            let dgp = dgp_from_config(&mut st.cfg, st.seed)?;
            let k = st.cfg.require_usize("k")?;
            let n_schedule = st.cfg.require_usize_list("n_schedule")?;
            let reps = st.cfg.require_usize("reps")?;
            st.cfg.finish()?;
            let study = in_pool(st.threads, || {
                estimate_deviation_rate(&dgp, k, &n_schedule, reps, st.seed)
            })?;
            write_file(&st.out.join("rates.csv"), |w| write_rate_csv(&study, w))?;
            write_file(&st.out.join("rate_slope.csv"), |w| {
                write_slope_csv(&study, w)
            })
        }
        Command::Prop1 => {
            let mut st = settings(&cli)?;
            let tau0 = st.cfg.require_f64("tau0")?;
            let tau1 = st.cfg.require_f64("tau1")?;
            let rho = st.cfg.require_f64("rho")?;
            let k_schedule = st.cfg.require_usize_list("k_schedule")?;
            let reps = st.cfg.require_usize("reps")?;
            st.cfg.finish()?;
            let points = in_pool(st.threads, || {
                run_extreme_value_study(tau0, tau1, rho, &k_schedule, reps, st.seed)
            })?;
            write_file(&st.out.join("prop1.csv"), |w| write_extreme_csv(&points, w))
        }
        Command::Counterexample => {
            let mut st = settings(&cli)?;
            let samples = st.cfg.require_usize("samples")?;
            st.cfg.finish()?;
            let est = verify_counterexample(samples, st.seed)?;
            write_file(&st.out.join("counterexample.csv"), |w| {
                write_counterexample_csv(&est, w)
            })
        }
    }
}

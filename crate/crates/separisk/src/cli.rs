//! Command-line front end wiring ingestion, estimation, bootstrap,
//! simulation, and graph checking into reproducible runs.
//!
//! Every file-emitting run writes a `run.json` holding the fully resolved
//! configuration (defaults applied, formats detected, horizons fixed), the
//! seed, and the package version, so the run can be reproduced from that
//! file alone. Options come from flags or from a flat TOML config given
//! with `--config`; flags win on conflict. Output schemas are stable and
//! listed in `--help`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::bootstrap::{percentile_engine, resample_subjects, BootstrapResult, ReplicateOutcome};
use crate::causal_graph::{check_dismissible, parse_graph, Dag};
use crate::effects::separable_decomposition;
use crate::event_history::{
    format_float, read_wide_csv, validate_and_expand, write_wide_csv, SubjectRecord,
};
use crate::gformula::{estimate_gformula_risk, EstimatorKind, RiskCurve, Standardization};
use crate::glm::{fit_pooled_logistic, parse_formula, DesignSpec, HazardModelSet, OutcomeRole};
use crate::ingest_prostate::{load_prostate, ProstateConfig};
use crate::ipw::{compute_weights, estimate_ipw_risk, WeightKind};
use crate::nonparam::aalen_johansen;
use crate::seeds::derive_seed;
use crate::simulate::{
    coverage_scenario, illustrative_scenario, run_coverage, simulate_cohort,
    write_truth_curves_csv, ArmDesign, SimError,
};

/// Default grid for the trial extract: monthly intervals over five years.
const DEFAULT_PROSTATE_HORIZON: u32 = 59;
/// Seed-derivation tag for cohort draws, shared with the coverage harness.
const TAG_COHORT: u8 = 1;

const SCHEMA_HELP: &str = "\
Output files:
  risks.csv         estimator,a_y,a_d,k,estimate,lower,upper
  effects.csv       kind,k,estimate,lower,upper
  weights_diag.csv  estimator,a_y,a_d,mean,max,p99
  run.json          resolved configuration, seed, and package version
  cohort_rep{r}.csv id,arm,<covariates...>,time,event        (simulate)
  truth.csv         a_y,a_d,k,risk                           (simulate)
  coverage.csv      a_y,a_d,estimator,k,truth,covered,replicates,coverage
  subjects.csv + audit.json                                  (ingest)

Confidence bound columns are left empty when --boot is 0. A flat TOML
config passed with --config mirrors the long flags (underscores for
dashes); explicit flags override config keys. SEPARISK_THREADS sets the
default worker-thread count for bootstrap and simulation.";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, config, or input data shape. Exit code 2.
    #[error("{0}")]
    Validation(String),
    /// Model fitting, estimation, or output writing failed. Exit code 3.
    #[error("{0}")]
    Estimation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Estimation(_) => 3,
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    /// Decide from the header: the trial extract has rx/dtime/status,
    /// the cohort format starts with id,arm.
    Auto,
    Subjects,
    Prostate,
}

fn parse_format(s: &str) -> Result<DataFormat, CliError> {
    match s {
        "auto" => Ok(DataFormat::Auto),
        "subjects" => Ok(DataFormat::Subjects),
        "prostate" => Ok(DataFormat::Prostate),
        other => Err(invalid(format!(
            "unknown data format {other:?}; expected auto, subjects, or prostate"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignOpt {
    TwoArm,
    FourArm,
}

impl From<DesignOpt> for ArmDesign {
    fn from(d: DesignOpt) -> ArmDesign {
        match d {
            DesignOpt::TwoArm => ArmDesign::TwoArm,
            DesignOpt::FourArm => ArmDesign::FourArm,
        }
    }
}

fn parse_design(s: &str) -> Result<DesignOpt, CliError> {
    match s {
        "two-arm" => Ok(DesignOpt::TwoArm),
        "four-arm" => Ok(DesignOpt::FourArm),
        other => Err(invalid(format!(
            "unknown design {other:?}; expected two-arm or four-arm"
        ))),
    }
}

fn ser_estimators<S: serde::Serializer>(v: &[EstimatorKind], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|e| e.to_string()))
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateConfig {
    pub data: PathBuf,
    pub format: DataFormat,
    /// Highest hazard index K; the grid has K+1 intervals.
    pub horizon: Option<u32>,
    pub y_model: String,
    pub d_model: String,
    pub c_model: Option<String>,
    pub targets: Vec<(u8, u8)>,
    #[serde(serialize_with = "ser_estimators")]
    pub estimators: Vec<EstimatorKind>,
    pub boot: u32,
    pub level: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateConfig {
    pub scenario: u8,
    /// Table of effect-illustration processes instead of the coverage ones.
    pub illustrative: bool,
    pub design: DesignOpt,
    pub n: u32,
    pub reps: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageConfig {
    pub scenario: u8,
    pub n: u32,
    pub reps: u32,
    pub boot: u32,
    pub ks: Vec<u32>,
    pub level: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckGraphConfig {
    pub graph: PathBuf,
    pub k: Option<u32>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestConfig {
    pub data: PathBuf,
    pub interval_months: u32,
    pub horizon: u32,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    Estimate(EstimateConfig),
    Simulate(SimulateConfig),
    Coverage(CoverageConfig),
    CheckGraph(CheckGraphConfig),
    Ingest(IngestConfig),
}

/// A fully resolved run. Serializing it yields the `run.json` payload.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub command: Command,
    pub out: PathBuf,
    pub threads: Option<usize>,
}

#[derive(Parser, Debug)]
#[command(
    name = "separisk",
    version,
    about = "Separable direct and indirect effects under competing risks",
    after_long_help = SCHEMA_HELP
)]
struct Cli {
    /// Flat TOML config mirroring the long flags; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory, created if absent.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (default: SEPARISK_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Estimate risk curves and separable effects from a cohort file.
    Estimate(EstimateArgs),
    /// Draw simulated cohorts and write them with their exact risk curves.
    Simulate(SimulateArgs),
    /// Run a bootstrap coverage study over simulated replicates.
    Coverage(CoverageArgs),
    /// Check the dismissible component conditions of a graph file.
    CheckGraph(CheckGraphArgs),
    /// Recode the prostate trial extract into the cohort format.
    Ingest(IngestArgs),
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Cohort CSV: canonical subjects file or the raw trial extract.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Input layout: auto, subjects, or prostate.
    #[arg(long)]
    format: Option<String>,
    /// Highest hazard index K (required for subjects data; trial
    /// extract defaults to 59).
    #[arg(long)]
    horizon: Option<u32>,
    /// Event-of-interest hazard formula, e.g. "1 + A + k + l1".
    #[arg(long)]
    y_model: Option<String>,
    /// Competing-event hazard formula.
    #[arg(long)]
    d_model: Option<String>,
    /// Censoring hazard formula; required for IPW under censoring.
    #[arg(long)]
    c_model: Option<String>,
    /// Component targets as a_y,a_d pairs, e.g. --targets 1,1 0,0 1,0.
    #[arg(long, num_args = 1.., value_name = "A_Y,A_D")]
    targets: Option<Vec<String>>,
    /// Comma-separated subset of gformula,ipw1,ipw2,nonparam.
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<String>>,
    /// Bootstrap replicates; 0 disables confidence intervals.
    #[arg(long)]
    boot: Option<u32>,
    /// Confidence level for percentile intervals.
    #[arg(long)]
    level: Option<f64>,
    /// RNG seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Scenario number (coverage presets 1-5, illustrative 1-4).
    #[arg(long)]
    scenario: Option<u8>,
    /// Use the effect-illustration processes instead of the coverage ones.
    #[arg(long)]
    illustrative: bool,
    /// Treatment assignment: two-arm (A_Y = A_D) or four-arm.
    #[arg(long)]
    design: Option<String>,
    /// Subjects per cohort.
    #[arg(long)]
    n: Option<u32>,
    /// Number of cohorts to draw.
    #[arg(long)]
    reps: Option<u32>,
    /// RNG seed; cohort r derives its own stream from it.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct CoverageArgs {
    /// Coverage scenario number (1-5).
    #[arg(long)]
    scenario: Option<u8>,
    /// Subjects per replicate cohort.
    #[arg(long)]
    n: Option<u32>,
    /// Replicate cohorts.
    #[arg(long)]
    reps: Option<u32>,
    /// Bootstrap draws per replicate.
    #[arg(long)]
    boot: Option<u32>,
    /// Grid points to tally, comma-separated.
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<u32>>,
    /// Nominal interval level.
    #[arg(long)]
    level: Option<f64>,
    /// RNG seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct CheckGraphArgs {
    /// Graph file in the `.cg` edge-list dialect.
    graph: Option<PathBuf>,
    /// Horizon K to audit (default: highest Y index in the graph).
    #[arg(long = "K")]
    k: Option<u32>,
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// Raw trial extract CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Months per interval.
    #[arg(long)]
    interval_months: Option<u32>,
    /// Highest hazard index K.
    #[arg(long)]
    horizon: Option<u32>,
}

/// Every key a flat config may carry, across all subcommands.
const KNOWN_KEYS: &[&str] = &[
    "data",
    "format",
    "horizon",
    "y_model",
    "d_model",
    "c_model",
    "targets",
    "estimators",
    "boot",
    "level",
    "seed",
    "out",
    "threads",
    "scenario",
    "illustrative",
    "design",
    "n",
    "reps",
    "ks",
    "k",
    "interval_months",
    "graph",
];

/// Flat key-value config. Scalars only; values are read through the same
/// string parsers as the flags.
struct FileConfig {
    values: toml::Table,
}

impl FileConfig {
    fn empty() -> FileConfig {
        FileConfig {
            values: toml::Table::new(),
        }
    }

    fn load(path: &Path) -> Result<FileConfig, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| invalid(format!("config {}: {e}", path.display())))?;
        let values: toml::Table = text
            .parse()
            .map_err(|e| invalid(format!("config {}: {e}", path.display())))?;
        for (key, value) in &values {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(invalid(format!(
                    "config {}: unknown key {key:?}",
                    path.display()
                )));
            }
            if !matches!(
                value,
                toml::Value::String(_)
                    | toml::Value::Integer(_)
                    | toml::Value::Float(_)
                    | toml::Value::Boolean(_)
            ) {
                return Err(invalid(format!(
                    "config {}: key {key:?} must be a scalar",
                    path.display()
                )));
            }
        }
        Ok(FileConfig { values })
    }

    fn string(&self, key: &str) -> Option<String> {
        self.values.get(key).map(|v| match v {
            toml::Value::String(s) => s.clone(),
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Boolean(b) => b.to_string(),
            _ => unreachable!("non-scalar keys are rejected at load"),
        })
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.string(key) {
            None => Ok(None),
            Some(s) => s
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| invalid(format!("config key {key:?}: cannot parse value {s:?}"))),
        }
    }
}

fn parse_targets(specs: &[String]) -> Result<Vec<(u8, u8)>, CliError> {
    let mut targets = Vec::new();
    for spec in specs {
        let parts: Vec<&str> = spec.split(',').collect();
        let bad = || {
            invalid(format!(
                "target {spec:?} must be a_y,a_d with each component 0 or 1"
            ))
        };
        if parts.len() != 2 {
            return Err(bad());
        }
        let a_y: u8 = parts[0].trim().parse().map_err(|_| bad())?;
        let a_d: u8 = parts[1].trim().parse().map_err(|_| bad())?;
        if a_y > 1 || a_d > 1 {
            return Err(bad());
        }
        if targets.contains(&(a_y, a_d)) {
            return Err(invalid(format!("duplicate target {spec:?}")));
        }
        targets.push((a_y, a_d));
    }
    if targets.is_empty() {
        return Err(invalid("at least one target is required"));
    }
    Ok(targets)
}

fn parse_estimators(names: &[String]) -> Result<Vec<EstimatorKind>, CliError> {
    let mut estimators = Vec::new();
    for name in names {
        let kind = match name.trim() {
            "gformula" => EstimatorKind::Gformula,
            "ipw1" => EstimatorKind::Ipw1,
            "ipw2" => EstimatorKind::Ipw2,
            "nonparam" => EstimatorKind::Nonparam,
            other => {
                return Err(invalid(format!(
                    "unknown estimator {other:?}; expected gformula, ipw1, ipw2, or nonparam"
                )))
            }
        };
        if estimators.contains(&kind) {
            return Err(invalid(format!("duplicate estimator {name:?}")));
        }
        estimators.push(kind);
    }
    if estimators.is_empty() {
        return Err(invalid("at least one estimator is required"));
    }
    Ok(estimators)
}

fn threads_from_env(var: Option<&str>) -> Result<Option<usize>, CliError> {
    match var {
        None => Ok(None),
        Some(s) => match s.trim().parse::<usize>() {
            Ok(t) if t >= 1 => Ok(Some(t)),
            _ => Err(invalid(format!(
                "SEPARISK_THREADS must be a positive integer, got {s:?}"
            ))),
        },
    }
}

fn resolve_estimate(a: EstimateArgs, f: &FileConfig) -> Result<EstimateConfig, CliError> {
    let data = a
        .data
        .or(f.parsed("data")?)
        .ok_or_else(|| invalid("estimate requires --data"))?;
    let format = match a.format.or_else(|| f.string("format")) {
        None => DataFormat::Auto,
        Some(s) => parse_format(&s)?,
    };
    let horizon = match a.horizon {
        Some(k) => Some(k),
        None => f.parsed("horizon")?,
    };
    let y_model = a
        .y_model
        .or_else(|| f.string("y_model"))
        .ok_or_else(|| invalid("estimate requires --y-model"))?;
    let d_model = a
        .d_model
        .or_else(|| f.string("d_model"))
        .ok_or_else(|| invalid("estimate requires --d-model"))?;
    let c_model = a.c_model.or_else(|| f.string("c_model"));
    let target_specs = a
        .targets
        .or_else(|| {
            f.string("targets")
                .map(|s| s.split_whitespace().map(str::to_string).collect())
        })
        .ok_or_else(|| invalid("estimate requires --targets"))?;
    let targets = parse_targets(&target_specs)?;
    let estimator_specs = a.estimators.or_else(|| {
        f.string("estimators")
            .map(|s| s.split(',').map(str::to_string).collect())
    });
    let estimators = match estimator_specs {
        Some(names) => parse_estimators(&names)?,
        None => vec![
            EstimatorKind::Gformula,
            EstimatorKind::Ipw1,
            EstimatorKind::Ipw2,
        ],
    };
    let boot = match a.boot {
        Some(b) => b,
        None => f.parsed("boot")?.unwrap_or(0),
    };
    if boot == 1 {
        return Err(invalid("--boot must be 0 or at least 2"));
    }
    let level = match a.level {
        Some(l) => l,
        None => f.parsed("level")?.unwrap_or(0.95),
    };
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid(format!(
            "--level must be strictly between 0 and 1, got {level}"
        )));
    }
    let seed = match a.seed {
        Some(s) => s,
        None => f.parsed("seed")?.unwrap_or(0),
    };
    for &(a_y, a_d) in &targets {
        let reachable = estimators
            .iter()
            .any(|e| *e != EstimatorKind::Nonparam || a_y == a_d);
        if !reachable {
            return Err(invalid(format!(
                "target ({a_y},{a_d}) is requested only via nonparam, which needs a_y = a_d"
            )));
        }
    }
    Ok(EstimateConfig {
        data,
        format,
        horizon,
        y_model,
        d_model,
        c_model,
        targets,
        estimators,
        boot,
        level,
        seed,
    })
}

fn resolve_simulate(a: SimulateArgs, f: &FileConfig) -> Result<SimulateConfig, CliError> {
    let scenario = a
        .scenario
        .or(f.parsed("scenario")?)
        .ok_or_else(|| invalid("simulate requires --scenario"))?;
    let illustrative = a.illustrative || f.parsed("illustrative")?.unwrap_or(false);
    let design = match a.design.or_else(|| f.string("design")) {
        None => DesignOpt::TwoArm,
        Some(s) => parse_design(&s)?,
    };
    let n =
        a.n.or(f.parsed("n")?)
            .ok_or_else(|| invalid("simulate requires --n"))?;
    let reps = match a.reps {
        Some(r) => r,
        None => f.parsed("reps")?.unwrap_or(1),
    };
    if reps == 0 {
        return Err(invalid("--reps must be at least 1"));
    }
    let seed = match a.seed {
        Some(s) => s,
        None => f.parsed("seed")?.unwrap_or(0),
    };
    Ok(SimulateConfig {
        scenario,
        illustrative,
        design,
        n,
        reps,
        seed,
    })
}

fn resolve_coverage(a: CoverageArgs, f: &FileConfig) -> Result<CoverageConfig, CliError> {
    let scenario = a
        .scenario
        .or(f.parsed("scenario")?)
        .ok_or_else(|| invalid("coverage requires --scenario"))?;
    let n =
        a.n.or(f.parsed("n")?)
            .ok_or_else(|| invalid("coverage requires --n"))?;
    let reps = a
        .reps
        .or(f.parsed("reps")?)
        .ok_or_else(|| invalid("coverage requires --reps"))?;
    let boot = a
        .boot
        .or(f.parsed("boot")?)
        .ok_or_else(|| invalid("coverage requires --boot"))?;
    let ks = match a.ks {
        Some(ks) => ks,
        None => match f.string("ks") {
            None => vec![25, 75, 100],
            Some(s) => s
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse::<u32>()
                        .map_err(|_| invalid(format!("config key \"ks\": bad grid point {p:?}")))
                })
                .collect::<Result<Vec<u32>, CliError>>()?,
        },
    };
    let level = match a.level {
        Some(l) => l,
        None => f.parsed("level")?.unwrap_or(0.95),
    };
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid(format!(
            "--level must be strictly between 0 and 1, got {level}"
        )));
    }
    let seed = match a.seed {
        Some(s) => s,
        None => f.parsed("seed")?.unwrap_or(0),
    };
    Ok(CoverageConfig {
        scenario,
        n,
        reps,
        boot,
        ks,
        level,
        seed,
    })
}

fn resolve_check_graph(a: CheckGraphArgs, f: &FileConfig) -> Result<CheckGraphConfig, CliError> {
    let graph = a
        .graph
        .or(f.parsed("graph")?)
        .ok_or_else(|| invalid("check-graph requires a graph file"))?;
    let k = match a.k {
        Some(k) => Some(k),
        None => f.parsed("k")?,
    };
    Ok(CheckGraphConfig { graph, k })
}

fn resolve_ingest(a: IngestArgs, f: &FileConfig) -> Result<IngestConfig, CliError> {
    let data = a
        .data
        .or(f.parsed("data")?)
        .ok_or_else(|| invalid("ingest requires --data"))?;
    let interval_months = match a.interval_months {
        Some(m) => m,
        None => f.parsed("interval_months")?.unwrap_or(1),
    };
    let horizon = match a.horizon {
        Some(k) => k,
        None => f.parsed("horizon")?.unwrap_or(DEFAULT_PROSTATE_HORIZON),
    };
    Ok(IngestConfig {
        data,
        interval_months,
        horizon,
    })
}

fn resolve(cli: Cli) -> Result<RunConfig, CliError> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::empty(),
    };
    let out = match cli.out.or(file.parsed("out")?) {
        Some(p) => p,
        None => PathBuf::from("."),
    };
    let threads = match cli.threads.or(file.parsed("threads")?) {
        Some(0) => return Err(invalid("--threads must be at least 1")),
        Some(t) => Some(t),
        None => threads_from_env(std::env::var("SEPARISK_THREADS").ok().as_deref())?,
    };
    let command = match cli.command {
        Sub::Estimate(a) => Command::Estimate(resolve_estimate(a, &file)?),
        Sub::Simulate(a) => Command::Simulate(resolve_simulate(a, &file)?),
        Sub::Coverage(a) => Command::Coverage(resolve_coverage(a, &file)?),
        Sub::CheckGraph(a) => Command::CheckGraph(resolve_check_graph(a, &file)?),
        Sub::Ingest(a) => Command::Ingest(resolve_ingest(a, &file)?),
    };
    Ok(RunConfig {
        command,
        out,
        threads,
    })
}

/// Parses argv, resolves the run, executes it, and returns the process
/// exit code: 0 success, 2 validation failure, 3 estimation failure.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let config = match resolve(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    match run(&config) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Executes a resolved run, writing its files under `config.out`.
pub fn run(config: &RunConfig) -> Result<(), CliError> {
    if let Some(t) = config.threads {
        // A pool installed by an earlier run in this process stays.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
    match &config.command {
        Command::Estimate(c) => run_estimate(c, config),
        Command::Simulate(c) => run_simulate(c, config),
        Command::Coverage(c) => run_coverage_cmd(c, config),
        Command::CheckGraph(c) => run_check_graph(c),
        Command::Ingest(c) => run_ingest(c, config),
    }
}

fn est<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Estimation(e.to_string())
}

fn write_run_json(out: &Path, resolved: &RunConfig) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Versions {
        separisk: &'static str,
    }
    #[derive(Serialize)]
    struct RunRecord<'a> {
        #[serde(flatten)]
        run: &'a RunConfig,
        versions: Versions,
    }
    let record = RunRecord {
        run: resolved,
        versions: Versions {
            separisk: env!("CARGO_PKG_VERSION"),
        },
    };
    let json = serde_json::to_string_pretty(&record).expect("run config serializes");
    fs::write(out.join("run.json"), json + "\n").map_err(est)
}

/// One planned output curve.
#[derive(Debug, Clone, Copy)]
struct CurvePlan {
    estimator: EstimatorKind,
    a_y: u8,
    a_d: u8,
}

/// Which estimator's curves feed the effect decomposition, and through
/// which off-diagonal target the direct/indirect split runs.
#[derive(Debug, Clone, Copy)]
struct EffectsPlan {
    estimator: EstimatorKind,
    middle: (u8, u8),
}

struct WeightDiagRow {
    estimator: EstimatorKind,
    a_y: u8,
    a_d: u8,
    mean: f64,
    max: f64,
    p99: f64,
}

struct EffectOut {
    kind: String,
    values: Vec<f64>,
}

struct PointFit {
    curves: Vec<Vec<f64>>,
    diags: Vec<WeightDiagRow>,
    effects: Option<Vec<EffectOut>>,
}

fn plan_curves(cfg: &EstimateConfig) -> Vec<CurvePlan> {
    let mut plan = Vec::new();
    for &estimator in &cfg.estimators {
        for &(a_y, a_d) in &cfg.targets {
            if estimator == EstimatorKind::Nonparam && a_y != a_d {
                continue;
            }
            plan.push(CurvePlan {
                estimator,
                a_y,
                a_d,
            });
        }
    }
    plan
}

fn plan_effects(cfg: &EstimateConfig) -> Option<EffectsPlan> {
    if !cfg.targets.contains(&(1, 1)) || !cfg.targets.contains(&(0, 0)) {
        return None;
    }
    let middle = cfg.targets.iter().copied().find(|&(a_y, a_d)| a_y != a_d)?;
    let estimator = cfg
        .estimators
        .iter()
        .copied()
        .find(|&e| e != EstimatorKind::Nonparam)?;
    Some(EffectsPlan { estimator, middle })
}

/// Expands, fits the hazard models, and evaluates every planned curve
/// plus the effect decomposition. Shared between the point pass and each
/// bootstrap replicate; errors are strings so replicates can be dropped.
fn fit_and_estimate(
    subjects: &[SubjectRecord],
    horizon: u32,
    y_spec: &DesignSpec,
    d_spec: &DesignSpec,
    c_spec: Option<&DesignSpec>,
    plan: &[CurvePlan],
    effects: Option<EffectsPlan>,
    want_diags: bool,
) -> Result<PointFit, String> {
    let table = validate_and_expand(subjects, horizon).map_err(|e| e.to_string())?;
    let fit_y = fit_pooled_logistic(&table, y_spec).map_err(|e| e.to_string())?;
    let fit_d = fit_pooled_logistic(&table, d_spec).map_err(|e| e.to_string())?;
    let fit_c = match c_spec {
        Some(spec) => Some(fit_pooled_logistic(&table, spec).map_err(|e| e.to_string())?),
        None => None,
    };
    let models = HazardModelSet {
        fit_y,
        fit_d,
        fit_c,
        schema: table.schema().clone(),
        n_intervals: table.n_intervals(),
    };
    let mut curves = Vec::with_capacity(plan.len());
    let mut diags = Vec::new();
    for cp in plan {
        match cp.estimator {
            EstimatorKind::Gformula => {
                let curve = estimate_gformula_risk(
                    &models,
                    &table,
                    cp.a_y,
                    cp.a_d,
                    Standardization::AllSubjects,
                )
                .map_err(|e| e.to_string())?;
                curves.push(curve.values().to_vec());
            }
            EstimatorKind::Ipw1 | EstimatorKind::Ipw2 => {
                let kind = if cp.estimator == EstimatorKind::Ipw1 {
                    WeightKind::ForNu1
                } else {
                    WeightKind::ForNu2
                };
                let weights = compute_weights(&models, &table, cp.a_y, cp.a_d, kind)
                    .map_err(|e| e.to_string())?;
                if want_diags {
                    let d = weights.diagnostics();
                    diags.push(WeightDiagRow {
                        estimator: cp.estimator,
                        a_y: cp.a_y,
                        a_d: cp.a_d,
                        mean: d.mean,
                        max: d.max,
                        p99: d.p99,
                    });
                }
                let curve = estimate_ipw_risk(&table, &weights, kind).map_err(|e| e.to_string())?;
                curves.push(curve.values().to_vec());
            }
            EstimatorKind::Nonparam => {
                let cif = aalen_johansen(&table, cp.a_y).map_err(|e| e.to_string())?;
                curves.push(cif.cif_y);
            }
        }
    }
    let effects_out = match effects {
        None => None,
        Some(ep) => {
            let as_curve = |a_y: u8, a_d: u8| -> Result<RiskCurve, String> {
                let i = plan
                    .iter()
                    .position(|c| c.estimator == ep.estimator && c.a_y == a_y && c.a_d == a_d)
                    .expect("effect targets are planned curves");
                RiskCurve::new(ep.estimator, a_y, a_d, curves[i].clone()).map_err(|e| e.to_string())
            };
            let r11 = as_curve(1, 1)?;
            let r00 = as_curve(0, 0)?;
            let mid = as_curve(ep.middle.0, ep.middle.1)?;
            let (total, direct, indirect) =
                separable_decomposition(&r11, &mid, &r00).map_err(|e| e.to_string())?;
            Some(
                [total, direct, indirect]
                    .into_iter()
                    .map(|c| EffectOut {
                        kind: c.kind.to_string(),
                        values: c.values().to_vec(),
                    })
                    .collect(),
            )
        }
    };
    Ok(PointFit {
        curves,
        diags,
        effects: effects_out,
    })
}

fn flatten(fit: &PointFit) -> Vec<f64> {
    let mut flat: Vec<f64> = fit.curves.iter().flatten().copied().collect();
    if let Some(effects) = &fit.effects {
        for e in effects {
            flat.extend_from_slice(&e.values);
        }
    }
    flat
}

fn detect_format(path: &Path) -> Result<DataFormat, CliError> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let names: Vec<&str> = headers.iter().collect();
    if names.contains(&"rx") && names.contains(&"dtime") && names.contains(&"status") {
        Ok(DataFormat::Prostate)
    } else if names.first() == Some(&"id") && names.get(1) == Some(&"arm") {
        Ok(DataFormat::Subjects)
    } else {
        Err(invalid(format!(
            "{}: cannot detect data format from header; pass --format subjects or prostate",
            path.display()
        )))
    }
}

fn load_cohort(cfg: &EstimateConfig) -> Result<(Vec<SubjectRecord>, DataFormat, u32), CliError> {
    let format = match cfg.format {
        DataFormat::Auto => detect_format(&cfg.data)?,
        f => f,
    };
    match format {
        DataFormat::Prostate => {
            let horizon = cfg.horizon.unwrap_or(DEFAULT_PROSTATE_HORIZON);
            let pconfig = ProstateConfig {
                horizon_k: horizon,
                ..ProstateConfig::default()
            };
            let cohort = load_prostate(&cfg.data, &pconfig)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            for w in &cohort.audit.warnings {
                eprintln!("warning: {w}");
            }
            Ok((cohort.subjects, DataFormat::Prostate, horizon))
        }
        DataFormat::Subjects => {
            let horizon = cfg
                .horizon
                .ok_or_else(|| invalid("estimate on a subjects file requires --horizon"))?;
            let file = fs::File::open(&cfg.data)
                .map_err(|e| invalid(format!("{}: {e}", cfg.data.display())))?;
            let subjects = read_wide_csv(file).map_err(|e| CliError::Validation(e.to_string()))?;
            Ok((subjects, DataFormat::Subjects, horizon))
        }
        DataFormat::Auto => unreachable!("auto resolves above"),
    }
}

fn run_estimate(cfg: &EstimateConfig, full: &RunConfig) -> Result<(), CliError> {
    let (subjects, format, horizon) = load_cohort(cfg)?;
    if subjects.is_empty() {
        return Err(invalid("the cohort has no subjects after recoding"));
    }
    let table =
        validate_and_expand(&subjects, horizon).map_err(|e| CliError::Validation(e.to_string()))?;
    let y_spec = parse_formula(&cfg.y_model, OutcomeRole::EventY)
        .map_err(|e| invalid(format!("--y-model: {e}")))?;
    let d_spec = parse_formula(&cfg.d_model, OutcomeRole::CompetingD)
        .map_err(|e| invalid(format!("--d-model: {e}")))?;
    let c_spec = cfg
        .c_model
        .as_deref()
        .map(|m| parse_formula(m, OutcomeRole::CensorC))
        .transpose()
        .map_err(|e| invalid(format!("--c-model: {e}")))?;
    let wants_ipw = cfg
        .estimators
        .iter()
        .any(|e| matches!(e, EstimatorKind::Ipw1 | EstimatorKind::Ipw2));
    if wants_ipw && table.has_censoring() && c_spec.is_none() {
        return Err(invalid(
            "the cohort has censoring and an IPW estimator is requested; pass --c-model",
        ));
    }

    let plan = plan_curves(cfg);
    let effects_plan = plan_effects(cfg);
    let point = fit_and_estimate(
        &subjects,
        horizon,
        &y_spec,
        &d_spec,
        c_spec.as_ref(),
        &plan,
        effects_plan,
        true,
    )
    .map_err(CliError::Estimation)?;

    let boot = if cfg.boot >= 2 {
        let replicate = |_r: u32, rng: &mut ChaCha12Rng| -> Result<ReplicateOutcome, String> {
            let resampled = resample_subjects(&subjects, rng);
            match fit_and_estimate(
                &resampled,
                horizon,
                &y_spec,
                &d_spec,
                c_spec.as_ref(),
                &plan,
                effects_plan,
                false,
            ) {
                Ok(fit) => Ok(ReplicateOutcome::Estimate(flatten(&fit))),
                Err(detail) => Ok(ReplicateOutcome::Failed(detail)),
            }
        };
        Some(
            percentile_engine(flatten(&point), cfg.boot, cfg.level, cfg.seed, replicate)
                .map_err(est)?,
        )
    } else {
        None
    };

    fs::create_dir_all(&full.out).map_err(est)?;
    let span = table.n_intervals() as usize;
    write_risks_csv(
        &full.out.join("risks.csv"),
        &plan,
        &point,
        boot.as_ref(),
        span,
    )?;
    write_effects_csv(
        &full.out.join("effects.csv"),
        &plan,
        &point,
        boot.as_ref(),
        span,
    )?;
    write_weights_diag_csv(&full.out.join("weights_diag.csv"), &point.diags)?;

    let resolved = RunConfig {
        command: Command::Estimate(EstimateConfig {
            format,
            horizon: Some(horizon),
            ..cfg.clone()
        }),
        out: full.out.clone(),
        threads: full.threads,
    };
    write_run_json(&full.out, &resolved)?;

    println!(
        "estimated {} curves over {} intervals ({} subjects)",
        plan.len(),
        span,
        subjects.len()
    );
    if let Some(b) = &boot {
        println!(
            "bootstrap: B = {}, level = {}, dropped replicates = {}",
            b.b, b.level, b.replicate_failures
        );
    }
    for name in ["risks.csv", "effects.csv", "weights_diag.csv", "run.json"] {
        println!("wrote {}", full.out.join(name).display());
    }
    Ok(())
}

fn ci_cells(boot: Option<&BootstrapResult>, idx: usize) -> (String, String) {
    match boot {
        None => (String::new(), String::new()),
        Some(b) => (format_float(b.lower[idx]), format_float(b.upper[idx])),
    }
}

fn write_risks_csv(
    path: &Path,
    plan: &[CurvePlan],
    fit: &PointFit,
    boot: Option<&BootstrapResult>,
    span: usize,
) -> Result<(), CliError> {
    let mut out = String::from("estimator,a_y,a_d,k,estimate,lower,upper\n");
    for (i, cp) in plan.iter().enumerate() {
        for k in 0..span {
            let (lower, upper) = ci_cells(boot, i * span + k);
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                cp.estimator,
                cp.a_y,
                cp.a_d,
                k + 1,
                format_float(fit.curves[i][k]),
                lower,
                upper
            ));
        }
    }
    fs::write(path, out).map_err(est)
}

fn write_effects_csv(
    path: &Path,
    plan: &[CurvePlan],
    fit: &PointFit,
    boot: Option<&BootstrapResult>,
    span: usize,
) -> Result<(), CliError> {
    let mut out = String::from("kind,k,estimate,lower,upper\n");
    if let Some(effects) = &fit.effects {
        let base = plan.len() * span;
        for (j, effect) in effects.iter().enumerate() {
            for k in 0..span {
                let (lower, upper) = ci_cells(boot, base + j * span + k);
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    effect.kind,
                    k + 1,
                    format_float(effect.values[k]),
                    lower,
                    upper
                ));
            }
        }
    }
    fs::write(path, out).map_err(est)
}

fn write_weights_diag_csv(path: &Path, diags: &[WeightDiagRow]) -> Result<(), CliError> {
    let mut out = String::from("estimator,a_y,a_d,mean,max,p99\n");
    for d in diags {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            d.estimator,
            d.a_y,
            d.a_d,
            format_float(d.mean),
            format_float(d.max),
            format_float(d.p99)
        ));
    }
    fs::write(path, out).map_err(est)
}

fn run_simulate(cfg: &SimulateConfig, full: &RunConfig) -> Result<(), CliError> {
    let dgp = if cfg.illustrative {
        illustrative_scenario(cfg.scenario)
    } else {
        coverage_scenario(cfg.scenario).map(|p| p.dgp)
    }
    .map_err(|e| CliError::Validation(e.to_string()))?;
    fs::create_dir_all(&full.out).map_err(est)?;
    for r in 0..cfg.reps {
        let cohort = simulate_cohort(
            &dgp,
            cfg.n,
            derive_seed(cfg.seed, TAG_COHORT, u64::from(r)),
            cfg.design.into(),
        )
        .map_err(est)?;
        let path = full.out.join(format!("cohort_rep{r}.csv"));
        let file = fs::File::create(&path).map_err(est)?;
        write_wide_csv(file, &cohort.subjects).map_err(est)?;
        if cfg.design == DesignOpt::FourArm {
            let mut comp = String::from("id,a_y,a_d\n");
            for (s, &(a_y, a_d)) in cohort.subjects.iter().zip(&cohort.components) {
                comp.push_str(&format!("{},{},{}\n", s.id, a_y, a_d));
            }
            fs::write(full.out.join(format!("components_rep{r}.csv")), comp).map_err(est)?;
        }
    }
    let mut truth = Vec::new();
    write_truth_curves_csv(&dgp, &mut truth).map_err(est)?;
    fs::write(full.out.join("truth.csv"), truth).map_err(est)?;
    write_run_json(&full.out, full)?;
    println!(
        "wrote {} cohort file(s) of n = {} plus truth.csv under {}",
        cfg.reps,
        cfg.n,
        full.out.display()
    );
    Ok(())
}

fn run_coverage_cmd(cfg: &CoverageConfig, full: &RunConfig) -> Result<(), CliError> {
    let table = run_coverage(
        cfg.scenario,
        cfg.n,
        cfg.reps,
        cfg.boot,
        &cfg.ks,
        cfg.level,
        cfg.seed,
    )
    .map_err(|e| match e {
        SimError::InvalidRequest { .. } | SimError::PresetUnknown { .. } => {
            CliError::Validation(e.to_string())
        }
        other => est(other),
    })?;
    fs::create_dir_all(&full.out).map_err(est)?;
    let file = fs::File::create(full.out.join("coverage.csv")).map_err(est)?;
    table.write_csv(file).map_err(est)?;
    fs::write(full.out.join("coverage.json"), table.to_json() + "\n").map_err(est)?;
    write_run_json(&full.out, full)?;
    println!(
        "tallied {} coverage cells over {} replicates; wrote coverage.csv under {}",
        table.cells.len(),
        cfg.reps,
        full.out.display()
    );
    Ok(())
}

fn infer_graph_horizon(dag: &Dag) -> Option<u32> {
    dag.node_names()
        .iter()
        .filter_map(|n| {
            n.strip_prefix('Y')
                .and_then(|rest| rest.parse::<u32>().ok())
        })
        .max()
}

fn run_check_graph(cfg: &CheckGraphConfig) -> Result<(), CliError> {
    let text = fs::read_to_string(&cfg.graph)
        .map_err(|e| invalid(format!("{}: {e}", cfg.graph.display())))?;
    let dag = parse_graph(&text).map_err(|e| invalid(format!("{}: {e}", cfg.graph.display())))?;
    let k = match cfg.k {
        Some(k) => k,
        None => infer_graph_horizon(&dag)
            .ok_or_else(|| invalid("the graph has no indexed Y nodes; pass --K"))?,
    };
    let report =
        check_dismissible(&dag, k as usize).map_err(|e| CliError::Validation(e.to_string()))?;
    println!(
        "dismissible component conditions for {} at K = {k}",
        cfg.graph.display()
    );
    print!("{report}");
    if report.all_hold() {
        println!("all conditions hold");
    } else {
        println!("some conditions fail");
    }
    Ok(())
}

fn run_ingest(cfg: &IngestConfig, full: &RunConfig) -> Result<(), CliError> {
    let pconfig = ProstateConfig {
        interval_months: cfg.interval_months,
        horizon_k: cfg.horizon,
        ..ProstateConfig::default()
    };
    let cohort =
        load_prostate(&cfg.data, &pconfig).map_err(|e| CliError::Validation(e.to_string()))?;
    for w in &cohort.audit.warnings {
        eprintln!("warning: {w}");
    }
    fs::create_dir_all(&full.out).map_err(est)?;
    let file = fs::File::create(full.out.join("subjects.csv")).map_err(est)?;
    write_wide_csv(file, &cohort.subjects).map_err(est)?;
    fs::write(full.out.join("audit.json"), cohort.audit.to_json() + "\n").map_err(est)?;
    write_run_json(&full.out, full)?;
    println!(
        "kept {} of {} rows; wrote subjects.csv and audit.json under {}",
        cohort.audit.kept_subjects,
        cohort.audit.source_rows,
        full.out.display()
    );
    Ok(())
}

//! Command-line front end: argument parsing, JSON config resolution and the
//! five subcommands.
//!
//! Every subcommand builds a JSON document from, in increasing precedence,
//! the `--config` file, dedicated flags, and `--set key=value` overrides,
//! then deserializes it with field-path error reporting. The first line of
//! standard output echoes the resolved document.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::algorithms::{AlgorithmRegistry, Record, RunConfig, StepSize};
use crate::concentration::{mc_violation_rate, random_population, sign_population, WithoutReplacementSpec};
use crate::harness::{self, Axis, Format, Measure, OracleCheck, OracleParams, SweepSpec};
use crate::problem::{Problem, ProblemRegistry, ProblemSpec};
use crate::rates::{self, RateParams, StepRule, Theorem};
use crate::{Error, Result};

/// Environment fallback for `--threads`.
pub const THREADS_ENV: &str = "SHUFFLE_FL_THREADS";

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "shuffle-fl", version, about = "Local and minibatch random reshuffling simulator")]
pub struct Cli {
    /// Worker threads for trials; falls back to SHUFFLE_FL_THREADS.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one configuration and report its suboptimality.
    Run(RunArgs),
    /// Sweep one of M, N, K, B and fit a log-log slope.
    Sweep(SweepArgs),
    /// Evaluate step size, epoch threshold and bounds of a theorem.
    Bounds(BoundsArgs),
    /// Monte-Carlo check of the without-replacement concentration bound.
    VerifyConcentration(ConcentrationArgs),
    /// Cross-check a simulation against an exact oracle.
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON config file; flags and --set override its values.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override a config field, e.g. --set problem.L=10 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct OutputArgs {
    /// Output file; relative to the working directory.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// csv or json; defaults to the extension of --out.
    #[arg(long, value_name = "FORMAT")]
    pub format: Option<String>,
    /// Exit with status 3 when any run diverges.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Construction: f1, f2, f3, composite3d, hetero, random-quadratic.
    #[arg(long, value_name = "KIND")]
    pub problem: Option<String>,
    /// minibatch-rr, local-rr, minibatch-sgd, local-sgd or gd.
    #[arg(long, value_name = "NAME")]
    pub algorithm: Option<String>,
    /// Machines.
    #[arg(long = "M", value_name = "M")]
    pub machines: Option<usize>,
    /// Components per machine.
    #[arg(long = "N", value_name = "N")]
    pub components: Option<usize>,
    /// Epochs.
    #[arg(long = "K", value_name = "K")]
    pub epochs: Option<usize>,
    /// Local steps or minibatch size per round.
    #[arg(long = "B", value_name = "B")]
    pub batch: Option<usize>,
    /// Smoothness constant.
    #[arg(long = "L", value_name = "L")]
    pub l: Option<f64>,
    /// PL constant.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Intra-machine deviation.
    #[arg(long)]
    pub nu: Option<f64>,
    /// Heterogeneity of the hetero construction.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Dimension of random-quadratic.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Instance seed of random-quadratic.
    #[arg(long, value_name = "SEED")]
    pub problem_seed: Option<u64>,
    /// Explicit step size; overrides --rule.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Step-size rule: ThmMinibatchRR, ThmLocalRR, ThmMinibatchRRSync, ThmLocalRRSync.
    #[arg(long, value_name = "RULE")]
    pub rule: Option<StepRule>,
    /// Use synchronized shuffling.
    #[arg(long)]
    pub sync_shuf: bool,
    /// Base seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// final_only, per_epoch or per_round.
    #[arg(long, value_name = "MODE")]
    pub record: Option<String>,
    /// Allow B = N for minibatch RR and B = 1 for local RR.
    #[arg(long)]
    pub allow_degenerate_batch: bool,
    /// Starting point, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Swept parameter: M, N, K or B.
    #[arg(long)]
    pub axis: Option<String>,
    /// Axis values, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<usize>>,
    /// Trials per point.
    #[arg(long)]
    pub trials: Option<usize>,
    /// mean_suboptimality, mean_abs_iterate or second_moment.
    #[arg(long)]
    pub measure: Option<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// T1, T2, T5, T6 (upper) or T3, T4, P1 (lower).
    #[arg(long)]
    pub theorem: Theorem,
    #[arg(long = "L", value_name = "L")]
    pub l: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long = "M", value_name = "M")]
    pub machines: Option<u64>,
    #[arg(long = "N", value_name = "N")]
    pub components: Option<u64>,
    #[arg(long = "K", value_name = "K")]
    pub epochs: Option<u64>,
    #[arg(long = "B", value_name = "B")]
    pub batch: Option<u64>,
    /// Failure probability of the explicit bound.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Initial gap F(x0) - F*.
    #[arg(long)]
    pub f0_gap: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ConcentrationArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long = "M", value_name = "M")]
    pub machines: Option<usize>,
    /// Population size per machine.
    #[arg(long = "N", value_name = "N")]
    pub population: Option<usize>,
    /// Sample size drawn without replacement.
    #[arg(long = "n", value_name = "n")]
    pub n: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Deviation radius.
    #[arg(long)]
    pub nu: Option<f64>,
    /// 1 uses ±nu signs; larger draws random vectors.
    #[arg(long)]
    pub dim: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// phi_vs_sim, hetero_vs_sim or brute_force_epoch.
    #[arg(long)]
    pub check: OracleCheck,
    #[arg(long = "N", value_name = "N")]
    pub components: Option<usize>,
    #[arg(long = "B", value_name = "B")]
    pub batch: Option<usize>,
    #[arg(long = "M", value_name = "M")]
    pub machines: Option<usize>,
    #[arg(long = "K", value_name = "K")]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long = "L", value_name = "L")]
    pub l: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

// ---------------------------------------------------------------------------
// Config schema

/// Axis section of a sweep config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: Axis,
    pub values: Vec<usize>,
    pub trials: usize,
    #[serde(default)]
    pub measure: Measure,
}

/// Config file schema shared by `run` and `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: String,
    #[serde(rename = "M")]
    pub machines: usize,
    #[serde(rename = "N")]
    pub components: usize,
    #[serde(rename = "K")]
    pub epochs: usize,
    #[serde(rename = "B")]
    pub batch: usize,
    /// `{"explicit": η}` or `{"rule": "ThmLocalRR"}`; resolved to the
    /// algorithm's default rule when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_size: Option<StepSize>,
    #[serde(default)]
    pub sync_shuf: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub record: Record,
    #[serde(default)]
    pub allow_degenerate_batch: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    pub problem: ProblemSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

impl ExperimentConfig {
    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            algorithm: self.algorithm.clone(),
            machines: self.machines,
            components: self.components,
            epochs: self.epochs,
            batch: self.batch,
            step_size: self.step_size,
            sync_shuf: self.sync_shuf,
            seed: self.seed,
            record: self.record,
            allow_degenerate_batch: self.allow_degenerate_batch,
            x0: self.x0.clone(),
        }
    }
}

/// Flags that set each schema field, keyed by dotted field path.
pub const FIELD_FLAGS: &[(&str, &[&str])] = &[
    ("algorithm", &["--algorithm"]),
    ("M", &["--M"]),
    ("N", &["--N"]),
    ("K", &["--K"]),
    ("B", &["--B"]),
    ("step_size", &["--eta", "--rule"]),
    ("sync_shuf", &["--sync-shuf"]),
    ("seed", &["--seed"]),
    ("record", &["--record"]),
    ("allow_degenerate_batch", &["--allow-degenerate-batch"]),
    ("x0", &["--x0"]),
    ("problem.kind", &["--problem"]),
    ("problem.L", &["--L"]),
    ("problem.mu", &["--mu"]),
    ("problem.nu", &["--nu"]),
    ("problem.tau", &["--tau"]),
    ("problem.dim", &["--dim"]),
    ("problem.seed", &["--problem-seed"]),
    ("sweep.axis", &["--axis"]),
    ("sweep.values", &["--values"]),
    ("sweep.trials", &["--trials"]),
    ("sweep.measure", &["--measure"]),
];

/// Parameters of `verify-concentration`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConcentrationConfig {
    #[serde(rename = "M")]
    pub machines: usize,
    #[serde(rename = "N")]
    pub population: usize,
    pub n: usize,
    pub delta: f64,
    pub trials: u64,
    pub seed: u64,
    pub nu: f64,
    pub dim: usize,
}

impl Default for ConcentrationConfig {
    fn default() -> Self {
        ConcentrationConfig { machines: 1, population: 8, n: 4, delta: 0.05, trials: 100_000, seed: 0, nu: 1.0, dim: 1 }
    }
}

// ---------------------------------------------------------------------------
// Document assembly

fn set_path(doc: &mut Value, path: &str, value: Value) {
    let mut cur = doc;
    let mut parts = path.split('.').peekable();
    while let Some(part) = parts.next() {
        if !cur.is_object() {
            *cur = Value::Object(Map::new());
        }
        let map = cur.as_object_mut().expect("just made an object");
        if parts.peek().is_none() {
            map.insert(part.to_string(), value);
            return;
        }
        cur = map.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Reads a JSON object from `path`.
pub fn read_config_file(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })?;
    if !value.is_object() {
        return Err(Error::Parse { path: path.to_path_buf(), message: "top level must be a JSON object".into() });
    }
    Ok(value)
}

fn parse_override(item: &str) -> Result<(String, Value)> {
    let (key, raw) = item.split_once('=').ok_or_else(|| Error::Config {
        path: item.to_string(),
        message: "overrides take the form key=value".into(),
    })?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.trim().to_string(), value))
}

/// Merges file, flag and override layers into one document.
pub fn layered_document(args: &ConfigArgs, flags: Value) -> Result<Value> {
    let mut doc = match &args.config {
        Some(path) => read_config_file(path)?,
        None => Value::Object(Map::new()),
    };
    merge(&mut doc, flags);
    for item in &args.set {
        let (key, value) = parse_override(item)?;
        set_path(&mut doc, &key, value);
    }
    Ok(doc)
}

/// Deserializes `doc`, naming the offending field on failure.
pub fn from_document<T: DeserializeOwned>(doc: Value) -> Result<T> {
    serde_path_to_error::deserialize(doc).map_err(|e| Error::Config {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

fn opt<T: Serialize>(doc: &mut Value, path: &str, value: &Option<T>) {
    if let Some(v) = value {
        set_path(doc, path, serde_json::to_value(v).expect("flag values serialize"));
    }
}

fn experiment_flags(a: &ExperimentArgs) -> Value {
    let mut doc = json!({});
    opt(&mut doc, "algorithm", &a.algorithm);
    opt(&mut doc, "M", &a.machines);
    opt(&mut doc, "N", &a.components);
    opt(&mut doc, "K", &a.epochs);
    opt(&mut doc, "B", &a.batch);
    if let Some(rule) = a.rule {
        set_path(&mut doc, "step_size", json!({ "rule": rule }));
    }
    if let Some(eta) = a.eta {
        set_path(&mut doc, "step_size", json!({ "explicit": eta }));
    }
    if a.sync_shuf {
        set_path(&mut doc, "sync_shuf", Value::Bool(true));
    }
    opt(&mut doc, "seed", &a.seed);
    opt(&mut doc, "record", &a.record);
    if a.allow_degenerate_batch {
        set_path(&mut doc, "allow_degenerate_batch", Value::Bool(true));
    }
    opt(&mut doc, "x0", &a.x0);
    opt(&mut doc, "problem.kind", &a.problem);
    opt(&mut doc, "problem.L", &a.l);
    opt(&mut doc, "problem.mu", &a.mu);
    opt(&mut doc, "problem.nu", &a.nu);
    opt(&mut doc, "problem.tau", &a.tau);
    opt(&mut doc, "problem.dim", &a.dim);
    opt(&mut doc, "problem.seed", &a.problem_seed);
    doc
}

/// A validated experiment with its step size filled in.
pub struct ResolvedExperiment {
    pub config: ExperimentConfig,
    pub problem: Arc<dyn Problem>,
    pub eta: f64,
}

impl std::fmt::Debug for ResolvedExperiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ResolvedExperiment")
            .field("config", &self.config)
            .field("problem", &self.problem.name())
            .field("eta", &self.eta)
            .finish()
    }
}

/// Resolves a `run`/`sweep` document: applies defaults, builds the problem
/// and validates the configuration.
pub fn resolve_experiment(mut doc: Value) -> Result<ResolvedExperiment> {
    // a swept field may be omitted; its first value stands in for validation
    let axis = doc.pointer("/sweep/axis").and_then(Value::as_str).map(str::to_string);
    let first = doc.pointer("/sweep/values/0").cloned();
    if let (Some(axis), Some(first)) = (axis, first) {
        if doc.get(&axis).is_none() {
            set_path(&mut doc, &axis, first);
        }
    }
    let mut config: ExperimentConfig = from_document(doc)?;
    let problem = ProblemRegistry::default()
        .build(&config.problem, config.machines, config.components)
        .map_err(|e| Error::Config { path: "problem".into(), message: e.to_string() })?;
    let registry = AlgorithmRegistry::default();
    registry.validate(problem.as_ref(), &config.run_config())?;
    if config.step_size.is_none() {
        config.step_size = Some(match registry.default_rule(&config.run_config())? {
            Some(rule) => StepSize::Rule(rule),
            None => StepSize::Explicit(registry.resolve_eta(problem.as_ref(), &config.run_config())?),
        });
    }
    let eta = registry.resolve_eta(problem.as_ref(), &config.run_config())?;
    Ok(ResolvedExperiment { config, problem, eta })
}

/// Reads and resolves a `run`/`sweep` config file.
pub fn load_config(path: &Path) -> Result<ResolvedExperiment> {
    resolve_experiment(read_config_file(path)?)
}

/// The sweep described by a resolved experiment with a sweep section.
pub fn sweep_spec(config: &ExperimentConfig) -> Result<SweepSpec> {
    let s = config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config { path: "sweep".into(), message: "sweep needs --axis, --values and --trials".into() })?;
    Ok(SweepSpec {
        base: config.run_config(),
        problem: config.problem.clone(),
        axis: s.axis,
        values: s.values.clone(),
        trials: s.trials,
        seed: config.seed,
        measure: s.measure,
    })
}

// ---------------------------------------------------------------------------
// Subcommands

fn output_format(output: &OutputArgs, path: &Path) -> Result<Format> {
    match &output.format {
        Some(f) => f.parse(),
        None => Ok(Format::from_path(path)),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("documents serialize");
    s.push('\n');
    s
}

fn echo_config(out: &mut dyn Write, config: &impl Serialize) -> Result<()> {
    let line = serde_json::to_string(config).expect("configs serialize");
    writeln!(out, "config: {line}").map_err(stdout_err)
}

fn stdout_err(source: std::io::Error) -> Error {
    Error::Io { path: PathBuf::from("<stdout>"), source }
}

fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> Result<u8> {
    let doc = layered_document(&args.experiment.config, experiment_flags(&args.experiment))?;
    let resolved = resolve_experiment(doc)?;
    echo_config(out, &resolved.config)?;
    let run_config = resolved.config.run_config();
    let outcome = AlgorithmRegistry::default().run(resolved.problem.as_ref(), &run_config);
    let (document, code) = match outcome {
        Ok(result) => {
            writeln!(out, "eta: {}", result.eta).map_err(stdout_err)?;
            writeln!(out, "final suboptimality: {}", result.suboptimality.last().copied().unwrap_or(f64::NAN))
                .map_err(stdout_err)?;
            writeln!(out, "gradient evaluations: {}", result.gradient_evaluations).map_err(stdout_err)?;
            writeln!(out, "communication rounds: {}", result.communication_rounds).map_err(stdout_err)?;
            (json!({ "config": resolved.config, "eta": resolved.eta, "status": "completed", "result": result }), EXIT_OK)
        }
        Err(Error::Diverged { epoch }) => {
            writeln!(out, "diverged during epoch {epoch}").map_err(stdout_err)?;
            let code = if args.output.strict { EXIT_DIVERGED } else { EXIT_OK };
            (json!({ "config": resolved.config, "eta": resolved.eta, "status": "diverged", "epoch": epoch }), code)
        }
        Err(e) => return Err(e),
    };
    if let Some(path) = &args.output.out {
        match output_format(&args.output, path)? {
            Format::Json => write_file(path, &pretty(&document))?,
            Format::Csv => {
                let mut csv = String::from("index,suboptimality\n");
                if let Some(trace) = document.pointer("/result/suboptimality").and_then(Value::as_array) {
                    for (i, v) in trace.iter().enumerate() {
                        csv.push_str(&format!("{i},{v}\n"));
                    }
                }
                write_file(path, &csv)?;
                write_file(&harness::sidecar_path(path), &pretty(&document))?;
            }
        }
    }
    Ok(code)
}

fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<u8> {
    let mut flags = experiment_flags(&args.experiment);
    opt(&mut flags, "sweep.axis", &args.axis);
    opt(&mut flags, "sweep.values", &args.values);
    opt(&mut flags, "sweep.trials", &args.trials);
    opt(&mut flags, "sweep.measure", &args.measure);
    let doc = layered_document(&args.experiment.config, flags)?;
    let resolved = resolve_experiment(doc)?;
    let spec = sweep_spec(&resolved.config)?;
    echo_config(out, &spec)?;
    let result = harness::run_sweep(&spec)?;
    for p in &result.points {
        writeln!(
            out,
            "{}={} mean={} stderr={} trials={} diverged={}",
            result.axis,
            p.value,
            p.mean.map_or("-".into(), |v| format!("{v:?}")),
            p.stderr.map_or("-".into(), |v| format!("{v:?}")),
            p.trials,
            p.diverged
        )
        .map_err(stdout_err)?;
    }
    match result.fit {
        Some(f) => writeln!(out, "slope: {} ± {} (r² = {})", f.slope, f.slope_stderr, f.r_squared),
        None => writeln!(out, "slope: not fitted"),
    }
    .map_err(stdout_err)?;
    writeln!(out, "spec hash: {}", result.spec_hash).map_err(stdout_err)?;
    if let Some(path) = &args.output.out {
        harness::persist(&result, path, output_format(&args.output, path)?)?;
    }
    let diverged = result.points.iter().any(|p| p.diverged > 0);
    Ok(if diverged && args.output.strict { EXIT_DIVERGED } else { EXIT_OK })
}

fn cmd_bounds(args: &BoundsArgs, out: &mut dyn Write) -> Result<u8> {
    let mut flags = json!({});
    opt(&mut flags, "L", &args.l);
    opt(&mut flags, "mu", &args.mu);
    opt(&mut flags, "nu", &args.nu);
    opt(&mut flags, "tau", &args.tau);
    opt(&mut flags, "rho", &args.rho);
    opt(&mut flags, "lambda", &args.lambda);
    opt(&mut flags, "M", &args.machines);
    opt(&mut flags, "N", &args.components);
    opt(&mut flags, "K", &args.epochs);
    opt(&mut flags, "B", &args.batch);
    opt(&mut flags, "delta", &args.delta);
    opt(&mut flags, "f0_gap", &args.f0_gap);
    let params: RateParams = from_document(layered_document(&args.config, flags)?)?;
    echo_config(out, &params)?;
    let document = match args.theorem {
        Theorem::Upper(t) => {
            let eta = rates::step_size(t.step_rule(), &params)?;
            let b = rates::upper_bound(t, &params)?;
            writeln!(out, "eta: {eta}").map_err(stdout_err)?;
            writeln!(out, "epoch threshold: {}", b.epoch_threshold).map_err(stdout_err)?;
            writeln!(out, "order bound: {}", b.order).map_err(stdout_err)?;
            writeln!(out, "explicit bound: {}", b.explicit).map_err(stdout_err)?;
            writeln!(out, "in regime: {}", b.in_regime).map_err(stdout_err)?;
            json!({ "theorem": format!("{t:?}"), "params": params, "eta": eta, "bound": b })
        }
        Theorem::Lower(t) => {
            let lb = rates::lower_bound(t, &params)?;
            writeln!(out, "lower bound: {lb}").map_err(stdout_err)?;
            json!({ "theorem": format!("{t:?}"), "params": params, "lower_bound": lb })
        }
    };
    if let Some(path) = &args.output.out {
        write_file(path, &pretty(&document))?;
    }
    Ok(EXIT_OK)
}

fn cmd_concentration(args: &ConcentrationArgs, out: &mut dyn Write) -> Result<u8> {
    let mut flags = json!({});
    opt(&mut flags, "M", &args.machines);
    opt(&mut flags, "N", &args.population);
    opt(&mut flags, "n", &args.n);
    opt(&mut flags, "delta", &args.delta);
    opt(&mut flags, "trials", &args.trials);
    opt(&mut flags, "seed", &args.seed);
    opt(&mut flags, "nu", &args.nu);
    opt(&mut flags, "dim", &args.dim);
    let c: ConcentrationConfig = from_document(layered_document(&args.config, flags)?)?;
    echo_config(out, &c)?;
    let vectors = if c.dim <= 1 {
        sign_population(c.machines, c.population, c.nu)
    } else {
        random_population(c.machines, c.population, c.dim, c.nu, &mut ChaCha8Rng::seed_from_u64(c.seed))
    };
    let spec = WithoutReplacementSpec::new(vectors, c.n, c.nu, c.delta)?;
    let report = mc_violation_rate(&spec, c.trials, c.seed)?;
    writeln!(out, "bound: {}", report.bound).map_err(stdout_err)?;
    writeln!(out, "violation rate: {} ({}/{}, stderr {})", report.rate, report.violations, report.trials, report.stderr)
        .map_err(stdout_err)?;
    writeln!(out, "{}", if report.pass { "PASS" } else { "FAIL" }).map_err(stdout_err)?;
    if let Some(path) = &args.output.out {
        write_file(path, &pretty(&json!({ "params": c, "report": report })))?;
    }
    Ok(if report.pass { EXIT_OK } else { EXIT_FAILURE })
}

/// Tolerance for agreement between exact values.
pub const ORACLE_EXACT_TOLERANCE: f64 = 1e-10;
/// Allowed Monte-Carlo deviation in standard errors.
pub const ORACLE_Z_LIMIT: f64 = 4.0;

fn cmd_oracle(args: &OracleArgs, out: &mut dyn Write) -> Result<u8> {
    let mut flags = json!({});
    opt(&mut flags, "N", &args.components);
    opt(&mut flags, "B", &args.batch);
    opt(&mut flags, "M", &args.machines);
    opt(&mut flags, "K", &args.epochs);
    opt(&mut flags, "eta", &args.eta);
    opt(&mut flags, "L", &args.l);
    opt(&mut flags, "mu", &args.mu);
    opt(&mut flags, "nu", &args.nu);
    opt(&mut flags, "tau", &args.tau);
    opt(&mut flags, "x0", &args.x0);
    opt(&mut flags, "trials", &args.trials);
    opt(&mut flags, "seed", &args.seed);
    let params: OracleParams = from_document(layered_document(&args.config, flags)?)?;
    echo_config(out, &params)?;
    let report = harness::oracle_cross_check(args.check, &params)?;
    writeln!(out, "closed form: {}", report.closed_form).map_err(stdout_err)?;
    if let Some(e) = report.enumeration {
        writeln!(out, "enumeration: {e}").map_err(stdout_err)?;
    }
    writeln!(out, "simulation: {} ± {}", report.simulation.mean, report.simulation.stderr).map_err(stdout_err)?;
    writeln!(out, "max abs discrepancy: {}", report.max_abs_discrepancy).map_err(stdout_err)?;
    let pass = report.max_abs_discrepancy <= ORACLE_EXACT_TOLERANCE && report.z_score.is_none_or(|z| z <= ORACLE_Z_LIMIT);
    writeln!(out, "{}", if pass { "PASS" } else { "FAIL" }).map_err(stdout_err)?;
    if let Some(path) = &args.output.out {
        write_file(path, &pretty(&json!({ "check": args.check, "params": params, "report": report })))?;
    }
    Ok(if pass { EXIT_OK } else { EXIT_FAILURE })
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config { path: THREADS_ENV.into(), message: format!("expected a thread count, got `{v}`") }),
        _ => Ok(None),
    }
}

fn dispatch(cli: &Cli, out: &mut (dyn Write + Send)) -> Result<u8> {
    match &cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::Bounds(a) => cmd_bounds(a, out),
        Command::VerifyConcentration(a) => cmd_concentration(a, out),
        Command::Oracle(a) => cmd_oracle(a, out),
    }
}

/// Exit status for an error that escaped a subcommand.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Diverged { .. } => EXIT_DIVERGED,
        Error::Io { .. } => EXIT_FAILURE,
        _ => EXIT_CONFIG,
    }
}

/// Parses `argv` (program name first), runs the subcommand writing its
/// report to `out`, and returns the exit status.
pub fn main<I, T>(argv: I, out: &mut (dyn Write + Send)) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = thread_count(cli.threads).and_then(|threads| {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            builder = builder.num_threads(n);
        }
        let pool = builder.build().map_err(|e| Error::invalid(format!("cannot start thread pool: {e}")))?;
        pool.install(|| dispatch(&cli, out))
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use crate::rates::StepRule;

    fn call(args: &[&str]) -> (u8, String) {
        let mut out = Vec::new();
        let code = main(std::iter::once("shuffle-fl").chain(args.iter().copied()), &mut out);
        (code, String::from_utf8(out).unwrap())
    }

    fn write_json(dir: &Path, name: &str, v: &Value) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, v.to_string()).unwrap();
        p
    }

    fn leaf_keys(v: &Value, prefix: &str, out: &mut Vec<String>) {
        if let Value::Object(map) = v {
            for (k, child) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                if child.is_object() && k != "step_size" {
                    leaf_keys(child, &key, out);
                } else {
                    out.push(key);
                }
            }
        }
    }

    #[test]
    fn help_covers_every_schema_field() {
        let full = ExperimentConfig {
            algorithm: "local-rr".into(),
            machines: 2,
            components: 8,
            epochs: 4,
            batch: 2,
            step_size: Some(StepSize::Explicit(0.1)),
            sync_shuf: true,
            seed: 1,
            record: Record::PerEpoch,
            allow_degenerate_batch: true,
            x0: Some(vec![0.0]),
            problem: ProblemSpec::new("f2", 1.0, 1.0, 1.0),
            sweep: Some(SweepSection { axis: Axis::M, values: vec![1], trials: 1, measure: Measure::SecondMoment }),
        };
        let mut keys = Vec::new();
        leaf_keys(&serde_json::to_value(&full).unwrap(), "", &mut keys);
        let mut cmd = Cli::command();
        cmd.build();
        let run_help = cmd.find_subcommand_mut("run").unwrap().render_long_help().to_string();
        let sweep_help = cmd.find_subcommand_mut("sweep").unwrap().render_long_help().to_string();
        for key in &keys {
            let flags = FIELD_FLAGS.iter().find(|(k, _)| k == key).unwrap_or_else(|| panic!("no flag for `{key}`")).1;
            for flag in flags {
                assert!(sweep_help.contains(flag), "sweep --help lacks {flag}");
                if !key.starts_with("sweep.") {
                    assert!(run_help.contains(flag), "run --help lacks {flag}");
                }
            }
        }
        assert_eq!(keys.len(), FIELD_FLAGS.len());
        for help in [&run_help, &sweep_help] {
            for flag in ["--config", "--set", "--out", "--format", "--strict", "--threads"] {
                assert!(help.contains(flag), "{flag}");
            }
        }
    }

    #[test]
    fn minimal_file_defaults_to_theorem_rule() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_json(
            dir.path(),
            "c.json",
            &json!({"algorithm":"local-rr","M":2,"N":8,"K":16,"B":2,"seed":0,"problem":{"kind":"f2","L":10,"mu":1,"nu":1}}),
        );
        let r = load_config(&p).unwrap();
        assert_eq!(r.config.step_size, Some(StepSize::Rule(StepRule::ThmLocalRR)));
        assert_eq!(r.config.record, Record::FinalOnly);
        assert!(!r.config.sync_shuf);
        assert!(r.eta > 0.0);
    }

    #[test]
    fn divisibility_errors() {
        let dir = tempfile::tempdir().unwrap();
        let base = json!({"algorithm":"minibatch-rr","M":2,"N":8,"K":4,"B":3,"problem":{"kind":"f3"}});
        let err = load_config(&write_json(dir.path(), "a.json", &base)).unwrap_err();
        assert!(err.to_string().contains("B must divide N"), "{err}");
        assert_eq!(exit_code(&err), EXIT_CONFIG);
        let sync = json!({"algorithm":"minibatch-rr","M":3,"N":8,"K":4,"B":2,"sync_shuf":true,"problem":{"kind":"f3"}});
        let err = load_config(&write_json(dir.path(), "b.json", &sync)).unwrap_err();
        assert!(err.to_string().contains("M must divide N under SyncShuf"), "{err}");
    }

    #[test]
    fn schema_errors_name_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let bad = json!({"algorithm":"local-rr","M":2,"N":8,"K":16,"B":2,"problem":{"kind":"f2","L":"ten"}});
        let err = load_config(&write_json(dir.path(), "a.json", &bad)).unwrap_err();
        assert!(matches!(&err, Error::Config { path, .. } if path == "problem.L"), "{err}");
        let unknown = json!({"algorithm":"local-rr","M":2,"N":8,"K":16,"B":2,"typo":1,"problem":{"kind":"f2"}});
        let err = load_config(&write_json(dir.path(), "b.json", &unknown)).unwrap_err();
        assert!(err.to_string().contains("typo"), "{err}");
        let (code, _) = call(&["run", "--config", dir.path().join("a.json").to_str().unwrap()]);
        assert_eq!(code, EXIT_CONFIG);
    }

    #[test]
    fn overrides_beat_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_json(
            dir.path(),
            "c.json",
            &json!({"algorithm":"local-rr","M":2,"N":8,"K":16,"B":2,"problem":{"kind":"f2","L":10}}),
        );
        let args = ConfigArgs { config: Some(p), set: vec!["problem.L=4".into(), "K=3".into()] };
        let doc = layered_document(&args, json!({"K": 5, "seed": 9})).unwrap();
        let r = resolve_experiment(doc).unwrap();
        assert_eq!(r.config.problem.l, 4.0);
        assert_eq!(r.config.epochs, 3);
        assert_eq!(r.config.seed, 9);
    }

    #[test]
    fn unknown_flag_is_a_usage_error() {
        assert_eq!(call(&["run", "--bogus"]).0, EXIT_CONFIG);
        assert_eq!(call(&["frobnicate"]).0, EXIT_CONFIG);
    }

    #[test]
    fn run_echoes_config_and_writes_json() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run.json");
        let (code, text) = call(&[
            "run", "--problem", "f3", "--algorithm", "minibatch-rr", "--M", "2", "--N", "8", "--K", "4", "--B", "2",
            "--L", "2", "--out", out.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_OK, "{text}");
        assert!(text.starts_with("config: {"));
        let doc: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(doc["config"]["step_size"]["rule"], "ThmMinibatchRR");
        assert_eq!(doc["status"], "completed");
        // the echoed config reproduces the run
        let replay = write_json(dir.path(), "replay.json", &doc["config"]);
        let out2 = dir.path().join("run2.json");
        call(&["run", "--config", replay.to_str().unwrap(), "--out", out2.to_str().unwrap()]);
        assert_eq!(fs::read(&out).unwrap(), fs::read(&out2).unwrap());
    }

    #[test]
    fn strict_divergence_exits_three() {
        let args = ["run", "--problem", "f3", "--algorithm", "gd", "--M", "1", "--N", "2", "--K", "200", "--B", "1", "--eta", "5", "--x0", "1"];
        assert_eq!(call(&args).0, EXIT_OK);
        let mut strict = args.to_vec();
        strict.push("--strict");
        let (code, text) = call(&strict);
        assert_eq!(code, EXIT_DIVERGED);
        assert!(text.contains("diverged"));
    }

    #[test]
    fn sweep_writes_csv_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("m.csv");
        let (code, text) = call(&[
            "--threads", "2", "sweep", "--problem", "f3", "--axis", "M", "--values", "1,2,4", "--algorithm",
            "minibatch-rr", "--K", "8", "--N", "8", "--B", "2", "--trials", "20", "--seed", "7", "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_OK, "{text}");
        let csv = fs::read_to_string(&out).unwrap();
        assert_eq!(csv.lines().count(), 4);
        let r = harness::load_result(&out, Format::Csv).unwrap();
        assert_eq!(r.points.len(), 3);
        assert!(r.fit.is_some());
        assert_eq!(r.seed, 7);
    }

    #[test]
    fn sweep_rejects_bad_point() {
        let (code, _) = call(&[
            "sweep", "--problem", "f3", "--axis", "B", "--values", "2,3", "--algorithm", "minibatch-rr", "--M", "1",
            "--K", "8", "--N", "8", "--trials", "2",
        ]);
        assert_eq!(code, EXIT_CONFIG);
    }

    #[test]
    fn bounds_prints_eta_threshold_and_order() {
        let (code, text) =
            call(&["bounds", "--theorem", "T1", "--L", "1", "--mu", "1", "--nu", "1", "--M", "4", "--N", "16", "--K", "256", "--B", "2"]);
        assert_eq!(code, EXIT_OK);
        let p = RateParams { machines: 4, components: 16, epochs: 256, batch: 2, ..RateParams::default() };
        let eta = rates::step_size(StepRule::ThmMinibatchRR, &p).unwrap();
        assert!(text.contains(&format!("eta: {eta}")), "{text}");
        assert!(text.contains("epoch threshold: "));
        assert!(text.contains("order bound: "));
        let (code, text) = call(&["bounds", "--theorem", "T3", "--L", "4", "--N", "8", "--K", "64", "--B", "2"]);
        assert_eq!(code, EXIT_OK);
        assert!(text.contains("lower bound: "));
        assert_eq!(call(&["bounds", "--theorem", "T9"]).0, EXIT_CONFIG);
    }

    #[test]
    fn verify_concentration_reports_verdict() {
        let (code, text) =
            call(&["verify-concentration", "--M", "2", "--N", "10", "--n", "5", "--delta", "0.05", "--trials", "20000", "--seed", "1"]);
        assert_eq!(code, EXIT_OK, "{text}");
        assert!(text.contains("bound: "));
        assert!(text.trim_end().ends_with("PASS"));
    }

    #[test]
    fn oracle_subcommand() {
        let (code, text) = call(&["oracle", "--check", "brute_force_epoch", "--N", "4", "--B", "2", "--eta", "0.1", "--trials", "2000"]);
        assert_eq!(code, EXIT_OK, "{text}");
        assert!(text.contains("enumeration: "));
        let (code, _) = call(&["oracle", "--check", "brute_force_epoch", "--N", "8", "--B", "2"]);
        assert_eq!(code, EXIT_CONFIG);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(call(&["sweep", "--help"]).0, EXIT_OK);
    }
}

//! Parameter sweeps, trial aggregation, log-log fitting, exact-oracle
//! cross-checks and result persistence.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algorithms::{minibatch_rr_epoch, AlgorithmRegistry, RunConfig};
use crate::problem::{make_skewed_quadratic_1d, ProblemRegistry, ProblemSpec, SkewKind};
use crate::rates::{hetero_closed_form, hetero_trajectory, phi_closed_form};
use crate::shuffle::{Permutation, PermutationSet};
use crate::{Error, Result};

/// Trial fraction above which a point's divergences exclude it from the fit.
pub const DIVERGED_FRACTION_LIMIT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    M,
    N,
    K,
    B,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "M" | "m" => Ok(Axis::M),
            "N" | "n" => Ok(Axis::N),
            "K" | "k" => Ok(Axis::K),
            "B" | "b" => Ok(Axis::B),
            _ => Err(Error::UnknownName { kind: "axis", name: s.into(), available: "M, N, K, B".into() }),
        }
    }
}

/// Per-trial quantity averaged at each sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// `F(x_final) − F*`.
    #[default]
    MeanSuboptimality,
    /// `‖x_final‖`.
    MeanAbsIterate,
    /// `‖x_final‖²`.
    SecondMoment,
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "mean_suboptimality" => Ok(Measure::MeanSuboptimality),
            "mean_abs_iterate" => Ok(Measure::MeanAbsIterate),
            "second_moment" => Ok(Measure::SecondMoment),
            _ => Err(Error::UnknownName {
                kind: "measure",
                name: s.into(),
                available: "mean_suboptimality, mean_abs_iterate, second_moment".into(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Configuration shared by every point; the swept field is overwritten.
    pub base: RunConfig,
    pub problem: ProblemSpec,
    pub axis: Axis,
    pub values: Vec<usize>,
    pub trials: usize,
    /// Trial `t` runs with seed `seed + t`.
    pub seed: u64,
    #[serde(default)]
    pub measure: Measure,
}

impl SweepSpec {
    /// Configuration of the point with axis value `value`.
    pub fn point_config(&self, value: usize) -> RunConfig {
        let mut c = self.base.clone();
        match self.axis {
            Axis::M => c.machines = value,
            Axis::N => c.components = value,
            Axis::K => c.epochs = value,
            Axis::B => c.batch = value,
        }
        c
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("sweep specs always serialize");
        hex::encode(Sha256::digest(&json))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: usize,
    /// `None` when every trial diverged.
    pub mean: Option<f64>,
    /// Sample standard deviation over `√trials`.
    pub stderr: Option<f64>,
    /// Completed (non-diverged) trials.
    pub trials: usize,
    pub diverged: usize,
    pub in_fit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: Axis,
    pub points: Vec<SweepPoint>,
    /// `None` when fewer than three points are usable.
    pub fit: Option<LogLogFit>,
    pub spec_hash: String,
    pub seed: u64,
    pub spec: SweepSpec,
}

/// Sum in a fixed binary-tree order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => pairwise_sum(&values[..n / 2]) + pairwise_sum(&values[n / 2..]),
    }
}

/// Mean and standard error `s/√n` with pairwise sums; `None` for no samples.
pub fn mean_and_stderr(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    let var = pairwise_sum(&sq) / (n - 1.0);
    Some((mean, (var / n).sqrt()))
}

/// Least-squares line through `(ln x, ln y)`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<LogLogFit> {
    if points.len() < 3 {
        return Err(Error::invalid(format!("a log-log fit needs at least 3 points, got {}", points.len())));
    }
    if let Some((x, y)) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0) || !x.is_finite() || !y.is_finite()) {
        return Err(Error::invalid(format!("log-log fit needs positive finite values, got ({x}, {y})")));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("log-log fit needs at least two distinct x values"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let ss_tot: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let slope_stderr = (ss_res / (n - 2.0) / sxx).sqrt();
    Ok(LogLogFit { slope, intercept, slope_stderr, r_squared })
}

fn measure_of(measure: Measure, result: &crate::algorithms::RunResult) -> f64 {
    let sq: f64 = result.final_x.iter().map(|v| v * v).sum();
    match measure {
        Measure::MeanSuboptimality => *result.suboptimality.last().expect("runs record at least one value"),
        Measure::MeanAbsIterate => sq.sqrt(),
        Measure::SecondMoment => sq,
    }
}

/// Runs every point of the sweep. Trials execute in parallel; results are
/// gathered in trial order and reduced sequentially, so the output does not
/// depend on the thread count.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    if spec.trials == 0 {
        return Err(Error::invalid("a sweep needs at least one trial per point"));
    }
    if spec.values.is_empty() {
        return Err(Error::invalid("a sweep needs at least one axis value"));
    }
    let algorithms = AlgorithmRegistry::default();
    let problems = ProblemRegistry::default();

    let mut prepared = Vec::with_capacity(spec.values.len());
    for &value in &spec.values {
        let config = spec.point_config(value);
        let problem = problems.build(&spec.problem, config.machines, config.components)?;
        algorithms
            .validate(problem.as_ref(), &config)
            .map_err(|e| Error::invalid(format!("sweep point {}={value}: {e}", spec.axis)))?;
        algorithms.resolve_eta(problem.as_ref(), &config)?;
        prepared.push((value, config, problem));
    }

    let mut points = Vec::with_capacity(prepared.len());
    for (value, config, problem) in prepared {
        let outcomes: Vec<Result<Option<f64>>> = (0..spec.trials)
            .into_par_iter()
            .map(|t| {
                let mut c = config.clone();
                c.seed = spec.seed.wrapping_add(t as u64);
                match algorithms.run(problem.as_ref(), &c) {
                    Ok(r) => Ok(Some(measure_of(spec.measure, &r))),
                    Err(Error::Diverged { .. }) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect();
        let mut samples = Vec::with_capacity(spec.trials);
        let mut diverged = 0;
        for o in outcomes {
            match o? {
                Some(v) => samples.push(v),
                None => diverged += 1,
            }
        }
        let stats = mean_and_stderr(&samples);
        let too_many = diverged as f64 > DIVERGED_FRACTION_LIMIT * spec.trials as f64;
        if too_many {
            log::warn!("{}={value}: {diverged}/{} trials diverged; excluded from fit", spec.axis, spec.trials);
        }
        let in_fit = !too_many && stats.is_some_and(|(m, _)| m > 0.0 && m.is_finite());
        log::info!(
            "{}={value} mean={:?} stderr={:?} diverged={diverged}",
            spec.axis,
            stats.map(|s| s.0),
            stats.map(|s| s.1)
        );
        points.push(SweepPoint {
            value,
            mean: stats.map(|s| s.0),
            stderr: stats.map(|s| s.1),
            trials: samples.len(),
            diverged,
            in_fit,
        });
    }

    let usable: Vec<(f64, f64)> =
        points.iter().filter(|p| p.in_fit).map(|p| (p.value as f64, p.mean.expect("in-fit points have a mean"))).collect();
    let fit = if usable.len() >= 3 {
        Some(fit_loglog_slope(&usable)?)
    } else {
        log::warn!("only {} usable sweep points; no slope fitted", usable.len());
        None
    };
    Ok(SweepResult { axis: spec.axis, points, fit, spec_hash: spec.hash(), seed: spec.seed, spec: spec.clone() })
}

// ---------------------------------------------------------------------------
// Exact oracles

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleCheck {
    /// Monte-Carlo epoch second moment on F3 against the Φ closed form.
    PhiVsSim,
    /// Local RR on the heterogeneous construction against its recursion.
    HeteroVsSim,
    /// Exhaustive enumeration against the closed form and Monte-Carlo.
    BruteForceEpoch,
}

impl FromStr for OracleCheck {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "phi_vs_sim" => Ok(OracleCheck::PhiVsSim),
            "hetero_vs_sim" => Ok(OracleCheck::HeteroVsSim),
            "brute_force_epoch" => Ok(OracleCheck::BruteForceEpoch),
            _ => Err(Error::UnknownName {
                kind: "oracle",
                name: s.into(),
                available: "phi_vs_sim, hetero_vs_sim, brute_force_epoch".into(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleParams {
    #[serde(rename = "N")]
    pub components: usize,
    #[serde(rename = "B")]
    pub batch: usize,
    #[serde(rename = "M")]
    pub machines: usize,
    #[serde(rename = "K")]
    pub epochs: usize,
    pub eta: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub mu: f64,
    pub nu: f64,
    pub tau: f64,
    pub x0: f64,
    pub trials: usize,
    pub seed: u64,
}

impl Default for OracleParams {
    fn default() -> Self {
        OracleParams {
            components: 4,
            batch: 2,
            machines: 1,
            epochs: 1,
            eta: 0.1,
            l: 1.0,
            mu: 1.0,
            nu: 1.0,
            tau: 1.0,
            x0: 0.0,
            trials: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub check: OracleCheck,
    /// Closed-form value.
    pub closed_form: f64,
    /// Exhaustive enumeration, when run.
    pub enumeration: Option<f64>,
    /// Simulation, with error bars when random.
    pub simulation: MonteCarloEstimate,
    /// Largest absolute difference between the exact values (closed form,
    /// enumeration, and for deterministic checks every simulated point).
    pub max_abs_discrepancy: f64,
    /// `|simulation − exact| / stderr`, `None` for deterministic checks.
    pub z_score: Option<f64>,
}

pub const MAX_BRUTE_FORCE_COMPONENTS: usize = 6;
pub const MAX_BRUTE_FORCE_MACHINES: usize = 2;

/// All `n!` permutations of `{1, …, n}` in lexicographic order.
pub fn all_permutations(n: usize) -> Vec<Permutation> {
    fn extend(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Permutation>) {
        if prefix.len() == used.len() {
            out.push(Permutation::from_one_based(prefix.iter().map(|i| i + 1).collect()).expect("bijection"));
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                extend(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

/// `(1 − ηL)^{2N/B}·x₀² + η²ν²Φ/(M·B²)`.
pub fn epoch_second_moment_closed_form(p: &OracleParams) -> Result<f64> {
    let alpha = 1.0 - p.eta * p.l;
    let phi = phi_closed_form(p.components, p.batch, alpha)?;
    let b = p.batch as f64;
    Ok(alpha.powi(2 * (p.components / p.batch) as i32) * p.x0 * p.x0
        + p.eta * p.eta * p.nu * p.nu * phi / (p.machines as f64 * b * b))
}

fn f3(p: &OracleParams) -> Result<crate::problem::SkewedQuadratic> {
    make_skewed_quadratic_1d(SkewKind::F3, p.l, p.l, p.nu, p.components, p.machines)
}

/// Exact `E[x]` and `E[x²]` after one minibatch RR epoch on F3 from `x₀`,
/// averaging the simulated endpoint over every tuple of permutations.
pub fn brute_force_epoch(p: &OracleParams) -> Result<(f64, f64)> {
    if p.components > MAX_BRUTE_FORCE_COMPONENTS || p.machines > MAX_BRUTE_FORCE_MACHINES || p.machines == 0 {
        return Err(Error::invalid(format!(
            "brute force needs N <= {MAX_BRUTE_FORCE_COMPONENTS} and 1 <= M <= {MAX_BRUTE_FORCE_MACHINES}"
        )));
    }
    let problem = f3(p)?;
    let perms = all_permutations(p.components);
    let mut tuple = vec![0usize; p.machines];
    let (mut first, mut second, mut count) = (Vec::new(), Vec::new(), 0usize);
    loop {
        let set = PermutationSet::new(tuple.iter().map(|&i| perms[i].clone()).collect(), 1)?;
        let x = minibatch_rr_epoch(&[p.x0], &problem, p.eta, p.batch, &set)?[0];
        first.push(x);
        second.push(x * x);
        count += 1;
        // odometer over permutation indices
        let mut d = 0;
        while d < tuple.len() {
            tuple[d] += 1;
            if tuple[d] < perms.len() {
                break;
            }
            tuple[d] = 0;
            d += 1;
        }
        if d == tuple.len() {
            break;
        }
    }
    Ok((pairwise_sum(&first) / count as f64, pairwise_sum(&second) / count as f64))
}

fn simulated_second_moment(p: &OracleParams) -> Result<MonteCarloEstimate> {
    if p.trials == 0 {
        return Err(Error::invalid("Monte-Carlo needs at least one trial"));
    }
    let problem = f3(p)?;
    let registry = AlgorithmRegistry::default();
    let base = RunConfig::new("minibatch-rr", p.machines, p.components, 1, p.batch)
        .eta(p.eta)
        .start(vec![p.x0])
        .degenerate(true);
    let samples: Vec<f64> = (0..p.trials)
        .into_par_iter()
        .map(|t| {
            let r = registry.run(&problem, &base.clone().seed(p.seed.wrapping_add(t as u64)))?;
            Ok(r.final_x[0] * r.final_x[0])
        })
        .collect::<Result<_>>()?;
    let (mean, stderr) = mean_and_stderr(&samples).expect("at least one trial");
    Ok(MonteCarloEstimate { mean, stderr, trials: p.trials })
}

fn z_score(sim: &MonteCarloEstimate, exact: f64) -> f64 {
    let diff = (sim.mean - exact).abs();
    if sim.stderr > 0.0 {
        diff / sim.stderr
    } else if diff <= 1e-12 * (1.0 + exact.abs()) {
        0.0
    } else {
        f64::INFINITY
    }
}

pub fn oracle_cross_check(check: OracleCheck, p: &OracleParams) -> Result<OracleReport> {
    match check {
        OracleCheck::PhiVsSim => {
            let closed = epoch_second_moment_closed_form(p)?;
            let sim = simulated_second_moment(p)?;
            Ok(OracleReport {
                check,
                closed_form: closed,
                enumeration: None,
                z_score: Some(z_score(&sim, closed)),
                simulation: sim,
                max_abs_discrepancy: 0.0,
            })
        }
        OracleCheck::BruteForceEpoch => {
            let closed = epoch_second_moment_closed_form(p)?;
            let (_, exact) = brute_force_epoch(p)?;
            let sim = simulated_second_moment(p)?;
            Ok(OracleReport {
                check,
                closed_form: closed,
                enumeration: Some(exact),
                z_score: Some(z_score(&sim, exact)),
                simulation: sim,
                max_abs_discrepancy: (closed - exact).abs(),
            })
        }
        OracleCheck::HeteroVsSim => {
            let problem = crate::problem::make_hetero_linear_quadratic(
                p.l.max(2.0 * p.mu),
                p.mu,
                p.tau,
                p.components,
                p.machines.max(2),
            )?;
            let closed = hetero_closed_form(p.mu, p.tau, p.eta, p.batch, p.components, p.epochs, p.x0)?;
            let expected = hetero_trajectory(p.mu, p.tau, p.eta, p.batch, p.components, p.epochs, p.x0)?;
            let sim = hetero_sync_points(&problem, p)?;
            let max = expected.iter().zip(&sim).map(|(a, b)| (a - b).abs()).fold((closed - expected[expected.len() - 1]).abs(), f64::max);
            Ok(OracleReport {
                check,
                closed_form: closed,
                enumeration: None,
                simulation: MonteCarloEstimate { mean: *sim.last().expect("nonempty"), stderr: 0.0, trials: 1 },
                max_abs_discrepancy: max,
                z_score: None,
            })
        }
    }
}

/// Synchronized iterates of local RR on the heterogeneous construction,
/// starting point included.
pub fn hetero_sync_points(problem: &dyn crate::problem::Problem, p: &OracleParams) -> Result<Vec<f64>> {
    let registry = AlgorithmRegistry::default();
    let config = RunConfig::new("local-rr", problem.machines(), p.components, 0, p.batch)
        .eta(p.eta)
        .seed(p.seed)
        .start(vec![p.x0]);
    let mut y = vec![p.x0];
    let mut out = vec![p.x0];
    let local = registry.get("local-rr")?;
    registry.validate(problem, &config)?;
    for epoch in 1..=p.epochs {
        let ctx = crate::algorithms::EpochContext {
            problem,
            eta: p.eta,
            batch: p.batch,
            seed: p.seed,
            epoch,
            sync_shuf: false,
        };
        local.run_epoch(&ctx, &mut y, &mut |v| {
            out.push(v[0]);
            Ok(())
        })?;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Persistence

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::UnknownName { kind: "format", name: s.into(), available: "csv, json".into() }),
        }
    }
}

impl Format {
    /// Chosen from the file extension, CSV unless it ends in `.json`.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

pub const CSV_HEADER: &str = "axis,value,mean,stderr,trials";

/// Everything a CSV file cannot hold, written next to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    slope: Option<f64>,
    slope_stderr: Option<f64>,
    r_squared: Option<f64>,
    intercept: Option<f64>,
    spec_hash: String,
    seed: u64,
    axis: Axis,
    diverged: Vec<usize>,
    in_fit: Vec<bool>,
    spec: SweepSpec,
}

/// Path of the metadata sidecar of a CSV file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn write(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

pub fn to_csv(result: &SweepResult) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in &result.points {
        out.push_str(&format!("{},{},{},{},{}\n", result.axis, p.value, opt(p.mean), opt(p.stderr), p.trials));
    }
    out
}

pub fn to_json(result: &SweepResult) -> String {
    let mut s = serde_json::to_string_pretty(result).expect("sweep results always serialize");
    s.push('\n');
    s
}

/// Writes `result`; CSV output also writes a JSON sidecar at [`sidecar_path`].
pub fn persist(result: &SweepResult, path: &Path, format: Format) -> Result<()> {
    match format {
        Format::Json => write(path, to_json(result).as_bytes()),
        Format::Csv => {
            write(path, to_csv(result).as_bytes())?;
            let meta = Sidecar {
                slope: result.fit.map(|f| f.slope),
                slope_stderr: result.fit.map(|f| f.slope_stderr),
                r_squared: result.fit.map(|f| f.r_squared),
                intercept: result.fit.map(|f| f.intercept),
                spec_hash: result.spec_hash.clone(),
                seed: result.seed,
                axis: result.axis,
                diverged: result.points.iter().map(|p| p.diverged).collect(),
                in_fit: result.points.iter().map(|p| p.in_fit).collect(),
                spec: result.spec.clone(),
            };
            let mut s = serde_json::to_string_pretty(&meta).expect("metadata always serializes");
            s.push('\n');
            write(&sidecar_path(path), s.as_bytes())
        }
    }
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), message: message.into() }
}

/// Reads back a result written by [`persist`].
pub fn load_result(path: &Path, format: Format) -> Result<SweepResult> {
    let text = read(path)?;
    match format {
        Format::Json => serde_json::from_str(&text).map_err(|e| parse_err(path, e.to_string())),
        Format::Csv => {
            let meta_path = sidecar_path(path);
            let meta: Sidecar =
                serde_json::from_str(&read(&meta_path)?).map_err(|e| parse_err(&meta_path, e.to_string()))?;
            let mut lines = text.lines();
            if lines.next() != Some(CSV_HEADER) {
                return Err(parse_err(path, format!("expected header `{CSV_HEADER}`")));
            }
            let mut points = Vec::new();
            for (row, line) in lines.enumerate() {
                let cols: Vec<&str> = line.split(',').collect();
                if cols.len() != 5 {
                    return Err(parse_err(path, format!("row {}: expected 5 columns", row + 1)));
                }
                let num = |s: &str| -> Result<Option<f64>> {
                    if s.is_empty() {
                        Ok(None)
                    } else {
                        s.parse().map(Some).map_err(|_| parse_err(path, format!("row {}: bad number `{s}`", row + 1)))
                    }
                };
                let int = |s: &str| s.parse::<usize>().map_err(|_| parse_err(path, format!("row {}: bad integer `{s}`", row + 1)));
                points.push(SweepPoint {
                    value: int(cols[1])?,
                    mean: num(cols[2])?,
                    stderr: num(cols[3])?,
                    trials: int(cols[4])?,
                    diverged: *meta.diverged.get(row).ok_or_else(|| parse_err(&meta_path, "too few diverged counts"))?,
                    in_fit: *meta.in_fit.get(row).ok_or_else(|| parse_err(&meta_path, "too few fit flags"))?,
                });
            }
            let fit = match (meta.slope, meta.slope_stderr, meta.r_squared, meta.intercept) {
                (Some(slope), Some(slope_stderr), Some(r_squared), Some(intercept)) => {
                    Some(LogLogFit { slope, intercept, slope_stderr, r_squared })
                }
                _ => None,
            };
            Ok(SweepResult { axis: meta.axis, points, fit, spec_hash: meta.spec_hash, seed: meta.seed, spec: meta.spec })
        }
    }
}

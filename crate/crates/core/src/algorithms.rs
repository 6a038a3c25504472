//! Epoch-structured optimizers behind a common [`Algorithm`] trait.
//!
//! Each epoch function advances a synchronized iterate through one pass of
//! `N/B` communication rounds. [`run`] drives `K` epochs, drawing the
//! epoch-`k` permutations from `(seed, k)` alone so that runs sharing a seed
//! share their trajectory prefix regardless of `K`.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::problem::Problem;
use crate::rates::{self, RateParams, StepRule};
use crate::shuffle::{epoch_permutations, iid_stream, PermutationSet};
use crate::{Error, Result};

/// Iterates beyond this magnitude count as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Step size: an explicit value or a theorem rule evaluated from the
/// problem's constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSize {
    Explicit(f64),
    Rule(StepRule),
}

/// Which suboptimality values a run keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Record {
    /// Only the last iterate.
    #[default]
    FinalOnly,
    /// The initial point and the end of every epoch.
    PerEpoch,
    /// The initial point and every synchronization point.
    PerRound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Registered algorithm name, e.g. `minibatch-rr`.
    pub algorithm: String,
    #[serde(rename = "M")]
    pub machines: usize,
    #[serde(rename = "N")]
    pub components: usize,
    #[serde(rename = "K")]
    pub epochs: usize,
    #[serde(rename = "B")]
    pub batch: usize,
    /// `None` picks the algorithm's default rule.
    pub step_size: Option<StepSize>,
    pub sync_shuf: bool,
    pub seed: u64,
    pub record: Record,
    /// Permits `B = N` for minibatch RR and `B = 1` for local RR.
    pub allow_degenerate_batch: bool,
    /// Starting point; the problem's default when absent.
    pub x0: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn new(algorithm: &str, machines: usize, components: usize, epochs: usize, batch: usize) -> Self {
        RunConfig {
            algorithm: algorithm.to_string(),
            machines,
            components,
            epochs,
            batch,
            step_size: None,
            sync_shuf: false,
            seed: 0,
            record: Record::FinalOnly,
            allow_degenerate_batch: false,
            x0: None,
        }
    }

    pub fn eta(mut self, eta: f64) -> Self {
        self.step_size = Some(StepSize::Explicit(eta));
        self
    }

    pub fn rule(mut self, rule: StepRule) -> Self {
        self.step_size = Some(StepSize::Rule(rule));
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn sync(mut self, on: bool) -> Self {
        self.sync_shuf = on;
        self
    }

    pub fn record(mut self, record: Record) -> Self {
        self.record = record;
        self
    }

    pub fn degenerate(mut self, allow: bool) -> Self {
        self.allow_degenerate_batch = allow;
        self
    }

    pub fn start(mut self, x0: Vec<f64>) -> Self {
        self.x0 = Some(x0);
        self
    }

    /// Rate parameters for this shape with the problem's constants.
    pub fn rate_params(&self, problem: &dyn Problem) -> Result<RateParams> {
        let c = problem
            .constants()
            .ok_or_else(|| Error::invalid(format!("problem `{}` declares no constants; give an explicit step size", problem.name())))?;
        Ok(RateParams {
            l: c.l,
            mu: c.mu,
            nu: c.nu,
            tau: c.tau,
            rho: c.rho,
            lambda: c.lambda.unwrap_or(f64::INFINITY),
            machines: self.machines as u64,
            components: self.components as u64,
            epochs: self.epochs as u64,
            batch: self.batch as u64,
            ..RateParams::default()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    /// `F(iterate) − F*` at the recorded checkpoints.
    pub suboptimality: Vec<f64>,
    pub final_x: Vec<f64>,
    pub epochs_run: usize,
    pub gradient_evaluations: u64,
    pub communication_rounds: u64,
    /// Step size actually used.
    pub eta: f64,
}

/// Per-epoch inputs handed to an [`Algorithm`].
pub struct EpochContext<'a> {
    pub problem: &'a dyn Problem,
    pub eta: f64,
    pub batch: usize,
    pub seed: u64,
    /// 1-based.
    pub epoch: usize,
    pub sync_shuf: bool,
}

impl EpochContext<'_> {
    fn permutations(&self) -> Result<PermutationSet> {
        epoch_permutations(self.seed, self.epoch, self.problem.machines(), self.problem.components(), self.sync_shuf)
    }

    fn iid_streams(&self) -> Vec<ChaCha8Rng> {
        (0..self.problem.machines()).map(|m| iid_stream(self.seed, self.epoch, m)).collect()
    }
}

/// Callback invoked with the synchronized iterate after every round.
pub type RoundHook<'a> = &'a mut dyn FnMut(&[f64]) -> Result<()>;

/// An epoch-structured optimizer.
pub trait Algorithm: Send + Sync {
    fn name(&self) -> &'static str;

    /// Step-size rule used when the configuration names none.
    fn default_step(&self) -> Option<StepRule>;

    /// Batch-size constraints beyond `B | N`.
    fn check_batch(&self, config: &RunConfig) -> Result<()>;

    fn rounds_per_epoch(&self, components: usize, batch: usize) -> usize {
        components / batch
    }

    fn run_epoch(&self, ctx: &EpochContext<'_>, x: &mut Vec<f64>, on_round: RoundHook<'_>) -> Result<()>;
}

fn check_perms(problem: &dyn Problem, b: usize, perms: &PermutationSet) -> Result<()> {
    let n = problem.components();
    if b == 0 || !n.is_multiple_of(b) {
        return Err(Error::invalid(format!("B must divide N (B = {b}, N = {n})")));
    }
    if perms.machines() != problem.machines() || perms.components() != n {
        return Err(Error::invalid(format!(
            "permutation set is {}×{}, problem is {}×{n}",
            perms.machines(),
            perms.components(),
            problem.machines()
        )));
    }
    Ok(())
}

fn check_batch_divides(n: usize, b: usize) -> Result<()> {
    if b == 0 || !n.is_multiple_of(b) {
        return Err(Error::invalid(format!("B must divide N (B = {b}, N = {n})")));
    }
    Ok(())
}

/// `out = (1/M) Σ_m parts[m]`, summed in machine order.
fn average_into(parts: &[Vec<f64>], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for p in parts {
        out.iter_mut().zip(p).for_each(|(o, v)| *o += v);
    }
    let inv = parts.len() as f64;
    out.iter_mut().for_each(|o| *o /= inv);
}

/// One minibatch round from `x`: every machine forms `x − η·(1/B)Σ_j ∇f_j`
/// over its index block and the server averages the results.
fn minibatch_round(
    problem: &dyn Problem,
    eta: f64,
    x: &mut [f64],
    blocks: &mut dyn FnMut(usize, &mut Vec<usize>),
    scratch: &mut MinibatchScratch,
) {
    for m in 0..problem.machines() {
        blocks(m, &mut scratch.block);
        let acc = &mut scratch.parts[m];
        acc.iter_mut().for_each(|v| *v = 0.0);
        for &i in &scratch.block {
            problem.component_grad(m, i, x, &mut scratch.grad);
            acc.iter_mut().zip(&scratch.grad).for_each(|(a, g)| *a += g);
        }
        let bf = scratch.block.len() as f64;
        acc.iter_mut().zip(x.iter()).for_each(|(a, xi)| *a = xi - eta * (*a / bf));
    }
    average_into(&scratch.parts, x);
}

struct MinibatchScratch {
    parts: Vec<Vec<f64>>,
    grad: Vec<f64>,
    block: Vec<usize>,
}

impl MinibatchScratch {
    fn new(problem: &dyn Problem, b: usize) -> Self {
        MinibatchScratch {
            parts: vec![vec![0.0; problem.dim()]; problem.machines()],
            grad: vec![0.0; problem.dim()],
            block: Vec::with_capacity(b),
        }
    }
}

fn minibatch_rr_rounds(
    problem: &dyn Problem,
    eta: f64,
    b: usize,
    perms: &PermutationSet,
    x: &mut Vec<f64>,
    on_round: RoundHook<'_>,
) -> Result<()> {
    check_perms(problem, b, perms)?;
    let mut scratch = MinibatchScratch::new(problem, b);
    for round in 0..problem.components() / b {
        let mut blocks = |m: usize, out: &mut Vec<usize>| {
            out.clear();
            out.extend_from_slice(&perms.per_machine[m].as_zero_based()[round * b..(round + 1) * b]);
        };
        minibatch_round(problem, eta, x, &mut blocks, &mut scratch);
        on_round(x)?;
    }
    Ok(())
}

/// One epoch of minibatch RR: `N/B` rounds of
/// `x ← x − (η/M) Σ_m (1/B) Σ_{j ∈ block} ∇f^m_{σ^m(j)}(x)`.
pub fn minibatch_rr_epoch(x: &[f64], problem: &dyn Problem, eta: f64, b: usize, perms: &PermutationSet) -> Result<Vec<f64>> {
    let mut y = x.to_vec();
    minibatch_rr_rounds(problem, eta, b, perms, &mut y, &mut |_| Ok(()))?;
    Ok(y)
}

/// Minibatch RR written with an unnormalized inner sum and step `η′`:
/// `x ← x − (η′/M) Σ_m Σ_{j ∈ block} ∇f^m_{σ^m(j)}(x)`. Equals
/// [`minibatch_rr_epoch`] with `η = B·η′`.
pub fn minibatch_rr_epoch_rescaled(
    x: &[f64],
    problem: &dyn Problem,
    eta_prime: f64,
    b: usize,
    perms: &PermutationSet,
) -> Result<Vec<f64>> {
    check_perms(problem, b, perms)?;
    let mm = problem.machines();
    let mut y = x.to_vec();
    let mut g = vec![0.0; y.len()];
    for round in 0..problem.components() / b {
        let mut sum = vec![0.0; y.len()];
        for m in 0..mm {
            for &i in &perms.per_machine[m].as_zero_based()[round * b..(round + 1) * b] {
                problem.component_grad(m, i, &y, &mut g);
                sum.iter_mut().zip(&g).for_each(|(s, v)| *s += v);
            }
        }
        y.iter_mut().zip(&sum).for_each(|(yi, s)| *yi -= eta_prime / mm as f64 * s);
    }
    Ok(y)
}

fn local_rounds(
    problem: &dyn Problem,
    eta: f64,
    b: usize,
    machine_order: &[usize],
    index: &mut dyn FnMut(usize, usize) -> usize,
    x: &mut Vec<f64>,
    on_round: RoundHook<'_>,
) -> Result<()> {
    let mut locals = vec![x.clone(); problem.machines()];
    let mut g = vec![0.0; x.len()];
    for round in 0..problem.components() / b {
        for &m in machine_order {
            let xm = &mut locals[m];
            xm.copy_from_slice(x);
            for step in round * b..(round + 1) * b {
                problem.component_grad(m, index(m, step), xm, &mut g);
                xm.iter_mut().zip(&g).for_each(|(v, gi)| *v -= eta * gi);
            }
        }
        average_into(&locals, x);
        on_round(x)?;
    }
    Ok(())
}

/// One epoch of local RR: every machine takes `B` sequential steps along its
/// permutation between averaging rounds. Returns `y_{k,N/B}`.
pub fn local_rr_epoch(x: &[f64], problem: &dyn Problem, eta: f64, b: usize, perms: &PermutationSet) -> Result<Vec<f64>> {
    let order: Vec<usize> = (0..problem.machines()).collect();
    local_rr_epoch_in_order(x, problem, eta, b, perms, &order)
}

/// [`local_rr_epoch`] simulating the machines in `machine_order`.
pub fn local_rr_epoch_in_order(
    x: &[f64],
    problem: &dyn Problem,
    eta: f64,
    b: usize,
    perms: &PermutationSet,
    machine_order: &[usize],
) -> Result<Vec<f64>> {
    check_perms(problem, b, perms)?;
    let mut sorted = machine_order.to_vec();
    sorted.sort_unstable();
    if sorted != (0..problem.machines()).collect::<Vec<_>>() {
        return Err(Error::invalid("machine order must list every machine once"));
    }
    let mut y = x.to_vec();
    let mut index = |m: usize, step: usize| perms.per_machine[m].as_zero_based()[step];
    local_rounds(problem, eta, b, machine_order, &mut index, &mut y, &mut |_| Ok(()))?;
    Ok(y)
}

fn minibatch_sgd_rounds<R: Rng>(
    problem: &dyn Problem,
    eta: f64,
    b: usize,
    rngs: &mut [R],
    x: &mut Vec<f64>,
    on_round: RoundHook<'_>,
) -> Result<()> {
    let n = problem.components();
    check_batch_divides(n, b)?;
    check_streams(problem, rngs.len())?;
    let mut scratch = MinibatchScratch::new(problem, b);
    for _ in 0..n / b {
        let mut blocks = |m: usize, out: &mut Vec<usize>| {
            out.clear();
            out.extend((0..b).map(|_| rngs[m].random_range(0..n)));
        };
        minibatch_round(problem, eta, x, &mut blocks, &mut scratch);
        on_round(x)?;
    }
    Ok(())
}

fn check_streams(problem: &dyn Problem, streams: usize) -> Result<()> {
    if streams != problem.machines() {
        return Err(Error::invalid(format!("need one generator per machine ({} given, M = {})", streams, problem.machines())));
    }
    Ok(())
}

/// Minibatch RR structure with indices drawn i.i.d. uniformly, one generator per machine.
pub fn minibatch_sgd_epoch<R: Rng>(x: &[f64], problem: &dyn Problem, eta: f64, b: usize, rngs: &mut [R]) -> Result<Vec<f64>> {
    let mut y = x.to_vec();
    minibatch_sgd_rounds(problem, eta, b, rngs, &mut y, &mut |_| Ok(()))?;
    Ok(y)
}

fn local_sgd_rounds<R: Rng>(
    problem: &dyn Problem,
    eta: f64,
    b: usize,
    rngs: &mut [R],
    x: &mut Vec<f64>,
    on_round: RoundHook<'_>,
) -> Result<()> {
    let n = problem.components();
    check_batch_divides(n, b)?;
    check_streams(problem, rngs.len())?;
    let order: Vec<usize> = (0..problem.machines()).collect();
    let mut index = |m: usize, _step: usize| rngs[m].random_range(0..n);
    local_rounds(problem, eta, b, &order, &mut index, x, on_round)
}

/// Local RR structure with indices drawn i.i.d. uniformly, one generator per machine.
pub fn local_sgd_epoch<R: Rng>(x: &[f64], problem: &dyn Problem, eta: f64, b: usize, rngs: &mut [R]) -> Result<Vec<f64>> {
    let mut y = x.to_vec();
    local_sgd_rounds(problem, eta, b, rngs, &mut y, &mut |_| Ok(()))?;
    Ok(y)
}

// ---------------------------------------------------------------------------
// Registered strategies

struct MinibatchRR;
struct LocalRR;
struct MinibatchSGD;
struct LocalSGD;
struct GradientDescent;

fn check_minibatch_batch(config: &RunConfig) -> Result<()> {
    let (n, b) = (config.components, config.batch);
    if 2 * b > n && !(config.allow_degenerate_batch && b == n) {
        return Err(Error::invalid(format!(
            "minibatch methods need 1 <= B <= N/2 (B = {b}, N = {n}); B = N requires allow_degenerate_batch"
        )));
    }
    Ok(())
}

fn check_local_batch(config: &RunConfig) -> Result<()> {
    if config.batch < 2 && !config.allow_degenerate_batch {
        return Err(Error::invalid("local methods need 2 <= B <= N; B = 1 requires allow_degenerate_batch"));
    }
    Ok(())
}

impl Algorithm for MinibatchRR {
    fn name(&self) -> &'static str {
        "minibatch-rr"
    }

    fn default_step(&self) -> Option<StepRule> {
        Some(StepRule::ThmMinibatchRR)
    }

    fn check_batch(&self, config: &RunConfig) -> Result<()> {
        check_minibatch_batch(config)
    }

    fn run_epoch(&self, ctx: &EpochContext<'_>, x: &mut Vec<f64>, on_round: RoundHook<'_>) -> Result<()> {
        let perms = ctx.permutations()?;
        minibatch_rr_rounds(ctx.problem, ctx.eta, ctx.batch, &perms, x, on_round)
    }
}

impl Algorithm for LocalRR {
    fn name(&self) -> &'static str {
        "local-rr"
    }

    fn default_step(&self) -> Option<StepRule> {
        Some(StepRule::ThmLocalRR)
    }

    fn check_batch(&self, config: &RunConfig) -> Result<()> {
        check_local_batch(config)
    }

    fn run_epoch(&self, ctx: &EpochContext<'_>, x: &mut Vec<f64>, on_round: RoundHook<'_>) -> Result<()> {
        let perms = ctx.permutations()?;
        check_perms(ctx.problem, ctx.batch, &perms)?;
        let order: Vec<usize> = (0..ctx.problem.machines()).collect();
        let mut index = |m: usize, step: usize| perms.per_machine[m].as_zero_based()[step];
        local_rounds(ctx.problem, ctx.eta, ctx.batch, &order, &mut index, x, on_round)
    }
}

impl Algorithm for MinibatchSGD {
    fn name(&self) -> &'static str {
        "minibatch-sgd"
    }

    fn default_step(&self) -> Option<StepRule> {
        Some(StepRule::ThmMinibatchRR)
    }

    fn check_batch(&self, config: &RunConfig) -> Result<()> {
        check_minibatch_batch(config)
    }

    fn run_epoch(&self, ctx: &EpochContext<'_>, x: &mut Vec<f64>, on_round: RoundHook<'_>) -> Result<()> {
        minibatch_sgd_rounds(ctx.problem, ctx.eta, ctx.batch, &mut ctx.iid_streams(), x, on_round)
    }
}

impl Algorithm for LocalSGD {
    fn name(&self) -> &'static str {
        "local-sgd"
    }

    fn default_step(&self) -> Option<StepRule> {
        Some(StepRule::ThmLocalRR)
    }

    fn check_batch(&self, config: &RunConfig) -> Result<()> {
        check_local_batch(config)
    }

    fn run_epoch(&self, ctx: &EpochContext<'_>, x: &mut Vec<f64>, on_round: RoundHook<'_>) -> Result<()> {
        local_sgd_rounds(ctx.problem, ctx.eta, ctx.batch, &mut ctx.iid_streams(), x, on_round)
    }
}

impl Algorithm for GradientDescent {
    fn name(&self) -> &'static str {
        "gd"
    }

    fn default_step(&self) -> Option<StepRule> {
        None
    }

    fn check_batch(&self, _config: &RunConfig) -> Result<()> {
        Ok(())
    }

    fn rounds_per_epoch(&self, _components: usize, _batch: usize) -> usize {
        1
    }

    fn run_epoch(&self, ctx: &EpochContext<'_>, x: &mut Vec<f64>, on_round: RoundHook<'_>) -> Result<()> {
        let g = crate::problem::global_gradient(ctx.problem, x)?;
        x.iter_mut().zip(&g).for_each(|(v, gi)| *v -= ctx.eta * gi);
        on_round(x)
    }
}

/// Algorithms registered by name.
pub struct AlgorithmRegistry {
    entries: BTreeMap<&'static str, Arc<dyn Algorithm>>,
}

impl AlgorithmRegistry {
    pub fn empty() -> Self {
        AlgorithmRegistry { entries: BTreeMap::new() }
    }

    pub fn register(&mut self, algorithm: Arc<dyn Algorithm>) {
        self.entries.insert(algorithm.name(), algorithm);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Algorithm>> {
        self.entries.get(name).cloned().ok_or_else(|| Error::UnknownName {
            kind: "algorithm",
            name: name.to_string(),
            available: self.names().join(", "),
        })
    }

    /// Checks the configuration against the problem and the algorithm's constraints.
    pub fn validate(&self, problem: &dyn Problem, config: &RunConfig) -> Result<Arc<dyn Algorithm>> {
        let algorithm = self.get(&config.algorithm)?;
        if config.machines != problem.machines() || config.components != problem.components() {
            return Err(Error::invalid(format!(
                "config is M = {}, N = {} but problem `{}` is M = {}, N = {}",
                config.machines,
                config.components,
                problem.name(),
                problem.machines(),
                problem.components()
            )));
        }
        check_batch_divides(config.components, config.batch)?;
        algorithm.check_batch(config)?;
        if config.sync_shuf && !config.components.is_multiple_of(config.machines) {
            return Err(Error::invalid(format!(
                "M must divide N under SyncShuf (M = {}, N = {})",
                config.machines, config.components
            )));
        }
        if let Some(x0) = &config.x0 {
            if x0.len() != problem.dim() {
                return Err(Error::invalid(format!("x0 has dimension {}, problem has {}", x0.len(), problem.dim())));
            }
        }
        Ok(algorithm)
    }

    /// The algorithm's default rule, switched to its synchronized variant
    /// under SyncShuf.
    pub fn default_rule(&self, config: &RunConfig) -> Result<Option<StepRule>> {
        let rule = self.get(&config.algorithm)?.default_step();
        Ok(rule.map(|r| if config.sync_shuf { r.with_sync() } else { r }))
    }

    /// Resolves the step size: explicit, named rule, the algorithm's default
    /// rule, or `1/L` for gradient descent.
    pub fn resolve_eta(&self, problem: &dyn Problem, config: &RunConfig) -> Result<f64> {
        let eta = match config.step_size {
            Some(StepSize::Explicit(eta)) => eta,
            Some(StepSize::Rule(rule)) => rates::step_size(rule, &config.rate_params(problem)?)?,
            None => match self.default_rule(config)? {
                Some(rule) => rates::step_size(rule, &config.rate_params(problem)?)?,
                None => {
                    let c = problem.constants().ok_or_else(|| {
                        Error::invalid(format!("problem `{}` declares no constants; give an explicit step size", problem.name()))
                    })?;
                    1.0 / c.l
                }
            },
        };
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(Error::invalid(format!("step size must be finite and nonnegative, got {eta}")));
        }
        Ok(eta)
    }

    pub fn run(&self, problem: &dyn Problem, config: &RunConfig) -> Result<RunResult> {
        let algorithm = self.validate(problem, config)?;
        let eta = self.resolve_eta(problem, config)?;
        let mut x = config.x0.clone().unwrap_or_else(|| problem.initial_point());
        let f_star = problem.f_star();
        let gap = |x: &[f64]| crate::problem::global_value(problem, x).map(|v| v - f_star);
        let mut trace = Vec::new();
        if config.record != Record::FinalOnly || config.epochs == 0 {
            trace.push(gap(&x)?);
        }
        for epoch in 1..=config.epochs {
            let ctx = EpochContext { problem, eta, batch: config.batch, seed: config.seed, epoch, sync_shuf: config.sync_shuf };
            let per_round = config.record == Record::PerRound;
            let mut hook = |y: &[f64]| -> Result<()> {
                if y.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
                    return Err(Error::Diverged { epoch });
                }
                if per_round {
                    trace.push(gap(y)?);
                }
                Ok(())
            };
            algorithm.run_epoch(&ctx, &mut x, &mut hook)?;
            match config.record {
                Record::PerEpoch => trace.push(gap(&x)?),
                Record::FinalOnly if epoch == config.epochs => trace.push(gap(&x)?),
                _ => {}
            }
        }
        let (m, n, k) = (config.machines as u64, config.components as u64, config.epochs as u64);
        Ok(RunResult {
            suboptimality: trace,
            final_x: x,
            epochs_run: config.epochs,
            gradient_evaluations: m * n * k,
            communication_rounds: k * algorithm.rounds_per_epoch(config.components, config.batch) as u64,
            eta,
        })
    }
}

impl Default for AlgorithmRegistry {
    fn default() -> Self {
        let mut r = AlgorithmRegistry::empty();
        r.register(Arc::new(MinibatchRR));
        r.register(Arc::new(LocalRR));
        r.register(Arc::new(MinibatchSGD));
        r.register(Arc::new(LocalSGD));
        r.register(Arc::new(GradientDescent));
        r
    }
}

/// Runs `config` on `problem` with the default registry.
pub fn run(problem: &dyn Problem, config: &RunConfig) -> Result<RunResult> {
    AlgorithmRegistry::default().run(problem, config)
}

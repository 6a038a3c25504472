//! Finite-sum distributed objectives `F(x) = (1/(MN)) Σ_m Σ_i f_i^m(x)`.
//!
//! The [`Problem`] trait exposes per-component value and gradient oracles.
//! Machine and component indices passed to the oracles are 0-based.
//! Concrete constructions are registered by name in [`ProblemRegistry`].

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::shuffle::substream;
use crate::{Error, Result};

/// Assumption constants of a problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// Smoothness of every component.
    #[serde(rename = "L")]
    pub l: f64,
    /// PL constant of the global objective.
    pub mu: f64,
    /// Bound on `‖∇f_i^m − ∇F^m‖`.
    pub nu: f64,
    /// Additive part of the objective-wise heterogeneity envelope.
    pub tau: f64,
    /// Multiplicative part of the objective-wise heterogeneity envelope.
    pub rho: f64,
    /// Bound on `‖∇f_i^m − ∇f̄_i‖`; `None` when no finite bound exists.
    pub lambda: Option<f64>,
}

impl Constants {
    pub fn kappa(&self) -> f64 {
        self.l / self.mu
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.l, self.mu, self.nu, self.tau, self.rho].iter().all(|v| v.is_finite());
        if !finite || !(self.mu > 0.0) || self.l < self.mu {
            return Err(Error::invalid(format!(
                "constants need L >= mu > 0 (L = {}, mu = {})",
                self.l, self.mu
            )));
        }
        if self.nu < 0.0 || self.tau < 0.0 || self.rho < 1.0 || self.lambda.is_some_and(|l| !(l >= 0.0)) {
            return Err(Error::invalid("constants need nu, tau, lambda >= 0 and rho >= 1"));
        }
        Ok(())
    }
}

/// A finite-sum objective split over `machines × components` functions.
pub trait Problem: Send + Sync {
    fn name(&self) -> &str;
    fn machines(&self) -> usize;
    fn components(&self) -> usize;
    fn dim(&self) -> usize;

    /// Writes `∇f_component^machine(x)` into `out`.
    fn component_grad(&self, machine: usize, component: usize, x: &[f64], out: &mut [f64]);

    fn component_value(&self, machine: usize, component: usize, x: &[f64]) -> f64;

    /// Analytic constants, when the construction declares them.
    fn constants(&self) -> Option<Constants>;

    fn f_star(&self) -> f64;

    fn x_star(&self) -> Option<Vec<f64>>;

    /// Initialization used when a run does not override it.
    fn initial_point(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }
}

fn check_dim(problem: &dyn Problem, x: &[f64]) -> Result<()> {
    if x.len() != problem.dim() {
        return Err(Error::invalid(format!(
            "point has dimension {}, problem `{}` has dimension {}",
            x.len(),
            problem.name(),
            problem.dim()
        )));
    }
    Ok(())
}

/// `∇F(x) = (1/(MN)) Σ_m Σ_i ∇f_i^m(x)`.
pub fn global_gradient(problem: &dyn Problem, x: &[f64]) -> Result<Vec<f64>> {
    check_dim(problem, x)?;
    let mut total = vec![0.0; x.len()];
    let mut g = vec![0.0; x.len()];
    for m in 0..problem.machines() {
        for i in 0..problem.components() {
            problem.component_grad(m, i, x, &mut g);
            total.iter_mut().zip(&g).for_each(|(t, gi)| *t += gi);
        }
    }
    let scale = 1.0 / (problem.machines() * problem.components()) as f64;
    total.iter_mut().for_each(|t| *t *= scale);
    Ok(total)
}

/// `F(x)`.
pub fn global_value(problem: &dyn Problem, x: &[f64]) -> Result<f64> {
    check_dim(problem, x)?;
    let mut total = 0.0;
    for m in 0..problem.machines() {
        for i in 0..problem.components() {
            total += problem.component_value(m, i, x);
        }
    }
    Ok(total / (problem.machines() * problem.components()) as f64)
}

/// `∇F^m(x) = (1/N) Σ_i ∇f_i^m(x)`.
pub fn local_gradient(problem: &dyn Problem, machine: usize, x: &[f64]) -> Result<Vec<f64>> {
    check_dim(problem, x)?;
    let mut total = vec![0.0; x.len()];
    let mut g = vec![0.0; x.len()];
    for i in 0..problem.components() {
        problem.component_grad(machine, i, x, &mut g);
        total.iter_mut().zip(&g).for_each(|(t, gi)| *t += gi);
    }
    let scale = 1.0 / problem.components() as f64;
    total.iter_mut().for_each(|t| *t *= scale);
    Ok(total)
}

/// `F(x) − F*`.
pub fn suboptimality(problem: &dyn Problem, x: &[f64]) -> Result<f64> {
    Ok(global_value(problem, x)? - problem.f_star())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------------------
// Skewed quadratics

/// The three one-dimensional lower-bound families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SkewKind {
    /// Every component equals `μx²/2`.
    F1,
    /// `(L·1{x≤0} + μ·1{x>0})·x²/2 ± νx`.
    F2,
    /// `Lx²/2 ± νx`.
    F3,
}

impl SkewKind {
    fn curvature(self, l: f64, mu: f64, x: f64) -> f64 {
        match self {
            SkewKind::F1 => mu,
            SkewKind::F2 => {
                if x <= 0.0 {
                    l
                } else {
                    mu
                }
            }
            SkewKind::F3 => l,
        }
    }

    fn has_linear_term(self) -> bool {
        !matches!(self, SkewKind::F1)
    }
}

/// Component `i` carries sign `+1` when `i < N/2` (0-based), `−1` otherwise.
fn sign_of(component: usize, components: usize) -> f64 {
    if component < components / 2 {
        1.0
    } else {
        -1.0
    }
}

/// One-dimensional skewed quadratic shared identically by all machines.
#[derive(Debug, Clone)]
pub struct SkewedQuadratic {
    kind: SkewKind,
    l: f64,
    mu: f64,
    nu: f64,
    components: usize,
    machines: usize,
}

impl SkewedQuadratic {
    fn grad_1d(&self, component: usize, x: f64) -> f64 {
        let linear = if self.kind.has_linear_term() {
            self.nu * sign_of(component, self.components)
        } else {
            0.0
        };
        self.kind.curvature(self.l, self.mu, x) * x + linear
    }

    fn value_1d(&self, component: usize, x: f64) -> f64 {
        let linear = if self.kind.has_linear_term() {
            self.nu * sign_of(component, self.components) * x
        } else {
            0.0
        };
        self.kind.curvature(self.l, self.mu, x) * x * x / 2.0 + linear
    }

    fn start_1d(&self) -> f64 {
        match self.kind {
            SkewKind::F1 => self.nu / self.mu,
            SkewKind::F2 | SkewKind::F3 => 0.0,
        }
    }
}

fn check_shape(l: f64, mu: f64, nu: f64, components: usize, machines: usize) -> Result<()> {
    if components == 0 || machines == 0 {
        return Err(Error::invalid("need at least one machine and one component"));
    }
    if !(mu > 0.0) || !(l >= mu) || !l.is_finite() || !(nu >= 0.0) || !nu.is_finite() {
        return Err(Error::invalid(format!(
            "need L >= mu > 0 and nu >= 0 (L = {l}, mu = {mu}, nu = {nu})"
        )));
    }
    Ok(())
}

/// Builds one of the one-dimensional constructions.
///
/// F2 and F3 need an even number of components.
pub fn make_skewed_quadratic_1d(
    kind: SkewKind,
    l: f64,
    mu: f64,
    nu: f64,
    components: usize,
    machines: usize,
) -> Result<SkewedQuadratic> {
    check_shape(l, mu, nu, components, machines)?;
    if kind.has_linear_term() && !components.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "{kind:?} needs an even number of components, got N = {components}"
        )));
    }
    Ok(SkewedQuadratic { kind, l, mu, nu, components, machines })
}

impl Problem for SkewedQuadratic {
    fn name(&self) -> &str {
        match self.kind {
            SkewKind::F1 => "f1",
            SkewKind::F2 => "f2",
            SkewKind::F3 => "f3",
        }
    }

    fn machines(&self) -> usize {
        self.machines
    }

    fn components(&self) -> usize {
        self.components
    }

    fn dim(&self) -> usize {
        1
    }

    fn component_grad(&self, _machine: usize, component: usize, x: &[f64], out: &mut [f64]) {
        out[0] = self.grad_1d(component, x[0]);
    }

    fn component_value(&self, _machine: usize, component: usize, x: &[f64]) -> f64 {
        self.value_1d(component, x[0])
    }

    fn constants(&self) -> Option<Constants> {
        Some(Constants { l: self.l, mu: self.mu, nu: self.nu, tau: 0.0, rho: 1.0, lambda: Some(0.0) })
    }

    fn f_star(&self) -> f64 {
        0.0
    }

    fn x_star(&self) -> Option<Vec<f64>> {
        Some(vec![0.0])
    }

    fn initial_point(&self) -> Vec<f64> {
        vec![self.start_1d()]
    }
}

/// `F(x, y, z) = F1(x) + F2(y) + F3(z)`, coordinate-separable.
#[derive(Debug, Clone)]
pub struct Composite3d {
    parts: [SkewedQuadratic; 3],
}

pub fn make_composite_3d(l: f64, mu: f64, nu: f64, components: usize, machines: usize) -> Result<Composite3d> {
    if !components.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "the composite construction needs an even number of components, got N = {components}"
        )));
    }
    let part = |kind| make_skewed_quadratic_1d(kind, l, mu, nu, components, machines);
    Ok(Composite3d { parts: [part(SkewKind::F1)?, part(SkewKind::F2)?, part(SkewKind::F3)?] })
}

impl Problem for Composite3d {
    fn name(&self) -> &str {
        "composite3d"
    }

    fn machines(&self) -> usize {
        self.parts[0].machines
    }

    fn components(&self) -> usize {
        self.parts[0].components
    }

    fn dim(&self) -> usize {
        3
    }

    fn component_grad(&self, _machine: usize, component: usize, x: &[f64], out: &mut [f64]) {
        for (k, part) in self.parts.iter().enumerate() {
            out[k] = part.grad_1d(component, x[k]);
        }
    }

    fn component_value(&self, _machine: usize, component: usize, x: &[f64]) -> f64 {
        self.parts.iter().enumerate().map(|(k, p)| p.value_1d(component, x[k])).sum()
    }

    fn constants(&self) -> Option<Constants> {
        let p = &self.parts[0];
        Some(Constants {
            l: p.l,
            mu: p.mu,
            nu: 3f64.sqrt() * p.nu,
            tau: 0.0,
            rho: 1.0,
            lambda: Some(0.0),
        })
    }

    fn f_star(&self) -> f64 {
        0.0
    }

    fn x_star(&self) -> Option<Vec<f64>> {
        Some(vec![0.0; 3])
    }

    fn initial_point(&self) -> Vec<f64> {
        self.parts.iter().map(SkewedQuadratic::start_1d).collect()
    }
}

/// Half the machines hold `−τx`, the other half `μx² + τx`, every component
/// on a machine identical. `F(x) = μx²/2`.
#[derive(Debug, Clone)]
pub struct HeteroLinearQuadratic {
    l: f64,
    mu: f64,
    tau: f64,
    components: usize,
    machines: usize,
}

impl HeteroLinearQuadratic {
    fn holds_linear(&self, machine: usize) -> bool {
        machine < self.machines / 2
    }
}

pub fn make_hetero_linear_quadratic(
    l: f64,
    mu: f64,
    tau: f64,
    components: usize,
    machines: usize,
) -> Result<HeteroLinearQuadratic> {
    check_shape(l, mu, 0.0, components, machines)?;
    if !machines.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "the heterogeneous construction needs an even number of machines, got M = {machines}"
        )));
    }
    if l < 2.0 * mu {
        return Err(Error::invalid(format!(
            "the heterogeneous construction is 2mu-smooth; need L >= 2mu (L = {l}, mu = {mu})"
        )));
    }
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::invalid(format!("tau must be nonnegative, got {tau}")));
    }
    Ok(HeteroLinearQuadratic { l, mu, tau, components, machines })
}

impl Problem for HeteroLinearQuadratic {
    fn name(&self) -> &str {
        "hetero"
    }

    fn machines(&self) -> usize {
        self.machines
    }

    fn components(&self) -> usize {
        self.components
    }

    fn dim(&self) -> usize {
        1
    }

    fn component_grad(&self, machine: usize, _component: usize, x: &[f64], out: &mut [f64]) {
        out[0] = if self.holds_linear(machine) {
            -self.tau
        } else {
            2.0 * self.mu * x[0] + self.tau
        };
    }

    fn component_value(&self, machine: usize, _component: usize, x: &[f64]) -> f64 {
        if self.holds_linear(machine) {
            -self.tau * x[0]
        } else {
            self.mu * x[0] * x[0] + self.tau * x[0]
        }
    }

    fn constants(&self) -> Option<Constants> {
        Some(Constants { l: self.l, mu: self.mu, nu: 0.0, tau: self.tau, rho: 1.0, lambda: None })
    }

    fn f_star(&self) -> f64 {
        0.0
    }

    fn x_star(&self) -> Option<Vec<f64>> {
        Some(vec![0.0])
    }
}

/// Random separable quadratics `f_i^m(x) = Σ_d h_d x_d²/2 + b_d x_d` with
/// per-machine, per-component coefficients. Used for structural checks.
#[derive(Debug, Clone)]
pub struct RandomQuadratic {
    dim: usize,
    components: usize,
    machines: usize,
    /// `[machine][component][coordinate]`, flattened.
    curvature: Vec<f64>,
    linear: Vec<f64>,
    x_star: Vec<f64>,
    f_star: f64,
    l: f64,
    mu: f64,
}

pub fn make_random_quadratic(dim: usize, components: usize, machines: usize, seed: u64) -> Result<RandomQuadratic> {
    if dim == 0 || components == 0 || machines == 0 {
        return Err(Error::invalid("random quadratic needs positive dim, N and M"));
    }
    let mut rng = substream(seed, 0, 0x5155_4144);
    let len = dim * components * machines;
    let curvature: Vec<f64> = (0..len).map(|_| rng.random_range(0.5..2.0)).collect();
    let linear: Vec<f64> = (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let count = (components * machines) as f64;
    let mut x_star = vec![0.0; dim];
    let mut f_star = 0.0;
    let mut mu = f64::INFINITY;
    for d in 0..dim {
        let h: f64 = curvature.iter().skip(d).step_by(dim).sum::<f64>() / count;
        let b: f64 = linear.iter().skip(d).step_by(dim).sum::<f64>() / count;
        x_star[d] = -b / h;
        f_star += -b * b / (2.0 * h);
        mu = mu.min(h);
    }
    let l = curvature.iter().cloned().fold(0.0, f64::max);
    Ok(RandomQuadratic { dim, components, machines, curvature, linear, x_star, f_star, l, mu })
}

impl RandomQuadratic {
    fn offset(&self, machine: usize, component: usize) -> usize {
        (machine * self.components + component) * self.dim
    }
}

impl Problem for RandomQuadratic {
    fn name(&self) -> &str {
        "random-quadratic"
    }

    fn machines(&self) -> usize {
        self.machines
    }

    fn components(&self) -> usize {
        self.components
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn component_grad(&self, machine: usize, component: usize, x: &[f64], out: &mut [f64]) {
        let o = self.offset(machine, component);
        for d in 0..self.dim {
            out[d] = self.curvature[o + d] * x[d] + self.linear[o + d];
        }
    }

    fn component_value(&self, machine: usize, component: usize, x: &[f64]) -> f64 {
        let o = self.offset(machine, component);
        (0..self.dim)
            .map(|d| self.curvature[o + d] * x[d] * x[d] / 2.0 + self.linear[o + d] * x[d])
            .sum()
    }

    fn constants(&self) -> Option<Constants> {
        None
    }

    fn f_star(&self) -> f64 {
        self.f_star
    }

    fn x_star(&self) -> Option<Vec<f64>> {
        Some(self.x_star.clone())
    }

    fn initial_point(&self) -> Vec<f64> {
        vec![1.0; self.dim]
    }
}

impl RandomQuadratic {
    /// Smoothness and strong-convexity constants of the sampled instance.
    pub fn curvature_bounds(&self) -> (f64, f64) {
        (self.l, self.mu)
    }
}

// ---------------------------------------------------------------------------
// Named constructions

/// Serializable description of a construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub kind: String,
    #[serde(rename = "L", default = "one")]
    pub l: f64,
    #[serde(default = "one")]
    pub mu: f64,
    #[serde(default = "one")]
    pub nu: f64,
    #[serde(default = "one")]
    pub tau: f64,
    /// Dimension, only read by `random-quadratic`.
    #[serde(default = "one_usize")]
    pub dim: usize,
    /// Instance seed, only read by `random-quadratic`.
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

impl ProblemSpec {
    pub fn new(kind: &str, l: f64, mu: f64, nu: f64) -> Self {
        ProblemSpec { kind: kind.to_string(), l, mu, nu, tau: 1.0, dim: 1, seed: 0 }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }
}

/// Builds a construction for `machines × components`.
pub type ProblemBuilder = fn(&ProblemSpec, usize, usize) -> Result<Arc<dyn Problem>>;

/// Constructions registered by name.
pub struct ProblemRegistry {
    builders: BTreeMap<&'static str, ProblemBuilder>,
}

impl ProblemRegistry {
    pub fn empty() -> Self {
        ProblemRegistry { builders: BTreeMap::new() }
    }

    pub fn register(&mut self, name: &'static str, builder: ProblemBuilder) {
        self.builders.insert(name, builder);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.builders.keys().copied().collect()
    }

    pub fn build(&self, spec: &ProblemSpec, machines: usize, components: usize) -> Result<Arc<dyn Problem>> {
        let builder = self.builders.get(spec.kind.as_str()).ok_or_else(|| Error::UnknownName {
            kind: "problem",
            name: spec.kind.clone(),
            available: self.names().join(", "),
        })?;
        builder(spec, machines, components)
    }
}

impl Default for ProblemRegistry {
    fn default() -> Self {
        let mut r = ProblemRegistry::empty();
        r.register("f1", |s, m, n| Ok(Arc::new(make_skewed_quadratic_1d(SkewKind::F1, s.l, s.mu, s.nu, n, m)?)));
        r.register("f2", |s, m, n| Ok(Arc::new(make_skewed_quadratic_1d(SkewKind::F2, s.l, s.mu, s.nu, n, m)?)));
        r.register("f3", |s, m, n| Ok(Arc::new(make_skewed_quadratic_1d(SkewKind::F3, s.l, s.mu, s.nu, n, m)?)));
        r.register("composite3d", |s, m, n| Ok(Arc::new(make_composite_3d(s.l, s.mu, s.nu, n, m)?)));
        r.register("hetero", |s, m, n| Ok(Arc::new(make_hetero_linear_quadratic(s.l, s.mu, s.tau, n, m)?)));
        r.register("random-quadratic", |s, m, n| Ok(Arc::new(make_random_quadratic(s.dim, n, m, s.seed)?)));
        r
    }
}

// ---------------------------------------------------------------------------
// Empirical constants

/// Sampled estimates of the deviation constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsEstimate {
    pub nu: f64,
    pub lambda: f64,
    pub tau: f64,
    pub rho: f64,
    /// Declared constants contradicted by the samples.
    pub violations: Vec<String>,
}

/// Default half-width of the sampling box: `10·ν/μ`, or 10 when undeclared.
pub fn default_box_radius(problem: &dyn Problem) -> f64 {
    match problem.constants() {
        Some(c) if c.nu > 0.0 => 10.0 * c.nu / c.mu,
        _ => 10.0,
    }
}

/// Samples `n_samples` points uniformly in `[−radius, radius]^dim` and
/// measures the intra-machine deviation `ν̂`, the component-wise deviation
/// `λ̂` and an admissible `(τ̂, ρ̂)` envelope for
/// `(1/M) Σ_m ‖∇F^m‖ ≤ τ + ρ‖∇F‖`.
///
/// `ρ̂` is the least-squares slope of the envelope data clamped to `≥ 1`;
/// `τ̂` is then the smallest intercept covering every sample.
pub fn estimate_constants<R: Rng + ?Sized>(
    problem: &dyn Problem,
    radius: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<ConstantsEstimate> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::invalid(format!("sampling box radius must be positive, got {radius}")));
    }
    if n_samples == 0 {
        return Err(Error::invalid("estimate_constants needs at least one sample"));
    }
    let (mm, nn, dim) = (problem.machines(), problem.components(), problem.dim());
    let mut nu_hat: f64 = 0.0;
    let mut lambda_hat: f64 = 0.0;
    let mut envelope = Vec::with_capacity(n_samples);
    let mut grads = vec![vec![vec![0.0; dim]; nn]; mm];
    let mut x = vec![0.0; dim];
    for _ in 0..n_samples {
        x.iter_mut().for_each(|v| *v = rng.random_range(-radius..=radius));
        for (m, row) in grads.iter_mut().enumerate() {
            for (i, g) in row.iter_mut().enumerate() {
                problem.component_grad(m, i, &x, g);
            }
        }
        let mut global = vec![0.0; dim];
        let mut mean_local_norm = 0.0;
        for row in &grads {
            let mut local = vec![0.0; dim];
            for g in row {
                local.iter_mut().zip(g).for_each(|(a, b)| *a += b / nn as f64);
            }
            for g in row {
                let dev: Vec<f64> = g.iter().zip(&local).map(|(a, b)| a - b).collect();
                nu_hat = nu_hat.max(norm(&dev));
            }
            mean_local_norm += norm(&local) / mm as f64;
            global.iter_mut().zip(&local).for_each(|(a, b)| *a += b / mm as f64);
        }
        for i in 0..nn {
            let mut avg = vec![0.0; dim];
            for row in &grads {
                avg.iter_mut().zip(&row[i]).for_each(|(a, b)| *a += b / mm as f64);
            }
            for row in &grads {
                let dev: Vec<f64> = row[i].iter().zip(&avg).map(|(a, b)| a - b).collect();
                lambda_hat = lambda_hat.max(norm(&dev));
            }
        }
        envelope.push((norm(&global), mean_local_norm));
    }

    let n = envelope.len() as f64;
    let mean_b = envelope.iter().map(|e| e.0).sum::<f64>() / n;
    let mean_a = envelope.iter().map(|e| e.1).sum::<f64>() / n;
    let sxx: f64 = envelope.iter().map(|e| (e.0 - mean_b).powi(2)).sum();
    let sxy: f64 = envelope.iter().map(|e| (e.0 - mean_b) * (e.1 - mean_a)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 1.0 };
    let rho_hat = slope.max(1.0);
    let tau_hat = envelope.iter().map(|&(b, a)| a - rho_hat * b).fold(0.0, f64::max);

    let mut violations = Vec::new();
    if let Some(c) = problem.constants() {
        let slack = |v: f64| v * (1.0 + 1e-9) + 1e-12;
        if nu_hat > slack(c.nu) {
            violations.push(format!("nu: sampled {nu_hat} exceeds declared {}", c.nu));
        }
        if let Some(l) = c.lambda {
            if lambda_hat > slack(l) {
                violations.push(format!("lambda: sampled {lambda_hat} exceeds declared {l}"));
            }
        }
        if let Some(&(b, a)) = envelope.iter().find(|&&(b, a)| a > slack(c.tau + c.rho * b)) {
            violations.push(format!(
                "tau/rho: (1/M) sum |grad F^m| = {a} exceeds {} + {}·{b}",
                c.tau, c.rho
            ));
        }
    }
    Ok(ConstantsEstimate { nu: nu_hat, lambda: lambda_hat, tau: tau_hat, rho: rho_hat, violations })
}

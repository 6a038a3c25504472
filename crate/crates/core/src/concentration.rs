//! Without-replacement concentration: the vector Hoeffding–Serfling bound
//! for the mean of `M` independent partial sums, a Monte-Carlo validator for
//! it, and exact distributions of signed partial sums of `±1` permutations.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::shuffle::substream;
use crate::{Error, Result};

/// `ν·√(8(1 − (n−1)/N)·ln(2/δ)/(M·n))`.
pub fn hs_bound(nu: f64, machines: usize, population: usize, n: usize, delta: f64) -> Result<f64> {
    if machines == 0 {
        return Err(Error::invalid("need at least one machine"));
    }
    if n == 0 || n >= population {
        return Err(Error::invalid(format!("prefix length must satisfy 1 <= n <= N-1 (n = {n}, N = {population})")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(nu >= 0.0) {
        return Err(Error::invalid(format!("nu must be nonnegative, got {nu}")));
    }
    let (nf, pf) = (n as f64, population as f64);
    Ok(nu * (8.0 * (1.0 - (nf - 1.0) / pf) * (2.0 / delta).ln() / (machines as f64 * nf)).sqrt())
}

/// `M` populations of `N` vectors sampled without replacement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WithoutReplacementSpec {
    /// `vectors[m][i]` is the `i`-th vector of machine `m`.
    pub vectors: Vec<Vec<Vec<f64>>>,
    /// Prefix length.
    pub n: usize,
    pub nu: f64,
    pub delta: f64,
}

fn mean_of(rows: &[Vec<f64>]) -> Vec<f64> {
    let mut mean = vec![0.0; rows[0].len()];
    for r in rows {
        mean.iter_mut().zip(r).for_each(|(a, b)| *a += b);
    }
    mean.iter_mut().for_each(|a| *a /= rows.len() as f64);
    mean
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

impl WithoutReplacementSpec {
    pub fn new(vectors: Vec<Vec<Vec<f64>>>, n: usize, nu: f64, delta: f64) -> Result<Self> {
        let spec = WithoutReplacementSpec { vectors, n, nu, delta };
        spec.validate()?;
        Ok(spec)
    }

    pub fn machines(&self) -> usize {
        self.vectors.len()
    }

    pub fn population(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.vectors.is_empty() || self.vectors[0].is_empty() || self.vectors[0][0].is_empty() {
            return Err(Error::invalid("population must be nonempty"));
        }
        let (pop, dim) = (self.population(), self.vectors[0][0].len());
        if self.vectors.iter().any(|m| m.len() != pop || m.iter().any(|v| v.len() != dim)) {
            return Err(Error::invalid("every machine needs N vectors of the same dimension"));
        }
        hs_bound(self.nu, self.machines(), pop, self.n, self.delta)?;
        for (m, rows) in self.vectors.iter().enumerate() {
            let mean = mean_of(rows);
            if let Some(i) = rows.iter().position(|v| dist(v, &mean) > self.nu * (1.0 + 1e-12) + 1e-15) {
                return Err(Error::invalid(format!("vector {i} of machine {m} deviates from its mean by more than nu")));
            }
        }
        Ok(())
    }

    /// Deviation of the mean of `M` random `n`-prefixes from the overall mean.
    fn sample_deviation<R: Rng>(&self, grand: &[f64], rngs: &mut [R], scratch: &mut [usize]) -> f64 {
        let dim = self.vectors[0][0].len();
        let mut dev = vec![0.0; dim];
        let scale = 1.0 / (self.machines() * self.n) as f64;
        for (rows, rng) in self.vectors.iter().zip(rngs.iter_mut()) {
            scratch.iter_mut().enumerate().for_each(|(i, s)| *s = i);
            let (prefix, _) = scratch.partial_shuffle(rng, self.n);
            for &i in prefix.iter() {
                dev.iter_mut().zip(&rows[i]).for_each(|(d, v)| *d += v * scale);
            }
        }
        dist(&dev, grand)
    }
}

/// `M × N` scalars `±ν`, half of each sign per machine.
pub fn sign_population(machines: usize, population: usize, nu: f64) -> Vec<Vec<Vec<f64>>> {
    let row: Vec<Vec<f64>> = (0..population).map(|i| vec![if i < population / 2 { nu } else { -nu }]).collect();
    vec![row; machines]
}

/// Random `d`-dimensional populations, centred per machine and scaled so the
/// largest deviation from the machine mean is exactly `ν`.
pub fn random_population<R: Rng + ?Sized>(machines: usize, population: usize, dim: usize, nu: f64, rng: &mut R) -> Vec<Vec<Vec<f64>>> {
    (0..machines)
        .map(|_| {
            let mut rows: Vec<Vec<f64>> = (0..population)
                .map(|_| {
                    let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-300);
                    v.into_iter().map(|a| a / norm).collect()
                })
                .collect();
            let mean = mean_of(&rows);
            rows.iter_mut().for_each(|r| r.iter_mut().zip(&mean).for_each(|(a, b)| *a -= b));
            let widest = rows.iter().map(|r| dist(r, &vec![0.0; dim])).fold(0.0, f64::max);
            let scale = if widest > 0.0 { nu / widest } else { 0.0 };
            rows.iter_mut().for_each(|r| r.iter_mut().for_each(|a| *a *= scale));
            rows
        })
        .collect()
}

/// Outcome of a Monte-Carlo check of the bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub bound: f64,
    pub trials: u64,
    pub violations: u64,
    pub rate: f64,
    /// Binomial standard error `√(p(1−p)/T)`.
    pub stderr: f64,
    /// `rate ≤ δ + 3·stderr`.
    pub pass: bool,
}

/// Frequency with which the sampled deviation exceeds [`hs_bound`].
///
/// Trial `t` draws machine `m`'s prefix from substream `(seed, t, m)`, so
/// the count does not depend on scheduling.
pub fn mc_violation_rate(spec: &WithoutReplacementSpec, trials: u64, seed: u64) -> Result<ViolationReport> {
    spec.validate()?;
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    let bound = hs_bound(spec.nu, spec.machines(), spec.population(), spec.n, spec.delta)?;
    let means: Vec<Vec<f64>> = spec.vectors.iter().map(|r| mean_of(r)).collect();
    let grand = mean_of(&means);
    let violations: u64 = (0..trials)
        .into_par_iter()
        .map_init(
            || vec![0usize; spec.population()],
            |scratch, t| {
                let mut rngs: Vec<_> = (0..spec.machines()).map(|m| substream(seed, t, m as u64)).collect();
                u64::from(spec.sample_deviation(&grand, &mut rngs, scratch) > bound)
            },
        )
        .sum();
    let rate = violations as f64 / trials as f64;
    let stderr = (rate * (1.0 - rate) / trials as f64).sqrt();
    Ok(ViolationReport { bound, trials, violations, rate, stderr, pass: rate <= spec.delta + 3.0 * stderr })
}

/// Exact law of `S = (1/M) Σ_m Σ_{j≤i} σ^m_j + Σ_{j=i+1}^{i+k} σ^M_j` over
/// independent uniform arrangements of `N/2` `+1`s and `N/2` `−1`s.
///
/// Values are stored as the integer `M·S` with the number of equally likely
/// sign-pattern tuples producing it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialSumDistribution {
    pub machines: usize,
    /// `M·S ↦ count`.
    pub counts: BTreeMap<i64, u128>,
    /// `C(N, N/2)^M`.
    pub total: u128,
}

impl PartialSumDistribution {
    pub fn probability(&self, scaled_value: i64) -> f64 {
        *self.counts.get(&scaled_value).unwrap_or(&0) as f64 / self.total as f64
    }

    pub fn mean_abs(&self) -> f64 {
        let s: u128 = self.counts.iter().map(|(v, c)| v.unsigned_abs() as u128 * c).sum();
        s as f64 / (self.machines as f64 * self.total as f64)
    }

    pub fn positive_count(&self) -> u128 {
        self.counts.range(1..).map(|(_, c)| c).sum()
    }

    pub fn negative_count(&self) -> u128 {
        self.counts.range(..0).map(|(_, c)| c).sum()
    }
}

pub const MAX_ENUMERATED_COMPONENTS: usize = 8;
pub const MAX_ENUMERATED_MACHINES: usize = 3;

/// All placements of `N/2` plus signs, as bit masks.
fn sign_patterns(n: usize) -> Vec<u32> {
    (0u32..1 << n).filter(|m| m.count_ones() as usize == n / 2).collect()
}

fn signed_sum(mask: u32, range: std::ops::Range<usize>) -> i64 {
    range.map(|j| if mask >> j & 1 == 1 { 1 } else { -1 }).sum()
}

/// Enumerates every sign-pattern tuple. The first `M−1` machines enter only
/// through their prefix sums, so their patterns are tallied per machine and
/// combined by exact convolution.
pub fn exact_partial_sum_distribution(n: usize, machines: usize, i: usize, k: usize) -> Result<PartialSumDistribution> {
    if n == 0 || !n.is_multiple_of(2) || n > MAX_ENUMERATED_COMPONENTS {
        return Err(Error::invalid(format!("N must be even and at most {MAX_ENUMERATED_COMPONENTS}, got {n}")));
    }
    if machines == 0 || machines > MAX_ENUMERATED_MACHINES {
        return Err(Error::invalid(format!("M must lie in 1..={MAX_ENUMERATED_MACHINES}, got {machines}")));
    }
    if i + k == 0 || i + k > n {
        return Err(Error::invalid(format!("need 1 <= i + k <= N (i = {i}, k = {k}, N = {n})")));
    }
    let patterns = sign_patterns(n);
    let mut prefix: BTreeMap<i64, u128> = BTreeMap::new();
    let mut last: BTreeMap<i64, u128> = BTreeMap::new();
    let m = machines as i64;
    for &p in &patterns {
        let head = signed_sum(p, 0..i);
        *prefix.entry(head).or_default() += 1;
        *last.entry(head + m * signed_sum(p, i..i + k)).or_default() += 1;
    }
    let mut acc = last;
    for _ in 1..machines {
        let mut next = BTreeMap::new();
        for (a, ca) in &acc {
            for (b, cb) in &prefix {
                *next.entry(a + b).or_default() += ca * cb;
            }
        }
        acc = next;
    }
    let total = (patterns.len() as u128).pow(machines as u32);
    debug_assert_eq!(acc.values().sum::<u128>(), total);
    Ok(PartialSumDistribution { machines, counts: acc, total })
}

/// Result of checking the sandwich and sign-probability inequalities at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialSumCheck {
    pub n: usize,
    pub machines: usize,
    pub i: usize,
    pub k: usize,
    pub mean_abs: f64,
    pub lower: f64,
    pub upper: f64,
    pub sandwich_holds: bool,
    pub symmetric: bool,
    /// `P(S > 0) ≥ 1/6`, compared in integers.
    pub sign_probability_holds: bool,
}

pub fn check_partial_sum(n: usize, machines: usize, i: usize, k: usize) -> Result<PartialSumCheck> {
    let d = exact_partial_sum_distribution(n, machines, i, k)?;
    let scale = (i as f64 / machines as f64).sqrt() + (k as f64).sqrt();
    let mean_abs = d.mean_abs();
    let (pos, neg) = (d.positive_count(), d.negative_count());
    Ok(PartialSumCheck {
        n,
        machines,
        i,
        k,
        mean_abs,
        lower: scale / 64.0,
        upper: scale,
        sandwich_holds: scale / 64.0 <= mean_abs && mean_abs <= scale,
        symmetric: pos == neg,
        sign_probability_holds: 6 * pos >= d.total,
    })
}

/// Every `(N, M, i, k)` with even `N ≤ 8`, `M ≤ 3`, `i ≤ N/2`,
/// `k ≤ max_batch(N)/2` and `i + k ≥ 1`.
pub fn partial_sum_grid(max_batch: impl Fn(usize) -> usize) -> Vec<(usize, usize, usize, usize)> {
    let mut out = Vec::new();
    for n in (2..=MAX_ENUMERATED_COMPONENTS).step_by(2) {
        for m in 1..=MAX_ENUMERATED_MACHINES {
            for i in 0..=n / 2 {
                for k in 0..=max_batch(n) / 2 {
                    if i + k >= 1 {
                        out.push((n, m, i, k));
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shuffle::machine_stream;

    #[test]
    fn hs_bound_examples() {
        let b = hs_bound(1.0, 1, 10, 5, 0.05).unwrap();
        assert!((b - 1.88193).abs() < 2e-4, "{b}");
        assert!((b - (8.0 * 0.6 * 40f64.ln() / 5.0).sqrt()).abs() < 1e-14);
        assert_eq!(hs_bound(0.0, 3, 16, 4, 0.01).unwrap(), 0.0);
        let one = hs_bound(1.0, 1, 16, 4, 0.01).unwrap();
        let four = hs_bound(1.0, 4, 16, 4, 0.01).unwrap();
        assert!((one / four - 2.0).abs() < 1e-12);
        assert!(hs_bound(1.0, 1, 10, 10, 0.05).is_err());
        assert!(hs_bound(1.0, 1, 10, 0, 0.05).is_err());
        assert!(hs_bound(1.0, 1, 10, 5, 1.0).is_err());
        assert!(hs_bound(1.0, 1, 10, 5, 0.0).is_err());
    }

    #[test]
    fn hs_bound_decreases_in_prefix_and_machines() {
        for pop in [4, 8, 16, 33] {
            for m in 1..5 {
                let vals: Vec<f64> = (1..pop).map(|n| hs_bound(1.0, m, pop, n, 0.05).unwrap()).collect();
                assert!(vals.windows(2).all(|w| w[1] < w[0]));
                assert!(hs_bound(1.0, m + 1, pop, 1, 0.05).unwrap() < vals[0]);
            }
        }
    }

    #[test]
    fn zero_population_never_violates() {
        let spec = WithoutReplacementSpec::new(sign_population(2, 8, 0.0), 3, 0.0, 0.05).unwrap();
        let r = mc_violation_rate(&spec, 2000, 1).unwrap();
        assert_eq!(r.violations, 0);
        assert!(r.pass);
    }

    #[test]
    fn scalar_sign_population_passes() {
        let spec = WithoutReplacementSpec::new(sign_population(1, 10, 1.0), 5, 1.0, 0.05).unwrap();
        let r = mc_violation_rate(&spec, 100_000, 3).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn sphere_population_passes() {
        let pop = random_population(2, 12, 3, 2.0, &mut machine_stream(4, 0, 0));
        let spec = WithoutReplacementSpec::new(pop, 6, 2.0, 0.05).unwrap();
        let r = mc_violation_rate(&spec, 20_000, 5).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn random_population_is_scaled_to_nu() {
        let pop = random_population(3, 10, 3, 1.5, &mut machine_stream(7, 0, 0));
        for rows in &pop {
            let mean = mean_of(rows);
            assert!(mean.iter().all(|v| v.abs() < 1e-12));
            let widest = rows.iter().map(|r| dist(r, &mean)).fold(0.0, f64::max);
            assert!((widest - 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn violation_rate_is_reproducible() {
        let pop = random_population(2, 8, 1, 1.0, &mut machine_stream(1, 0, 0));
        let spec = WithoutReplacementSpec::new(pop, 2, 1.0, 0.3).unwrap();
        assert_eq!(mc_violation_rate(&spec, 5000, 9).unwrap(), mc_violation_rate(&spec, 5000, 9).unwrap());
    }

    #[test]
    fn spec_rejects_wide_vectors() {
        assert!(WithoutReplacementSpec::new(sign_population(1, 4, 2.0), 2, 1.0, 0.1).is_err());
        assert!(WithoutReplacementSpec::new(sign_population(1, 4, 1.0), 4, 1.0, 0.1).is_err());
    }

    #[test]
    fn two_component_distribution() {
        let d = exact_partial_sum_distribution(2, 1, 1, 0).unwrap();
        assert_eq!(d.total, 2);
        assert_eq!(d.probability(1), 0.5);
        assert_eq!(d.probability(-1), 0.5);
        assert_eq!(d.mean_abs(), 1.0);
    }

    #[test]
    fn four_component_distribution() {
        let d = exact_partial_sum_distribution(4, 1, 2, 0).unwrap();
        assert_eq!(d.total, 6);
        assert_eq!(d.counts.get(&0), Some(&4));
        assert_eq!(d.counts.get(&2), Some(&1));
        assert_eq!(d.counts.get(&-2), Some(&1));
        assert!((d.mean_abs() - 2.0 / 3.0).abs() < 1e-15);
        let c = check_partial_sum(4, 1, 2, 0).unwrap();
        assert!(c.sandwich_holds && c.symmetric && c.sign_probability_holds);
    }

    #[test]
    fn enumeration_limits() {
        assert!(exact_partial_sum_distribution(4, 1, 0, 0).is_err());
        assert!(exact_partial_sum_distribution(10, 1, 1, 0).is_err());
        assert!(exact_partial_sum_distribution(4, 4, 1, 0).is_err());
        assert!(exact_partial_sum_distribution(5, 1, 1, 0).is_err());
        assert!(exact_partial_sum_distribution(4, 1, 3, 2).is_err());
    }

    #[test]
    fn convolution_matches_direct_enumeration() {
        let (n, m, i, k) = (4usize, 2usize, 1usize, 1usize);
        let pats = sign_patterns(n);
        let mut direct: BTreeMap<i64, u128> = BTreeMap::new();
        for &a in &pats {
            for &b in &pats {
                let v = signed_sum(a, 0..i) + signed_sum(b, 0..i) + m as i64 * signed_sum(b, i..i + k);
                *direct.entry(v).or_default() += 1;
            }
        }
        assert_eq!(exact_partial_sum_distribution(n, m, i, k).unwrap().counts, direct);
    }

    #[test]
    fn lemma_holds_for_admissible_minibatch_sizes() {
        for (n, m, i, k) in partial_sum_grid(|n| n / 2) {
            let c = check_partial_sum(n, m, i, k).unwrap();
            assert!(c.sandwich_holds && c.symmetric && c.sign_probability_holds, "{c:?}");
        }
    }

    #[test]
    fn full_batch_grid_fails_only_on_complete_single_permutation() {
        // With B = N the grid reaches i = k = N/2, M = 1, where S sums the
        // whole permutation and is identically zero.
        for (n, m, i, k) in partial_sum_grid(|n| n) {
            let c = check_partial_sum(n, m, i, k).unwrap();
            let degenerate = m == 1 && i == n / 2 && k == n / 2;
            assert!(c.symmetric);
            assert_eq!(c.sandwich_holds && c.sign_probability_holds, !degenerate, "{c:?}");
        }
    }
}

//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit when
//! any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shuffle_fl::algorithms::{minibatch_rr_epoch, minibatch_rr_epoch_rescaled, run, RunConfig};
use shuffle_fl::concentration::{
    check_partial_sum, mc_violation_rate, partial_sum_grid, random_population, sign_population, WithoutReplacementSpec,
};
use shuffle_fl::harness::{
    brute_force_epoch, hetero_sync_points, run_sweep, Axis, Measure, OracleCheck, OracleParams, SweepResult, SweepSpec,
};
use shuffle_fl::problem::{make_hetero_linear_quadratic, make_random_quadratic, ProblemRegistry, ProblemSpec};
use shuffle_fl::rates::{epoch_threshold, hetero_trajectory, phi_closed_form, StepRule};
use shuffle_fl::shuffle::epoch_permutations;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn slope_in(r: &SweepResult, lo: f64, hi: f64) -> (bool, String) {
    let means: Vec<String> = r.points.iter().map(|p| format!("{}={:.4e}", p.value, p.mean.unwrap_or(f64::NAN))).collect();
    match r.fit {
        Some(f) => (
            lo <= f.slope && f.slope <= hi,
            format!("slope {:.3} ± {:.3} in [{lo}, {hi}] ({})", f.slope, f.slope_stderr, means.join(", ")),
        ),
        None => (false, format!("no fit ({})", means.join(", "))),
    }
}

// ---------------------------------------------------------------------------
// Exact oracles written independently of the library

/// Every arrangement of `n/2` plus and `n/2` minus signs.
fn sign_patterns(n: usize) -> Vec<Vec<f64>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == n / 2)
        .map(|m| (0..n).map(|t| if m >> t & 1 == 1 { 1.0 } else { -1.0 }).collect())
        .collect()
}

/// `E[(Σ_j α^j S_j)²]` with `S_j` the sum of block `j` of `B` signs.
fn enumerated_phi(n: usize, b: usize, alpha: f64) -> f64 {
    let patterns = sign_patterns(n);
    let total: f64 = patterns
        .iter()
        .map(|s| {
            let w: f64 = s.chunks(b).enumerate().map(|(j, blk)| alpha.powi(j as i32) * blk.iter().sum::<f64>()).sum();
            w * w
        })
        .sum();
    total / patterns.len() as f64
}

/// Synchronized iterates of local RR on the heterogeneous construction from
/// its one-round recursion.
fn hetero_recursion(mu: f64, tau: f64, eta: f64, b: usize, rounds: usize, y0: f64) -> Vec<f64> {
    let q = 1.0 - 2.0 * eta * mu;
    let a = 0.5 * (1.0 + q.powi(b as i32));
    let d = eta * tau / 2.0 * (b as f64 - (0..b).map(|j| q.powi(j as i32)).sum::<f64>());
    let mut ys = vec![y0];
    for _ in 0..rounds {
        let y = ys[ys.len() - 1];
        ys.push(a * y + d);
    }
    ys
}

/// `E|S|` and the counts of positive and negative `S` over all tuples of
/// sign arrangements.
fn enumerated_partial_sum(n: usize, machines: usize, i: usize, k: usize) -> (f64, usize, usize, usize) {
    let patterns = sign_patterns(n);
    let prefix: Vec<f64> = patterns.iter().map(|s| s[..i].iter().sum()).collect();
    let (mut abs, mut pos, mut neg, mut total) = (0.0, 0usize, 0usize, 0usize);
    let mut idx = vec![0usize; machines];
    loop {
        let last = &patterns[idx[machines - 1]];
        let s: f64 = idx.iter().map(|&p| prefix[p]).sum::<f64>() / machines as f64 + last[i..i + k].iter().sum::<f64>();
        abs += s.abs();
        if s > 1e-12 {
            pos += 1;
        } else if s < -1e-12 {
            neg += 1;
        }
        total += 1;
        let mut d = 0;
        while d < machines {
            idx[d] += 1;
            if idx[d] < patterns.len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d == machines {
            break;
        }
    }
    (abs / total as f64, pos, neg, total)
}

// ---------------------------------------------------------------------------
// Criteria

const PHI_GRID: [(usize, usize); 8] = [(2, 1), (4, 1), (4, 2), (6, 1), (6, 2), (6, 3), (8, 2), (8, 4)];

fn phi_identity() -> Verdict {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (n, b) in PHI_GRID {
        for alpha in [0.0, 0.25, 0.5, 0.9] {
            let diff = (phi_closed_form(n, b, alpha).unwrap() - enumerated_phi(n, b, alpha)).abs();
            worst = worst.max(diff);
        }
    }
    let t = start.elapsed();
    verdict(worst <= 1e-10 && t < Duration::from_secs(1), format!("max |Δ| = {worst:.2e}, {t:.2?} (limit 1 s)"))
}

fn epoch_moment_oracle() -> Verdict {
    let start = Instant::now();
    let (n, b, l, nu, x0) = (4usize, 2usize, 1.0, 1.0, 0.3);
    let mut worst_exact: f64 = 0.0;
    let mut worst_z: f64 = 0.0;
    for m in [1usize, 2] {
        for eta_l in [0.1, 0.5] {
            let eta = eta_l / l;
            let alpha: f64 = 1.0 - eta * l;
            let formula = alpha.powi(2 * (n / b) as i32) * x0 * x0
                + eta * eta * nu * nu / (m as f64 * (b * b) as f64) * enumerated_phi(n, b, alpha);
            let p = OracleParams {
                components: n,
                batch: b,
                machines: m,
                eta,
                l,
                nu,
                x0,
                trials: 10_000,
                seed: 17,
                ..OracleParams::default()
            };
            let (_, exact) = brute_force_epoch(&p).unwrap();
            worst_exact = worst_exact.max((exact - formula).abs());
            let r = shuffle_fl::harness::oracle_cross_check(OracleCheck::BruteForceEpoch, &p).unwrap();
            worst_z = worst_z.max((r.simulation.mean - formula).abs() / r.simulation.stderr);
        }
    }
    let t = start.elapsed();
    verdict(
        worst_exact <= 1e-10 && worst_z <= 4.0 && t < Duration::from_secs(5),
        format!("max |enumeration − formula| = {worst_exact:.2e}, max MC z = {worst_z:.2}, {t:.2?} (limit 5 s)"),
    )
}

fn hetero_trajectory_match() -> Verdict {
    let start = Instant::now();
    let (mu, tau, l, k, y0) = (1.0, 1.0, 2.0, 8usize, 0.5);
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for eta in [0.01, 0.03, 0.1] {
        for b in [2usize, 4, 8] {
            for n in [8usize, 16, 32] {
                let problem = make_hetero_linear_quadratic(l, mu, tau, n, 2).unwrap();
                let p = OracleParams { components: n, batch: b, machines: 2, epochs: k, eta, l, mu, tau, x0: y0, ..OracleParams::default() };
                let sim = hetero_sync_points(&problem, &p).unwrap();
                let lib = hetero_trajectory(mu, tau, eta, b, n, k, y0).unwrap();
                let own = hetero_recursion(mu, tau, eta, b, n * k / b, y0);
                assert_eq!(sim.len(), own.len());
                assert_eq!(lib.len(), own.len());
                for ((s, a), o) in sim.iter().zip(&lib).zip(&own) {
                    worst = worst.max((s - o).abs()).max((a - o).abs());
                }
                points += sim.len();
            }
        }
    }
    let t = start.elapsed();
    verdict(worst <= 1e-10 && t < Duration::from_secs(1), format!("{points} sync points, max |Δ| = {worst:.2e}, {t:.2?} (limit 1 s)"))
}

fn composite() -> ProblemSpec {
    ProblemSpec::new("composite3d", 10.0, 1.0, 1.0)
}

fn threshold_at(problem: &ProblemSpec, base: &RunConfig, rule: StepRule) -> usize {
    let p = ProblemRegistry::default().build(problem, base.machines, base.components).unwrap();
    epoch_threshold(rule, &base.rate_params(p.as_ref()).unwrap()).unwrap() as usize
}

fn sweep(problem: ProblemSpec, base: RunConfig, axis: Axis, values: Vec<usize>, trials: usize) -> SweepResult {
    let spec = SweepSpec { base, problem, axis, values, trials, seed: 1, measure: Measure::MeanSuboptimality };
    run_sweep(&spec).unwrap()
}

fn minibatch_m_scaling() -> Verdict {
    let probe = RunConfig::new("minibatch-rr", 8, 16, 256, 2);
    let k = threshold_at(&composite(), &probe, StepRule::ThmMinibatchRR).max(256);
    let r = sweep(composite(), RunConfig::new("minibatch-rr", 1, 16, k, 2), Axis::M, vec![1, 2, 4, 8], 2000);
    let (pass, detail) = slope_in(&r, -1.2, -0.8);
    verdict(pass, format!("K = {k}, {detail}"))
}

fn minibatch_k_scaling() -> Verdict {
    let r = sweep(composite(), RunConfig::new("minibatch-rr", 4, 16, 128, 2), Axis::K, vec![128, 256, 512], 2000);
    let (pass, detail) = slope_in(&r, -2.4, -1.6);
    verdict(pass, detail)
}

fn local_large_batch() -> Verdict {
    let (n, k) = (64usize, 256usize);
    let problem = ProblemSpec::new("f2", 4.0, 1.0, 1.0);
    let ratio = |b: usize| {
        let r = sweep(problem.clone(), RunConfig::new("local-rr", 1, n, k, b), Axis::M, vec![1, 8], 2000);
        r.points[1].mean.unwrap() / r.points[0].mean.unwrap()
    };
    let full = ratio(n);
    let small = ratio(2);
    verdict(
        (0.5..=2.0).contains(&full) && small < 0.25,
        format!("N = {n}, K = {k}, kappa = 4: M=8/M=1 ratio {full:.3} at B = N (need within 2x), {small:.3} at B = 2 (need < 0.25)"),
    )
}

fn hetero_batch_scaling() -> Verdict {
    let (n, k, mu) = (16usize, 64usize, 1.0);
    // lower edge of the middle step-size range 1/(8μNK) ≤ η ≤ 1/(8μB)
    let eta = 1.0 / (8.0 * mu * (n * k) as f64);
    let problem = ProblemSpec::new("hetero", 2.0, mu, 0.0).with_tau(1.0);
    let base = RunConfig::new("local-rr", 2, n, k, 2).eta(eta);
    let r = sweep(problem, base, Axis::B, vec![2, 4, 8], 1);
    let (pass, detail) = slope_in(&r, 1.6, 2.4);
    verdict(pass, format!("eta = {eta:.3e}, {detail}"))
}

fn sync_m_scaling() -> Verdict {
    let (n, b) = (16usize, 1usize);
    let probe = RunConfig::new("minibatch-rr", 8, n, 256, b).sync(true);
    let k = threshold_at(&composite(), &probe, StepRule::ThmMinibatchRRSync).max(256);
    let synced = sweep(composite(), RunConfig::new("minibatch-rr", 1, n, k, b).sync(true), Axis::M, vec![1, 2, 4, 8], 2000);
    let plain = sweep(composite(), RunConfig::new("minibatch-rr", 1, n, k, b), Axis::M, vec![1, 2, 4, 8], 2000);
    let (ps, ds) = slope_in(&synced, -2.4, -1.6);
    let (pp, dp) = slope_in(&plain, -1.2, -0.8);
    verdict(ps && pp, format!("K = {k}, B = {b}; SyncShuf {ds}; plain {dp}"))
}

fn concentration_bound() -> Verdict {
    let mut worst = f64::NEG_INFINITY;
    let mut failures = Vec::new();
    let mut configs = 0;
    for m in [1usize, 2, 4] {
        for big_n in [8usize, 16] {
            for n in [big_n / 4, big_n / 2] {
                for delta in [0.05, 0.01] {
                    for dim in [1usize, 3] {
                        let vectors = if dim == 1 {
                            sign_population(m, big_n, 1.0)
                        } else {
                            random_population(m, big_n, dim, 1.0, &mut ChaCha8Rng::seed_from_u64(configs))
                        };
                        let spec = WithoutReplacementSpec::new(vectors, n, 1.0, delta).unwrap();
                        let r = mc_violation_rate(&spec, 100_000, 1000 + configs).unwrap();
                        worst = worst.max(r.rate - delta - 3.0 * r.stderr);
                        if !r.pass {
                            failures.push(format!("(M={m}, N={big_n}, n={n}, δ={delta}, d={dim}) rate {}", r.rate));
                        }
                        configs += 1;
                    }
                }
            }
        }
    }
    verdict(
        failures.is_empty(),
        format!("{configs} configurations, max (rate − δ − 3·stderr) = {worst:.4}; failures: {:?}", failures),
    )
}

fn partial_sum_sandwich() -> Verdict {
    let grid = partial_sum_grid(|n| n);
    let mut failures = Vec::new();
    let mut mismatch: f64 = 0.0;
    for &(n, m, i, k) in &grid {
        let c = check_partial_sum(n, m, i, k).unwrap();
        let (mean_abs, pos, neg, total) = enumerated_partial_sum(n, m, i, k);
        mismatch = mismatch.max((mean_abs - c.mean_abs).abs());
        let scale = (i as f64 / m as f64).sqrt() + (k as f64).sqrt();
        let sandwich = scale / 64.0 <= mean_abs && mean_abs <= scale;
        let signs = pos == neg && 6 * pos >= total;
        assert_eq!(sandwich, c.sandwich_holds, "library and enumeration disagree at {:?}", (n, m, i, k));
        assert_eq!(signs, c.symmetric && c.sign_probability_holds, "library and enumeration disagree at {:?}", (n, m, i, k));
        if !(sandwich && signs) {
            failures.push(format!("(N={n}, M={m}, i={i}, k={k}): E|S| = {mean_abs:.4}, P(S>0) = {:.4}", pos as f64 / total as f64));
        }
    }
    verdict(
        failures.is_empty() && mismatch < 1e-12,
        format!("{} grid points (N ≤ 8, M ≤ 3, k ≤ N/2), {} violations {:?}", grid.len(), failures.len(), failures),
    )
}

fn structural_identities() -> Verdict {
    let mut worst = [0.0f64; 4];
    let max_diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    for (case, &(dim, m, n)) in [(1usize, 1usize, 4usize), (3, 2, 6), (2, 3, 8), (4, 2, 8)].iter().enumerate() {
        for seed in 0..5u64 {
            let problem = make_random_quadratic(dim, n, m, 100 * case as u64 + seed).unwrap();
            let eta = 0.5 / problem.curvature_bounds().0;
            let x0: Vec<f64> = (0..dim).map(|j| 1.0 - 0.3 * j as f64).collect();
            let cfg = |alg: &str, b: usize| RunConfig::new(alg, m, n, 5, b).eta(eta).seed(seed).start(x0.clone()).degenerate(true);

            let mb = run(&problem, &cfg("minibatch-rr", n)).unwrap();
            let gd = run(&problem, &cfg("gd", 1)).unwrap();
            worst[0] = worst[0].max(max_diff(&mb.final_x, &gd.final_x));

            let local = run(&problem, &cfg("local-rr", 1)).unwrap();
            let mb1 = run(&problem, &cfg("minibatch-rr", 1)).unwrap();
            worst[1] = worst[1].max(max_diff(&local.final_x, &mb1.final_x));

            let single = make_random_quadratic(dim, n, 1, 100 * case as u64 + seed).unwrap();
            for alg in ["minibatch-rr", "local-rr"] {
                let c = RunConfig::new(alg, 1, n, 5, 2).eta(eta).seed(seed).start(x0.clone());
                let a = run(&single, &c.clone().sync(true)).unwrap();
                let b = run(&single, &c).unwrap();
                worst[2] = worst[2].max(max_diff(&a.final_x, &b.final_x));
            }

            for b in (1..=n).filter(|b| n % b == 0) {
                let perms = epoch_permutations(seed, 1, m, n, false).unwrap();
                let plain = minibatch_rr_epoch(&x0, &problem, eta, b, &perms).unwrap();
                let rescaled = minibatch_rr_epoch_rescaled(&x0, &problem, eta / b as f64, b, &perms).unwrap();
                worst[3] = worst[3].max(max_diff(&plain, &rescaled));
            }
        }
    }
    verdict(
        worst.iter().all(|w| *w <= 1e-12),
        format!(
            "max |Δ|: minibatch B=N vs GD {:.1e}, local B=1 vs minibatch B=1 {:.1e}, SyncShuf M=1 vs plain {:.1e}, rescaled {:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 11] = [
        ("phi closed form vs enumeration", phi_identity),
        ("minibatch RR epoch second moment on F3", epoch_moment_oracle),
        ("heterogeneous local RR trajectory", hetero_trajectory_match),
        ("minibatch RR M-scaling", minibatch_m_scaling),
        ("minibatch RR K-scaling", minibatch_k_scaling),
        ("local RR with B = N vs B = 2", local_large_batch),
        ("local RR heterogeneity B-scaling", hetero_batch_scaling),
        ("SyncShuf M-scaling", sync_m_scaling),
        ("without-replacement concentration bound", concentration_bound),
        ("partial-sum sandwich and sign probabilities", partial_sum_sandwich),
        ("structural identities", structural_identities),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            verdict(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("{tag} [{:>2}] {name}: {} ({:.1?})", i + 1, v.detail, start.elapsed());
        if !v.pass {
            failed.push(i + 1);
        }
    }
    println!("acceptance: {} passed, {} failed {:?}", criteria.len() - failed.len(), failed.len(), failed);
    if !failed.is_empty() {
        std::process::exit(1);
    }
}

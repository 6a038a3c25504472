//! Cross-module property tests.

use proptest::prelude::*;
use shuffle_fl::algorithms::{run, Record, RunConfig};
use shuffle_fl::concentration::{hs_bound, mc_violation_rate, sign_population, WithoutReplacementSpec};
use shuffle_fl::harness::{brute_force_epoch, epoch_second_moment_closed_form, OracleParams};
use shuffle_fl::problem::{global_gradient, global_value, make_skewed_quadratic_1d, ProblemRegistry, ProblemSpec, SkewKind};
use shuffle_fl::rates::{phi_closed_form, step_size, RateParams, StepRule};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hs_bound_decreases_in_sample_size_and_machines(
        big_n in 3usize..64, m in 1usize..8, delta in 0.001f64..0.5, nu in 0.1f64..10.0
    ) {
        for n in 1..big_n - 1 {
            let a = hs_bound(nu, m, big_n, n, delta).unwrap();
            let b = hs_bound(nu, m, big_n, n + 1, delta).unwrap();
            prop_assert!(b < a, "n = {n}: {b} !< {a}");
        }
        let one = hs_bound(nu, m, big_n, 1, delta).unwrap();
        let more = hs_bound(nu, m + 1, big_n, 1, delta).unwrap();
        prop_assert!(more < one);
    }

    #[test]
    fn violation_rate_is_reproducible(seed in any::<u64>(), m in 1usize..4) {
        let spec = WithoutReplacementSpec::new(sign_population(m, 8, 1.0), 3, 1.0, 0.05).unwrap();
        let a = mc_violation_rate(&spec, 500, seed).unwrap();
        let b = mc_violation_rate(&spec, 500, seed).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn step_rules_positive_and_decreasing(m in 1u64..16, n_half in 1u64..32, b in 1u64..4, k in 2u64..500) {
        let n = 2 * n_half * b;
        for rule in StepRule::ALL {
            let p = |k| RateParams { machines: m, components: n, epochs: k, batch: b, ..RateParams::default() };
            let now = step_size(rule, &p(k)).unwrap();
            let later = step_size(rule, &p(k + 1)).unwrap();
            prop_assert!(now > 0.0 && later < now);
        }
    }

    #[test]
    fn brute_force_matches_closed_form(m in 1usize..3, eta in 0.0f64..1.0, x0 in -2.0f64..2.0, shape in 0usize..4) {
        let (n, b) = [(2, 1), (4, 1), (4, 2), (6, 2)][shape];
        let p = OracleParams { components: n, batch: b, machines: m, eta, x0, ..OracleParams::default() };
        let (_, exact) = brute_force_epoch(&p).unwrap();
        let closed = epoch_second_moment_closed_form(&p).unwrap();
        prop_assert!((exact - closed).abs() < 1e-10 * (1.0 + closed));
    }

    #[test]
    fn gd_descends_below_inverse_smoothness(kind in 0usize..3, x0 in -5.0f64..5.0, frac in 0.05f64..1.0) {
        let kind = [SkewKind::F1, SkewKind::F2, SkewKind::F3][kind];
        let p = make_skewed_quadratic_1d(kind, 8.0, 1.0, 1.0, 4, 2).unwrap();
        let r = run(&p, &RunConfig::new("gd", 2, 4, 15, 1).eta(frac / 8.0).start(vec![x0]).record(Record::PerEpoch)).unwrap();
        prop_assert!(r.suboptimality.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn pl_inequality_on_registered_constructions(x in -20.0f64..20.0, kind in 0usize..5) {
        let name = ["f1", "f2", "f3", "composite3d", "hetero"][kind];
        let spec = ProblemSpec::new(name, 4.0, 1.0, 1.0);
        let p = ProblemRegistry::default().build(&spec, 2, 4).unwrap();
        let point = vec![x; p.dim()];
        let g = global_gradient(p.as_ref(), &point).unwrap();
        let gap = global_value(p.as_ref(), &point).unwrap() - p.f_star();
        let mu = p.constants().unwrap().mu;
        let half_sq = 0.5 * g.iter().map(|v| v * v).sum::<f64>();
        prop_assert!(half_sq >= mu * gap - 1e-9 * (1.0 + gap.abs()), "{name} at {x}");
    }
}

#[test]
fn phi_vanishes_without_contraction() {
    for (n, b) in [(2, 1), (4, 2), (8, 2), (8, 4)] {
        assert!(phi_closed_form(n, b, 1.0).unwrap().abs() < 1e-12);
    }
}

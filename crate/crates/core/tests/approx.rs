use std::sync::Arc;

use pathctl::approx::{
    b_correction, build_frozen, correction_process, frozen_instance, measure_errors, nonincreasing_3se,
    projection_error, projection_error_sup, regularized_value, sandwich_check, witness, ApproxConfig,
    FrozenCoefficients, SandwichOptions, SandwichParams,
};
use pathctl::noise::{sample_wiener, Node, NoiseState, NoiseTree};
use pathctl::path::{Path, TimeGrid};
use pathctl::problem::{builtin, Coefficients};
use pathctl::spectral::{HVector, Space};
use pathctl::state::SolverConfig;
use proptest::prelude::*;

fn config(d: usize) -> ApproxConfig {
    ApproxConfig {
        n_partition: 4,
        level: 2,
        proj_dim: d,
        k: 1.0,
        x0: HVector::unit(8, 0).scaled(0.5),
        ensemble: 64,
        dt: 1.0 / 48.0,
    }
}

#[test]
fn witness_tail_sum() {
    // (Σ_{i=5}^{8} i^{−2}/(1+π²i²))^{1/2}
    assert!((projection_error(&witness(8), 4) - 1.7499429857266262e-2).abs() < 1e-15);
    assert_eq!(projection_error(&HVector::unit(8, 0), 1), 0.0);
}

#[test]
fn configuration_is_validated() {
    let p = builtin("delay", 8, 1.0).unwrap();
    assert!(config(4).validate(&p).is_ok());
    assert!(ApproxConfig { n_partition: 3, ..config(4) }.validate(&p).is_err());
    assert!(config(9).validate(&p).is_err());
}

#[test]
fn path_independent_coefficients_are_unchanged() {
    let p = builtin("null", 8, 1.0).unwrap();
    let c = config(2);
    let rep = measure_errors(&p, &build_frozen(&p, &c).unwrap(), &c, 1).unwrap();
    assert_eq!(rep.f_agg + rep.beta_agg + rep.g_err, 0.0);
    assert_eq!(rep.freeze_gap_violations, 0);
}

#[test]
fn delay_lookups_on_anchor_times_are_exact() {
    let p = builtin("delay", 8, 1.0).unwrap();
    let c = ApproxConfig { level: 3, ..config(8) };
    let frozen = build_frozen(&p, &c).unwrap();
    let x = Path::from_fn(TimeGrid::from_origin(0.5, 1.0 / 48.0).unwrap(), |s| HVector::unit(8, 1).scaled(s));
    let n = NoiseState::zero(1);
    // t/2 = 0.25 is a dyadic anchor at level 3
    let orig = p.coeffs.running_cost(0.5, &x, 1.0, &n);
    assert_eq!(frozen.running_cost(0.5, &x, 1.0, &n), orig);
    assert_eq!(frozen.breakpoint(0.3, 0.5), 0.25);
    assert_eq!(frozen.breakpoint(0.5, 0.5), 0.5);
}

#[test]
fn maximal_refinement_has_no_error() {
    let p = builtin("delay-vstar", 8, 1.0).unwrap();
    let c = ApproxConfig { level: 4, n_partition: 16, dt: 1.0 / 16.0, ..config(8) };
    let rep = measure_errors(&p, &build_frozen(&p, &c).unwrap(), &c, 2).unwrap();
    assert!(rep.f_agg + rep.beta_agg + rep.g_err <= 1e-12, "{rep:?}");
}

#[test]
fn errors_shrink_under_refinement() {
    let p = builtin("delay-vstar", 8, 1.0).unwrap();
    let at = |c: ApproxConfig| {
        let r = measure_errors(&p, &build_frozen(&p, &c).unwrap(), &c, 3).unwrap();
        [(r.f_mean, r.f_se), (r.beta_mean, r.beta_se), (r.g_mean, r.g_se)]
    };
    let pairs = [
        (config(4), ApproxConfig { level: 4, ..config(4) }),
        (config(2), config(4)),
        (config(4), ApproxConfig { n_partition: 8, ..config(4) }),
    ];
    for (a, b) in pairs {
        for (x, y) in at(a).into_iter().zip(at(b)) {
            assert!(nonincreasing_3se(x, y), "{x:?} -> {y:?}");
        }
    }
}

#[test]
fn projection_table_decreases() {
    let p = builtin("delay-vstar", 8, 1.0).unwrap();
    let tab = projection_error_sup(&p, &[1, 2, 4, 8], &config(4), 4).unwrap();
    assert!(tab.strictly_decreasing(1e-14));
    assert_eq!(tab.rows[3].sup_error, 0.0);
    for r in &tab.rows {
        assert!(r.witness <= r.witness_bound);
    }
    assert!(projection_error_sup(&p, &[2, 1], &config(4), 4).is_err());
}

#[test]
fn correction_process_terminal_value() {
    let p = builtin("delay", 8, 1.0).unwrap();
    let c = config(2);
    let rep = measure_errors(&p, &build_frozen(&p, &c).unwrap(), &c, 5).unwrap();
    let y = correction_process(&rep, 0.5);
    assert_eq!(*y.last().unwrap(), rep.g_err);
    assert!(y.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn b_correction_closed_forms() {
    // one step: E‖ΔB‖ = √dt; two steps with one mode: dt·√dt + E|B₂| = dt^{3/2} + √dt
    let t = NoiseTree::product(2, 1, 1, 0.25, 1 << 10).unwrap();
    assert!((b_correction(&t, 1) - 0.5).abs() < 1e-15);
    assert!((b_correction(&t, 0) - (0.125 + 0.5)).abs() < 1e-15);
    assert_eq!(b_correction(&t, 2), 0.0);
}

#[test]
fn unit_running_cost_gives_remaining_time_for_any_delta() {
    let p = builtin("null", 4, 1.0).unwrap();
    let c = ApproxConfig { x0: HVector::unit(4, 0), ..config(2) };
    let fin = frozen_instance(&p, build_frozen(&p, &c).unwrap());
    let tree = NoiseTree::product(3, 1, 2, 1.0 / 3.0, 1 << 12).unwrap();
    let cfg = SolverConfig::with_dt(1.0 / 48.0);
    let x = Path::point(0.0, 1.0 / 48.0, HVector::unit(4, 0)).unwrap();
    for delta in [0.0, 0.3] {
        let v = regularized_value(&fin, &tree, Node::ROOT, &x, delta, &cfg).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }
}

#[test]
fn degenerate_sandwich_closes() {
    let p = builtin("steer-1", 8, 1.0).unwrap();
    let opts = SandwichOptions {
        delta: 0.0,
        n_probes: 6,
        ..Default::default()
    };
    let rep = sandwich_check(&p, &config(1), &opts, &SolverConfig::with_dt(1.0 / 48.0), 7).unwrap();
    assert_eq!(rep.n_violations, 0);
    assert!(rep.max_gap <= 1e-12);
    for pr in &rep.probes {
        assert!((pr.value - pr.regularized).abs() <= 1e-12);
    }
}

#[test]
fn sandwich_params_follow_their_formulas() {
    let s = SandwichParams::new(0.1, 0.5, 1.0).unwrap();
    assert_eq!((s.c1, s.c2), (0.5, 6.0));
    assert!(SandwichParams::new(1.0, 0.5, 1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn freezing_a_frozen_path_changes_nothing(seed_ in 0u64..1000, d in 1usize..=8) {
        let p = builtin("delay", 8, 1.0).unwrap();
        let frozen = FrozenCoefficients::new(p.coeffs.clone(), 1.0, 4, 2, d);
        let w = sample_wiener(TimeGrid::from_origin(1.0, 1.0 / 16.0).unwrap(), 1, seed_).unwrap();
        let x = Path::from_fn(*w.grid(), |s| HVector::from_coeffs((0..8).map(|i| if i < d { (s + i as f64).sin() } else { 0.0 }).collect()));
        let once = Path::from_fn(*x.grid(), |s| {
            let b = frozen.breakpoint(s, 1.0);
            x.eval(b).clone()
        });
        let twice = FrozenCoefficients::new(Arc::new(frozen.clone()), 1.0, 4, 2, d);
        let n = w.noise_state();
        for v in [-1.0, 0.0, 1.0] {
            prop_assert!((frozen.running_cost(1.0, &once, v, &n) - twice.running_cost(1.0, &once, v, &n)).abs() <= 1e-12);
            let b1 = frozen.beta(1.0, &once, v, &n);
            prop_assert!(b1.dist(&b1.project(d).unwrap(), Space::H) == 0.0);
        }
    }
}

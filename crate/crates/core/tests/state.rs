use pathctl::control::ControlProcess;
use pathctl::noise::{sample_wiener, NoiseState};
use pathctl::path::{Path, TimeGrid};
use pathctl::problem::builtin;
use pathctl::seed;
use pathctl::spectral::{random_unit, HVector, Space};
use pathctl::state::{flow_check, picard_factor, picard_solve, solve_state, Method, SolverConfig};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn constant_control_matches_closed_form() {
    // a(1) = −(1 − e^{−π²})/π² for v = −1 from rest
    let p = builtin("steer-1", 4, 1.0).unwrap();
    let xi = Path::point(0.0, 1.0 / 16.0, HVector::zeros(4)).unwrap();
    let sol = solve_state(&p, 0.0, &xi, &0usize, &NoiseState::zero(1), &SolverConfig::with_dt(1.0 / 16.0)).unwrap();
    assert!((sol.path.end_value().coeffs()[0] + 0.10131594298788986).abs() < 1e-14);
}

#[test]
fn picard_contracts_at_the_predicted_rate() {
    // √(0.3·e^{0.6}) for L = 1, ĉ₂ = 1, c₁⁺ = 2
    let bound = 0.7393481183564022;
    for i in 0..10u64 {
        let mut rng = seed::rng(21, "picard-test", i);
        let p = builtin(if i % 2 == 0 { "delay" } else { "delay-vstar" }, 16, 1.0).unwrap();
        assert!((picard_factor(&p, 0.3).sqrt() - bound).abs() < 1e-12);
        let xi = Path::point(0.0, 0.01, random_unit(16, &mut rng).scaled(rng.random::<f64>())).unwrap();
        let labels = (0..5).map(|_| rng.random_range(0..3)).collect();
        let theta = ControlProcess::OpenLoop { start: 0.0, end: 1.0, labels };
        let cfg = SolverConfig {
            picard_window: Some(0.3),
            ..SolverConfig::with_dt(0.01)
        };
        let sol = picard_solve(&p, 0.0, &xi, &theta, &NoiseState::zero(1), &cfg).unwrap();
        let trace = sol.picard.as_ref().unwrap();
        assert!((trace.window - 0.3).abs() < 1e-12);
        assert!(trace.ratios().iter().all(|&r| r <= bound));
        let direct = solve_state(&p, 0.0, &xi, &theta, &NoiseState::zero(1), &cfg).unwrap();
        assert!(sol.path.sup_dist(&direct.path, Space::H) <= 10.0 * cfg.picard_tol);
    }
}

#[test]
fn flow_property_on_and_off_grid() {
    let p = builtin("delay", 8, 1.0).unwrap();
    let xi = Path::point(0.0, 1.0 / 32.0, HVector::unit(8, 0).scaled(0.7)).unwrap();
    let noise = NoiseState::zero(1);
    let cfg = SolverConfig::with_dt(1.0 / 32.0);
    assert!(flow_check(&p, 0.0, 0.5, &xi, &2usize, &noise, &cfg).unwrap() < 1e-14);
    assert!(flow_check(&p, 0.0, 0.3, &xi, &2usize, &noise, &cfg).unwrap() < 0.05);
}

#[test]
fn semi_implicit_agrees_with_exponential_to_first_order() {
    let p = builtin("steer-1", 4, 1.0).unwrap();
    let xi = Path::point(0.0, 1.0 / 256.0, HVector::unit(4, 0)).unwrap();
    let gap = |dt: f64| {
        let xi = Path::point(0.0, dt, xi.end_value().clone()).unwrap();
        let e = solve_state(&p, 0.0, &xi, &2usize, &NoiseState::zero(1), &SolverConfig::with_dt(dt)).unwrap();
        let cfg = SolverConfig {
            method: Method::SemiImplicit,
            ..SolverConfig::with_dt(dt)
        };
        let s = solve_state(&p, 0.0, &xi, &2usize, &NoiseState::zero(1), &cfg).unwrap();
        (e.path.end_value() - s.path.end_value()).norm(Space::H)
    };
    let (a, b) = (gap(1.0 / 64.0), gap(1.0 / 128.0));
    assert!(b < a && a / b > 1.6 && a / b < 2.4, "{a} {b}");
}

#[test]
fn random_coefficients_see_the_noise() {
    let p = builtin("random-f", 4, 1.0).unwrap();
    let g = TimeGrid::from_origin(1.0, 1.0 / 32.0).unwrap();
    let xi = Path::point(0.0, 1.0 / 32.0, HVector::zeros(4)).unwrap();
    let cfg = SolverConfig::with_dt(1.0 / 32.0);
    let a = solve_state(&p, 0.0, &xi, &2usize, &sample_wiener(g, 1, 1).unwrap().noise_state(), &cfg).unwrap();
    let b = solve_state(&p, 0.0, &xi, &2usize, &sample_wiener(g, 1, 2).unwrap().noise_state(), &cfg).unwrap();
    assert_ne!(a.running_cost, b.running_cost);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn solutions_stay_within_energy_bound(seed_ in 0u64..10_000) {
        let p = builtin("delay", 8, 1.0).unwrap();
        let mut rng = seed::rng(seed_, "energy", 0);
        let x0 = random_unit(8, &mut rng).scaled(2.0 * rng.random::<f64>());
        let xi = Path::point(0.0, 1.0 / 32.0, x0.clone()).unwrap();
        let sol = solve_state(&p, 0.0, &xi, &rng.random_range(0..3usize), &NoiseState::zero(1), &SolverConfig::with_dt(1.0 / 32.0)).unwrap();
        // K² = max{2, 2LT}e^{2(L+c₁⁺)T} with L = T = 1
        let k_sq = 806.8575869854702;
        prop_assert!(sol.h_max.powi(2) + 2.0 * sol.v_energy <= k_sq * (1.0 + x0.norm_sq(Space::H)));
    }
}

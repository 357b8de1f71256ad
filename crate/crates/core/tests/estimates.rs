use pathctl::estimates::{run_estimate_suite, EstimateConstants};
use pathctl::problem::builtin;
use pathctl::state::SolverConfig;

#[test]
fn constants_for_unit_data() {
    let k = EstimateConstants::from_instance(&builtin("delay", 8, 1.0).unwrap());
    assert!((k.energy_k_sq() - 806.8575869854702).abs() < 1e-9);
    assert!((k.modulus_k() - 29.440421708994933).abs() < 1e-12);
    assert!((k.stability_k() - 155.91424496410247).abs() < 1e-9);
    assert_eq!(k.short_time_k(), 8.0);
    assert_eq!(k.value_bound(), 2.0);
}

#[test]
fn suite_has_no_violations() {
    let rep = run_estimate_suite(24, 16, &SolverConfig::with_dt(1.0 / 32.0), 3).unwrap();
    assert_eq!(rep.violations, 0);
    assert!(rep.records.iter().all(|r| r.max_ratio() <= 1.0));
    assert!(rep.max_control_spread < 0.01);
}

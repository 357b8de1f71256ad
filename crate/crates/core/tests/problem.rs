use pathctl::noise::NoiseState;
use pathctl::path::Path;
use pathctl::problem::{bound_probe, builtin, lipschitz_probe, shifted_ou_instance, spread_direction, Functional, BUILTIN_NAMES};
use pathctl::spectral::{HVector, Space};

#[test]
fn every_builtin_respects_its_bound() {
    for name in BUILTIN_NAMES {
        let p = builtin(name, 16, 1.0).unwrap();
        let worst = bound_probe(&p, 200, 3).unwrap();
        assert!(worst <= 1.0 + 1e-12, "{name}: {worst}");
    }
}

#[test]
fn every_builtin_is_lipschitz_in_its_space() {
    for name in BUILTIN_NAMES {
        let p = builtin(name, 16, 1.0).unwrap();
        let rep = lipschitz_probe(&p, 200, p.coeffs.lipschitz_space(), 4).unwrap();
        assert!(rep.max() <= p.bound() * (1.0 + 1e-9), "{name}: {rep:?}");
    }
}

#[test]
fn spread_direction_has_half_norm() {
    let w = HVector::from_coeffs(spread_direction(16));
    assert!((w.norm(Space::H) - 0.5).abs() < 1e-15);
    assert!(w.coeffs()[8..].iter().all(|&a| a == 0.0));
    assert!((w.coeffs()[0] / w.coeffs()[3] - 4.0).abs() < 1e-12);
}

#[test]
fn null_instance_costs() {
    let p = builtin("null", 4, 1.0).unwrap();
    let x = Path::point(0.0, 0.1, HVector::unit(4, 0)).unwrap();
    let n = NoiseState::zero(1);
    assert_eq!(p.coeffs.running_cost(0.0, &x, 1.0, &n), 1.0);
    assert_eq!(p.coeffs.terminal_cost(&x, &n), 0.0);
    assert!(p.coeffs.beta(0.0, &x, 1.0, &n).is_zero());
}

#[test]
fn shifted_ou_without_forcing_matches_its_core() {
    let p = shifted_ou_instance(8, 1.0, 2, 1.0, 0.0).unwrap();
    let x = Path::point(0.0, 0.1, HVector::unit(8, 1).scaled(0.4)).unwrap();
    let n = NoiseState::zero(2);
    assert!((p.coeffs.running_cost(0.0, &x, 1.0, &n) - 0.4).abs() < 1e-15);
    assert!(!p.is_random());
    assert!(shifted_ou_instance(8, 1.0, 2, 1.0, 0.5).unwrap().is_random());
}

#[test]
fn functionals_roundtrip_through_json() {
    let f = Functional::Delay {
        cap: 1.0,
        space: Space::VStar,
        lag: 0.5,
    };
    let s = serde_json::to_string(&f).unwrap();
    assert!(s.contains("\"kind\":\"delay\""));
    assert_eq!(serde_json::from_str::<Functional>(&s).unwrap(), f);
}

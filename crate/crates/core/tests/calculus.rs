use pathctl::calculus::{
    catalog, check_declared_bounds, check_hamiltonian_bound, ito_kunita_residual, ito_kunita_study, loglog_slope, probe,
    CylindricalFunctional, Expr, WAnchor, ZAnchor, CATALOG,
};
use pathctl::path::Path;
use pathctl::problem::builtin;
use pathctl::seed;
use pathctl::spectral::{HVector, Space};

#[test]
fn declared_bounds_hold_on_the_catalog() {
    for name in CATALOG {
        let u = catalog(name, 8, 1.0).unwrap();
        let rep = check_declared_bounds(&u, 8, 1.0, 1000, 2).unwrap();
        assert!(rep.max_gradient_ratio <= 1.0, "{name}: {rep:?}");
        assert!(rep.max_holder_ratio <= 1.0, "{name}: {rep:?}");
        assert!(rep.max_gateaux_rel <= 1e-4, "{name}: {rep:?}");
    }
}

#[test]
fn linear_functional_gradient_is_its_direction() {
    let u = catalog("linear:p=modes(1,3)", 8, 1.0).unwrap();
    let mut rng = seed::rng(1, "lin", 0);
    let (t, x, noise) = probe(8, 1.0, 1.0 / 16.0, 1, &mut rng).unwrap();
    let g = u.vertical_gradient(t, &x, &noise);
    assert_eq!(g.coeffs()[..4], [1.0, 0.0, 1.0, 0.0]);
    assert!(catalog("linear:p=modes(9)", 8, 1.0).is_err());
    assert!(catalog("nope", 8, 1.0).is_err());
}

#[test]
fn decomposition_does_not_depend_on_the_representation() {
    let e1 = HVector::unit(4, 0);
    let w = vec![WAnchor { time: 1.0, component: 0 }];
    let z = |n: usize| (0..n).map(|_| ZAnchor { time: 1.0, direction: e1.clone() }).collect::<Vec<_>>();
    let a = CylindricalFunctional::new("a", Expr::w(0) * Expr::z(0), w.clone(), z(1), 1.0, 1.0);
    let b = CylindricalFunctional::new("b", Expr::c(0.5) * Expr::w(0) * (Expr::z(0) + Expr::z(1)), w, z(2), 1.0, 1.0);
    for i in 0..50 {
        let mut rng = seed::rng(4, "repr", i);
        let (t, x, noise) = probe(4, 1.0, 1.0 / 16.0, 1, &mut rng).unwrap();
        let (da, ma) = a.semimartingale_parts(t, &x, &noise);
        let (db, mb) = b.semimartingale_parts(t, &x, &noise);
        assert!((da - db).abs() < 1e-14 && (ma[0] - mb[0]).abs() < 1e-14);
        assert!(a.vertical_gradient(t, &x, &noise).dist(&b.vertical_gradient(t, &x, &noise), Space::H) < 1e-14);
    }
}

#[test]
fn hamiltonian_bound_and_generator_consistency() {
    let p = builtin("steer-1", 8, 1.0).unwrap();
    for name in ["linear:p=modes(1)", "quad-w1-z1", "trig-w1-z1"] {
        let u = catalog(name, 8, 1.0).unwrap();
        let rep = check_hamiltonian_bound(&u, &p, 200, 6).unwrap();
        assert!(rep.max_ratio <= 1.0, "{name}: {rep:?}");
        assert!(rep.max_consistency_gap <= 1e-12, "{name}: {rep:?}");
    }
}

#[test]
fn ito_kunita_residual_shrinks_with_the_step() {
    let p = builtin("steer-1", 8, 1.0).unwrap();
    let u = catalog("quad-w1-z1", 8, 1.0).unwrap();
    let x = Path::point(0.0, 1.0 / 32.0, HVector::unit(8, 0).scaled(0.5)).unwrap();
    let dts = [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0];
    let st = ito_kunita_study(&u, &0usize, 0.0, 0.5, &x, &p, 2000, 8, &dts).unwrap();
    let slope = loglog_slope(&dts, &st.iter().map(|s| s.mean_abs).collect::<Vec<_>>());
    assert!((0.8..=1.2).contains(&slope), "{slope}");
    for s in &st {
        assert!(s.martingale_mean.abs() <= 4.0 * s.martingale_stderr);
    }
    let single = ito_kunita_residual(&u, &0usize, 0.0, 0.5, &x, &p, 2000, 8, 1.0 / 64.0).unwrap();
    // a different fine grid, so only statistically equal
    assert!((single.mean_abs - st[1].mean_abs).abs() <= 5.0 * single.stderr_abs.max(st[1].stderr_abs));
}

#[test]
fn constant_functional_has_no_residual() {
    let p = builtin("delay", 4, 1.0).unwrap();
    let u = catalog("const", 4, 1.0).unwrap();
    let x = Path::point(0.0, 0.125, HVector::unit(4, 0)).unwrap();
    let r = ito_kunita_residual(&u, &1usize, 0.0, 1.0, &x, &p, 4, 1, 0.125).unwrap();
    assert_eq!(r.mean_abs, 0.0);
}

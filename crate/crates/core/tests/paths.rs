use pathctl::path::{is_in_path_class, path_dist, sample_path_class, Path, PathClassSpec, PathView, TimeGrid};
use pathctl::seed;
use pathctl::spectral::{HVector, Space};
use proptest::prelude::*;

fn ramp(n: usize, dim: usize) -> Path {
    let grid = TimeGrid::new(0.0, 1.0, n).unwrap();
    Path::from_fn(grid, |s| HVector::unit(dim, 0).scaled(s))
}

#[test]
fn cadlag_evaluation_uses_left_node() {
    let x = ramp(4, 2);
    assert_eq!(x.eval(0.3).coeffs()[0], 0.25);
    assert_eq!(x.eval(0.25).coeffs()[0], 0.25);
    assert_eq!(x.eval(1.0).coeffs()[0], 1.0);
}

#[test]
fn vertical_perturbation_moves_only_the_end() {
    let x = ramp(4, 2);
    let y = x.vertical_perturb(&HVector::unit(2, 1));
    assert_eq!(y.eval(0.75), x.eval(0.75));
    assert_eq!(y.end_value().coeffs(), &[1.0, 1.0]);
    assert_eq!(y.current().coeffs(), &[1.0, 1.0]);
}

#[test]
fn horizontal_extension_freezes_the_end() {
    let x = ramp(4, 1);
    let y = x.horizontal_extend(0.5).unwrap();
    assert!((y.end() - 1.5).abs() < 1e-15);
    assert_eq!(y.eval(1.3).coeffs()[0], 1.0);
    assert!(x.horizontal_extend(0.3).is_err());
    assert_eq!(y.restrict(1.0).unwrap().values(), x.values());
}

#[test]
fn distance_between_paths_of_different_length() {
    let x = ramp(4, 1);
    let short = x.restrict(0.5).unwrap();
    // frozen at 0.5 against the ramp up to 1: sup gap 0.5, plus √0.5
    let d = path_dist(&x, &short, Space::H).unwrap();
    assert!((d - (0.5 + 0.5f64.sqrt())).abs() < 1e-15);
}

#[test]
fn class_samples_belong_to_their_class() {
    let anchor = Path::point(0.0, 1.0 / 32.0, HVector::unit(8, 0).scaled(0.3)).unwrap();
    let spec = PathClassSpec::new(2.0, anchor, 1.0).unwrap();
    for i in 0..20 {
        let s = sample_path_class(&spec, &mut seed::rng(1, "class", i)).unwrap();
        assert!(s.drift.iter().all(|g| g.norm(Space::H) <= 2.0 + 1e-12));
        assert!(is_in_path_class(&s.path, &spec, 1e-9).unwrap());
    }
    assert!(PathClassSpec::new(0.5, Path::point(0.0, 0.1, HVector::zeros(2)).unwrap(), 1.0).is_err());
}

proptest! {
    #[test]
    fn dyadic_freezing_is_idempotent_and_close(level in 0u32..6, seed_ in 0u64..1000) {
        let anchor = Path::point(0.0, 1.0 / 64.0, HVector::unit(4, 0)).unwrap();
        let spec = PathClassSpec::new(1.0, anchor, 1.0).unwrap();
        let x = sample_path_class(&spec, &mut seed::rng(seed_, "freeze", 0)).unwrap().path;
        let p = x.stepwise_project(level);
        prop_assert_eq!(p.stepwise_project(level), p.clone());
        let finer = x.stepwise_project(level + 1);
        prop_assert!(x.sup_dist(&finer, Space::VStar) <= x.sup_dist(&p, Space::VStar) + 1e-12 || level == 0);
    }

    #[test]
    fn path_distance_is_symmetric(a in 1usize..8, b in 1usize..8) {
        let x = ramp(8, 2).restrict(a as f64 / 8.0).unwrap();
        let y = ramp(8, 2).vertical_perturb(&HVector::unit(2, 1)).restrict(b as f64 / 8.0).unwrap();
        let d1 = path_dist(&x, &y, Space::H).unwrap();
        let d2 = path_dist(&y, &x, Space::H).unwrap();
        prop_assert!((d1 - d2).abs() < 1e-15);
        prop_assert!(d1 >= ((a as f64 - b as f64).abs() / 8.0).sqrt());
    }

    #[test]
    fn prefix_view_agrees_with_restriction(i in 0usize..=16, s in 0.0f64..1.0) {
        let x = ramp(16, 1);
        let r = x.restrict_to_index(i);
        let v = x.prefix(i);
        prop_assert_eq!(v.end_time(), r.end());
        let q = s * r.end();
        prop_assert_eq!(v.at(q).into_owned(), r.eval(q).clone());
    }
}

//! The studies behind each command. Each returns its tables and checks; the
//! runner writes them out.

use std::time::Instant;

use pathctl::approx::{
    measure_errors, build_frozen, nonincreasing_3se, projection_error, projection_error_sup, sandwich_check,
    witness, ApproxConfig, ApproxErrorReport, SandwichOptions, SandwichReport,
};
use pathctl::calculus::{catalog, check_declared_bounds, check_hamiltonian_bound, ito_kunita_study, loglog_slope};
use pathctl::control::{
    brute_force_tree_value, check_dpp, check_supermartingale, check_value_regularity, value_adapted_tree,
    ControlProcess, TreeSolver,
};
use pathctl::estimates::{run_estimate_suite, EstimateConstants};
use pathctl::noise::{sample_wiener_with, Node, NoiseState, NoiseTree};
use pathctl::path::{Path, TimeGrid};
use pathctl::spectral::{random_unit, verify_gelfand, GelfandConstants, HVector, Space, SpectralBasis};
use pathctl::state::{picard_factor, picard_solve, solve_state, SolverConfig};
use pathctl::seed;
use rand::Rng;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::LabResult;
use crate::output::{Cell, Check, StudyOutput, Table};

pub const STUDIES: &[&str] = &[
    "verify-gelfand",
    "solve",
    "estimates",
    "dpp",
    "value",
    "calculus",
    "approx-study",
    "sandwich",
];

pub fn run_study(name: &str, cfg: &RunConfig) -> LabResult<StudyOutput> {
    let start = Instant::now();
    let (tables, checks) = match name {
        "verify-gelfand" => gelfand(cfg)?,
        "solve" => solve(cfg)?,
        "estimates" => estimates(cfg)?,
        "dpp" => dpp(cfg)?,
        "value" => value(cfg)?,
        "calculus" => calculus(cfg)?,
        "approx-study" => approx_study(cfg)?,
        "sandwich" => sandwich(cfg)?,
        other => {
            return Err(crate::error::LabError::Usage(format!(
                "unknown study {other:?}; known: {}",
                STUDIES.join(", ")
            )))
        }
    };
    Ok(StudyOutput {
        study: name.to_string(),
        tables,
        checks,
        seconds: start.elapsed().as_secs_f64(),
    })
}

type Out = (Vec<Table>, Vec<Check>);

fn row<const N: usize>(cells: [Cell; N]) -> Vec<Cell> {
    cells.into()
}

fn gelfand(cfg: &RunConfig) -> LabResult<Out> {
    let g = &cfg.gelfand;
    let basis = SpectralBasis::new(g.dim)?;
    let rep = verify_gelfand(&basis, g.samples, seed::derive(cfg.seed, "gelfand", 0));
    let consts = GelfandConstants::laplacian();
    let mut t = Table::new("gelfand", &["quantity", "value"]);
    for (k, v) in [
        ("coercivity_rel", rep.coercivity_rel),
        ("boundedness_rel", rep.boundedness_rel),
        ("embedding_rel", rep.embedding_rel),
        ("max_tail_mass", rep.max_tail_mass),
        ("c1", consts.c1),
        ("c2", consts.c2),
        ("c3", consts.c3),
    ] {
        t.push(row([k.into(), v.into()]));
    }
    let mut spec = Table::new("spectrum", &["k", "eigenvalue", "v_weight"]);
    for (k, l) in basis.eigenvalues().into_iter().enumerate() {
        spec.push(row([(k + 1).into(), l.into(), (1.0 + l).into()]));
    }
    let checks = vec![
        Check::at_most("gelfand.max_violation", rep.max_violation(), g.tol),
        Check::holds("gelfand.constants", consts == GelfandConstants::laplacian()),
    ];
    Ok((vec![t, spec], checks))
}

fn solve(cfg: &RunConfig) -> LabResult<Out> {
    let pc = &cfg.picard;
    let scfg = SolverConfig {
        dt: pc.dt,
        picard_window: Some(pc.window),
        ..cfg.solver()
    };
    let rows: Vec<(String, f64, f64, f64, usize, f64)> = (0..pc.problems)
        .into_par_iter()
        .map(|i| -> LabResult<_> {
            let name = &pc.instances[i % pc.instances.len()];
            let p = cfg.instance(name, pc.dim, 1.0)?;
            let mut rng = seed::rng(cfg.seed, "picard", i as u64);
            let x0 = random_unit(pc.dim, &mut rng).scaled(rng.random::<f64>());
            let xi = Path::point(0.0, pc.dt, x0)?;
            let labels = (0..5).map(|_| rng.random_range(0..p.controls.len())).collect();
            let theta = ControlProcess::OpenLoop {
                start: 0.0,
                end: 1.0,
                labels,
            };
            let noise = if p.is_random() {
                sample_wiener_with(TimeGrid::from_origin(1.0, pc.dt)?, p.m, &mut rng).noise_state()
            } else {
                NoiseState::zero(p.m)
            };
            let sol = picard_solve(&p, 0.0, &xi, &theta, &noise, &scfg)?;
            let trace = sol.picard.as_ref().expect("picard trace");
            let bound = picard_factor(&p, trace.window).sqrt();
            let max_ratio = trace.ratios().into_iter().fold(0.0, f64::max);
            let direct = solve_state(&p, 0.0, &xi, &theta, &noise, &scfg)?;
            let gap = sol.path.sup_dist(&direct.path, Space::H);
            Ok((name.clone(), trace.window, bound, max_ratio, trace.iterations(), gap))
        })
        .collect::<LabResult<_>>()?;
    let mut t = Table::new(
        "picard",
        &["problem", "instance", "window", "bound", "max_ratio", "iterations", "fixed_point_gap"],
    );
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_gap: f64 = 0.0;
    for (i, (name, w, b, r, it, gap)) in rows.into_iter().enumerate() {
        worst_excess = worst_excess.max(r - b);
        worst_gap = worst_gap.max(gap);
        t.push(row([i.into(), name.into(), w.into(), b.into(), r.into(), it.into(), gap.into()]));
    }

    // one trajectory of the configured instance for plotting
    let ic = &cfg.instance;
    let p = cfg.instance(&ic.name, ic.dim, ic.horizon)?;
    let dt = cfg.solver.dt;
    let xi = Path::point(0.0, dt, HVector::unit(ic.dim, 0).scaled(0.5))?;
    let noise = if p.is_random() {
        let mut rng = seed::rng(cfg.seed, "trajectory", 0);
        sample_wiener_with(TimeGrid::from_origin(ic.horizon, dt)?, p.m, &mut rng).noise_state()
    } else {
        NoiseState::zero(p.m)
    };
    let sol = solve_state(&p, 0.0, &xi, &0usize, &noise, &cfg.solver())?;
    let mut header: Vec<String> = vec!["t".into(), "h_norm".into()];
    header.extend((1..=ic.dim).map(|k| format!("a{k}")));
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut traj = Table::new("trajectory", &header_ref);
    for (j, s) in sol.path.grid().nodes().enumerate() {
        let h = &sol.path.values()[j];
        let mut r = vec![Cell::F(s), Cell::F(h.norm(Space::H))];
        r.extend(h.coeffs().iter().map(|&a| Cell::F(a)));
        traj.push(r);
    }
    let tol = cfg.solver.picard_tol;
    let checks = vec![
        Check::at_most("picard.ratio_minus_bound", worst_excess, 0.0),
        Check::at_most("picard.fixed_point_gap", worst_gap, 10.0 * tol),
    ];
    Ok((vec![t, traj], checks))
}

fn estimates(cfg: &RunConfig) -> LabResult<Out> {
    let ec = &cfg.estimates;
    let scfg = SolverConfig {
        dt: ec.dt,
        ..cfg.solver()
    };
    let rep = run_estimate_suite(ec.draws, ec.dim, &scfg, seed::derive(cfg.seed, "estimates", 0))?;
    let mut t = Table::new(
        "estimates",
        &["draw", "instance", "r", "energy", "modulus", "stability", "short_time", "control_spread"],
    );
    for r in &rep.records {
        t.push(row([
            r.draw.into(),
            r.instance.as_str().into(),
            r.r.into(),
            r.energy.into(),
            r.modulus.into(),
            r.stability.into(),
            r.short_time.into(),
            r.control_spread.into(),
        ]));
    }
    let k = EstimateConstants::laplacian(1.0, 1.0);
    let mut c = Table::new("constants", &["name", "value"]);
    for (n, v) in [
        ("energy_k_sq", k.energy_k_sq()),
        ("modulus_k", k.modulus_k()),
        ("stability_k", k.stability_k()),
        ("short_time_k", k.short_time_k()),
        ("value_bound", k.value_bound()),
        ("value_lipschitz", k.value_lipschitz()),
    ] {
        c.push(row([n.into(), v.into()]));
    }
    let max_ratio = rep.records.iter().map(|r| r.max_ratio()).fold(0.0, f64::max);
    let checks = vec![
        Check::at_most("estimates.violations", rep.violations as f64, 0.0),
        Check::at_most("estimates.max_ratio", max_ratio, 1.0),
        Check {
            passed: rep.max_control_spread < ec.max_spread,
            ..Check::at_most("estimates.control_spread", rep.max_control_spread, ec.max_spread)
        },
    ];
    Ok((vec![t, c], checks))
}

fn tree_solver_config(cfg: &RunConfig) -> SolverConfig {
    SolverConfig {
        dt: cfg.tree.dt,
        ..cfg.solver()
    }
}

fn start_path(dim: usize, dt: f64) -> LabResult<Path> {
    Ok(Path::point(0.0, dt, HVector::unit(dim, 0).scaled(0.5))?)
}

/// Histories reaching every node above the leaves, driven by control
/// `level mod |U|` on the way down.
fn node_paths(solver: &TreeSolver<'_>, x0: &Path) -> LabResult<Vec<(Node, Path)>> {
    let tree = solver.tree;
    let mut out = vec![(Node::ROOT, x0.clone())];
    let mut frontier = vec![(Node::ROOT, x0.clone())];
    for level in 0..tree.depth() - 1 {
        let mut next = Vec::new();
        for (node, path) in &frontier {
            let ci = level % solver.instance.controls.len();
            let (_, p) = solver.step(*node, path, ci)?;
            for child in tree.children(*node) {
                next.push((child, solver.enter(child, &p)));
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    Ok(out)
}

fn dpp(cfg: &RunConfig) -> LabResult<Out> {
    let tc = &cfg.tree;
    let scfg = tree_solver_config(cfg);
    let dim = cfg.instance.dim;
    let budget = tc.budget as u128;
    let mut t = Table::new(
        "dpp",
        &["instance", "t", "t_hat", "level", "index", "lhs", "rhs", "gap", "enumerated"],
    );
    let mut b = Table::new("brute_force", &["instance", "depth", "tree_value", "brute_value", "diff"]);
    let mut worst_gap: f64 = 0.0;
    let mut worst_diff: f64 = 0.0;
    let mut all_enumerated = true;
    for name in &cfg.dpp.instances {
        let p = cfg.instance(name, dim, 1.0)?;
        let tree = NoiseTree::new(tc.depth, tc.m, 1.0 / tc.depth as f64)?;
        let solver = TreeSolver::new(&p, &tree, &scfg)?;
        let x0 = start_path(dim, scfg.dt)?;
        let mut jobs = Vec::new();
        for (node, path) in node_paths(&solver, &x0)? {
            for level_b in node.level..=tc.depth {
                jobs.push((node, path.clone(), level_b));
            }
        }
        let reports: Vec<_> = jobs
            .par_iter()
            .map(|(node, path, level_b)| check_dpp(&p, &tree, *node, tree.time(*level_b), path, &scfg, budget))
            .collect::<Result<_, _>>()?;
        for r in reports {
            worst_gap = worst_gap.max(r.gap);
            all_enumerated &= r.enumerated;
            t.push(row([
                name.as_str().into(),
                r.t.into(),
                r.t_hat.into(),
                r.node.level.into(),
                r.node.index.into(),
                r.lhs.into(),
                r.rhs.into(),
                r.gap.into(),
                r.enumerated.into(),
            ]));
        }
        let small = NoiseTree::new(cfg.dpp.brute_depth, tc.m, 1.0 / cfg.dpp.brute_depth as f64)?;
        let v = value_adapted_tree(&p, &small, Node::ROOT, &x0, &scfg)?.value.value;
        let bf = brute_force_tree_value(&p, &small, Node::ROOT, &x0, &scfg, budget)?;
        worst_diff = worst_diff.max((v - bf).abs());
        b.push(row([
            name.as_str().into(),
            cfg.dpp.brute_depth.into(),
            v.into(),
            bf.into(),
            (v - bf).abs().into(),
        ]));
    }
    let checks = vec![
        Check::at_most("dpp.max_gap", worst_gap, cfg.dpp.tol),
        Check::holds("dpp.all_enumerated", all_enumerated),
        Check::at_most("dpp.brute_force_diff", worst_diff, cfg.dpp.tol),
    ];
    Ok((vec![t, b], checks))
}

fn value(cfg: &RunConfig) -> LabResult<Out> {
    let vc = &cfg.value;
    let dim = cfg.instance.dim;
    let mut reg = Table::new(
        "regularity",
        &["instance", "probes", "max_abs_value", "value_bound", "max_lipschitz_ratio", "lipschitz_bound"],
    );
    let mut checks = Vec::new();
    for (i, name) in vc.instances.iter().enumerate() {
        let p = cfg.instance(name, dim, 1.0)?;
        let r = check_value_regularity(&p, vc.probes, cfg.controls.n_c, seed::derive(cfg.seed, "value", i as u64), &cfg.solver())?;
        reg.push(row([
            name.as_str().into(),
            r.n_probes.into(),
            r.max_abs_value.into(),
            r.value_bound.into(),
            r.max_lipschitz_ratio.into(),
            r.lipschitz_bound.into(),
        ]));
        checks.push(Check::at_most(format!("value.bound[{name}]"), r.max_abs_value, r.value_bound));
        checks.push(Check::at_most(format!("value.lipschitz[{name}]"), r.max_lipschitz_ratio, r.lipschitz_bound));
    }
    let tc = &cfg.tree;
    let scfg = tree_solver_config(cfg);
    let mut sm = Table::new(
        "supermartingale",
        &["instance", "control", "max_violation", "max_abs_drift", "min_drift", "nodes"],
    );
    let mut worst: f64 = 0.0;
    for name in &vc.tree_instances {
        let p = cfg.instance(name, dim, 1.0)?;
        let tree = NoiseTree::new(tc.depth, tc.m, 1.0 / tc.depth as f64)?;
        let x0 = start_path(dim, scfg.dt)?;
        let optimal = value_adapted_tree(&p, &tree, Node::ROOT, &x0, &scfg)?;
        let mut thetas: Vec<(String, ControlProcess)> = (0..p.controls.len())
            .map(|c| (format!("constant-{c}"), ControlProcess::constant(0.0, 1.0, c)))
            .collect();
        thetas.push((
            "optimal".into(),
            ControlProcess::Adapted {
                tree: tree.clone(),
                policy: optimal.policy,
                fallback: 0,
            },
        ));
        for (label, theta) in thetas {
            let r = check_supermartingale(&p, &tree, &theta, &x0, &scfg)?;
            worst = worst.max(r.max_violation);
            sm.push(row([
                name.as_str().into(),
                label.into(),
                r.max_violation.into(),
                r.max_abs_drift.into(),
                r.min_drift.into(),
                r.n_nodes.into(),
            ]));
        }
    }
    checks.push(Check::at_most("value.supermartingale", worst, 1e-12));
    Ok((vec![reg, sm], checks))
}

fn calculus(cfg: &RunConfig) -> LabResult<Out> {
    let cc = &cfg.calculus;
    let p = cfg.instance(&cc.instance, cc.dim, 1.0)?;
    let dts: Vec<f64> = cc.log2_steps.iter().map(|&j| 0.5f64.powi(j as i32)).collect();
    let fine = dts.iter().copied().fold(f64::INFINITY, f64::min);
    let x_rho = Path::point(cc.start, fine, HVector::unit(cc.dim, 0).scaled(cc.start_amplitude))?;
    let mut res = Table::new(
        "ito_kunita",
        &["functional", "dt", "paths", "mean_abs", "stderr_abs", "mean_signed", "martingale_mean", "martingale_stderr"],
    );
    let mut slopes = Table::new("slopes", &["functional", "slope", "slope_min", "slope_max"]);
    let mut bounds = Table::new(
        "declared_bounds",
        &["functional", "gradient_ratio", "holder_ratio", "gateaux_rel", "hamiltonian_ratio", "hamiltonian_gap"],
    );
    let mut checks = Vec::new();
    for (i, name) in cc.functionals.iter().enumerate() {
        let u = catalog(name, cc.dim, 1.0)?;
        let st = ito_kunita_study(
            &u,
            &cc.control,
            cc.start,
            cc.stop,
            &x_rho,
            &p,
            cc.paths,
            seed::derive(cfg.seed, "ito-kunita", i as u64),
            &dts,
        )?;
        let mut mart_excess = f64::NEG_INFINITY;
        for s in &st {
            mart_excess = mart_excess.max(s.martingale_mean.abs() - cc.martingale_se * s.martingale_stderr);
            res.push(row([
                name.as_str().into(),
                s.dt.into(),
                s.n_paths.into(),
                s.mean_abs.into(),
                s.stderr_abs.into(),
                s.mean_signed.into(),
                s.martingale_mean.into(),
                s.martingale_stderr.into(),
            ]));
        }
        let slope = loglog_slope(&dts, &st.iter().map(|s| s.mean_abs).collect::<Vec<_>>());
        slopes.push(row([name.as_str().into(), slope.into(), cc.slope_min.into(), cc.slope_max.into()]));
        checks.push(Check {
            name: format!("calculus.slope[{name}]"),
            passed: (cc.slope_min..=cc.slope_max).contains(&slope),
            measured: slope,
            bound: cc.slope_max,
        });
        checks.push(Check::at_most(format!("calculus.martingale_mean[{name}]"), mart_excess, 0.0));

        let db = check_declared_bounds(&u, cc.dim, 1.0, cc.probes, seed::derive(cfg.seed, "declared", i as u64))?;
        let hb = check_hamiltonian_bound(&u, &p, cc.probes, seed::derive(cfg.seed, "hamiltonian", i as u64))?;
        bounds.push(row([
            name.as_str().into(),
            db.max_gradient_ratio.into(),
            db.max_holder_ratio.into(),
            db.max_gateaux_rel.into(),
            hb.max_ratio.into(),
            hb.max_consistency_gap.into(),
        ]));
        checks.push(Check::at_most(format!("calculus.gradient[{name}]"), db.max_gradient_ratio, 1.0));
        checks.push(Check::at_most(format!("calculus.holder[{name}]"), db.max_holder_ratio, 1.0));
        checks.push(Check::at_most(format!("calculus.gateaux[{name}]"), db.max_gateaux_rel, 1e-4));
        checks.push(Check::at_most(format!("calculus.hamiltonian[{name}]"), hb.max_ratio, 1.0));
        checks.push(Check::at_most(format!("calculus.hamiltonian_gap[{name}]"), hb.max_consistency_gap, 1e-12));
    }
    Ok((vec![res, slopes, bounds], checks))
}

fn approx_base(cfg: &RunConfig) -> ApproxConfig {
    let a = &cfg.approx;
    ApproxConfig {
        n_partition: a.n_partition,
        level: a.level,
        proj_dim: a.proj_dim,
        k: a.k,
        x0: HVector::unit(a.dim, 0).scaled(a.x0_amplitude),
        ensemble: a.ensemble,
        dt: a.dt,
    }
}

const APPROX_HEADER: &[&str] = &[
    "N", "M", "d", "k", "delta", "f_err", "f_se", "beta_err", "beta_se", "G_err", "G_se", "f_sup", "beta_sup",
    "gap", "gap_bound", "gap_violations", "epsilon", "seed",
];

fn approx_row(r: &ApproxErrorReport, seed: u64) -> Vec<Cell> {
    vec![
        r.n_partition.into(),
        r.level.into(),
        r.proj_dim.into(),
        r.k.into(),
        0.0.into(),
        r.f_mean.into(),
        r.f_se.into(),
        r.beta_mean.into(),
        r.beta_se.into(),
        r.g_mean.into(),
        r.g_se.into(),
        r.f_agg.into(),
        r.beta_agg.into(),
        r.freeze_gap_max.into(),
        r.freeze_gap_bound.into(),
        r.freeze_gap_violations.into(),
        r.epsilon.into(),
        seed.into(),
    ]
}

/// Consecutive reports do not increase beyond 3 standard errors in f, β and G.
fn monotone(reports: &[ApproxErrorReport]) -> bool {
    reports.windows(2).all(|w| {
        let (a, b) = (&w[0], &w[1]);
        nonincreasing_3se((a.f_mean, a.f_se), (b.f_mean, b.f_se))
            && nonincreasing_3se((a.beta_mean, a.beta_se), (b.beta_mean, b.beta_se))
            && nonincreasing_3se((a.g_mean, a.g_se), (b.g_mean, b.g_se))
    })
}

fn approx_study(cfg: &RunConfig) -> LabResult<Out> {
    let a = &cfg.approx;
    let p = cfg.instance(&a.instance, a.dim, 1.0)?;
    let base = approx_base(cfg);
    let s = seed::derive(cfg.seed, "approx", 0);
    let run = |c: ApproxConfig| -> LabResult<ApproxErrorReport> {
        let frozen = build_frozen(&p, &c)?;
        Ok(measure_errors(&p, &frozen, &c, s)?)
    };
    let sweep_m: Vec<_> = a
        .levels
        .iter()
        .map(|&m| run(ApproxConfig { level: m, ..base.clone() }))
        .collect::<LabResult<_>>()?;
    let sweep_n: Vec<_> = a
        .partitions
        .iter()
        .map(|&n| run(ApproxConfig { n_partition: n, ..base.clone() }))
        .collect::<LabResult<_>>()?;
    let sweep_d: Vec<_> = a
        .proj_dims
        .iter()
        .map(|&d| run(ApproxConfig { proj_dim: d, ..base.clone() }))
        .collect::<LabResult<_>>()?;
    let sweep_k: Vec<_> = a
        .ks
        .iter()
        .map(|&k| run(ApproxConfig { k, ..base.clone() }))
        .collect::<LabResult<_>>()?;

    let mut tables = Vec::new();
    let mut violations = 0;
    let mut worst_gap_ratio: f64 = 0.0;
    for (name, sweep) in [("sweep_M", &sweep_m), ("sweep_N", &sweep_n), ("sweep_d", &sweep_d), ("sweep_k", &sweep_k)] {
        let mut t = Table::new(name, APPROX_HEADER);
        for r in sweep.iter() {
            violations += r.freeze_gap_violations;
            if r.freeze_gap_bound > 0.0 {
                worst_gap_ratio = worst_gap_ratio.max(r.freeze_gap_max / r.freeze_gap_bound);
            }
            t.push(approx_row(r, s));
        }
        tables.push(t);
    }

    let ks: Vec<f64> = sweep_k.iter().map(|r| r.k).collect();
    let mut k_slope: f64 = 0.0;
    for pick in [|r: &ApproxErrorReport| r.f_mean, |r: &ApproxErrorReport| r.beta_mean, |r: &ApproxErrorReport| r.g_mean] {
        let ys: Vec<f64> = sweep_k.iter().map(pick).collect();
        if ys.len() >= 2 && ys.iter().all(|&y| y > 0.0) {
            k_slope = k_slope.max(loglog_slope(&ks, &ys));
        }
    }

    let table = projection_error_sup(&p, &a.proj_dims, &base, s)?;
    let mut pt = Table::new("projection", &["d", "sup_error", "witness", "witness_bound"]);
    for r in &table.rows {
        pt.push(row([r.d.into(), r.sup_error.into(), r.witness.into(), r.witness_bound.into()]));
    }
    tables.push(pt);
    let w = projection_error(&witness(a.dim), a.witness_dim);

    let checks = vec![
        Check::at_most("approx.freeze_gap_violations", violations as f64, 0.0),
        Check::at_most("approx.freeze_gap_ratio", worst_gap_ratio, 1.0),
        Check::holds("approx.monotone_in_M", monotone(&sweep_m)),
        Check::holds("approx.monotone_in_N", monotone(&sweep_n)),
        Check::holds("approx.monotone_in_d", monotone(&sweep_d)),
        Check::at_most("approx.k_slope", k_slope, a.max_k_slope),
        Check::holds("approx.projection_strictly_decreasing", table.strictly_decreasing(0.0)),
        Check::at_most("approx.witness", (w - a.witness_value).abs(), a.witness_tol),
    ];
    Ok((tables, checks))
}

fn sandwich(cfg: &RunConfig) -> LabResult<Out> {
    let sc = &cfg.sandwich;
    let s = seed::derive(cfg.seed, "sandwich", 0);
    let mut probes = Table::new(
        "probes",
        &[
            "instance", "delta", "probe", "t", "level", "index", "value", "regularized", "lower", "upper",
            "y_correction", "b_correction", "gap", "violation",
        ],
    );
    let mut summary = Table::new(
        "summary",
        &[
            "instance", "N", "M", "d", "k", "delta", "f_err", "beta_err", "G_err", "l_tilde", "c1", "c2",
            "max_gap", "mean_gap", "violations", "seed",
        ],
    );
    let mut checks = Vec::new();
    let mut runs: Vec<(&str, usize)> = vec![(sc.instance.as_str(), sc.proj_dim)];
    if !sc.extra_instance.is_empty() {
        runs.push((sc.extra_instance.as_str(), sc.extra_proj_dim));
    }
    for (ri, (name, d)) in runs.into_iter().enumerate() {
        let p = cfg.instance(name, sc.dim, 1.0)?;
        let approx = ApproxConfig {
            proj_dim: d,
            x0: HVector::unit(sc.dim, 0).scaled(cfg.approx.x0_amplitude),
            dt: sc.dt,
            ..approx_base(cfg)
        };
        let mut deltas = vec![0.0];
        deltas.extend(sc.deltas.iter().copied());
        let mut reports: Vec<(f64, SandwichReport)> = Vec::new();
        for &delta in &deltas {
            let opts = SandwichOptions {
                delta,
                depth: sc.depth,
                n_probes: sc.probes,
                tol: sc.tol,
                ..SandwichOptions::default()
            };
            let rep = sandwich_check(&p, &approx, &opts, &cfg.solver(), s)?;
            for (i, pr) in rep.probes.iter().enumerate() {
                let kind = match &pr.violation {
                    None => String::new(),
                    Some(v) => format!("{:?}", v.kind),
                };
                probes.push(row([
                    name.into(),
                    delta.into(),
                    i.into(),
                    pr.t.into(),
                    pr.node.level.into(),
                    pr.node.index.into(),
                    pr.value.into(),
                    pr.regularized.into(),
                    pr.lower.into(),
                    pr.upper.into(),
                    pr.y_correction.into(),
                    pr.b_correction.into(),
                    pr.gap.into(),
                    kind.into(),
                ]));
            }
            let e = &rep.errors;
            summary.push(row([
                name.into(),
                e.n_partition.into(),
                e.level.into(),
                e.proj_dim.into(),
                e.k.into(),
                delta.into(),
                e.f_agg.into(),
                e.beta_agg.into(),
                e.g_err.into(),
                rep.params.l_tilde.into(),
                rep.params.c1.into(),
                rep.params.c2.into(),
                rep.max_gap.into(),
                rep.mean_gap.into(),
                rep.n_violations.into(),
                s.into(),
            ]));
            checks.push(Check::at_most(
                format!("sandwich.violations[{name},delta={delta}]"),
                rep.n_violations as f64,
                0.0,
            ));
            reports.push((delta, rep));
        }
        if ri == 0 {
            let (_, exact) = &reports[0];
            let mismatch = exact
                .probes
                .iter()
                .map(|pr| (pr.value - pr.regularized).abs())
                .fold(0.0, f64::max);
            checks.push(Check::at_most(format!("sandwich.degenerate_gap[{name}]"), exact.max_gap, sc.tol));
            checks.push(Check::at_most(format!("sandwich.degenerate_value[{name}]"), mismatch, sc.tol));
            let gaps: Vec<f64> = reports[1..].iter().map(|(_, r)| r.max_gap).collect();
            let rise = gaps.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
            checks.push(Check::at_most(format!("sandwich.gap_nonincreasing[{name}]"), rise.max(0.0), 0.0));
        }
    }
    Ok((vec![probes, summary], checks))
}

//! Finite-dimensional approximation of a problem: coefficients frozen on
//! anchor times and projected onto the leading modes, their measured errors,
//! and upper and lower bounds on the value built from a regularized
//! finite-dimensional value with an extra independent noise δB.

use std::borrow::Cow;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::TreeSolver;
use crate::error::{Error, Result};
use crate::estimates::EstimateConstants;
use crate::noise::{sample_wiener_with, Node, NoiseState, NoiseTree, DEFAULT_NODE_BUDGET};
use crate::path::{sample_path_class, steps_between, Path, PathClassSpec, PathView, TimeGrid};
use crate::problem::{Coefficients, ProblemInstance};
use crate::seed;
use crate::spectral::{eigenvalue, HVector, Space};
use crate::state::SolverConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxConfig {
    /// Number of cells of the time partition.
    pub n_partition: usize,
    /// Dyadic path-freezing level: 2^level cells on [0, T].
    pub level: u32,
    /// Number of retained modes.
    pub proj_dim: usize,
    /// Drift bound of the path class.
    pub k: f64,
    pub x0: HVector,
    pub ensemble: usize,
    pub dt: f64,
}

impl ApproxConfig {
    pub fn validate(&self, instance: &ProblemInstance) -> Result<()> {
        if self.n_partition <= 3 {
            return Err(Error::Config(format!(
                "approx.n_partition must exceed 3, got {}",
                self.n_partition
            )));
        }
        if self.proj_dim == 0 || self.proj_dim > instance.dim() {
            return Err(Error::ProjectionDim {
                d: self.proj_dim,
                dim: instance.dim(),
            });
        }
        if self.x0.dim() != instance.dim() {
            return Err(Error::Config("approx.x0 has the wrong dimension".into()));
        }
        if !(self.k >= 1.0) {
            return Err(Error::Config("approx.k must be at least 1".into()));
        }
        if self.ensemble < 2 {
            return Err(Error::Config("approx.ensemble must be at least 2".into()));
        }
        if self.level > 30 {
            return Err(Error::Config("approx.level must be at most 30".into()));
        }
        steps_between(0.0, instance.horizon, self.dt).map(|_| ())
    }

    /// (1 + k)(1 + ‖x0‖_H), the scale of the error budget.
    pub fn budget_scale(&self) -> f64 {
        (1.0 + self.k) * (1.0 + self.x0.norm(Space::H))
    }
}

/// Coefficients evaluated on the path frozen at its breakpoints and projected
/// onto the first `proj_dim` modes, with W frozen on the partition; β is
/// projected as well. The breakpoint of s < t is the latest of the partition
/// points jT/N and the dyadic points iT/2^M not after s; from t on, the
/// current value is used.
#[derive(Clone, Debug)]
pub struct FrozenCoefficients {
    inner: Arc<dyn Coefficients>,
    part: f64,
    cell: f64,
    proj_dim: usize,
}

struct FrozenView<'a> {
    x: &'a dyn PathView,
    coeffs: &'a FrozenCoefficients,
}

impl PathView for FrozenView<'_> {
    fn start_time(&self) -> f64 {
        self.x.start_time()
    }
    fn end_time(&self) -> f64 {
        self.x.end_time()
    }
    fn at(&self, s: f64) -> Cow<'_, HVector> {
        let b = self.coeffs.breakpoint(s, self.x.end_time());
        Cow::Owned(self.coeffs.project(&self.x.at(b)))
    }
}

impl FrozenCoefficients {
    pub fn new(inner: Arc<dyn Coefficients>, horizon: f64, n_partition: usize, level: u32, proj_dim: usize) -> Self {
        Self {
            inner,
            part: horizon / n_partition as f64,
            cell: horizon / (1u64 << level) as f64,
            proj_dim,
        }
    }

    pub fn proj_dim(&self) -> usize {
        self.proj_dim
    }

    pub fn breakpoint(&self, s: f64, t: f64) -> f64 {
        if s >= t - 1e-9 * self.part.min(self.cell) {
            return t;
        }
        let floor = |h: f64| ((s / h) + 1e-9).floor() * h;
        floor(self.part).max(floor(self.cell))
    }

    fn project(&self, h: &HVector) -> HVector {
        let mut out = h.clone();
        out.coeffs_mut().iter_mut().skip(self.proj_dim).for_each(|a| *a = 0.0);
        out
    }

    fn view<'a>(&'a self, x: &'a dyn PathView) -> FrozenView<'a> {
        FrozenView { x, coeffs: self }
    }
}

impl Coefficients for FrozenCoefficients {
    fn beta(&self, t: f64, x: &dyn PathView, v: f64, noise: &NoiseState) -> HVector {
        let nf = noise.frozen(self.part, t);
        self.project(&self.inner.beta(t, &self.view(x), v, &nf))
    }
    fn running_cost(&self, t: f64, x: &dyn PathView, v: f64, noise: &NoiseState) -> f64 {
        let nf = noise.frozen(self.part, t);
        self.inner.running_cost(t, &self.view(x), v, &nf)
    }
    fn terminal_cost(&self, x: &dyn PathView, noise: &NoiseState) -> f64 {
        let nf = noise.frozen(self.part, x.end_time());
        self.inner.terminal_cost(&self.view(x), &nf)
    }
    fn bound(&self) -> f64 {
        self.inner.bound()
    }
    fn is_random(&self) -> bool {
        self.inner.is_random()
    }
    fn lipschitz_space(&self) -> Space {
        self.inner.lipschitz_space()
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
}

pub fn build_frozen(instance: &ProblemInstance, config: &ApproxConfig) -> Result<FrozenCoefficients> {
    config.validate(instance)?;
    Ok(FrozenCoefficients::new(
        instance.coeffs.clone(),
        instance.horizon,
        config.n_partition,
        config.level,
        config.proj_dim,
    ))
}

/// The problem with its coefficients replaced by their frozen versions.
pub fn frozen_instance(instance: &ProblemInstance, frozen: FrozenCoefficients) -> ProblemInstance {
    let mut out = instance.with_coefficients(Arc::new(frozen));
    out.name = format!("{}-frozen", instance.name);
    out
}

/// The path with every value projected onto the first `d` modes.
pub fn project_path(x: &Path, d: usize) -> Result<Path> {
    let values = x
        .grid()
        .nodes()
        .enumerate()
        .map(|(i, s)| {
            if i == x.grid().n_steps() {
                x.end_value().project(d)
            } else {
                x.eval(s).project(d)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Path::new(*x.grid(), values)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxErrorReport {
    pub n_partition: usize,
    pub level: u32,
    pub proj_dim: usize,
    pub k: f64,
    pub x0_norm: f64,
    pub n_paths: usize,
    pub dt: f64,
    /// Ensemble sups over paths and controls at the left nodes of the grid.
    pub f_err: Vec<f64>,
    /// In the V* norm.
    pub beta_err: Vec<f64>,
    pub g_err: f64,
    /// L² in time of the sup processes.
    pub f_agg: f64,
    pub beta_agg: f64,
    /// Ensemble means and standard errors of the per-path L² aggregates.
    pub f_mean: f64,
    pub f_se: f64,
    pub beta_mean: f64,
    pub beta_se: f64,
    pub g_mean: f64,
    pub g_se: f64,
    /// sup over paths of ‖x − P^M x‖_{0,V*} and its bound K̄(1+‖x0‖_H)(T/2^M)^{1/2}.
    pub freeze_gap_max: f64,
    pub freeze_gap_bound: f64,
    pub freeze_gap_violations: usize,
    /// max(f_agg, beta_agg, g_err) / ((1+k)(1+‖x0‖_H)).
    pub epsilon: f64,
    /// Largest ratio of a full-ensemble sup to the sup over its first half.
    pub tail_factor: f64,
}

struct PathErrors {
    f: Vec<f64>,
    beta: Vec<f64>,
    g: f64,
    gap: f64,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, (v / n).sqrt())
}

/// Draws ensemble member `e`: a class path on [0, T] and its noise.
pub fn ensemble_member(
    instance: &ProblemInstance,
    config: &ApproxConfig,
    seed: u64,
    e: usize,
) -> Result<(Path, NoiseState)> {
    let mut rng = seed::rng(seed, "approx-ensemble", e as u64);
    let anchor = Path::point(0.0, config.dt, config.x0.clone())?;
    let spec = PathClassSpec::new(config.k, anchor, instance.horizon)?;
    let path = sample_path_class(&spec, &mut rng)?.path;
    let noise = if instance.is_random() {
        sample_wiener_with(*path.grid(), instance.m.max(1), &mut rng).noise_state()
    } else {
        NoiseState::zero(instance.m.max(1))
    };
    Ok((path, noise))
}

pub fn measure_errors(
    instance: &ProblemInstance,
    frozen: &FrozenCoefficients,
    config: &ApproxConfig,
    seed: u64,
) -> Result<ApproxErrorReport> {
    config.validate(instance)?;
    let n = steps_between(0.0, instance.horizon, config.dt)?;
    let orig = instance.coeffs.as_ref();
    let per_path: Vec<PathErrors> = (0..config.ensemble)
        .into_par_iter()
        .map(|e| -> Result<PathErrors> {
            let (path, noise) = ensemble_member(instance, config, seed, e)?;
            let mut f = Vec::with_capacity(n);
            let mut beta = Vec::with_capacity(n);
            for i in 0..n {
                let t = path.grid().node(i);
                let x = path.prefix(i);
                let (mut fe, mut be) = (0.0f64, 0.0f64);
                for ci in 0..instance.controls.len() {
                    let v = instance.controls.value(ci);
                    fe = fe.max((orig.running_cost(t, &x, v, &noise) - frozen.running_cost(t, &x, v, &noise)).abs());
                    be = be.max(orig.beta(t, &x, v, &noise).dist(&frozen.beta(t, &x, v, &noise), Space::VStar));
                }
                f.push(fe);
                beta.push(be);
            }
            let g = (orig.terminal_cost(&path, &noise) - frozen.terminal_cost(&path, &noise)).abs();
            let gap = path.sup_dist(&path.stepwise_project(config.level), Space::VStar);
            Ok(PathErrors { f, beta, g, gap })
        })
        .collect::<Result<_>>()?;

    let dt = config.dt;
    let sup_series = |pick: &dyn Fn(&PathErrors) -> &Vec<f64>, upto: usize| -> Vec<f64> {
        (0..n)
            .map(|i| per_path[..upto].iter().map(|p| pick(p)[i]).fold(0.0, f64::max))
            .collect()
    };
    let l2 = |xs: &[f64]| (xs.iter().map(|a| a * a).sum::<f64>() * dt).sqrt();
    let all = per_path.len();
    let half = (all / 2).max(1);
    let f_err = sup_series(&|p| &p.f, all);
    let beta_err = sup_series(&|p| &p.beta, all);
    let g_err = per_path.iter().map(|p| p.g).fold(0.0, f64::max);
    let f_agg = l2(&f_err);
    let beta_agg = l2(&beta_err);
    let ratio = |full: f64, part: f64| if part > 0.0 { full / part } else if full > 0.0 { f64::INFINITY } else { 1.0 };
    let tail_factor = ratio(f_agg, l2(&sup_series(&|p| &p.f, half)))
        .max(ratio(beta_agg, l2(&sup_series(&|p| &p.beta, half))))
        .max(ratio(g_err, per_path[..half].iter().map(|p| p.g).fold(0.0, f64::max)));
    let (f_mean, f_se) = mean_se(&per_path.iter().map(|p| l2(&p.f)).collect::<Vec<_>>());
    let (beta_mean, beta_se) = mean_se(&per_path.iter().map(|p| l2(&p.beta)).collect::<Vec<_>>());
    let (g_mean, g_se) = mean_se(&per_path.iter().map(|p| p.g).collect::<Vec<_>>());
    let x0_norm = config.x0.norm(Space::H);
    let kbar = EstimateConstants::from_instance(instance).modulus_k();
    let freeze_gap_bound =
        kbar * (1.0 + x0_norm) * (instance.horizon / (1u64 << config.level) as f64).sqrt();
    Ok(ApproxErrorReport {
        n_partition: config.n_partition,
        level: config.level,
        proj_dim: config.proj_dim,
        k: config.k,
        x0_norm,
        n_paths: all,
        dt,
        epsilon: f_agg.max(beta_agg).max(g_err) / config.budget_scale(),
        f_err,
        beta_err,
        g_err,
        f_agg,
        beta_agg,
        f_mean,
        f_se,
        beta_mean,
        beta_se,
        g_mean,
        g_se,
        freeze_gap_max: per_path.iter().map(|p| p.gap).fold(0.0, f64::max),
        freeze_gap_bound,
        freeze_gap_violations: per_path.iter().filter(|p| p.gap > freeze_gap_bound).count(),
        tail_factor,
    })
}

/// `next ≤ prev` up to three combined standard errors.
pub fn nonincreasing_3se(prev: (f64, f64), next: (f64, f64)) -> bool {
    next.0 <= prev.0 + 3.0 * (prev.1 * prev.1 + next.1 * next.1).sqrt() + 1e-15
}

/// ‖(P^d − I)h‖_{V*}.
pub fn projection_error(h: &HVector, d: usize) -> f64 {
    h.coeffs()
        .iter()
        .enumerate()
        .skip(d)
        .map(|(i, a)| a * a / (1.0 + eigenvalue(i)))
        .fold(0.0, |acc, x| acc + x)
        .sqrt()
}

/// a_i = 1/i on the first min(8, D) modes.
pub fn witness(dim: usize) -> HVector {
    let mut h = HVector::zeros(dim);
    for (i, a) in h.coeffs_mut().iter_mut().enumerate().take(8) {
        *a = 1.0 / (i + 1) as f64;
    }
    h
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRow {
    pub d: usize,
    /// sup of ‖(P^d − I)β‖_{V*} over the ensemble of β values.
    pub sup_error: f64,
    /// The same for the witness and the coordinate-wise bound ‖h‖_H/√(1+λ_{d+1}).
    pub witness: f64,
    pub witness_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionTable {
    pub rows: Vec<ProjectionRow>,
}

impl ProjectionTable {
    /// Each row is below the previous, or both are within `tol` of 0.
    pub fn strictly_decreasing(&self, tol: f64) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].sup_error < w[0].sup_error || w[0].sup_error.max(w[1].sup_error) <= tol)
    }
}

pub fn projection_error_sup(
    instance: &ProblemInstance,
    d_list: &[usize],
    config: &ApproxConfig,
    seed: u64,
) -> Result<ProjectionTable> {
    if d_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("projection dimensions must increase".into()));
    }
    if let Some(&d) = d_list.iter().find(|&&d| d > instance.dim()) {
        return Err(Error::ProjectionDim { d, dim: instance.dim() });
    }
    let n = steps_between(0.0, instance.horizon, config.dt)?;
    let c = instance.coeffs.as_ref();
    let per_path: Vec<Vec<f64>> = (0..config.ensemble)
        .into_par_iter()
        .map(|e| -> Result<Vec<f64>> {
            let (path, noise) = ensemble_member(instance, config, seed, e)?;
            let mut sup = vec![0.0f64; d_list.len()];
            for i in 0..n {
                let t = path.grid().node(i);
                for ci in 0..instance.controls.len() {
                    let b = c.beta(t, &path.prefix(i), instance.controls.value(ci), &noise);
                    for (s, &d) in sup.iter_mut().zip(d_list) {
                        *s = s.max(projection_error(&b, d));
                    }
                }
            }
            Ok(sup)
        })
        .collect::<Result<_>>()?;
    let h = witness(instance.dim());
    Ok(ProjectionTable {
        rows: d_list
            .iter()
            .enumerate()
            .map(|(j, &d)| ProjectionRow {
                d,
                sup_error: per_path.iter().map(|p| p[j]).fold(0.0, f64::max),
                witness: projection_error(&h, d),
                witness_bound: h.norm(Space::H) / (1.0 + eigenvalue(d)).sqrt(),
            })
            .collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichParams {
    pub delta: f64,
    pub l_tilde: f64,
    pub c1: f64,
    pub c2: f64,
    pub l_c: f64,
}

impl SandwichParams {
    /// C₁ = L̃ and C₂ = 4L_c(L̃ + 1). δ = 0 is accepted for the unregularized case.
    pub fn new(delta: f64, l_tilde: f64, l_c: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::Config(format!("delta must lie in [0, 1), got {delta}")));
        }
        Ok(Self {
            delta,
            l_tilde,
            c1: l_tilde,
            c2: 4.0 * l_c * (l_tilde + 1.0),
            l_c,
        })
    }
}

/// Y(s) = G_err + ∫_s^T (f_err + C₁ β_err) dt at every grid node; the error
/// processes are step functions on the grid, so the sum is exact.
pub fn correction_process(report: &ApproxErrorReport, c1: f64) -> Vec<f64> {
    let n = report.f_err.len();
    let mut y = vec![0.0; n + 1];
    y[n] = report.g_err;
    for i in (0..n).rev() {
        y[i] = y[i + 1] + report.dt * (report.f_err[i] + c1 * report.beta_err[i]);
    }
    y
}

/// E[‖B_T − B_t‖ + ∫_t^T ‖B_r − B_t‖ dr] on the B-factor of `tree` from `level`.
pub fn b_correction(tree: &NoiseTree, level: usize) -> f64 {
    let r = tree.depth() - level;
    let b = tree.b_dim();
    if b == 0 || r == 0 {
        return 0.0;
    }
    let per = 1u64 << b;
    let total = per.pow(r as u32);
    let mut sum = 0.0;
    for code in 0..total {
        let mut bv = vec![0.0; b];
        let mut acc = 0.0;
        let mut rest = code;
        for _ in 0..r {
            acc += tree.dt() * bv.iter().map(|a| a * a).sum::<f64>().sqrt();
            let br = (rest % per) << tree.dim();
            rest /= per;
            for (a, inc) in bv.iter_mut().zip(tree.b_increment(br)) {
                *a += inc;
            }
        }
        sum += acc + bv.iter().map(|a| a * a).sum::<f64>().sqrt();
    }
    sum / total as f64
}

/// The product-tree node with the W-branches of `node` and B-bits zero.
pub fn lift_node(w_tree: &NoiseTree, product: &NoiseTree, node: Node) -> Node {
    let b = product.branching();
    let index = w_tree.branches(node).into_iter().fold(0u64, |acc, br| acc * b + br);
    Node {
        level: node.level,
        index,
    }
}

/// V^ε at `node` for the d-mode state `x_d`.
pub fn regularized_value(
    frozen: &ProblemInstance,
    product: &NoiseTree,
    node: Node,
    x_d: &Path,
    delta: f64,
    config: &SolverConfig,
) -> Result<f64> {
    Ok(TreeSolver::new(frozen, product, config)?
        .with_delta(delta)
        .value(node, x_d)?
        .value
        .value)
}

/// ‖∇V^ε‖_V by central differences of size `h` in the retained coordinates.
pub fn regularized_gradient(
    frozen: &ProblemInstance,
    product: &NoiseTree,
    node: Node,
    x_d: &Path,
    delta: f64,
    d: usize,
    h: f64,
    config: &SolverConfig,
) -> Result<f64> {
    let solver = TreeSolver::new(frozen, product, config)?.with_delta(delta);
    let mut sq = 0.0;
    for i in 0..d {
        let e = HVector::unit(x_d.dim(), i).scaled(h);
        let up = solver.value(node, &x_d.vertical_perturb(&e))?.value.value;
        let down = solver.value(node, &x_d.vertical_perturb(&e.scaled(-1.0)))?.value.value;
        let g = (up - down) / (2.0 * h);
        sq += (1.0 + eigenvalue(i)) * g * g;
    }
    Ok(sq.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    /// Inflating the error budget by the ensemble tail factor restores the order.
    EnsembleShortfall,
    /// It does not.
    BudgetUnderestimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub excess: f64,
    /// Factor on Y that would restore the order.
    pub inflation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichProbe {
    pub t: f64,
    pub node: Node,
    pub value: f64,
    pub regularized: f64,
    pub lower: f64,
    pub upper: f64,
    pub y_correction: f64,
    pub b_correction: f64,
    pub gap: f64,
    pub violation: Option<Violation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub params: SandwichParams,
    pub gradient_max: f64,
    pub errors: ApproxErrorReport,
    pub probes: Vec<SandwichProbe>,
    pub n_violations: usize,
    pub max_gap: f64,
    pub mean_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichOptions {
    pub delta: f64,
    pub depth: usize,
    pub n_probes: usize,
    /// Used instead of 1.1 × the measured gradient when set.
    pub l_tilde: Option<f64>,
    pub fd_step: f64,
    /// Absolute slack of the ordering test.
    pub tol: f64,
}

impl Default for SandwichOptions {
    fn default() -> Self {
        Self {
            delta: 0.1,
            depth: 3,
            n_probes: 20,
            l_tilde: None,
            fd_step: 1e-4,
            tol: 1e-12,
        }
    }
}

/// Lower ≤ V ≤ upper with bounds V^ε ∓ (Y(t) + δC₂y(t)) at probe points
/// (t, x_t), x_t in the path class, t on the tree levels below the horizon.
pub fn sandwich_check(
    instance: &ProblemInstance,
    approx: &ApproxConfig,
    options: &SandwichOptions,
    config: &SolverConfig,
    seed: u64,
) -> Result<SandwichReport> {
    approx.validate(instance)?;
    let d = approx.proj_dim;
    if d > 2 {
        return Err(Error::Config(format!("regularized trees keep at most 2 modes, got {d}")));
    }
    if options.depth == 0 {
        return Err(Error::Config("tree depth must be positive".into()));
    }
    let config = SolverConfig {
        dt: approx.dt,
        ..config.clone()
    };
    let frozen = build_frozen(instance, approx)?;
    let errors = measure_errors(instance, &frozen, approx, seed)?;
    let fin = frozen_instance(instance, frozen);
    let tree_dt = instance.horizon / options.depth as f64;
    let m = instance.m.max(1);
    let w_tree = NoiseTree::new(options.depth, m, tree_dt)?;
    let p_tree = NoiseTree::product(options.depth, m, d, tree_dt, DEFAULT_NODE_BUDGET)?;

    struct Raw {
        t: f64,
        node: Node,
        value: f64,
        regularized: f64,
        gradient: f64,
    }
    let raw: Vec<Raw> = (0..options.n_probes)
        .into_par_iter()
        .map(|i| -> Result<Raw> {
            let mut rng = seed::rng(seed, "sandwich-probe", i as u64);
            let level = rng.random_range(0..options.depth);
            let node = Node {
                level,
                index: rng.random_range(0..w_tree.level_size(level)),
            };
            let t = w_tree.time(level);
            let anchor = Path::point(0.0, approx.dt, approx.x0.clone())?;
            let x = sample_path_class(&PathClassSpec::new(approx.k, anchor, t)?, &mut rng)?.path;
            let value = TreeSolver::new(instance, &w_tree, &config)?.value(node, &x)?.value.value;
            let x_d = project_path(&x, d)?;
            let pnode = lift_node(&w_tree, &p_tree, node);
            let regularized = regularized_value(&fin, &p_tree, pnode, &x_d, options.delta, &config)?;
            let gradient = regularized_gradient(&fin, &p_tree, pnode, &x_d, options.delta, d, options.fd_step, &config)?;
            Ok(Raw {
                t,
                node,
                value,
                regularized,
                gradient,
            })
        })
        .collect::<Result<_>>()?;

    let gradient_max = raw.iter().map(|r| r.gradient).fold(0.0, f64::max);
    let params = SandwichParams::new(
        options.delta,
        options.l_tilde.unwrap_or(1.1 * gradient_max),
        instance.bound(),
    )?;
    let y = correction_process(&errors, params.c1);
    let grid = TimeGrid::from_origin(instance.horizon, approx.dt)?;
    let mut probes = Vec::with_capacity(raw.len());
    for r in raw {
        let yc = y[grid.index_at(r.t)];
        let bc = b_correction(&p_tree, r.node.level);
        let width = yc + params.delta * params.c2 * bc;
        let (lower, upper) = (r.regularized - width, r.regularized + width);
        let violation = if r.value > upper + options.tol || r.value < lower - options.tol {
            let excess = (r.value - r.regularized).abs() - width;
            let need = (r.value - r.regularized).abs() - params.delta * params.c2 * bc;
            let inflation = if yc > 0.0 { need / yc } else { f64::INFINITY };
            let kind = if inflation <= errors.tail_factor {
                ViolationKind::EnsembleShortfall
            } else {
                ViolationKind::BudgetUnderestimate
            };
            Some(Violation {
                kind,
                excess,
                inflation,
            })
        } else {
            None
        };
        probes.push(SandwichProbe {
            t: r.t,
            node: r.node,
            value: r.value,
            regularized: r.regularized,
            lower,
            upper,
            y_correction: yc,
            b_correction: bc,
            gap: upper - lower,
            violation,
        });
    }
    let n_violations = probes.iter().filter(|p| p.violation.is_some()).count();
    let max_gap = probes.iter().map(|p| p.gap).fold(0.0, f64::max);
    let mean_gap = probes.iter().map(|p| p.gap).sum::<f64>() / probes.len().max(1) as f64;
    Ok(SandwichReport {
        params,
        gradient_max,
        errors,
        probes,
        n_violations,
        max_gap,
        mean_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn witness_tail() {
        let h = witness(8);
        assert!((projection_error(&h, 4) - 1.749_942_985_726_626e-2).abs() < 1e-12);
        assert_eq!(projection_error(&HVector::unit(8, 0), 1), 0.0);
    }

    #[test]
    fn constant_errors_give_linear_correction() {
        let rep = ApproxErrorReport {
            n_partition: 4,
            level: 1,
            proj_dim: 1,
            k: 1.0,
            x0_norm: 0.0,
            n_paths: 2,
            dt: 0.25,
            f_err: vec![0.5; 4],
            beta_err: vec![0.25; 4],
            g_err: 0.125,
            f_agg: 0.0,
            beta_agg: 0.0,
            f_mean: 0.0,
            f_se: 0.0,
            beta_mean: 0.0,
            beta_se: 0.0,
            g_mean: 0.0,
            g_se: 0.0,
            freeze_gap_max: 0.0,
            freeze_gap_bound: 0.0,
            freeze_gap_violations: 0,
            epsilon: 0.0,
            tail_factor: 1.0,
        };
        let y = correction_process(&rep, 2.0);
        for (i, v) in y.iter().enumerate() {
            let s = i as f64 * 0.25;
            assert!((v - (0.125 + (0.5 + 2.0 * 0.25) * (1.0 - s))).abs() < 1e-15);
        }
    }

    #[test]
    fn single_step_b_correction() {
        let t = NoiseTree::product(1, 1, 1, 0.25, 1 << 10).unwrap();
        assert!((b_correction(&t, 0) - 0.5).abs() < 1e-15);
    }
}

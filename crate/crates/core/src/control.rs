//! Controls, the cost functional, value functions on control meshes and
//! scenario trees, the Hamiltonian, and checks of the dynamic programming
//! principle and of the regularity of the value.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimates::EstimateConstants;
use crate::noise::{sample_wiener_with, Node, NoiseState, NoiseTree};
use crate::path::{sample_path_class, steps_between, Path, PathClassSpec, PathView, TimeGrid};
use crate::problem::{eval_beta, eval_f, eval_g, ProblemInstance};
use crate::seed;
use crate::spectral::{random_unit, HVector, Space};
use crate::state::{solve_state, ControlSignal, SolverConfig, Stepper};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ControlProcess {
    /// Label `labels[k]` on the k-th of `labels.len()` equal intervals of `[start, end]`.
    OpenLoop {
        start: f64,
        end: f64,
        labels: Vec<usize>,
    },
    /// Label per tree node; nodes missing from the map use `fallback`.
    Adapted {
        tree: NoiseTree,
        policy: BTreeMap<Node, usize>,
        fallback: usize,
    },
}

impl ControlProcess {
    pub fn constant(start: f64, end: f64, label: usize) -> Self {
        ControlProcess::OpenLoop {
            start,
            end,
            labels: vec![label],
        }
    }
}

impl ControlSignal for ControlProcess {
    fn control_at(&self, t: f64, noise: &NoiseState) -> usize {
        match self {
            ControlProcess::OpenLoop { start, end, labels } => {
                let n = labels.len();
                let h = (end - start) / n as f64;
                let k = (((t - start) / h) + 1e-9).floor().max(0.0) as usize;
                labels[k.min(n - 1)]
            }
            ControlProcess::Adapted {
                tree,
                policy,
                fallback,
            } => {
                let level = (((t / tree.dt()) + 1e-9).floor().max(0.0) as usize)
                    .min(tree.depth().saturating_sub(1));
                let node = tree.node_of(noise, level);
                policy.get(&node).copied().unwrap_or(*fallback)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateMode {
    ExactTree,
    Exhaustive,
    MonteCarlo,
    Deterministic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub value: f64,
    pub stderr: f64,
    pub mode: EstimateMode,
    pub n_samples: usize,
}

impl ValueEstimate {
    fn exact(value: f64, mode: EstimateMode, n_samples: usize) -> Self {
        Self {
            value,
            stderr: 0.0,
            mode,
            n_samples,
        }
    }
}

/// How the noise is integrated out in a cost evaluation.
#[derive(Clone, Copy, Debug)]
pub enum NoiseMode<'a> {
    Zero,
    /// Wiener paths on the solver grid of `[0, T]`.
    MonteCarlo { n: usize, seed: u64 },
    /// Exact expectation over the leaves below `node`.
    Tree { tree: &'a NoiseTree, node: Node },
}

fn total_cost(
    instance: &ProblemInstance,
    t: f64,
    x_t: &Path,
    theta: &dyn ControlSignal,
    noise: &NoiseState,
    config: &SolverConfig,
) -> Result<f64> {
    let sol = solve_state(instance, t, x_t, theta, noise, config)?;
    Ok(sol.running_cost + eval_g(instance.coeffs.as_ref(), &sol.path, noise)?)
}

/// J(t, x_t; θ) = E[∫_t^T f ds + G(X_T)].
pub fn cost_j(
    instance: &ProblemInstance,
    t: f64,
    x_t: &Path,
    theta: &(dyn ControlSignal + Sync),
    mode: NoiseMode<'_>,
    config: &SolverConfig,
) -> Result<ValueEstimate> {
    match mode {
        NoiseMode::Zero => Ok(ValueEstimate::exact(
            total_cost(instance, t, x_t, theta, &NoiseState::zero(instance.m), config)?,
            EstimateMode::Deterministic,
            1,
        )),
        _ if !instance.is_random() => cost_j(instance, t, x_t, theta, NoiseMode::Zero, config),
        NoiseMode::MonteCarlo { n, seed } => {
            if n < 2 {
                return Err(Error::Config("Monte Carlo needs at least 2 samples".into()));
            }
            let grid = TimeGrid::from_origin(instance.horizon, config.dt)?;
            let samples: Vec<f64> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut rng = seed::rng(seed, "cost-mc", i as u64);
                    let w = sample_wiener_with(grid, instance.m, &mut rng);
                    total_cost(instance, t, x_t, theta, &w.noise_state(), config)
                })
                .collect::<Result<_>>()?;
            let mean = samples.iter().sum::<f64>() / n as f64;
            let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            Ok(ValueEstimate {
                value: mean,
                stderr: (var / n as f64).sqrt(),
                mode: EstimateMode::MonteCarlo,
                n_samples: n,
            })
        }
        NoiseMode::Tree { tree, node } => {
            if (tree.time(node.level) - t).abs() > 1e-9 * tree.dt() {
                return Err(Error::OffGrid(t));
            }
            let below = tree.depth() - node.level;
            let width = tree.level_size(below);
            let leaves: Vec<Node> = (0..width)
                .map(|q| Node {
                    level: tree.depth(),
                    index: node.index * width + q,
                })
                .collect();
            let costs: Vec<f64> = leaves
                .par_iter()
                .map(|&leaf| total_cost(instance, t, x_t, theta, &tree.noise_state(leaf), config))
                .collect::<Result<_>>()?;
            Ok(ValueEstimate::exact(
                costs.iter().sum::<f64>() / width as f64,
                EstimateMode::ExactTree,
                leaves.len(),
            ))
        }
    }
}

pub const DEFAULT_SEARCH_BUDGET: u128 = 1 << 20;

/// Exact minimum of J over open-loop controls that are constant on each of
/// `n_c` equal intervals of `[t, T]`, with the lowest-index minimizer.
pub fn value_open_loop(
    instance: &ProblemInstance,
    t: f64,
    x_t: &Path,
    n_c: usize,
    config: &SolverConfig,
    budget: u128,
) -> Result<(ValueEstimate, Vec<usize>)> {
    if instance.is_random() {
        return Err(Error::Config("open-loop search needs a deterministic instance".into()));
    }
    if n_c == 0 {
        return Err(Error::Config("n_c must be positive".into()));
    }
    let needed = (instance.controls.len() as u128).saturating_pow(n_c as u32);
    if needed > budget {
        return Err(Error::Budget {
            what: "open-loop control sequences",
            needed,
            budget,
        });
    }
    let total = steps_between(t, instance.horizon, config.dt)?;
    if total % n_c != 0 {
        return Err(Error::Grid(format!(
            "{total} solver steps do not split into {n_c} control intervals"
        )));
    }
    let per = total / n_c;
    let stepper = Stepper::new(instance, config.dt, config.method);
    let noise = NoiseState::zero(instance.m);
    let mut start = x_t.clone();
    if (start.grid().dt() - config.dt).abs() > 1e-12 * config.dt {
        start = start.resample(TimeGrid::from_origin(t, config.dt)?);
    }

    fn dfs(
        k: usize,
        n_c: usize,
        per: usize,
        path: Path,
        acc: f64,
        stepper: &Stepper<'_>,
        noise: &NoiseState,
    ) -> Result<(f64, Vec<usize>)> {
        let inst = stepper.instance;
        if k == n_c {
            return Ok((acc + eval_g(inst.coeffs.as_ref(), &path, noise)?, vec![]));
        }
        let branch = |ci: usize| -> Result<(f64, Vec<usize>)> {
            let mut p = path.clone();
            let mut a = acc;
            stepper.advance(&mut p, per, &ci, noise, &mut a)?;
            let (c, mut rest) = dfs(k + 1, n_c, per, p, a, stepper, noise)?;
            rest.insert(0, ci);
            Ok((c, rest))
        };
        let results: Vec<(f64, Vec<usize>)> = if k == 0 {
            (0..inst.controls.len())
                .into_par_iter()
                .map(branch)
                .collect::<Result<_>>()?
        } else {
            (0..inst.controls.len()).map(branch).collect::<Result<_>>()?
        };
        Ok(argmin_first(results))
    }

    let (value, seq) = dfs(0, n_c, per, start, 0.0, &stepper, &noise)?;
    Ok((
        ValueEstimate::exact(value, EstimateMode::Exhaustive, needed as usize),
        seq,
    ))
}

fn argmin_first<T>(items: Vec<(f64, T)>) -> (f64, T) {
    let mut best: Option<(f64, T)> = None;
    for (c, x) in items {
        match &best {
            Some((b, _)) if c >= *b => {}
            _ => best = Some((c, x)),
        }
    }
    best.expect("nonempty control set")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeValue {
    pub value: ValueEstimate,
    pub policy: BTreeMap<Node, usize>,
}

/// Backward induction on a scenario tree. When the tree carries a B-factor,
/// each child's path receives the jump δ·Σ ΔB_i e_i at the child's time.
#[derive(Clone, Debug)]
pub struct TreeSolver<'a> {
    pub instance: &'a ProblemInstance,
    pub tree: &'a NoiseTree,
    pub delta: f64,
    stepper: Stepper<'a>,
    per_step: usize,
}

impl<'a> TreeSolver<'a> {
    pub fn new(
        instance: &'a ProblemInstance,
        tree: &'a NoiseTree,
        config: &SolverConfig,
    ) -> Result<Self> {
        let per_step = steps_between(0.0, tree.dt(), config.dt)?;
        if per_step == 0 {
            return Err(Error::Grid("solver step exceeds tree step".into()));
        }
        if (tree.horizon() - instance.horizon).abs() > 1e-9 * tree.dt() {
            return Err(Error::Grid(format!(
                "tree horizon {} differs from problem horizon {}",
                tree.horizon(),
                instance.horizon
            )));
        }
        Ok(Self {
            instance,
            tree,
            delta: 0.0,
            stepper: Stepper::new(instance, config.dt, config.method),
            per_step,
        })
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn solver_dt(&self) -> f64 {
        self.stepper.dt()
    }

    /// Advances one tree step from `node` under control `ci`; returns the
    /// step cost and the path at the end of the step, before any jump.
    pub fn step(&self, node: Node, path: &Path, ci: usize) -> Result<(f64, Path)> {
        let noise = self.tree.noise_state(node);
        let mut p = path.clone();
        let mut acc = 0.0;
        self.stepper.advance(&mut p, self.per_step, &ci, &noise, &mut acc)?;
        Ok((acc, p))
    }

    /// Path entering `child` from the end-of-step path of its parent.
    pub fn enter(&self, child: Node, path: &Path) -> Path {
        if self.delta == 0.0 || self.tree.b_dim() == 0 {
            return path.clone();
        }
        let br = *self.tree.branches(child).last().expect("child has a parent");
        let mut h = HVector::zeros(path.dim());
        for (i, b) in self.tree.b_increment(br).into_iter().enumerate() {
            h.coeffs_mut()[i] = self.delta * b;
        }
        path.vertical_perturb(&h)
    }

    pub fn terminal(&self, leaf: Node, path: &Path) -> Result<f64> {
        eval_g(self.instance.coeffs.as_ref(), path, &self.tree.noise_state(leaf))
    }

    fn solve(&self, node: Node, path: &Path, policy: &mut BTreeMap<Node, usize>) -> Result<f64> {
        if node.level == self.tree.depth() {
            return self.terminal(node, path);
        }
        let branching = self.tree.branching() as f64;
        let eval = |ci: usize| -> Result<(f64, (usize, BTreeMap<Node, usize>))> {
            let (acc, p) = self.step(node, path, ci)?;
            let mut sub = BTreeMap::new();
            let mut sum = 0.0;
            for child in self.tree.children(node) {
                sum += self.solve(child, &self.enter(child, &p), &mut sub)?;
            }
            Ok((acc + sum / branching, (ci, sub)))
        };
        let n = self.instance.controls.len();
        let results: Vec<_> = if node.level + 2 >= self.tree.depth() {
            (0..n).map(eval).collect::<Result<_>>()?
        } else {
            (0..n).into_par_iter().map(eval).collect::<Result<_>>()?
        };
        let (q, (ci, sub)) = argmin_first(results);
        policy.insert(node, ci);
        policy.extend(sub);
        Ok(q)
    }

    /// Value and optimal policy below `node`, for the history `path` ending
    /// at the node's time.
    pub fn value(&self, node: Node, path: &Path) -> Result<TreeValue> {
        let mut policy = BTreeMap::new();
        let v = self.solve(node, path, &mut policy)?;
        let leaves = self.tree.level_size(self.tree.depth() - node.level) as usize;
        Ok(TreeValue {
            value: ValueEstimate::exact(v, EstimateMode::ExactTree, leaves),
            policy,
        })
    }
}

pub fn value_adapted_tree(
    instance: &ProblemInstance,
    tree: &NoiseTree,
    node: Node,
    x_t: &Path,
    config: &SolverConfig,
) -> Result<TreeValue> {
    TreeSolver::new(instance, tree, config)?.value(node, x_t)
}

/// Relative level and index of a node below `root`.
fn relative(tree: &NoiseTree, root: Node, node: Node) -> (usize, u64) {
    let j = node.level - root.level;
    (j, node.index - root.index * tree.level_size(j))
}

fn internal_count(tree: &NoiseTree, levels: usize) -> usize {
    (0..levels).map(|j| tree.level_size(j) as usize).sum()
}

fn internal_slot(tree: &NoiseTree, root: Node, node: Node) -> usize {
    let (j, q) = relative(tree, root, node);
    internal_count(tree, j) + q as usize
}

/// Ancestors of `node` from `root` (inclusive) down to its parent.
fn lineage(tree: &NoiseTree, root: Node, node: Node) -> Vec<Node> {
    let mut out = Vec::new();
    let mut n = node;
    while n.level > root.level {
        n = tree.parent(n).expect("below root");
        out.push(n);
    }
    out.reverse();
    out
}

/// min over strategy maps (node → control) on levels `[root.level, level_b)`
/// of E[∫ f + inner(node at level_b, path)], by enumeration.
fn enumerate_strategies(
    solver: &TreeSolver<'_>,
    root: Node,
    path: &Path,
    level_b: usize,
    budget: u128,
    inner: &(dyn Fn(Node, &Path) -> Result<f64> + Sync),
) -> Result<Option<(f64, Vec<usize>)>> {
    let tree = solver.tree;
    let levels = level_b - root.level;
    let n_internal = internal_count(tree, levels);
    let u = solver.instance.controls.len();
    let count = (u as u128).checked_pow(n_internal as u32).unwrap_or(u128::MAX);
    if count > budget {
        return Ok(None);
    }
    let targets: Vec<Node> = (0..tree.level_size(levels))
        .map(|q| Node {
            level: level_b,
            index: root.index * tree.level_size(levels) + q,
        })
        .collect();
    // Outcome of each target under each control sequence along its lineage.
    let mut memo: HashMap<(Node, Vec<usize>), f64> = HashMap::new();
    let mut outcome = |target: Node, controls: &[usize]| -> Result<f64> {
        if let Some(v) = memo.get(&(target, controls.to_vec())) {
            return Ok(*v);
        }
        let mut p = path.clone();
        let mut cost = 0.0;
        let line = lineage(tree, root, target);
        for (k, n) in line.iter().enumerate() {
            let (c, next) = solver.step(*n, &p, controls[k])?;
            cost += c;
            let child = if k + 1 < line.len() { line[k + 1] } else { target };
            p = solver.enter(child, &next);
        }
        let v = cost + inner(target, &p)?;
        memo.insert((target, controls.to_vec()), v);
        Ok(v)
    };
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut strategy = vec![0usize; n_internal];
    for s in 0..count {
        let mut rest = s;
        for slot in strategy.iter_mut() {
            *slot = (rest % u as u128) as usize;
            rest /= u as u128;
        }
        let mut sum = 0.0;
        for &target in &targets {
            let controls: Vec<usize> = lineage(tree, root, target)
                .iter()
                .map(|n| strategy[internal_slot(tree, root, *n)])
                .collect();
            sum += outcome(target, &controls)?;
        }
        let e = sum / targets.len() as f64;
        if best.as_ref().is_none_or(|(b, _)| e < *b) {
            best = Some((e, strategy.clone()));
        }
    }
    Ok(best)
}

/// Value by brute-force enumeration of all strategy maps below `node`.
pub fn brute_force_tree_value(
    instance: &ProblemInstance,
    tree: &NoiseTree,
    node: Node,
    x_t: &Path,
    config: &SolverConfig,
    budget: u128,
) -> Result<f64> {
    let solver = TreeSolver::new(instance, tree, config)?;
    let inner = |leaf: Node, p: &Path| solver.terminal(leaf, p);
    enumerate_strategies(&solver, node, x_t, tree.depth(), budget, &inner)?
        .map(|(v, _)| v)
        .ok_or(Error::Budget {
            what: "strategy maps",
            needed: (instance.controls.len() as u128)
                .saturating_pow(internal_count(tree, tree.depth() - node.level) as u32),
            budget,
        })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DppReport {
    pub t: f64,
    pub t_hat: f64,
    pub node: Node,
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    pub enumerated: bool,
}

/// |V(t, ξ) − min_θ E[∫_t^{t̂} f ds + V(t̂, X_{t̂})]| at a tree node, the
/// right side by enumeration of strategies on `[t, t̂)` when within budget.
pub fn check_dpp(
    instance: &ProblemInstance,
    tree: &NoiseTree,
    node: Node,
    t_hat: f64,
    xi: &Path,
    config: &SolverConfig,
    budget: u128,
) -> Result<DppReport> {
    let solver = TreeSolver::new(instance, tree, config)?;
    let b = tree.level_of(t_hat)?;
    let t = tree.time(node.level);
    if b < node.level {
        return Err(Error::Config(format!("t̂ = {t_hat} precedes t = {t}")));
    }
    let lhs = solver.value(node, xi)?.value.value;
    let inner = |n: Node, p: &Path| -> Result<f64> { Ok(solver.value(n, p)?.value.value) };
    let (rhs, enumerated) = match enumerate_strategies(&solver, node, xi, b, budget, &inner)? {
        Some((v, _)) => (v, true),
        None => (partial_induction(&solver, node, xi, b)?, false),
    };
    Ok(DppReport {
        t,
        t_hat,
        node,
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
        enumerated,
    })
}

fn partial_induction(solver: &TreeSolver<'_>, node: Node, path: &Path, b: usize) -> Result<f64> {
    if node.level == b {
        return Ok(solver.value(node, path)?.value.value);
    }
    let branching = solver.tree.branching() as f64;
    let mut qs = Vec::new();
    for ci in 0..solver.instance.controls.len() {
        let (acc, p) = solver.step(node, path, ci)?;
        let mut sum = 0.0;
        for child in solver.tree.children(node) {
            sum += partial_induction(solver, child, &solver.enter(child, &p), b)?;
        }
        qs.push((acc + sum / branching, ci));
    }
    Ok(argmin_first(qs).0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupermartingaleReport {
    /// max over nodes of [V − E V(child) − E ∫ f]⁺.
    pub max_violation: f64,
    /// max over nodes of the absolute drift.
    pub max_abs_drift: f64,
    /// Most negative drift (strictly negative when θ is suboptimal somewhere).
    pub min_drift: f64,
    pub n_nodes: usize,
}

pub fn check_supermartingale(
    instance: &ProblemInstance,
    tree: &NoiseTree,
    theta: &ControlProcess,
    x0: &Path,
    config: &SolverConfig,
) -> Result<SupermartingaleReport> {
    let solver = TreeSolver::new(instance, tree, config)?;
    let mut rep = SupermartingaleReport {
        max_violation: 0.0,
        max_abs_drift: 0.0,
        min_drift: 0.0,
        n_nodes: 0,
    };
    let mut frontier = vec![(Node::ROOT, x0.clone())];
    let branching = tree.branching() as f64;
    for level in 0..tree.depth() {
        let drifts: Vec<(f64, Vec<(Node, Path)>)> = frontier
            .par_iter()
            .map(|(node, path)| -> Result<(f64, Vec<(Node, Path)>)> {
                let v = solver.value(*node, path)?.value.value;
                let ci = theta.control_at(tree.time(level), &tree.noise_state(*node));
                let (cost, p) = solver.step(*node, path, ci)?;
                let mut sum = 0.0;
                let mut next = Vec::new();
                for child in tree.children(*node) {
                    let pc = solver.enter(child, &p);
                    sum += solver.value(child, &pc)?.value.value;
                    next.push((child, pc));
                }
                Ok((v - sum / branching - cost, next))
            })
            .collect::<Result<_>>()?;
        frontier = Vec::new();
        for (d, next) in drifts {
            rep.max_violation = rep.max_violation.max(d.max(0.0));
            rep.max_abs_drift = rep.max_abs_drift.max(d.abs());
            rep.min_drift = rep.min_drift.min(d);
            rep.n_nodes += 1;
            frontier.extend(next);
        }
    }
    Ok(rep)
}

/// min over U of ⟨Ax(t), p⟩ + ⟨β(t, x_t, v), p⟩ + f(t, x_t, v); lowest index wins ties.
pub fn hamiltonian(
    instance: &ProblemInstance,
    t: f64,
    x_t: &dyn PathView,
    p: &HVector,
    noise: &NoiseState,
) -> Result<(f64, usize)> {
    let c = instance.coeffs.as_ref();
    let ax = x_t.current().apply_a().pairing(p);
    let mut items = Vec::with_capacity(instance.controls.len());
    for ci in 0..instance.controls.len() {
        let v = instance.controls.value(ci);
        let q = ax + eval_beta(c, t, x_t, v, noise)?.pairing(p) + eval_f(c, t, x_t, v, noise)?;
        items.push((q, ci));
    }
    Ok(argmin_first(items))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub n_probes: usize,
    pub max_abs_value: f64,
    pub value_bound: f64,
    pub max_lipschitz_ratio: f64,
    pub lipschitz_bound: f64,
}

impl RegularityReport {
    pub fn passes(&self) -> bool {
        self.max_abs_value <= self.value_bound && self.max_lipschitz_ratio <= self.lipschitz_bound
    }
}

/// Bound |V| ≤ L(T+1) and the path-Lipschitz ratio of V against
/// K·L(1+T), with V from exhaustive open-loop search on `n_c` intervals.
pub fn check_value_regularity(
    instance: &ProblemInstance,
    n_probes: usize,
    n_c: usize,
    seed: u64,
    config: &SolverConfig,
) -> Result<RegularityReport> {
    let consts = EstimateConstants::from_instance(instance);
    let dim = instance.dim();
    let t_steps = steps_between(0.0, instance.horizon, config.dt)?;
    if t_steps % n_c != 0 {
        return Err(Error::Grid("control intervals must align with the solver grid".into()));
    }
    let results: Vec<(f64, f64)> = (0..n_probes)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64)> {
            let mut rng = seed::rng(seed, "regularity", i as u64);
            let j = rand::Rng::random_range(&mut rng, 0..n_c);
            let t = instance.horizon * j as f64 / n_c as f64;
            let x0 = random_unit(dim, &mut rng).scaled(rand::Rng::random::<f64>(&mut rng));
            let anchor = Path::point(0.0, config.dt, x0)?;
            let spec = PathClassSpec::new(1.0, anchor, t)?;
            let x = sample_path_class(&spec, &mut rng)?.path;
            let scale = 10f64.powf(-2.0 * rand::Rng::random::<f64>(&mut rng));
            let bump = random_unit(dim, &mut rng).scaled(scale);
            let y = Path::from_fn(*x.grid(), |s| {
                x.eval(s) + &bump.scaled(if t > 0.0 { 0.5 + 0.5 * s / t } else { 1.0 })
            });
            let n = n_c - j;
            let vx = value_open_loop(instance, t, &x, n, config, DEFAULT_SEARCH_BUDGET)?.0.value;
            let vy = value_open_loop(instance, t, &y, n, config, DEFAULT_SEARCH_BUDGET)?.0.value;
            let d = x.sup_dist(&y, Space::H);
            Ok((vx.abs().max(vy.abs()), (vx - vy).abs() / d))
        })
        .collect::<Result<_>>()?;
    Ok(RegularityReport {
        n_probes,
        max_abs_value: results.iter().map(|r| r.0).fold(0.0, f64::max),
        value_bound: consts.value_bound(),
        max_lipschitz_ratio: results.iter().map(|r| r.1).fold(0.0, f64::max),
        lipschitz_bound: consts.value_lipschitz(),
    })
}

/// V_N(t, x) − min_v [∫_t^{t+h} f + V_N(t+h, X^v)], with V_N the open-loop
/// value on `n_c` equal intervals of the remaining horizon and h one control
/// step of size `h`.
pub fn bellman_residual(
    instance: &ProblemInstance,
    t: f64,
    x_t: &Path,
    n_c: usize,
    h: f64,
    config: &SolverConfig,
) -> Result<f64> {
    let v = value_open_loop(instance, t, x_t, n_c, config, DEFAULT_SEARCH_BUDGET)?.0.value;
    let stepper = Stepper::new(instance, config.dt, config.method);
    let steps = steps_between(0.0, h, config.dt)?;
    let noise = NoiseState::zero(instance.m);
    let mut best = f64::INFINITY;
    for ci in 0..instance.controls.len() {
        let mut p = x_t.clone();
        let mut acc = 0.0;
        stepper.advance(&mut p, steps, &ci, &noise, &mut acc)?;
        let next = value_open_loop(instance, t + h, &p, n_c, config, DEFAULT_SEARCH_BUDGET)?.0.value;
        best = best.min(acc + next);
    }
    Ok(v - best)
}

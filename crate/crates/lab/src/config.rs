//! Run configuration read from TOML. Every study has its own section; the
//! defaults reproduce the acceptance runs.

use std::path::{Path as FsPath, PathBuf};

use pathctl::calculus::CATALOG;
use pathctl::problem::{builtin, ControlSet, ProblemInstance, BUILTIN_NAMES};
use pathctl::state::{Method, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, LabResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Rayon threads; 0 lets rayon decide.
    pub workers: usize,
    pub instance: InstanceSection,
    pub solver: SolverSection,
    pub controls: ControlsSection,
    pub tree: TreeSection,
    pub gelfand: GelfandSection,
    pub picard: PicardSection,
    pub estimates: EstimatesSection,
    pub value: ValueSection,
    pub dpp: DppSection,
    pub calculus: CalculusSection,
    pub approx: ApproxSection,
    pub sandwich: SandwichSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstanceSection {
    pub name: String,
    pub dim: usize,
    pub horizon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub dt: f64,
    pub method: Method,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlsSection {
    pub values: Vec<f64>,
    /// Intervals of the open-loop control mesh.
    pub n_c: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeSection {
    pub depth: usize,
    pub m: usize,
    /// Solver step inside tree steps.
    pub dt: f64,
    pub budget: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GelfandSection {
    pub dim: usize,
    pub samples: usize,
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PicardSection {
    pub problems: usize,
    pub instances: Vec<String>,
    pub dim: usize,
    pub dt: f64,
    pub window: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatesSection {
    pub draws: usize,
    pub dim: usize,
    pub dt: f64,
    pub max_spread: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValueSection {
    /// Deterministic instances for the bound and Lipschitz probes.
    pub instances: Vec<String>,
    pub probes: usize,
    /// Instances for the supermartingale check on the tree.
    pub tree_instances: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DppSection {
    pub instances: Vec<String>,
    pub tol: f64,
    /// Tree depth of the brute-force comparison.
    pub brute_depth: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalculusSection {
    pub instance: String,
    pub dim: usize,
    pub functionals: Vec<String>,
    /// Step sizes are 2^{-j} for these j.
    pub log2_steps: Vec<u32>,
    pub paths: usize,
    pub start: f64,
    pub stop: f64,
    pub start_amplitude: f64,
    pub control: usize,
    pub probes: usize,
    pub slope_min: f64,
    pub slope_max: f64,
    pub martingale_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApproxSection {
    pub instance: String,
    pub dim: usize,
    pub n_partition: usize,
    pub level: u32,
    pub proj_dim: usize,
    pub k: f64,
    pub x0_amplitude: f64,
    pub ensemble: usize,
    pub dt: f64,
    pub levels: Vec<u32>,
    pub partitions: Vec<usize>,
    pub proj_dims: Vec<usize>,
    pub ks: Vec<f64>,
    pub max_k_slope: f64,
    pub witness_dim: usize,
    pub witness_value: f64,
    pub witness_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SandwichSection {
    pub instance: String,
    pub dim: usize,
    pub proj_dim: usize,
    pub deltas: Vec<f64>,
    pub depth: usize,
    pub probes: usize,
    pub dt: f64,
    pub tol: f64,
    /// Second instance run at `extra_proj_dim`; empty to skip.
    pub extra_instance: String,
    pub extra_proj_dim: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 20261018,
            out: PathBuf::from("out"),
            workers: 0,
            instance: InstanceSection::default(),
            solver: SolverSection::default(),
            controls: ControlsSection::default(),
            tree: TreeSection::default(),
            gelfand: GelfandSection::default(),
            picard: PicardSection::default(),
            estimates: EstimatesSection::default(),
            value: ValueSection::default(),
            dpp: DppSection::default(),
            calculus: CalculusSection::default(),
            approx: ApproxSection::default(),
            sandwich: SandwichSection::default(),
        }
    }
}

impl Default for InstanceSection {
    fn default() -> Self {
        Self {
            name: "steer-1".into(),
            dim: 8,
            horizon: 1.0,
        }
    }
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            dt: 1.0 / 64.0,
            method: Method::Exponential,
            picard_tol: 1e-10,
            picard_max_iter: 200,
        }
    }
}

impl Default for ControlsSection {
    fn default() -> Self {
        Self {
            values: vec![-1.0, 0.0, 1.0],
            n_c: 4,
        }
    }
}

impl Default for TreeSection {
    fn default() -> Self {
        Self {
            depth: 3,
            m: 1,
            dt: 1.0 / 24.0,
            budget: 1 << 16,
        }
    }
}

impl Default for GelfandSection {
    fn default() -> Self {
        Self {
            dim: 64,
            samples: 1000,
            tol: 1e-12,
        }
    }
}

impl Default for PicardSection {
    fn default() -> Self {
        Self {
            problems: 20,
            instances: vec!["delay".into(), "delay-vstar".into(), "steer-1".into(), "random-f".into()],
            dim: 16,
            dt: 0.01,
            window: 0.3,
        }
    }
}

impl Default for EstimatesSection {
    fn default() -> Self {
        Self {
            draws: 100,
            dim: 16,
            dt: 1.0 / 64.0,
            max_spread: 0.01,
        }
    }
}

impl Default for ValueSection {
    fn default() -> Self {
        Self {
            instances: vec!["steer-1".into(), "delay".into()],
            probes: 50,
            tree_instances: vec!["steer-1".into(), "delay".into(), "random-f".into()],
        }
    }
}

impl Default for DppSection {
    fn default() -> Self {
        Self {
            instances: vec!["steer-1".into(), "delay".into(), "random-f".into(), "shifted-ou".into()],
            tol: 1e-12,
            brute_depth: 2,
        }
    }
}

impl Default for CalculusSection {
    fn default() -> Self {
        Self {
            instance: "steer-1".into(),
            dim: 8,
            functionals: vec!["linear:p=modes(1)".into(), "quad-w1-z1".into(), "trig-w1-z1".into()],
            log2_steps: vec![5, 6, 7, 8, 9],
            paths: 10_000,
            start: 0.0,
            stop: 0.5,
            start_amplitude: 0.5,
            control: 0,
            probes: 1000,
            slope_min: 0.8,
            slope_max: 1.2,
            martingale_se: 3.0,
        }
    }
}

impl Default for ApproxSection {
    fn default() -> Self {
        Self {
            instance: "delay-vstar".into(),
            dim: 8,
            n_partition: 4,
            level: 2,
            proj_dim: 4,
            k: 1.0,
            x0_amplitude: 0.5,
            ensemble: 256,
            dt: 1.0 / 64.0,
            levels: vec![1, 2, 3, 4, 5],
            partitions: vec![4, 8, 16],
            proj_dims: vec![1, 2, 4, 8],
            ks: vec![1.0, 2.0, 4.0, 8.0],
            max_k_slope: 1.1,
            witness_dim: 4,
            witness_value: 1.7499429857266262e-2,
            witness_tol: 1e-6,
        }
    }
}

impl Default for SandwichSection {
    fn default() -> Self {
        Self {
            instance: "steer-1".into(),
            dim: 8,
            proj_dim: 1,
            deltas: vec![0.2, 0.1, 0.05],
            depth: 3,
            probes: 20,
            dt: 1.0 / 48.0,
            tol: 1e-12,
            extra_instance: "delay-vstar".into(),
            extra_proj_dim: 2,
        }
    }
}

/// `n` steps of `dt` make up `span`, up to round-off.
fn divides(span: f64, dt: f64) -> bool {
    let n = span / dt;
    n >= 1.0 - 1e-9 && (n - n.round()).abs() < 1e-9
}

struct Checker(Vec<String>);

impl Checker {
    fn need(&mut self, ok: bool, field: &str, msg: impl std::fmt::Display) {
        if !ok {
            self.0.push(format!("{field}: {msg}"));
        }
    }

    fn positive(&mut self, v: f64, field: &str) {
        self.need(v > 0.0 && v.is_finite(), field, format!("must be positive, got {v}"));
    }

    fn name(&mut self, name: &str, field: &str) {
        self.need(
            BUILTIN_NAMES.contains(&name),
            field,
            format!("unknown instance {name:?}; known: {}", BUILTIN_NAMES.join(", ")),
        );
    }

    fn deterministic(&mut self, name: &str, field: &str) {
        self.name(name, field);
        self.need(
            !matches!(name, "random-f" | "shifted-ou"),
            field,
            format!("{name:?} has random coefficients; open-loop search needs a deterministic instance"),
        );
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> LabResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| LabError::Config(vec![e.to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &FsPath) -> LabResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::Io(path.display().to_string(), e))?;
        Self::from_toml_str(&text)
    }

    /// All problems found, each prefixed with the offending field path.
    pub fn validate(&self) -> LabResult<()> {
        let mut c = Checker(Vec::new());
        c.name(&self.instance.name, "instance.name");
        c.need(self.instance.dim >= 1, "instance.dim", "must be at least 1");
        c.positive(self.instance.horizon, "instance.horizon");
        c.positive(self.solver.dt, "solver.dt");
        c.need(
            !(self.solver.dt > 0.0) || divides(self.instance.horizon, self.solver.dt),
            "solver.dt",
            "must divide instance.horizon",
        );
        c.positive(self.solver.picard_tol, "solver.picard_tol");
        c.need(self.solver.picard_max_iter >= 2, "solver.picard_max_iter", "must be at least 2");

        c.need(!self.controls.values.is_empty(), "controls.values", "must not be empty");
        c.need(
            self.controls.values.iter().all(|v| v.is_finite() && v.abs() <= 1.0),
            "controls.values",
            "every control must lie in [-1, 1] so the coefficient bound L = 1 holds",
        );
        c.need(self.controls.n_c >= 1, "controls.n_c", "must be at least 1");
        c.need(
            !(self.solver.dt > 0.0) || self.controls.n_c == 0 || divides(1.0 / self.controls.n_c as f64, self.solver.dt),
            "controls.n_c",
            "control intervals must align with solver.dt",
        );

        c.need(self.tree.depth >= 1 && self.tree.depth <= 6, "tree.depth", "must lie in 1..=6");
        c.need(self.tree.m == 1, "tree.m", "built-in instances are driven by one Wiener component");
        c.positive(self.tree.dt, "tree.dt");
        c.need(
            self.tree.depth == 0 || !(self.tree.dt > 0.0) || divides(1.0 / self.tree.depth as f64, self.tree.dt),
            "tree.dt",
            "must divide the tree step 1/depth",
        );

        c.need(self.gelfand.dim >= 1, "gelfand.dim", "must be at least 1");
        c.need(self.gelfand.samples >= 1, "gelfand.samples", "must be at least 1");
        c.positive(self.gelfand.tol, "gelfand.tol");

        c.need(self.picard.problems >= 1, "picard.problems", "must be at least 1");
        c.need(!self.picard.instances.is_empty(), "picard.instances", "must not be empty");
        for (i, n) in self.picard.instances.iter().enumerate() {
            c.name(n, &format!("picard.instances[{i}]"));
        }
        c.need(self.picard.dim >= 1, "picard.dim", "must be at least 1");
        c.positive(self.picard.dt, "picard.dt");
        c.positive(self.picard.window, "picard.window");
        c.need(
            !(self.picard.dt > 0.0) || divides(1.0, self.picard.dt),
            "picard.dt",
            "must divide the horizon 1",
        );

        c.need(self.estimates.draws >= 1, "estimates.draws", "must be at least 1");
        c.need(self.estimates.dim >= 1, "estimates.dim", "must be at least 1");
        c.positive(self.estimates.dt, "estimates.dt");
        c.positive(self.estimates.max_spread, "estimates.max_spread");

        for (i, n) in self.value.instances.iter().enumerate() {
            c.deterministic(n, &format!("value.instances[{i}]"));
        }
        for (i, n) in self.value.tree_instances.iter().enumerate() {
            c.name(n, &format!("value.tree_instances[{i}]"));
        }
        c.need(self.value.probes >= 1, "value.probes", "must be at least 1");

        for (i, n) in self.dpp.instances.iter().enumerate() {
            c.name(n, &format!("dpp.instances[{i}]"));
        }
        c.positive(self.dpp.tol, "dpp.tol");
        c.need(
            self.dpp.brute_depth >= 1 && self.dpp.brute_depth <= self.tree.depth,
            "dpp.brute_depth",
            "must lie in 1..=tree.depth",
        );

        c.name(&self.calculus.instance, "calculus.instance");
        c.need(self.calculus.dim >= 1, "calculus.dim", "must be at least 1");
        for (i, n) in self.calculus.functionals.iter().enumerate() {
            let known = pathctl::calculus::catalog(n, self.calculus.dim.max(1), 1.0).is_ok();
            c.need(known, &format!("calculus.functionals[{i}]"), format!("unknown functional {n:?}; known: {}", CATALOG.join(", ")));
        }
        c.need(self.calculus.log2_steps.len() >= 2, "calculus.log2_steps", "need at least two step sizes for a slope");
        c.need(
            self.calculus.log2_steps.iter().all(|&j| (1..=16).contains(&j)),
            "calculus.log2_steps",
            "each exponent must lie in 1..=16",
        );
        c.need(self.calculus.paths >= 2, "calculus.paths", "must be at least 2");
        c.need(
            0.0 <= self.calculus.start && self.calculus.start <= self.calculus.stop && self.calculus.stop <= 1.0,
            "calculus.stop",
            "need 0 <= start <= stop <= horizon 1",
        );
        c.need(self.calculus.control < self.controls.values.len(), "calculus.control", "must index controls.values");
        c.need(self.calculus.slope_min < self.calculus.slope_max, "calculus.slope_max", "must exceed slope_min");

        let a = &self.approx;
        c.name(&a.instance, "approx.instance");
        c.need(a.n_partition > 3, "approx.n_partition", "must exceed 3");
        c.need(a.partitions.iter().all(|&n| n > 3), "approx.partitions", "every partition must exceed 3 cells");
        c.need(a.proj_dim >= 1 && a.proj_dim <= a.dim, "approx.proj_dim", format!("must lie in 1..={}", a.dim));
        c.need(
            a.proj_dims.iter().all(|&d| d >= 1 && d <= a.dim),
            "approx.proj_dims",
            format!("every entry must lie in 1..={}", a.dim),
        );
        c.need(a.proj_dims.windows(2).all(|w| w[0] < w[1]), "approx.proj_dims", "must increase");
        c.need(a.k >= 1.0, "approx.k", "must be at least 1");
        c.need(a.ks.iter().all(|&k| k >= 1.0), "approx.ks", "every entry must be at least 1");
        c.need(a.ensemble >= 2, "approx.ensemble", "must be at least 2");
        c.positive(a.dt, "approx.dt");
        c.need(a.level <= 30 && a.levels.iter().all(|&m| m <= 30), "approx.levels", "levels must be at most 30");
        c.need(
            a.witness_dim >= 1 && a.witness_dim <= a.dim,
            "approx.witness_dim",
            format!("must lie in 1..={}", a.dim),
        );

        let s = &self.sandwich;
        c.name(&s.instance, "sandwich.instance");
        c.need(s.proj_dim >= 1 && s.proj_dim <= 2, "sandwich.proj_dim", "regularized trees keep 1 or 2 modes");
        c.need(s.deltas.iter().all(|d| (0.0..1.0).contains(d)), "sandwich.deltas", "every delta must lie in [0, 1)");
        c.need(
            s.deltas.windows(2).all(|w| w[1] < w[0]),
            "sandwich.deltas",
            "must decrease",
        );
        c.need(s.depth >= 1 && s.depth <= 4, "sandwich.depth", "must lie in 1..=4");
        c.need(
            s.depth == 0 || !(s.dt > 0.0) || divides(1.0 / s.depth as f64, s.dt),
            "sandwich.dt",
            "must divide the tree step 1/depth",
        );
        if !s.extra_instance.is_empty() {
            c.name(&s.extra_instance, "sandwich.extra_instance");
            c.need(
                s.extra_proj_dim >= 1 && s.extra_proj_dim <= 2,
                "sandwich.extra_proj_dim",
                "regularized trees keep 1 or 2 modes",
            );
        }
        if c.0.is_empty() {
            Ok(())
        } else {
            Err(LabError::Config(c.0))
        }
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            dt: self.solver.dt,
            method: self.solver.method,
            picard_tol: self.solver.picard_tol,
            picard_max_iter: self.solver.picard_max_iter,
            picard_window: None,
        }
    }

    /// Built-in instance with the configured control set.
    pub fn instance(&self, name: &str, dim: usize, horizon: f64) -> LabResult<ProblemInstance> {
        let controls = ControlSet::from_values(&self.controls.values)?;
        Ok(builtin(name, dim, horizon)?.with_controls(controls))
    }
}

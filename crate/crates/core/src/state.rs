//! Exponential Galerkin stepping of dX = (AX + β(t, X_t, θ(t))) dt, the Picard
//! construction on short windows, and the flow property.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::NoiseState;
use crate::path::{steps_between, Path, TimeGrid};
use crate::problem::{eval_beta, eval_f, ProblemInstance};
use crate::spectral::{ExpStep, Space};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exponential,
    SemiImplicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    pub method: Method,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    /// Window length for the Picard iteration; chosen from the contraction
    /// condition when absent.
    pub picard_window: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 1.0 / 64.0,
            method: Method::Exponential,
            picard_tol: 1e-10,
            picard_max_iter: 200,
            picard_window: None,
        }
    }
}

impl SolverConfig {
    pub fn with_dt(dt: f64) -> Self {
        Self {
            dt,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Config(format!("solver.dt must be positive, got {}", self.dt)));
        }
        if !(self.picard_tol > 0.0) {
            return Err(Error::Config("solver.picard_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Something that picks a control index at time `t` from the noise so far.
pub trait ControlSignal: Sync {
    fn control_at(&self, t: f64, noise: &NoiseState) -> usize;
}

impl ControlSignal for usize {
    fn control_at(&self, _t: f64, _noise: &NoiseState) -> usize {
        *self
    }
}

impl<F: Fn(f64) -> usize + Sync> ControlSignal for F {
    fn control_at(&self, t: f64, _noise: &NoiseState) -> usize {
        self(t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PicardWindow {
    pub start: f64,
    pub end: f64,
    pub distances: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PicardTrace {
    pub window: f64,
    pub factor: f64,
    pub windows: Vec<PicardWindow>,
}

impl PicardTrace {
    /// Successive-distance ratios d_{k+1}/d_k, skipping distances at round-off level.
    pub fn ratios(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for w in &self.windows {
            for p in w.distances.windows(2) {
                if p[0] > 1e-13 {
                    out.push(p[1] / p[0]);
                }
            }
        }
        out
    }

    pub fn iterations(&self) -> usize {
        self.windows.iter().map(|w| w.distances.len()).max().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSolution {
    /// Initial segment followed by the solution on [r, T].
    pub path: Path,
    pub start_index: usize,
    pub v_energy: f64,
    pub h_max: f64,
    /// Left-point quadrature of ∫_r^T f(s, X_s, θ(s)) ds.
    pub running_cost: f64,
    pub picard: Option<PicardTrace>,
}

impl StateSolution {
    fn from_path(path: Path, start_index: usize, running_cost: f64) -> Self {
        let (h_max, v_energy) = energy(&path, start_index, |h| h.clone());
        Self {
            path,
            start_index,
            v_energy,
            h_max,
            running_cost,
            picard: None,
        }
    }

    pub fn start_time(&self) -> f64 {
        self.path.grid().node(self.start_index)
    }
}

/// (max ‖y‖_H, trapezoidal ∫‖y‖²_V) over nodes from `start` on, with y = map(x).
pub fn energy(
    path: &Path,
    start: usize,
    map: impl Fn(&crate::spectral::HVector) -> crate::spectral::HVector,
) -> (f64, f64) {
    let n = path.grid().n_steps();
    let dt = path.grid().dt();
    let node = |i: usize| {
        if i == n {
            path.end_value()
        } else {
            &path.values()[i]
        }
    };
    let mut h_max: f64 = 0.0;
    let mut v = 0.0;
    let mut prev: Option<f64> = None;
    for i in start..=n {
        let y = map(node(i));
        h_max = h_max.max(y.norm(Space::H));
        let e = y.norm_sq(Space::V);
        if let Some(p) = prev {
            v += 0.5 * dt * (p + e);
        }
        prev = Some(e);
    }
    (h_max, v)
}

/// One-step map for a fixed instance and step size.
#[derive(Clone, Debug)]
pub struct Stepper<'a> {
    pub instance: &'a ProblemInstance,
    step: ExpStep,
    dt: f64,
}

impl<'a> Stepper<'a> {
    pub fn new(instance: &'a ProblemInstance, dt: f64, method: Method) -> Self {
        let step = match method {
            Method::Exponential => ExpStep::exponential(instance.dim(), dt),
            Method::SemiImplicit => ExpStep::semi_implicit(instance.dim(), dt),
        };
        Self { instance, step, dt }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances `path` by `n` steps, adding dt·f at each left node to `acc`.
    pub fn advance(
        &self,
        path: &mut Path,
        n: usize,
        control: &dyn ControlSignal,
        noise: &NoiseState,
        acc: &mut f64,
    ) -> Result<()> {
        let c = self.instance.coeffs.as_ref();
        for _ in 0..n {
            let t = path.end();
            let v = self.instance.controls.value(control.control_at(t, noise));
            let b = eval_beta(c, t, path, v, noise)?;
            *acc += self.dt * eval_f(c, t, path, v, noise)?;
            let next = self.step.apply(path.end_value(), &b);
            path.push(next);
        }
        Ok(())
    }

    /// Advances with β evaluated on a fixed reference path instead of the
    /// path being built.
    fn advance_frozen(
        &self,
        path: &mut Path,
        reference: &Path,
        n: usize,
        control: &dyn ControlSignal,
        noise: &NoiseState,
    ) -> Result<()> {
        let c = self.instance.coeffs.as_ref();
        for _ in 0..n {
            let j = path.grid().n_steps();
            let t = path.end();
            let v = self.instance.controls.value(control.control_at(t, noise));
            let b = eval_beta(c, t, &reference.prefix(j), v, noise)?;
            let next = self.step.apply(path.end_value(), &b);
            path.push(next);
        }
        Ok(())
    }
}

/// Brings ξ onto the solver grid from 0 with spacing `dt`.
fn align_initial(xi: &Path, dt: f64) -> Result<Path> {
    let r = xi.end();
    if xi.grid().t0() != 0.0 {
        return Err(Error::Grid("initial paths must start at time 0".into()));
    }
    if (xi.grid().dt() - dt).abs() <= 1e-12 * dt {
        return Ok(xi.clone());
    }
    let grid = TimeGrid::from_origin(r, dt)?;
    Ok(xi.resample(grid))
}

pub fn solve_state(
    instance: &ProblemInstance,
    r: f64,
    xi: &Path,
    theta: &dyn ControlSignal,
    noise: &NoiseState,
    config: &SolverConfig,
) -> Result<StateSolution> {
    config.validate()?;
    if (xi.end() - r).abs() > 1e-9 * config.dt {
        return Err(Error::Grid(format!("initial path ends at {} not at r = {r}", xi.end())));
    }
    let mut path = align_initial(xi, config.dt)?;
    let start = path.grid().n_steps();
    let n = steps_between(r, instance.horizon, config.dt)?;
    let stepper = Stepper::new(instance, config.dt, config.method);
    let mut acc = 0.0;
    stepper.advance(&mut path, n, theta, noise, &mut acc)?;
    Ok(StateSolution::from_path(path, start, acc))
}

/// Largest multiple of dt with (L²T₀/ĉ₂)e^{T₀c₁⁺} ≤ 1/2, ĉ₂ = c₂/2.
pub fn picard_window(instance: &ProblemInstance, dt: f64) -> f64 {
    let l = instance.bound();
    let c = &instance.constants;
    let factor = |t0: f64| l * l * t0 / (c.c2 / 2.0) * (t0 * c.c1_plus()).exp();
    let (mut lo, mut hi) = (0.0, instance.horizon);
    if factor(hi) <= 0.5 {
        lo = hi;
    } else {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if factor(mid) <= 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    ((lo / dt + 1e-9).floor() * dt).max(dt)
}

pub fn picard_factor(instance: &ProblemInstance, t0: f64) -> f64 {
    let l = instance.bound();
    let c = &instance.constants;
    l * l * t0 / (c.c2 / 2.0) * (t0 * c.c1_plus()).exp()
}

pub fn picard_solve(
    instance: &ProblemInstance,
    r: f64,
    xi: &Path,
    theta: &dyn ControlSignal,
    noise: &NoiseState,
    config: &SolverConfig,
) -> Result<StateSolution> {
    config.validate()?;
    let dt = config.dt;
    if (xi.end() - r).abs() > 1e-9 * dt {
        return Err(Error::Grid(format!("initial path ends at {} not at r = {r}", xi.end())));
    }
    let mut sol = align_initial(xi, dt)?;
    sol.absorb_override();
    let start = sol.grid().n_steps();
    let total = steps_between(r, instance.horizon, dt)?;
    let window = match config.picard_window {
        Some(w) => w,
        None => picard_window(instance, dt),
    };
    let w_steps = ((window / dt + 1e-9).floor() as usize).max(1);
    let stepper = Stepper::new(instance, dt, config.method);
    let mut trace = PicardTrace {
        window: w_steps as f64 * dt,
        factor: picard_factor(instance, w_steps as f64 * dt),
        windows: Vec::new(),
    };
    let mut done = 0;
    while done < total {
        let n = w_steps.min(total - done);
        let a = sol.grid().n_steps();
        let mut iterate = sol.horizontal_extend(n as f64 * dt)?;
        let mut distances = Vec::new();
        let mut rising = 0;
        loop {
            let mut next = sol.clone();
            stepper.advance_frozen(&mut next, &iterate, n, theta, noise)?;
            let d = (a..=a + n)
                .map(|i| next.values()[i].dist(&iterate.values()[i], Space::H))
                .fold(0.0, f64::max);
            if let Some(&prev) = distances.last() {
                if prev > 1e-13 && d / prev >= 1.0 {
                    rising += 1;
                } else {
                    rising = 0;
                }
            }
            distances.push(d);
            iterate = next;
            if d < config.picard_tol {
                break;
            }
            if rising >= 3 {
                let ratios = distances.windows(2).map(|p| p[1] / p[0]).collect();
                return Err(Error::NonContraction { ratios });
            }
            if distances.len() >= config.picard_max_iter {
                return Err(Error::PicardStalled {
                    tol: config.picard_tol,
                    iters: distances.len(),
                });
            }
        }
        trace.windows.push(PicardWindow {
            start: sol.end(),
            end: iterate.end(),
            distances,
        });
        sol = iterate;
        done += n;
    }
    // running cost along the fixed point
    let c = instance.coeffs.as_ref();
    let mut acc = 0.0;
    for j in start..sol.grid().n_steps() {
        let t = sol.grid().node(j);
        let v = instance.controls.value(theta.control_at(t, noise));
        acc += dt * eval_f(c, t, &sol.prefix(j), v, noise)?;
    }
    let mut out = StateSolution::from_path(sol, start, acc);
    out.picard = Some(trace);
    Ok(out)
}

/// sup over [t, T] of ‖X^{r,ξ}(s) − X^{t, X^{r,ξ}_t}(s)‖_H.
///
/// When `t` is not a node of the solver grid, the restart runs on the
/// finest grid `T/n` (n ≥ T/dt) having `t` as a node, from the càdlàg
/// resampling of the first solution.
pub fn flow_check(
    instance: &ProblemInstance,
    r: f64,
    t: f64,
    xi: &Path,
    theta: &dyn ControlSignal,
    noise: &NoiseState,
    config: &SolverConfig,
) -> Result<f64> {
    if !(r <= t && t <= instance.horizon) {
        return Err(Error::Config(format!("need r ≤ t ≤ T, got r = {r}, t = {t}")));
    }
    let first = solve_state(instance, r, xi, theta, noise, config)?;
    let grid = first.path.grid();
    let second = if grid.is_node(t) {
        let xt = first.path.restrict(t)?;
        solve_state(instance, t, &xt, theta, noise, config)?
    } else {
        let base = (instance.horizon / config.dt).round() as usize;
        let n = (base..=base * 100)
            .find(|&n| {
                let x = t * n as f64 / instance.horizon;
                (x - x.round()).abs() < 1e-9
            })
            .ok_or_else(|| Error::Grid(format!("no uniform grid has {t} as a node")))?;
        let dt2 = instance.horizon / n as f64;
        let g2 = TimeGrid::from_origin(t, dt2)?;
        let xt = first.path.resample(g2);
        let cfg2 = SolverConfig {
            dt: dt2,
            ..config.clone()
        };
        solve_state(instance, t, &xt, theta, noise, &cfg2)?
    };
    let mut gap: f64 = 0.0;
    for s in grid.nodes().filter(|&s| s >= t - grid.eps()) {
        gap = gap.max(first.path.eval(s).dist(second.path.eval(s), Space::H));
    }
    Ok(gap)
}

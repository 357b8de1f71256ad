//! Problem data: drift β, running cost f, terminal cost G, the control set and
//! the built-in instances.

use std::borrow::Cow;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{sample_wiener_with, NoiseState};
use crate::path::{sample_path_class, Path, PathClassSpec, PathView, TimeGrid};
use crate::seed;
use crate::spectral::{eigenvalue, random_unit, GelfandConstants, HVector, Space, SpectralBasis};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlPoint {
    pub label: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlSet {
    points: Vec<ControlPoint>,
}

impl ControlSet {
    pub fn new(points: Vec<ControlPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("control set must be nonempty".into()));
        }
        Ok(Self { points })
    }

    pub fn from_values(values: &[f64]) -> Result<Self> {
        Self::new(
            values
                .iter()
                .map(|&value| ControlPoint {
                    label: format!("{value}"),
                    value,
                })
                .collect(),
        )
    }

    /// {−1, 0, +1}.
    pub fn ternary() -> Self {
        Self::from_values(&[-1.0, 0.0, 1.0]).expect("nonempty")
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn value(&self, i: usize) -> f64 {
        self.points[i].value
    }

    pub fn points(&self) -> &[ControlPoint] {
        &self.points
    }

    pub fn max_abs(&self) -> f64 {
        self.points.iter().map(|p| p.value.abs()).fold(0.0, f64::max)
    }
}

/// Problem coefficients. `x` is the path up to the current time `t`.
pub trait Coefficients: Send + Sync + fmt::Debug {
    fn beta(&self, t: f64, x: &dyn PathView, v: f64, noise: &NoiseState) -> HVector;
    fn running_cost(&self, t: f64, x: &dyn PathView, v: f64, noise: &NoiseState) -> f64;
    fn terminal_cost(&self, x: &dyn PathView, noise: &NoiseState) -> f64;
    /// Declared L: bounds |f|, |G|, ‖β‖_H and the Lipschitz moduli.
    fn bound(&self) -> f64;
    fn is_random(&self) -> bool;
    fn lipschitz_space(&self) -> Space;
    fn dim(&self) -> usize;
}

const BOUND_SLACK: f64 = 1e-12;

fn check(what: &'static str, value: f64, bound: f64, t: f64) -> Result<()> {
    if value.is_finite() && value <= bound * (1.0 + BOUND_SLACK) {
        Ok(())
    } else {
        Err(Error::BoundViolation {
            what,
            value,
            bound,
            t,
        })
    }
}

pub fn eval_beta(
    c: &dyn Coefficients,
    t: f64,
    x: &dyn PathView,
    v: f64,
    noise: &NoiseState,
) -> Result<HVector> {
    let b = c.beta(t, x, v, noise);
    check("‖β‖_H", b.norm(Space::H), c.bound(), t)?;
    Ok(b)
}

pub fn eval_f(
    c: &dyn Coefficients,
    t: f64,
    x: &dyn PathView,
    v: f64,
    noise: &NoiseState,
) -> Result<f64> {
    let f = c.running_cost(t, x, v, noise);
    check("|f|", f.abs(), c.bound(), t)?;
    Ok(f)
}

pub fn eval_g(c: &dyn Coefficients, x: &dyn PathView, noise: &NoiseState) -> Result<f64> {
    let g = c.terminal_cost(x, noise);
    check("|G|", g.abs(), c.bound(), x.end_time())?;
    Ok(g)
}

/// Scalar path functionals available to configured instances. Evaluated at
/// time `s` (the current time for f, the horizon for G).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Functional {
    Constant { value: f64 },
    /// clamp(⟨x(s), p⟩, −cap, cap).
    Linear { weights: Vec<f64>, cap: f64 },
    /// min(cap, ‖x(s)‖).
    CappedNorm { cap: f64, space: Space },
    /// min(cap, ‖x(lag·s)‖).
    Delay { cap: f64, space: Space, lag: f64 },
    /// v².
    ControlSquare,
    /// clamp(scale·W₁(s)·v, −cap, cap).
    NoiseControl { scale: f64, cap: f64 },
}

impl Functional {
    pub fn eval(&self, s: f64, x: &dyn PathView, v: f64, noise: &NoiseState) -> f64 {
        match self {
            Functional::Constant { value } => *value,
            Functional::Linear { weights, cap } => {
                let xs = x.at(s);
                let p: f64 = xs.coeffs().iter().zip(weights).map(|(a, b)| a * b).sum();
                p.clamp(-cap, *cap)
            }
            Functional::CappedNorm { cap, space } => x.at(s).norm(*space).min(*cap),
            Functional::Delay { cap, space, lag } => x.at(lag * s).norm(*space).min(*cap),
            Functional::ControlSquare => v * v,
            Functional::NoiseControl { scale, cap } => {
                (scale * noise.component(s, 0) * v).clamp(-cap, *cap)
            }
        }
    }

    pub fn magnitude(&self, controls: &ControlSet) -> f64 {
        match self {
            Functional::Constant { value } => value.abs(),
            Functional::Linear { cap, .. }
            | Functional::CappedNorm { cap, .. }
            | Functional::Delay { cap, .. }
            | Functional::NoiseControl { cap, .. } => *cap,
            Functional::ControlSquare => controls.max_abs().powi(2),
        }
    }

    /// Lipschitz constant w.r.t. the sup-norm of the path in `space`.
    pub fn lipschitz(&self, space: Space) -> Option<f64> {
        match self {
            Functional::Constant { .. }
            | Functional::ControlSquare
            | Functional::NoiseControl { .. } => Some(0.0),
            Functional::Linear { weights, .. } => {
                let p = HVector::from_coeffs(weights.clone());
                Some(match space {
                    Space::H => p.norm(Space::H),
                    Space::VStar => p.norm(Space::V),
                    Space::V => p.norm(Space::VStar),
                })
            }
            Functional::CappedNorm { space: own, .. } | Functional::Delay { space: own, .. } => {
                match (own, space) {
                    (a, b) if a == &b => Some(1.0),
                    (Space::VStar, Space::H) | (Space::VStar, Space::V) | (Space::H, Space::V) => {
                        Some(1.0)
                    }
                    _ => None,
                }
            }
        }
    }

    pub fn is_random(&self) -> bool {
        matches!(self, Functional::NoiseControl { .. })
    }
}

/// β(t, x, v) = v·w + γ·sat_R(S x(lag·t)), where S scales the first
/// `delay_modes` coordinates by (1+λ_i)^{-1/2} and drops the rest, and sat_R
/// is the radial retraction onto the H-ball of radius R.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaSpec {
    pub control_direction: Vec<f64>,
    #[serde(default)]
    pub delay_gain: f64,
    #[serde(default = "one")]
    pub delay_radius: f64,
    #[serde(default = "two")]
    pub delay_modes: usize,
    #[serde(default = "half")]
    pub lag: f64,
}

fn one() -> f64 {
    1.0
}
fn two() -> usize {
    2
}
fn half() -> f64 {
    0.5
}

impl BetaSpec {
    pub fn control_only(direction: Vec<f64>) -> Self {
        Self {
            control_direction: direction,
            delay_gain: 0.0,
            delay_radius: 1.0,
            delay_modes: 2,
            lag: 0.5,
        }
    }

    fn eval(&self, dim: usize, t: f64, x: &dyn PathView, v: f64) -> HVector {
        let mut out = HVector::zeros(dim);
        for (a, w) in out.coeffs_mut().iter_mut().zip(&self.control_direction) {
            *a = v * w;
        }
        if self.delay_gain != 0.0 {
            let xs = x.at(self.lag * t);
            let k = self.delay_modes.min(dim);
            let s: Vec<f64> = (0..k)
                .map(|i| xs.coeffs()[i] / (1.0 + eigenvalue(i)).sqrt())
                .collect();
            let n = s.iter().map(|a| a * a).sum::<f64>().sqrt();
            let r = if n > self.delay_radius {
                self.delay_radius / n
            } else {
                1.0
            };
            for (a, si) in out.coeffs_mut().iter_mut().zip(&s) {
                *a += self.delay_gain * r * si;
            }
        }
        out
    }

    pub fn magnitude(&self, controls: &ControlSet) -> f64 {
        let w = self
            .control_direction
            .iter()
            .map(|a| a * a)
            .sum::<f64>()
            .sqrt();
        controls.max_abs() * w + self.delay_gain.abs() * self.delay_radius
    }

    pub fn lipschitz(&self) -> f64 {
        self.delay_gain.abs()
    }
}

/// Coefficients assembled from the catalog.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalogCoefficients {
    pub dim: usize,
    pub beta: BetaSpec,
    pub running: Functional,
    pub terminal: Functional,
    pub bound: f64,
    pub space: Space,
}

impl CatalogCoefficients {
    /// Checks that magnitudes and Lipschitz moduli stay within the declared L.
    pub fn validate(&self, controls: &ControlSet) -> Result<()> {
        let l = self.bound;
        if !(l > 0.0) {
            return Err(Error::Config("bound L must be positive".into()));
        }
        if self.beta.control_direction.len() > self.dim {
            return Err(Error::Config("beta direction longer than the ambient dimension".into()));
        }
        let tol = l * (1.0 + 1e-12);
        let mags = [
            ("beta", self.beta.magnitude(controls)),
            ("running", self.running.magnitude(controls)),
            ("terminal", self.terminal.magnitude(controls)),
        ];
        for (what, m) in mags {
            if m > tol {
                return Err(Error::Config(format!("{what} magnitude {m} exceeds L = {l}")));
            }
        }
        for (what, f) in [("running", &self.running), ("terminal", &self.terminal)] {
            match f.lipschitz(self.space) {
                Some(c) if c <= tol => {}
                Some(c) => {
                    return Err(Error::Config(format!(
                        "{what} Lipschitz constant {c} exceeds L = {l}"
                    )))
                }
                None => {
                    return Err(Error::Config(format!(
                        "{what} is not Lipschitz in {:?}",
                        self.space
                    )))
                }
            }
        }
        if self.beta.lipschitz() > tol {
            return Err(Error::Config("beta delay gain exceeds L".into()));
        }
        Ok(())
    }
}

impl Coefficients for CatalogCoefficients {
    fn beta(&self, t: f64, x: &dyn PathView, v: f64, _noise: &NoiseState) -> HVector {
        self.beta.eval(self.dim, t, x, v)
    }
    fn running_cost(&self, t: f64, x: &dyn PathView, v: f64, noise: &NoiseState) -> f64 {
        self.running.eval(t, x, v, noise)
    }
    fn terminal_cost(&self, x: &dyn PathView, noise: &NoiseState) -> f64 {
        self.terminal.eval(x.end_time(), x, 0.0, noise)
    }
    fn bound(&self) -> f64 {
        self.bound
    }
    fn is_random(&self) -> bool {
        self.running.is_random() || self.terminal.is_random()
    }
    fn lipschitz_space(&self) -> Space {
        self.space
    }
    fn dim(&self) -> usize {
        self.dim
    }
}

/// Ornstein-Uhlenbeck forcing η in the first `modes` directions; component i
/// is driven by W^{i mod m}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuForcing {
    pub modes: usize,
    pub rate: f64,
    pub vol: f64,
}

impl OuForcing {
    /// η(s) with η(0) = 0 for the step-function W of `noise`.
    pub fn eta(&self, s: f64, dim: usize, noise: &NoiseState) -> HVector {
        let mut out = HVector::zeros(dim);
        if self.vol == 0.0 || noise.dim() == 0 {
            return out;
        }
        let last = noise.knot_index(s);
        let knots = noise.knots();
        for j in 1..=last {
            let tj = j as f64 * noise.step();
            let decay = self.vol * (-self.rate * (s - tj)).exp();
            for (i, a) in out.coeffs_mut().iter_mut().enumerate().take(self.modes) {
                let c = i % noise.dim();
                *a += decay * (knots[j][c] - knots[j - 1][c]);
            }
        }
        out
    }
}

struct Shifted<'a> {
    x: &'a dyn PathView,
    eta: &'a OuForcing,
    noise: &'a NoiseState,
}

impl PathView for Shifted<'_> {
    fn start_time(&self) -> f64 {
        self.x.start_time()
    }
    fn end_time(&self) -> f64 {
        self.x.end_time()
    }
    fn at(&self, s: f64) -> Cow<'_, HVector> {
        let x = self.x.at(s);
        let eta = self.eta.eta(s, x.dim(), self.noise);
        Cow::Owned(x.as_ref() + &eta)
    }
}

/// Coefficients of a core problem evaluated at the shifted path x + η.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftedCoefficients {
    pub core: CatalogCoefficients,
    pub eta: OuForcing,
}

impl ShiftedCoefficients {
    fn view<'a>(&'a self, x: &'a dyn PathView, noise: &'a NoiseState) -> Shifted<'a> {
        Shifted {
            x,
            eta: &self.eta,
            noise,
        }
    }
}

impl Coefficients for ShiftedCoefficients {
    fn beta(&self, t: f64, x: &dyn PathView, v: f64, noise: &NoiseState) -> HVector {
        self.core.beta(t, &self.view(x, noise), v, noise)
    }
    fn running_cost(&self, t: f64, x: &dyn PathView, v: f64, noise: &NoiseState) -> f64 {
        self.core.running_cost(t, &self.view(x, noise), v, noise)
    }
    fn terminal_cost(&self, x: &dyn PathView, noise: &NoiseState) -> f64 {
        self.core.terminal_cost(&self.view(x, noise), noise)
    }
    fn bound(&self) -> f64 {
        self.core.bound
    }
    fn is_random(&self) -> bool {
        self.eta.vol != 0.0 || self.core.is_random()
    }
    fn lipschitz_space(&self) -> Space {
        self.core.space
    }
    fn dim(&self) -> usize {
        self.core.dim
    }
}

#[derive(Clone, Debug)]
pub struct ProblemInstance {
    pub name: String,
    pub basis: SpectralBasis,
    pub constants: GelfandConstants,
    pub coeffs: Arc<dyn Coefficients>,
    pub controls: ControlSet,
    pub horizon: f64,
    pub m: usize,
}

impl ProblemInstance {
    pub fn new(
        name: impl Into<String>,
        coeffs: Arc<dyn Coefficients>,
        controls: ControlSet,
        horizon: f64,
        m: usize,
    ) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self {
            name: name.into(),
            basis: SpectralBasis::new(coeffs.dim())?,
            constants: GelfandConstants::laplacian(),
            coeffs,
            controls,
            horizon,
            m,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn bound(&self) -> f64 {
        self.coeffs.bound()
    }

    pub fn is_random(&self) -> bool {
        self.coeffs.is_random()
    }

    pub fn with_controls(mut self, controls: ControlSet) -> Self {
        self.controls = controls;
        self
    }

    pub fn with_coefficients(&self, coeffs: Arc<dyn Coefficients>) -> Self {
        Self {
            coeffs,
            ..self.clone()
        }
    }
}

pub const BUILTIN_NAMES: &[&str] = &[
    "null",
    "steer-1",
    "steer-1-terminal",
    "control-cost",
    "delay",
    "delay-vstar",
    "random-f",
    "shifted-ou",
];

/// a_i ∝ 1/i on the first 8 modes with ‖w‖_H = 0.5.
pub fn spread_direction(dim: usize) -> Vec<f64> {
    let n = dim.min(8);
    let raw: Vec<f64> = (1..=n).map(|i| 1.0 / i as f64).collect();
    let norm = raw.iter().map(|a| a * a).sum::<f64>().sqrt();
    raw.iter().map(|a| 0.5 * a / norm).collect()
}

fn e1(dim: usize) -> Vec<f64> {
    let mut w = vec![0.0; dim.min(1)];
    if let Some(a) = w.first_mut() {
        *a = 1.0;
    }
    w
}

fn delay_coefficients(dim: usize, space: Space) -> CatalogCoefficients {
    CatalogCoefficients {
        dim,
        beta: BetaSpec {
            control_direction: spread_direction(dim),
            delay_gain: 0.5,
            delay_radius: 1.0,
            delay_modes: 2,
            lag: 0.5,
        },
        running: Functional::Delay {
            cap: 1.0,
            space,
            lag: 0.5,
        },
        terminal: Functional::Delay {
            cap: 1.0,
            space,
            lag: 0.5,
        },
        bound: 1.0,
        space,
    }
}

/// Built-in instance with the ternary control set.
pub fn builtin(name: &str, dim: usize, horizon: f64) -> Result<ProblemInstance> {
    let controls = ControlSet::ternary();
    let lin = Functional::Linear {
        weights: e1(dim),
        cap: 1.0,
    };
    let coeffs = match name {
        "null" => CatalogCoefficients {
            dim,
            beta: BetaSpec::control_only(vec![]),
            running: Functional::Constant { value: 1.0 },
            terminal: Functional::Constant { value: 0.0 },
            bound: 1.0,
            space: Space::VStar,
        },
        "steer-1" => CatalogCoefficients {
            dim,
            beta: BetaSpec::control_only(e1(dim)),
            running: lin.clone(),
            terminal: lin,
            bound: 1.0,
            space: Space::H,
        },
        "steer-1-terminal" => CatalogCoefficients {
            dim,
            beta: BetaSpec::control_only(e1(dim)),
            running: Functional::Constant { value: 0.0 },
            terminal: lin,
            bound: 1.0,
            space: Space::H,
        },
        "control-cost" => CatalogCoefficients {
            dim,
            beta: BetaSpec::control_only(e1(dim)),
            running: Functional::ControlSquare,
            terminal: Functional::Constant { value: 0.0 },
            bound: 1.0,
            space: Space::H,
        },
        "delay" => delay_coefficients(dim, Space::H),
        "delay-vstar" => delay_coefficients(dim, Space::VStar),
        "random-f" => CatalogCoefficients {
            dim,
            beta: BetaSpec::control_only(e1(dim)),
            running: Functional::NoiseControl {
                scale: 1.0,
                cap: 1.0,
            },
            terminal: lin,
            bound: 1.0,
            space: Space::H,
        },
        "shifted-ou" => return shifted_ou_instance(dim, horizon, 2, 1.0, 0.5),
        other => {
            return Err(Error::Config(format!(
                "unknown instance {other:?}; known: {}",
                BUILTIN_NAMES.join(", ")
            )))
        }
    };
    coeffs.validate(&controls)?;
    ProblemInstance::new(name, Arc::new(coeffs), controls, horizon, 1)
}

/// Instance from configured catalog coefficients.
pub fn custom_instance(
    name: &str,
    coeffs: CatalogCoefficients,
    controls: ControlSet,
    horizon: f64,
    m: usize,
) -> Result<ProblemInstance> {
    coeffs.validate(&controls)?;
    ProblemInstance::new(name, Arc::new(coeffs), controls, horizon, m.max(1))
}

/// The shifted problem X = X̃ − η with core f̃ = ‖x̃(t)‖_H ∧ L, β̃ = v·e₁,
/// G̃ = ‖x̃(T)‖_H ∧ L and η an OU process in the first `eta_modes` directions.
pub fn shifted_ou_instance(
    dim: usize,
    horizon: f64,
    eta_modes: usize,
    eta_rate: f64,
    eta_vol: f64,
) -> Result<ProblemInstance> {
    if eta_modes > dim {
        return Err(Error::Config(format!(
            "eta_modes = {eta_modes} exceeds ambient dimension {dim}"
        )));
    }
    let controls = ControlSet::ternary();
    let core = CatalogCoefficients {
        dim,
        beta: BetaSpec::control_only(e1(dim)),
        running: Functional::CappedNorm {
            cap: 1.0,
            space: Space::H,
        },
        terminal: Functional::CappedNorm {
            cap: 1.0,
            space: Space::H,
        },
        bound: 1.0,
        space: Space::H,
    };
    core.validate(&controls)?;
    let coeffs = ShiftedCoefficients {
        core,
        eta: OuForcing {
            modes: eta_modes,
            rate: eta_rate,
            vol: eta_vol,
        },
    };
    ProblemInstance::new("shifted-ou", Arc::new(coeffs), controls, horizon, eta_modes.max(1))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub f: f64,
    pub beta: f64,
    pub g: f64,
    pub n_pairs: usize,
}

impl LipschitzReport {
    pub fn max(&self) -> f64 {
        self.f.max(self.beta).max(self.g)
    }
}

fn probe_paths(
    instance: &ProblemInstance,
    dt: f64,
    rng: &mut impl Rng,
) -> Result<(Path, Path, NoiseState)> {
    let dim = instance.dim();
    let x0 = random_unit(dim, rng).scaled(rng.random::<f64>());
    let anchor = Path::point(0.0, dt, x0.clone())?;
    let spec = PathClassSpec::new(2.0, anchor, instance.horizon)?;
    let x = sample_path_class(&spec, rng)?.path;
    let y = if rng.random::<bool>() {
        let a2 = Path::point(0.0, dt, &x0 + &random_unit(dim, rng).scaled(0.1))?;
        sample_path_class(&PathClassSpec::new(2.0, a2, instance.horizon)?, rng)?.path
    } else {
        let scale = 10f64.powf(-3.0 * rng.random::<f64>());
        let grid = *x.grid();
        let bump = random_unit(dim, rng).scaled(scale);
        Path::from_fn(grid, |s| x.eval(s) + &bump.scaled((PI * s).sin()))
    };
    let noise = if instance.is_random() {
        let grid = TimeGrid::from_origin(instance.horizon, dt)?;
        sample_wiener_with(grid, instance.m, rng).noise_state()
    } else {
        NoiseState::zero(instance.m)
    };
    Ok((x, y, noise))
}

/// Largest observed |Δf|/‖Δx‖, ‖Δβ‖/‖Δx‖ and |ΔG|/‖Δx‖ over random path pairs,
/// with ‖Δx‖ the sup-norm of the difference up to the evaluation time in
/// `space` (β differences are measured in V* for `space = VStar`, else H).
pub fn lipschitz_probe(
    instance: &ProblemInstance,
    n_pairs: usize,
    space: Space,
    seed: u64,
) -> Result<LipschitzReport> {
    let c = instance.coeffs.as_ref();
    let dt = instance.horizon / 64.0;
    let beta_space = if space == Space::VStar {
        Space::VStar
    } else {
        Space::H
    };
    let mut rep = LipschitzReport {
        n_pairs,
        ..Default::default()
    };
    for i in 0..n_pairs {
        let mut rng = seed::rng(seed, "lipschitz", i as u64);
        let (x, y, noise) = probe_paths(instance, dt, &mut rng)?;
        let k = 1 + rng.random_range(0..x.grid().n_steps());
        let (xv, yv) = (x.prefix(k), y.prefix(k));
        let t = x.grid().node(k);
        let mut dx: f64 = 0.0;
        for j in 0..=k {
            dx = dx.max(x.values()[j].dist(&y.values()[j], space));
        }
        let dxt = x.sup_dist(&y, space);
        for ci in 0..instance.controls.len() {
            let v = instance.controls.value(ci);
            if dx > 0.0 {
                let df = (c.running_cost(t, &xv, v, &noise) - c.running_cost(t, &yv, v, &noise)).abs();
                let db = c.beta(t, &xv, v, &noise).dist(&c.beta(t, &yv, v, &noise), beta_space);
                rep.f = rep.f.max(df / dx);
                rep.beta = rep.beta.max(db / dx);
            }
        }
        if dxt > 0.0 {
            let dg = (c.terminal_cost(&x, &noise) - c.terminal_cost(&y, &noise)).abs();
            rep.g = rep.g.max(dg / dxt);
        }
    }
    Ok(rep)
}

/// Largest |f|/L, ‖β‖_H/L and |G|/L over random probes.
pub fn bound_probe(instance: &ProblemInstance, n: usize, seed: u64) -> Result<f64> {
    let c = instance.coeffs.as_ref();
    let l = c.bound();
    let dt = instance.horizon / 64.0;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let mut rng = seed::rng(seed, "bounds", i as u64);
        let (x, _, noise) = probe_paths(instance, dt, &mut rng)?;
        let k = rng.random_range(0..=x.grid().n_steps());
        let t = x.grid().node(k);
        for ci in 0..instance.controls.len() {
            let v = instance.controls.value(ci);
            worst = worst
                .max(c.running_cost(t, &x.prefix(k), v, &noise).abs() / l)
                .max(c.beta(t, &x.prefix(k), v, &noise).norm(Space::H) / l);
        }
        worst = worst.max(c.terminal_cost(&x, &noise).abs() / l);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Path {
        let g = TimeGrid::new(0.0, 1.0, 10).unwrap();
        Path::from_fn(g, |s| HVector::unit(8, 0).scaled(s))
    }

    #[test]
    fn null_instance_values() {
        let p = builtin("null", 8, 1.0).unwrap();
        let z = NoiseState::zero(1);
        let x = ramp();
        assert!(eval_beta(p.coeffs.as_ref(), 1.0, &x, 1.0, &z).unwrap().is_zero());
        assert_eq!(eval_f(p.coeffs.as_ref(), 1.0, &x, 1.0, &z).unwrap(), 1.0);
        assert_eq!(eval_g(p.coeffs.as_ref(), &x, &z).unwrap(), 0.0);
    }

    #[test]
    fn delay_reads_half_time() {
        let p = builtin("delay", 8, 1.0).unwrap();
        let f = p.coeffs.running_cost(1.0, &ramp(), 0.0, &NoiseState::zero(1));
        assert!((f - 0.5).abs() < 1e-15);
    }

    #[test]
    fn unknown_instance_is_rejected() {
        assert!(builtin("nope", 8, 1.0).is_err());
    }

    #[test]
    fn bound_violation_is_an_error() {
        let c = CatalogCoefficients {
            dim: 4,
            beta: BetaSpec::control_only(vec![2.0]),
            running: Functional::Constant { value: 0.0 },
            terminal: Functional::Constant { value: 0.0 },
            bound: 1.0,
            space: Space::H,
        };
        assert!(c.validate(&ControlSet::ternary()).is_err());
        let x = ramp();
        let r = eval_beta(&c, 0.0, &x, 1.0, &NoiseState::zero(1));
        assert!(matches!(r, Err(Error::BoundViolation { .. })));
    }
}

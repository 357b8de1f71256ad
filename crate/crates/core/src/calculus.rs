//! Cylindrical test functionals u(t, x_t) = g(t; W(t₁∧t)..; ⟨x(s₁∧t), p₁⟩..)
//! with exact vertical gradient, the drift/martingale split along
//! horizontal extensions, the generator L^v, and Monte Carlo checks of the
//! Itô-Kunita identity.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::hamiltonian;
use crate::error::{Error, Result};
use crate::noise::{sample_wiener_with, NoiseState};
use crate::path::{sample_path_class, steps_between, Path, PathClassSpec, PathView, TimeGrid};
use crate::problem::{eval_beta, ProblemInstance};
use crate::seed;
use crate::spectral::{random_unit, HVector, Space};
use crate::state::{ControlSignal, Method, Stepper};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    T,
    W(usize),
    Z(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Time,
    W(usize),
    Z(usize),
    Add(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Powi(Box<Expr>, i32),
}

impl Expr {
    pub fn c(v: f64) -> Expr {
        Expr::Const(v)
    }
    pub fn w(j: usize) -> Expr {
        Expr::W(j)
    }
    pub fn z(j: usize) -> Expr {
        Expr::Z(j)
    }
    pub fn sin(self) -> Expr {
        Expr::Sin(Box::new(self))
    }
    pub fn cos(self) -> Expr {
        Expr::Cos(Box::new(self))
    }
    pub fn powi(self, n: i32) -> Expr {
        match n {
            0 => Expr::Const(1.0),
            1 => self,
            _ => Expr::Powi(Box::new(self), n),
        }
    }

    fn is_const(&self, v: f64) -> bool {
        matches!(self, Expr::Const(c) if *c == v)
    }

    pub fn eval(&self, t: f64, w: &[f64], z: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Time => t,
            Expr::W(j) => w[*j],
            Expr::Z(j) => z[*j],
            Expr::Add(a, b) => a.eval(t, w, z) + b.eval(t, w, z),
            Expr::Mul(a, b) => a.eval(t, w, z) * b.eval(t, w, z),
            Expr::Sin(a) => a.eval(t, w, z).sin(),
            Expr::Cos(a) => a.eval(t, w, z).cos(),
            Expr::Powi(a, n) => a.eval(t, w, z).powi(*n),
        }
    }

    pub fn diff(&self, v: Var) -> Expr {
        match self {
            Expr::Const(_) => Expr::c(0.0),
            Expr::Time => Expr::c(if v == Var::T { 1.0 } else { 0.0 }),
            Expr::W(j) => Expr::c(if v == Var::W(*j) { 1.0 } else { 0.0 }),
            Expr::Z(j) => Expr::c(if v == Var::Z(*j) { 1.0 } else { 0.0 }),
            Expr::Add(a, b) => a.diff(v) + b.diff(v),
            Expr::Mul(a, b) => a.diff(v) * (**b).clone() + (**a).clone() * b.diff(v),
            Expr::Sin(a) => (**a).clone().cos() * a.diff(v),
            Expr::Cos(a) => -((**a).clone().sin() * a.diff(v)),
            Expr::Powi(a, n) => Expr::c(*n as f64) * (**a).clone().powi(n - 1) * a.diff(v),
        }
    }
}

impl Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        match (&self, &rhs) {
            (Expr::Const(a), Expr::Const(b)) => Expr::c(a + b),
            _ if self.is_const(0.0) => rhs,
            _ if rhs.is_const(0.0) => self,
            _ => Expr::Add(Box::new(self), Box::new(rhs)),
        }
    }
}

impl Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        match (&self, &rhs) {
            (Expr::Const(a), Expr::Const(b)) => Expr::c(a * b),
            _ if self.is_const(0.0) || rhs.is_const(0.0) => Expr::c(0.0),
            _ if self.is_const(1.0) => rhs,
            _ if rhs.is_const(1.0) => self,
            _ => Expr::Mul(Box::new(self), Box::new(rhs)),
        }
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::c(-1.0) * self
    }
}

impl Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        self + (-rhs)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Time => write!(f, "t"),
            Expr::W(j) => write!(f, "w{}", j + 1),
            Expr::Z(j) => write!(f, "z{}", j + 1),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Mul(a, b) => write!(f, "{a}·{b}"),
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
            Expr::Powi(a, n) => write!(f, "{a}^{n}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WAnchor {
    pub time: f64,
    pub component: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZAnchor {
    pub time: f64,
    pub direction: HVector,
}

#[derive(Clone, Debug)]
pub struct CylindricalFunctional {
    pub name: String,
    pub g: Expr,
    pub w_anchors: Vec<WAnchor>,
    pub z_anchors: Vec<ZAnchor>,
    /// Declared bound on ‖∇u‖_V over the probe ensemble.
    pub rho: f64,
    /// Hölder exponent and constant in ‖·‖_{0,V*} for distances up to 1.
    pub alpha: f64,
    pub holder: f64,
    pub partition: Vec<f64>,
    dg_dt: Expr,
    dg_dw: Vec<Expr>,
    dg_dz: Vec<Expr>,
    d2g_dw: Vec<Vec<Expr>>,
}

impl CylindricalFunctional {
    pub fn new(
        name: impl Into<String>,
        g: Expr,
        w_anchors: Vec<WAnchor>,
        z_anchors: Vec<ZAnchor>,
        rho: f64,
        horizon: f64,
    ) -> Self {
        let dg_dw: Vec<Expr> = (0..w_anchors.len()).map(|j| g.diff(Var::W(j))).collect();
        let d2g_dw = dg_dw
            .iter()
            .map(|d| (0..w_anchors.len()).map(|k| d.diff(Var::W(k))).collect())
            .collect();
        Self {
            name: name.into(),
            dg_dt: g.diff(Var::T),
            dg_dz: (0..z_anchors.len()).map(|j| g.diff(Var::Z(j))).collect(),
            dg_dw,
            d2g_dw,
            g,
            w_anchors,
            z_anchors,
            rho,
            alpha: 0.5,
            holder: rho,
            partition: vec![0.0, horizon],
        }
    }

    fn args(&self, t: f64, x: &dyn PathView, noise: &NoiseState) -> (Vec<f64>, Vec<f64>) {
        let w = self
            .w_anchors
            .iter()
            .map(|a| noise.component(a.time.min(t), a.component))
            .collect();
        let z = self
            .z_anchors
            .iter()
            .map(|a| x.at(a.time.min(t)).pairing(&a.direction))
            .collect();
        (w, z)
    }

    pub fn value(&self, t: f64, x: &dyn PathView, noise: &NoiseState) -> f64 {
        let (w, z) = self.args(t, x, noise);
        self.g.eval(t, &w, &z)
    }

    /// Σ over anchors with s_j ≥ t of ∂g/∂z_j · p_j.
    pub fn vertical_gradient(&self, t: f64, x: &dyn PathView, noise: &NoiseState) -> HVector {
        let (w, z) = self.args(t, x, noise);
        let dim = x.current().dim();
        let mut out = HVector::zeros(dim);
        for (j, a) in self.z_anchors.iter().enumerate() {
            if a.time >= t - 1e-12 {
                out.axpy(self.dg_dz[j].eval(t, &w, &z), &a.direction);
            }
        }
        out
    }

    /// (𝔡_t u, 𝔡_ω u) along horizontal extensions of x_t.
    pub fn semimartingale_parts(
        &self,
        t: f64,
        x: &dyn PathView,
        noise: &NoiseState,
    ) -> (f64, Vec<f64>) {
        let (w, z) = self.args(t, x, noise);
        let active: Vec<usize> = (0..self.w_anchors.len())
            .filter(|&j| t < self.w_anchors[j].time - 1e-12)
            .collect();
        let mut drift = self.dg_dt.eval(t, &w, &z);
        for &j in &active {
            for &k in &active {
                if self.w_anchors[j].component == self.w_anchors[k].component {
                    drift += 0.5 * self.d2g_dw[j][k].eval(t, &w, &z);
                }
            }
        }
        let mut mart = vec![0.0; noise.dim()];
        for &j in &active {
            let c = self.w_anchors[j].component;
            if c < mart.len() {
                mart[c] += self.dg_dw[j].eval(t, &w, &z);
            }
        }
        (drift, mart)
    }
}

/// 𝔡_t u + ⟨Ax(t), ∇u⟩ + ⟨β(t, x_t, v), ∇u⟩.
pub fn generator_lv(
    u: &CylindricalFunctional,
    t: f64,
    x: &dyn PathView,
    v: f64,
    instance: &ProblemInstance,
    noise: &NoiseState,
) -> Result<f64> {
    let grad = u.vertical_gradient(t, x, noise);
    let (drift, _) = u.semimartingale_parts(t, x, noise);
    let beta = eval_beta(instance.coeffs.as_ref(), t, x, v, noise)?;
    Ok(drift + x.current().apply_a().pairing(&grad) + beta.pairing(&grad))
}

fn parse_modes(spec: &str, dim: usize) -> Result<HVector> {
    let inner = spec
        .strip_prefix("modes(")
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| Error::Config(format!("expected modes(i,..), got {spec:?}")))?;
    let mut p = HVector::zeros(dim);
    for part in inner.split(',') {
        let i: usize = part
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad mode index {part:?}")))?;
        if i == 0 || i > dim {
            return Err(Error::Config(format!("mode {i} outside 1..={dim}")));
        }
        p.coeffs_mut()[i - 1] += 1.0;
    }
    Ok(p)
}

pub const CATALOG: &[&str] = &[
    "linear:p=modes(1)",
    "quad-w1-z1",
    "trig-w1-z1",
    "w1-squared",
    "z1-squared",
    "const",
];

/// Catalog functional by name; all anchors sit at the horizon.
pub fn catalog(name: &str, dim: usize, horizon: f64) -> Result<CylindricalFunctional> {
    let e1 = HVector::unit(dim, 0);
    let z1 = || ZAnchor {
        time: horizon,
        direction: e1.clone(),
    };
    let w1 = WAnchor {
        time: horizon,
        component: 0,
    };
    let pv = e1.norm(Space::V);
    let u = if let Some(spec) = name.strip_prefix("linear:p=") {
        let p = parse_modes(spec, dim)?;
        let rho = p.norm(Space::V);
        CylindricalFunctional::new(
            name,
            Expr::z(0),
            vec![],
            vec![ZAnchor {
                time: horizon,
                direction: p,
            }],
            rho,
            horizon,
        )
    } else {
        match name {
            "quad-w1-z1" => {
                CylindricalFunctional::new(name, Expr::w(0) * Expr::z(0), vec![w1], vec![z1()], 6.0 * pv, horizon)
            }
            "trig-w1-z1" => CylindricalFunctional::new(
                name,
                Expr::w(0) * Expr::z(0).sin() + Expr::c(0.5) * Expr::Time.cos() * Expr::z(0).powi(2),
                vec![w1],
                vec![z1()],
                8.0 * pv,
                horizon,
            ),
            "w1-squared" => {
                CylindricalFunctional::new(name, Expr::w(0).powi(2), vec![w1], vec![], 0.0, horizon)
            }
            "z1-squared" => {
                CylindricalFunctional::new(name, Expr::z(0).powi(2), vec![], vec![z1()], 6.0 * pv, horizon)
            }
            "const" => CylindricalFunctional::new(name, Expr::c(1.0), vec![], vec![], 0.0, horizon),
            other => {
                return Err(Error::Config(format!(
                    "unknown functional {other:?}; known: {}",
                    CATALOG.join(", ")
                )))
            }
        }
    };
    Ok(u)
}

/// One probe point: a class path up to a random node and a Wiener path.
pub fn probe(
    dim: usize,
    horizon: f64,
    dt: f64,
    m: usize,
    rng: &mut impl Rng,
) -> Result<(f64, Path, NoiseState)> {
    let n = steps_between(0.0, horizon, dt)?;
    let k = rng.random_range(0..n);
    let t = k as f64 * dt;
    let x0 = random_unit(dim, rng).scaled(rng.random::<f64>());
    let x = sample_path_class(&PathClassSpec::new(1.0, Path::point(0.0, dt, x0)?, t)?, rng)?.path;
    let w = sample_wiener_with(TimeGrid::from_origin(horizon, dt)?, m.max(1), rng);
    Ok((t, x, w.noise_state()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeclaredBoundsReport {
    pub max_gradient_ratio: f64,
    pub max_holder_ratio: f64,
    pub max_gateaux_rel: f64,
}

/// ‖∇u‖_V/ρ, Hölder ratios |Δu|/(C d^α) over nearby path pairs, and the
/// relative mismatch of ⟨∇u, h⟩ against the central difference quotient at
/// λ = 1e−6.
pub fn check_declared_bounds(
    u: &CylindricalFunctional,
    dim: usize,
    horizon: f64,
    n: usize,
    seed: u64,
) -> Result<DeclaredBoundsReport> {
    let dt = horizon / 32.0;
    let mut rep = DeclaredBoundsReport {
        max_gradient_ratio: 0.0,
        max_holder_ratio: 0.0,
        max_gateaux_rel: 0.0,
    };
    for i in 0..n {
        let mut rng = seed::rng(seed, "declared-bounds", i as u64);
        let (t, x, noise) = probe(dim, horizon, dt, 1, &mut rng)?;
        let grad = u.vertical_gradient(t, &x, &noise);
        if u.rho > 0.0 {
            rep.max_gradient_ratio = rep.max_gradient_ratio.max(grad.norm(Space::V) / u.rho);
        } else if !grad.is_zero() {
            rep.max_gradient_ratio = f64::INFINITY;
        }
        let eps = 10f64.powf(-3.0 * rng.random::<f64>());
        let bump = random_unit(dim, &mut rng).scaled(eps);
        let y = Path::from_fn(*x.grid(), |s| x.eval(s) + &bump);
        let d = x.sup_dist(&y, Space::VStar);
        let du = (u.value(t, &x, &noise) - u.value(t, &y, &noise)).abs();
        if u.holder > 0.0 && d > 0.0 {
            rep.max_holder_ratio = rep.max_holder_ratio.max(du / (u.holder * d.powf(u.alpha)));
        } else if du > 0.0 {
            rep.max_holder_ratio = f64::INFINITY;
        }
        let h = random_unit(dim, &mut rng);
        let lambda = 1e-6;
        let q = (u.value(t, &x.vertical_perturb(&h.scaled(lambda)), &noise)
            - u.value(t, &x.vertical_perturb(&h.scaled(-lambda)), &noise))
            / (2.0 * lambda);
        let exact = grad.pairing(&h);
        let rel = (q - exact).abs() / exact.abs().max(1e-3);
        rep.max_gateaux_rel = rep.max_gateaux_rel.max(rel);
    }
    Ok(rep)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    pub dt: f64,
    pub n_paths: usize,
    pub mean_abs: f64,
    pub stderr_abs: f64,
    pub mean_signed: f64,
    pub martingale_mean: f64,
    pub martingale_stderr: f64,
}

struct PathResidual {
    residual: f64,
    martingale: f64,
}

#[allow(clippy::too_many_arguments)]
fn residual_on_path(
    u: &CylindricalFunctional,
    theta: &dyn ControlSignal,
    rho: f64,
    tau: f64,
    x_rho: &Path,
    instance: &ProblemInstance,
    w: &crate::noise::WienerPath,
) -> Result<PathResidual> {
    let dt = w.grid().dt();
    let noise = w.noise_state();
    let stepper = Stepper::new(instance, dt, Method::Exponential);
    let mut x = if (x_rho.grid().dt() - dt).abs() <= 1e-12 * dt {
        x_rho.clone()
    } else {
        x_rho.resample(TimeGrid::from_origin(rho, dt)?)
    };
    let u0 = u.value(rho, &x, &noise);
    let n = steps_between(rho, tau, dt)?;
    let k0 = steps_between(0.0, rho, dt)?;
    let mut drift_sum = 0.0;
    let mut mart_sum = 0.0;
    let mut dummy = 0.0;
    for k in 0..n {
        let t = x.end();
        let v = instance.controls.value(theta.control_at(t, &noise));
        drift_sum += dt * generator_lv(u, t, &x, v, instance, &noise)?;
        let (_, dw) = u.semimartingale_parts(t, &x, &noise);
        let inc = &w.increments()[k0 + k];
        mart_sum += dw.iter().zip(inc).map(|(a, b)| a * b).sum::<f64>();
        stepper.advance(&mut x, 1, theta, &noise, &mut dummy)?;
    }
    let u1 = u.value(tau, &x, &noise);
    Ok(PathResidual {
        residual: u1 - u0 - drift_sum - mart_sum,
        martingale: mart_sum,
    })
}

/// Residual of u(τ, X_τ) − u(ρ, x_ρ) = ∫ L^{θ}u ds + ∫ 𝔡_ω u dW at several
/// step sizes, on Brownian paths shared across step sizes (each coarse path
/// aggregates the increments of the finest).
#[allow(clippy::too_many_arguments)]
pub fn ito_kunita_study(
    u: &CylindricalFunctional,
    theta: &(dyn ControlSignal + Sync),
    rho: f64,
    tau: f64,
    x_rho: &Path,
    instance: &ProblemInstance,
    n_mc: usize,
    seed: u64,
    dts: &[f64],
) -> Result<Vec<ResidualStats>> {
    if dts.is_empty() || n_mc < 2 {
        return Err(Error::Config("need step sizes and at least 2 paths".into()));
    }
    if !(rho <= tau && tau <= instance.horizon) {
        return Err(Error::Config("need ρ ≤ τ ≤ T".into()));
    }
    let fine = dts.iter().copied().fold(f64::INFINITY, f64::min);
    let fine_grid = TimeGrid::from_origin(tau, fine)?;
    let strides: Vec<usize> = dts
        .iter()
        .map(|&d| steps_between(0.0, d, fine))
        .collect::<Result<_>>()?;
    let m = instance.m.max(1);
    let per_path: Vec<Vec<PathResidual>> = (0..n_mc)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::rng(seed, "ito-kunita", i as u64);
            let w = sample_wiener_with(fine_grid, m, &mut rng);
            strides
                .iter()
                .map(|&s| residual_on_path(u, theta, rho, tau, x_rho, instance, &w.coarsen(s)?))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let n = n_mc as f64;
    Ok(dts
        .iter()
        .enumerate()
        .map(|(k, &dt)| {
            let abs: Vec<f64> = per_path.iter().map(|p| p[k].residual.abs()).collect();
            let mean_abs = abs.iter().sum::<f64>() / n;
            let var_abs = abs.iter().map(|a| (a - mean_abs).powi(2)).sum::<f64>() / (n - 1.0);
            let mart: Vec<f64> = per_path.iter().map(|p| p[k].martingale).collect();
            let mm = mart.iter().sum::<f64>() / n;
            let vm = mart.iter().map(|a| (a - mm).powi(2)).sum::<f64>() / (n - 1.0);
            ResidualStats {
                dt,
                n_paths: n_mc,
                mean_abs,
                stderr_abs: (var_abs / n).sqrt(),
                mean_signed: per_path.iter().map(|p| p[k].residual).sum::<f64>() / n,
                martingale_mean: mm,
                martingale_stderr: (vm / n).sqrt(),
            }
        })
        .collect())
}

#[allow(clippy::too_many_arguments)]
pub fn ito_kunita_residual(
    u: &CylindricalFunctional,
    theta: &(dyn ControlSignal + Sync),
    rho: f64,
    tau: f64,
    x_rho: &Path,
    instance: &ProblemInstance,
    n_mc: usize,
    seed: u64,
    dt: f64,
) -> Result<ResidualStats> {
    Ok(ito_kunita_study(u, theta, rho, tau, x_rho, instance, n_mc, seed, &[dt])?.remove(0))
}

/// Least-squares slope of log y against log x.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianBoundReport {
    pub zeta: f64,
    pub max_ratio: f64,
    pub max_consistency_gap: f64,
}

/// |−𝔡_t u − ℋ(t, x_t, ∇u)| against ζ + c₃ρ‖x(t)‖_V with
/// ζ = sup|𝔡_t u| + L + Lρ over the probes, and the gap between
/// min_v[L^v u + f] and 𝔡_t u + ℋ.
pub fn check_hamiltonian_bound(
    u: &CylindricalFunctional,
    instance: &ProblemInstance,
    n: usize,
    seed: u64,
) -> Result<HamiltonianBoundReport> {
    let dt = instance.horizon / 32.0;
    let l = instance.bound();
    let c3 = instance.constants.c3;
    let mut probes = Vec::with_capacity(n);
    let mut sup_dt: f64 = 0.0;
    for i in 0..n {
        let mut rng = seed::rng(seed, "hamiltonian-bound", i as u64);
        let (t, x, noise) = probe(instance.dim(), instance.horizon, dt, instance.m, &mut rng)?;
        sup_dt = sup_dt.max(u.semimartingale_parts(t, &x, &noise).0.abs());
        probes.push((t, x, noise));
    }
    let zeta = sup_dt + l + l * u.rho;
    let mut rep = HamiltonianBoundReport {
        zeta,
        max_ratio: 0.0,
        max_consistency_gap: 0.0,
    };
    let c = instance.coeffs.as_ref();
    for (t, x, noise) in &probes {
        let grad = u.vertical_gradient(*t, x, noise);
        let (h, _) = hamiltonian(instance, *t, x, &grad, noise)?;
        let (drift, _) = u.semimartingale_parts(*t, x, noise);
        let lhs = (-drift - h).abs();
        let rhs = zeta + c3 * u.rho * x.end_value().norm(Space::V);
        rep.max_ratio = rep.max_ratio.max(lhs / rhs);
        let mut best = f64::INFINITY;
        for ci in 0..instance.controls.len() {
            let v = instance.controls.value(ci);
            best = best.min(generator_lv(u, *t, x, v, instance, noise)? + c.running_cost(*t, x, v, noise));
        }
        rep.max_consistency_gap = rep.max_consistency_gap.max((best - (drift + h)).abs());
    }
    Ok(rep)
}

//! Càdlàg step paths on uniform grids, the sup-norms and the metric between
//! paths of different lengths, and the drift-bounded path classes.

use std::borrow::Cow;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{ExpStep, HVector, Space};

/// Uniform grid `t0, t0 + dt, …, t0 + n_steps·dt`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: f64,
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 || !(t1 > t0) {
            return Err(Error::Grid(format!(
                "need t1 > t0 and n_steps > 0, got [{t0}, {t1}] with {n_steps} steps"
            )));
        }
        Ok(Self {
            t0,
            dt: (t1 - t0) / n_steps as f64,
            n_steps,
        })
    }

    /// Grid with a given spacing; `n_steps = 0` gives a single node.
    pub fn with_step(t0: f64, dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Grid(format!("dt must be positive, got {dt}")));
        }
        Ok(Self { t0, dt, n_steps })
    }

    /// Grid from 0 to `end` with spacing `dt`; `end` must be a multiple of `dt`.
    pub fn from_origin(end: f64, dt: f64) -> Result<Self> {
        let n = steps_between(0.0, end, dt)?;
        Self::with_step(0.0, dt, n)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn end(&self) -> f64 {
        self.node(self.n_steps)
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(|i| self.node(i))
    }

    pub fn eps(&self) -> f64 {
        1e-9 * self.dt
    }

    /// Index of the last node at or before `s`, clamped to the grid.
    #[inline]
    pub fn index_at(&self, s: f64) -> usize {
        let x = ((s - self.t0) / self.dt + 1e-9).floor();
        if x <= 0.0 {
            0
        } else {
            (x as usize).min(self.n_steps)
        }
    }

    pub fn is_node(&self, s: f64) -> bool {
        let x = (s - self.t0) / self.dt;
        (x - x.round()).abs() < 1e-9 && x.round() >= 0.0 && x.round() as usize <= self.n_steps
    }

    pub fn same_nodes(&self, other: &TimeGrid) -> bool {
        (self.t0 - other.t0).abs() <= self.eps() && (self.dt - other.dt).abs() <= 1e-12 * self.dt
    }
}

/// Number of `dt` steps from `a` to `b`; errors if not integral.
pub fn steps_between(a: f64, b: f64, dt: f64) -> Result<usize> {
    let x = (b - a) / dt;
    let r = x.round();
    if r < 0.0 || (x - r).abs() > 1e-9 * r.max(1.0) {
        return Err(Error::Grid(format!(
            "interval [{a}, {b}] is not a multiple of dt = {dt}"
        )));
    }
    Ok(r as usize)
}

/// Read access to a path on `[start, end]`.
pub trait PathView {
    fn start_time(&self) -> f64;
    fn end_time(&self) -> f64;
    fn at(&self, s: f64) -> Cow<'_, HVector>;
    fn current(&self) -> Cow<'_, HVector> {
        self.at(self.end_time())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    grid: TimeGrid,
    values: Vec<HVector>,
    terminal_override: Option<HVector>,
}

impl Path {
    pub fn new(grid: TimeGrid, values: Vec<HVector>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Grid(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            values,
            terminal_override: None,
        })
    }

    pub fn constant(grid: TimeGrid, h: HVector) -> Self {
        Self {
            values: vec![h; grid.len()],
            grid,
            terminal_override: None,
        }
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> HVector) -> Self {
        Self {
            values: grid.nodes().map(f).collect(),
            grid,
            terminal_override: None,
        }
    }

    /// Single-node path at time `t` carrying `dt` for later extension.
    pub fn point(t: f64, dt: f64, h: HVector) -> Result<Self> {
        Ok(Self::constant(TimeGrid::with_step(t, dt, 0)?, h))
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[HVector] {
        &self.values
    }

    pub fn terminal_override(&self) -> Option<&HVector> {
        self.terminal_override.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.values[0].dim()
    }

    pub fn end(&self) -> f64 {
        self.grid.end()
    }

    pub fn end_value(&self) -> &HVector {
        self.terminal_override
            .as_ref()
            .unwrap_or_else(|| self.values.last().expect("paths are nonempty"))
    }

    /// Càdlàg evaluation: left node between nodes, terminal value at the end.
    pub fn eval(&self, s: f64) -> &HVector {
        if s >= self.end() - self.grid.eps() {
            self.end_value()
        } else {
            &self.values[self.grid.index_at(s)]
        }
    }

    /// Appends the next node; a pending terminal override becomes the node value.
    pub fn push(&mut self, h: HVector) {
        if let Some(o) = self.terminal_override.take() {
            *self.values.last_mut().expect("nonempty") = o;
        }
        self.values.push(h);
        self.grid.n_steps += 1;
    }

    /// Replaces a pending override by the node value it stands for.
    pub fn absorb_override(&mut self) {
        if let Some(o) = self.terminal_override.take() {
            *self.values.last_mut().expect("nonempty") = o;
        }
    }

    /// Path restricted to `[t0, grid.node(i)]`.
    pub fn restrict_to_index(&self, i: usize) -> Path {
        let i = i.min(self.grid.n_steps);
        let terminal_override = if i == self.grid.n_steps {
            self.terminal_override.clone()
        } else {
            None
        };
        Path {
            grid: TimeGrid {
                n_steps: i,
                ..self.grid
            },
            values: self.values[..=i].to_vec(),
            terminal_override,
        }
    }

    /// Path restricted to `[t0, t]`; `t` must be a grid node.
    pub fn restrict(&self, t: f64) -> Result<Path> {
        if !self.grid.is_node(t) {
            return Err(Error::Grid(format!("restriction time {t} is not a node")));
        }
        Ok(self.restrict_to_index(self.grid.index_at(t)))
    }

    pub fn prefix(&self, i: usize) -> PrefixView<'_> {
        PrefixView {
            path: self,
            end: i.min(self.grid.n_steps),
        }
    }

    pub fn sup_norm(&self, space: Space) -> f64 {
        let nodes = self.values.iter().map(|v| v.norm(space));
        let o = self.terminal_override.iter().map(|v| v.norm(space));
        nodes.chain(o).fold(0.0, f64::max)
    }

    /// sup over the path of ‖x(s) − y(s)‖ for paths on the same nodes.
    pub fn sup_dist(&self, other: &Path, space: Space) -> f64 {
        let mut m: f64 = 0.0;
        for s in self.grid.nodes() {
            m = m.max(self.eval(s).dist(other.eval(s), space));
        }
        m
    }

    /// Path frozen at its end value on `[t, t + δ]`; δ must be a multiple of dt.
    pub fn horizontal_extend(&self, delta: f64) -> Result<Path> {
        if delta < 0.0 {
            return Err(Error::Grid(format!("negative extension {delta}")));
        }
        let n = steps_between(0.0, delta, self.grid.dt)?;
        let mut out = self.clone();
        out.absorb_override();
        let last = out.values.last().expect("nonempty").clone();
        for _ in 0..n {
            out.push(last.clone());
        }
        Ok(out)
    }

    /// Same history with the endpoint shifted by `h`.
    pub fn vertical_perturb(&self, h: &HVector) -> Path {
        if h.is_zero() {
            return self.clone();
        }
        let mut out = self.clone();
        out.terminal_override = Some(self.eval(self.end()) + h);
        out
    }

    /// Freezes the path on the `2^m` dyadic cells of its time span.
    pub fn stepwise_project(&self, m: u32) -> Path {
        let span = self.end() - self.grid.t0;
        if span <= 0.0 {
            return self.clone();
        }
        let cells = (1u64 << m) as f64;
        let cell = span / cells;
        let n = self.grid.n_steps;
        let mut values = Vec::with_capacity(n + 1);
        for i in 0..n {
            let s = self.grid.node(i) - self.grid.t0;
            let c = ((s / cell) + 1e-9).floor();
            values.push(self.eval(self.grid.t0 + c * cell).clone());
        }
        values.push(self.end_value().clone());
        Path {
            grid: self.grid,
            values,
            terminal_override: None,
        }
    }

    /// Càdlàg resampling onto another grid inside the span of this path.
    pub fn resample(&self, grid: TimeGrid) -> Path {
        let mut values: Vec<HVector> = grid.nodes().map(|s| self.eval(s).clone()).collect();
        if (grid.end() - self.end()).abs() <= self.grid.eps() {
            *values.last_mut().expect("nonempty") = self.end_value().clone();
        }
        Path {
            grid,
            values,
            terminal_override: None,
        }
    }

    /// Rows of (time, coefficients…); the last row carries the terminal value.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        let n = self.grid.n_steps;
        (0..=n)
            .map(|i| {
                let v = if i == n { self.end_value() } else { &self.values[i] };
                std::iter::once(self.grid.node(i))
                    .chain(v.coeffs().iter().copied())
                    .collect()
            })
            .collect()
    }
}

impl PathView for Path {
    fn start_time(&self) -> f64 {
        self.grid.t0
    }
    fn end_time(&self) -> f64 {
        self.end()
    }
    fn at(&self, s: f64) -> Cow<'_, HVector> {
        Cow::Borrowed(self.eval(s))
    }
}

/// The restriction of a path to its first `end + 1` nodes, without copying.
#[derive(Clone, Copy, Debug)]
pub struct PrefixView<'a> {
    path: &'a Path,
    end: usize,
}

impl PathView for PrefixView<'_> {
    fn start_time(&self) -> f64 {
        self.path.grid.t0
    }
    fn end_time(&self) -> f64 {
        self.path.grid.node(self.end)
    }
    fn at(&self, s: f64) -> Cow<'_, HVector> {
        if self.end == self.path.grid.n_steps {
            return Cow::Borrowed(self.path.eval(s));
        }
        let i = self.path.grid.index_at(s).min(self.end);
        Cow::Borrowed(&self.path.values[i])
    }
}

/// Distance between paths of possibly different lengths: the shorter one is
/// frozen at its endpoint and √|t − r| is added.
pub fn path_dist(x: &Path, y: &Path, space: Space) -> Result<f64> {
    let (short, long) = if x.end() <= y.end() { (x, y) } else { (y, x) };
    if (short.grid.t0 - long.grid.t0).abs() > short.grid.eps().max(long.grid.eps()) {
        return Err(Error::Grid("paths start at different times".into()));
    }
    let r = short.end();
    let eps = short.grid.eps().min(long.grid.eps());
    let frozen = |s: f64| {
        if s >= r - eps {
            short.end_value()
        } else {
            short.eval(s)
        }
    };
    let mut sup: f64 = 0.0;
    for s in long.grid.nodes().chain(short.grid.nodes()) {
        sup = sup.max(frozen(s).dist(long.eval(s), space));
    }
    Ok((long.end() - r).abs().sqrt() + sup)
}

/// Paths driven by `x' = Ax + g` with ‖g‖_H ≤ k, started from an anchor path.
#[derive(Clone, Debug, PartialEq)]
pub struct PathClassSpec {
    pub k: f64,
    pub anchor: Path,
    pub horizon: f64,
    pub active_modes: usize,
}

impl PathClassSpec {
    pub fn new(k: f64, anchor: Path, horizon: f64) -> Result<Self> {
        if !(k >= 1.0) {
            return Err(Error::Config(format!("path class bound k = {k} must be ≥ 1")));
        }
        if horizon < anchor.end() {
            return Err(Error::Config("horizon precedes the anchor's end".into()));
        }
        steps_between(anchor.end(), horizon, anchor.grid.dt)?;
        let active_modes = anchor.dim().min(8);
        Ok(Self {
            k,
            anchor,
            horizon,
            active_modes,
        })
    }

    pub fn with_active_modes(mut self, m: usize) -> Self {
        self.active_modes = m.clamp(1, self.anchor.dim());
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassSample {
    pub path: Path,
    /// One drift value per step after the anchor.
    pub drift: Vec<HVector>,
}

/// Draws piecewise-constant g with uniform direction and magnitude in [0, k]
/// in the active modes and integrates exactly.
pub fn sample_path_class<R: Rng>(spec: &PathClassSpec, rng: &mut R) -> Result<ClassSample> {
    let dim = spec.anchor.dim();
    let dt = spec.anchor.grid.dt;
    let n = steps_between(spec.anchor.end(), spec.horizon, dt)?;
    let step = ExpStep::exponential(dim, dt);
    let mut path = spec.anchor.clone();
    path.absorb_override();
    let mut drift = Vec::with_capacity(n);
    for _ in 0..n {
        let mut g = HVector::zeros(dim);
        for a in g.coeffs_mut().iter_mut().take(spec.active_modes) {
            *a = rng.sample(StandardNormal);
        }
        let norm = g.norm(Space::H);
        let mag = rng.random::<f64>() * spec.k;
        g = if norm > 0.0 {
            g.scaled(mag / norm)
        } else {
            g
        };
        let next = step.apply(path.values.last().expect("nonempty"), &g);
        path.push(next);
        drift.push(g);
    }
    Ok(ClassSample { path, drift })
}

/// Integrates a given drift sequence from the anchor.
pub fn integrate_drift(spec: &PathClassSpec, drift: &[HVector]) -> Result<Path> {
    let dt = spec.anchor.grid.dt;
    let step = ExpStep::exponential(spec.anchor.dim(), dt);
    let mut path = spec.anchor.clone();
    path.absorb_override();
    for g in drift {
        let next = step.apply(path.values.last().expect("nonempty"), g);
        path.push(next);
    }
    Ok(path)
}

/// Recovers g from the exact-step relation and checks ‖g‖_H ≤ k + tol.
pub fn is_in_path_class(x: &Path, spec: &PathClassSpec, tol: f64) -> Result<bool> {
    let a = &spec.anchor;
    if !x.grid.same_nodes(&a.grid) {
        return Err(Error::Grid("path and anchor grids differ; resample first".into()));
    }
    if (x.end() - spec.horizon).abs() > x.grid.eps() {
        return Err(Error::Grid("path does not end at the class horizon".into()));
    }
    let na = a.grid.n_steps;
    for i in 0..na {
        if x.values[i].dist(&a.values[i], Space::H) > tol {
            return Ok(false);
        }
    }
    let node = |i: usize| {
        if i == x.grid.n_steps {
            x.end_value()
        } else {
            &x.values[i]
        }
    };
    if node(na).dist(a.end_value(), Space::H) > tol {
        return Ok(false);
    }
    let step = ExpStep::exponential(x.dim(), x.grid.dt);
    for i in na..x.grid.n_steps {
        let (from, to) = (node(i), node(i + 1));
        let g: f64 = from
            .coeffs()
            .iter()
            .zip(to.coeffs())
            .zip(step.decay().iter().zip(step.phi()))
            .map(|((a0, a1), (e, p))| {
                let gi = (a1 - e * a0) / p;
                gi * gi
            })
            .sum::<f64>()
            .sqrt();
        if g > spec.k + tol {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> Path {
        let g = TimeGrid::new(0.0, 1.0, n).unwrap();
        Path::from_fn(g, |s| HVector::unit(4, 0).scaled(s))
    }

    #[test]
    fn cadlag_evaluation() {
        let x = ramp(4);
        assert_eq!(x.eval(0.3).coeffs()[0], 0.25);
        assert_eq!(x.eval(0.25).coeffs()[0], 0.25);
        assert_eq!(x.eval(1.0).coeffs()[0], 1.0);
        let p = x.vertical_perturb(&HVector::unit(4, 1));
        assert_eq!(p.eval(1.0).coeffs()[1], 1.0);
        assert_eq!(p.eval(0.9).coeffs()[1], 0.0);
    }

    #[test]
    fn prefix_view_matches_restriction() {
        let x = ramp(8);
        let r = x.restrict_to_index(3);
        let v = x.prefix(3);
        for s in [0.0, 0.1, 0.2, 0.375, 0.5] {
            assert_eq!(v.at(s).as_ref(), r.eval(s));
        }
        assert_eq!(v.end_time(), r.end());
    }

    #[test]
    fn dyadic_freezing_of_ramp() {
        let x = ramp(8).stepwise_project(1);
        assert_eq!(x.eval(0.4).coeffs()[0], 0.0);
        assert_eq!(x.eval(0.5).coeffs()[0], 0.5);
        assert_eq!(x.eval(0.9).coeffs()[0], 0.5);
        assert_eq!(x.eval(1.0).coeffs()[0], 1.0);
    }

    #[test]
    fn extension_must_align() {
        assert!(ramp(4).horizontal_extend(0.1).is_err());
        assert_eq!(ramp(4).horizontal_extend(0.5).unwrap().end(), 1.5);
    }
}

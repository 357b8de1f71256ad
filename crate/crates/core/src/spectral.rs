//! Dirichlet-Laplacian eigenbasis on (0,1) truncated at `D` modes.
//!
//! Coefficient index `k` (0-based) corresponds to the eigenfunction
//! `e_{k+1}` with eigenvalue `((k+1)π)²`.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Space {
    H,
    V,
    VStar,
}

/// Eigenvalue for the 0-based coefficient index.
#[inline]
pub fn eigenvalue(k: usize) -> f64 {
    let i = (k + 1) as f64;
    i * i * PI * PI
}

#[inline]
fn weight(space: Space, k: usize) -> f64 {
    match space {
        Space::H => 1.0,
        Space::V => 1.0 + eigenvalue(k),
        Space::VStar => 1.0 / (1.0 + eigenvalue(k)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HVector {
    coeffs: Vec<f64>,
}

impl HVector {
    pub fn zeros(dim: usize) -> Self {
        Self { coeffs: vec![0.0; dim] }
    }

    pub fn from_coeffs(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    /// Basis vector e_{k+1}.
    pub fn unit(dim: usize, k: usize) -> Self {
        let mut h = Self::zeros(dim);
        h.coeffs[k] = 1.0;
        h
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&a| a == 0.0)
    }

    pub fn norm_sq(&self, space: Space) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, a)| weight(space, k) * a * a)
            .sum()
    }

    pub fn norm(&self, space: Space) -> f64 {
        self.norm_sq(space).sqrt()
    }

    /// Duality pairing Σ a_i b_i.
    pub fn pairing(&self, other: &HVector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }

    pub fn apply_a(&self) -> HVector {
        HVector {
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .map(|(k, a)| -eigenvalue(k) * a)
                .collect(),
        }
    }

    pub fn project(&self, d: usize) -> Result<HVector> {
        if d > self.dim() {
            return Err(Error::ProjectionDim { d, dim: self.dim() });
        }
        let mut out = self.clone();
        out.coeffs[d..].iter_mut().for_each(|a| *a = 0.0);
        Ok(out)
    }

    pub fn semigroup_step(&self, dt: f64) -> HVector {
        HVector {
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .map(|(k, a)| (-eigenvalue(k) * dt).exp() * a)
                .collect(),
        }
    }

    /// Σ_{i > from} a_i², with `from` counted in modes.
    pub fn tail_mass(&self, from: usize) -> f64 {
        self.coeffs.iter().skip(from).map(|a| a * a).sum()
    }

    pub fn axpy(&mut self, alpha: f64, x: &HVector) {
        for (a, b) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, s: f64) -> HVector {
        HVector {
            coeffs: self.coeffs.iter().map(|a| a * s).collect(),
        }
    }

    pub fn dist(&self, other: &HVector, space: Space) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .enumerate()
            .map(|(k, (a, b))| weight(space, k) * (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl Add<&HVector> for &HVector {
    type Output = HVector;
    fn add(self, rhs: &HVector) -> HVector {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub<&HVector> for &HVector {
    type Output = HVector;
    fn sub(self, rhs: &HVector) -> HVector {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl AddAssign<&HVector> for HVector {
    fn add_assign(&mut self, rhs: &HVector) {
        self.axpy(1.0, rhs);
    }
}

impl Mul<f64> for &HVector {
    type Output = HVector;
    fn mul(self, s: f64) -> HVector {
        self.scaled(s)
    }
}

impl Neg for &HVector {
    type Output = HVector;
    fn neg(self) -> HVector {
        self.scaled(-1.0)
    }
}

/// Constants of the coercivity and boundedness inequalities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GelfandConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c: f64,
}

impl GelfandConstants {
    /// The constants of the Laplacian with ‖v‖²_V = ‖v‖²_H + Σ λ_i a_i².
    pub fn laplacian() -> Self {
        Self {
            c1: 2.0,
            c2: 2.0,
            c3: 1.0,
            c: 1.0,
        }
    }

    pub fn c1_plus(&self) -> f64 {
        self.c1.max(0.0)
    }
}

impl Default for GelfandConstants {
    fn default() -> Self {
        Self::laplacian()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralBasis {
    dim: usize,
}

impl SpectralBasis {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("ambient dimension must be positive".into()));
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        (0..self.dim).map(eigenvalue).collect()
    }

    pub fn multipliers(&self) -> Vec<f64> {
        (0..self.dim).map(|k| -eigenvalue(k)).collect()
    }

    pub fn zeros(&self) -> HVector {
        HVector::zeros(self.dim)
    }

    pub fn unit(&self, k: usize) -> HVector {
        HVector::unit(self.dim, k)
    }
}

/// Per-mode factors of one exact step of `a' = μ a + b` with `b` frozen.
#[derive(Clone, Debug)]
pub struct ExpStep {
    decay: Vec<f64>,
    phi: Vec<f64>,
}

impl ExpStep {
    pub fn exponential(dim: usize, dt: f64) -> Self {
        let mut decay = Vec::with_capacity(dim);
        let mut phi = Vec::with_capacity(dim);
        for k in 0..dim {
            let mu = -eigenvalue(k);
            decay.push((mu * dt).exp());
            phi.push(if mu == 0.0 { dt } else { (mu * dt).exp_m1() / mu });
        }
        Self { decay, phi }
    }

    /// a ↦ (a + dt b) / (1 + λ dt).
    pub fn semi_implicit(dim: usize, dt: f64) -> Self {
        let mut decay = Vec::with_capacity(dim);
        let mut phi = Vec::with_capacity(dim);
        for k in 0..dim {
            let r = 1.0 / (1.0 + eigenvalue(k) * dt);
            decay.push(r);
            phi.push(dt * r);
        }
        Self { decay, phi }
    }

    pub fn apply(&self, a: &HVector, b: &HVector) -> HVector {
        HVector::from_coeffs(
            a.coeffs
                .iter()
                .zip(&b.coeffs)
                .zip(self.decay.iter().zip(&self.phi))
                .map(|((x, y), (e, p))| e * x + p * y)
                .collect(),
        )
    }

    pub fn decay(&self) -> &[f64] {
        &self.decay
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GelfandReport {
    pub n_samples: usize,
    pub coercivity_rel: f64,
    pub boundedness_rel: f64,
    pub embedding_rel: f64,
    pub max_tail_mass: f64,
}

impl GelfandReport {
    pub fn max_violation(&self) -> f64 {
        self.coercivity_rel
            .max(self.boundedness_rel)
            .max(self.embedding_rel)
    }
}

/// Random unit vector with Gaussian coefficients decaying like 1/i.
pub fn random_unit<R: Rng>(dim: usize, rng: &mut R) -> HVector {
    let mut h = HVector::from_coeffs(
        (0..dim)
            .map(|k| rng.sample::<f64, _>(StandardNormal) / (k + 1) as f64)
            .collect(),
    );
    let n = h.norm(Space::H);
    if n > 0.0 {
        h = h.scaled(1.0 / n);
    }
    h
}

/// Residuals of the coercivity identity, boundedness and the embedding chain
/// over random unit vectors.
pub fn verify_gelfand(basis: &SpectralBasis, n_samples: usize, seed: u64) -> GelfandReport {
    let consts = GelfandConstants::laplacian();
    let mut report = GelfandReport {
        n_samples,
        coercivity_rel: 0.0,
        boundedness_rel: 0.0,
        embedding_rel: 0.0,
        max_tail_mass: 0.0,
    };
    for i in 0..n_samples {
        let mut rng = seed::rng(seed, "gelfand", i as u64);
        let v = random_unit(basis.dim(), &mut rng);
        let h = v.norm_sq(Space::H);
        let vv = v.norm_sq(Space::V);
        let lhs = 2.0 * v.apply_a().pairing(&v);
        let rhs = consts.c1 * h - consts.c2 * vv;
        let scale = (consts.c2 * vv).max(f64::MIN_POSITIVE);
        report.coercivity_rel = report.coercivity_rel.max((lhs - rhs).abs() / scale);
        let av = v.apply_a().norm(Space::VStar);
        let vn = v.norm(Space::V);
        report.boundedness_rel = report
            .boundedness_rel
            .max(((av - consts.c3 * vn) / vn.max(f64::MIN_POSITIVE)).max(0.0));
        let (s, hn) = (v.norm(Space::VStar), h.sqrt());
        let emb = ((s - hn) / hn.max(f64::MIN_POSITIVE))
            .max((hn - vn) / vn.max(f64::MIN_POSITIVE))
            .max(0.0);
        report.embedding_rel = report.embedding_rel.max(emb);
        report.max_tail_mass = report.max_tail_mass.max(v.tail_mass(basis.dim() / 2));
    }
    report
}

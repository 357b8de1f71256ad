//! A priori estimates for the state equation with their explicit constants,
//! and a randomized suite that measures how close solutions come to them.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::ControlProcess;
use crate::error::Result;
use crate::noise::{sample_wiener_with, NoiseState};
use crate::path::{sample_path_class, Path, PathClassSpec, TimeGrid};
use crate::problem::{builtin, ProblemInstance};
use crate::seed;
use crate::spectral::{random_unit, HVector, Space};
use crate::state::{energy, solve_state, SolverConfig, StateSolution};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateConstants {
    pub l: f64,
    pub t: f64,
    pub c1_plus: f64,
    pub c2: f64,
    pub c3: f64,
    pub c: f64,
}

impl EstimateConstants {
    pub fn from_instance(p: &ProblemInstance) -> Self {
        Self {
            l: p.bound(),
            t: p.horizon,
            c1_plus: p.constants.c1_plus(),
            c2: p.constants.c2,
            c3: p.constants.c3,
            c: p.constants.c,
        }
    }

    pub fn laplacian(l: f64, t: f64) -> Self {
        Self {
            l,
            t,
            c1_plus: 2.0,
            c2: 2.0,
            c3: 1.0,
            c: 1.0,
        }
    }

    /// K² = max{2, 2LT}·e^{2(L+c₁⁺)T}.
    pub fn energy_k_sq(&self) -> f64 {
        2f64.max(2.0 * self.l * self.t) * (2.0 * (self.l + self.c1_plus) * self.t).exp()
    }

    /// K̄ = 1 + (2Tc²L² + 2c₃²K²/c₂)^{1/2}.
    pub fn modulus_k(&self) -> f64 {
        1.0 + (2.0 * self.t * self.c * self.c * self.l * self.l
            + 2.0 * self.c3 * self.c3 * self.energy_k_sq() / self.c2)
            .sqrt()
    }

    /// K = √3·e^{(3/2)T(2L²/c₂ + c₁⁺)}.
    pub fn stability_k(&self) -> f64 {
        3f64.sqrt() * (1.5 * self.t * (2.0 * self.l * self.l / self.c2 + self.c1_plus)).exp()
    }

    /// K̃ = max{8L², 8}.
    pub fn short_time_k(&self) -> f64 {
        (8.0 * self.l * self.l).max(8.0)
    }

    /// 2K̃(1 + ‖Aξ(r)‖²_H)|s−r|²e^{2c₁⁺T}.
    pub fn short_time_bound(&self, a_xi_sq: f64, dur: f64) -> f64 {
        2.0 * self.short_time_k() * (1.0 + a_xi_sq) * dur * dur * (2.0 * self.c1_plus * self.t).exp()
    }

    /// |V| ≤ L(T+1).
    pub fn value_bound(&self) -> f64 {
        self.l * (self.t + 1.0)
    }

    /// Candidate path-Lipschitz constant of V: K·L(1+T) with K from the
    /// stability estimate.
    pub fn value_lipschitz(&self) -> f64 {
        self.stability_k() * self.l * (1.0 + self.t)
    }
}

/// (max ‖X‖²_H + c₂∫‖X‖²_V) / (K²(1 + ‖ξ‖²_{0,H})).
pub fn energy_ratio(k: &EstimateConstants, sol: &StateSolution, xi: &Path) -> f64 {
    let lhs = sol.h_max.powi(2) + k.c2 * sol.v_energy;
    lhs / (k.energy_k_sq() * (1.0 + xi.sup_norm(Space::H).powi(2)))
}

/// max over node pairs t < s of d_{0,V*}(X_s, X_t) / (K̄(1 + ‖ξ‖_{0,H})√(s−t)).
pub fn modulus_ratio(k: &EstimateConstants, sol: &StateSolution, xi: &Path) -> f64 {
    let g = sol.path.grid();
    let n = g.n_steps();
    let vals: Vec<&HVector> = (0..=n)
        .map(|i| {
            if i == n {
                sol.path.end_value()
            } else {
                &sol.path.values()[i]
            }
        })
        .collect();
    let scale = k.modulus_k() * (1.0 + xi.sup_norm(Space::H));
    let mut worst: f64 = 0.0;
    for i in sol.start_index..n {
        let mut sup: f64 = 0.0;
        for j in i + 1..=n {
            sup = sup.max(vals[j].dist(vals[i], Space::VStar));
            let ds = g.node(j) - g.node(i);
            worst = worst.max((ds.sqrt() + sup) / (scale * ds.sqrt()));
        }
    }
    worst
}

/// (max ‖ΔX‖²_H + c₂∫‖ΔX‖²_V) / (K²‖ξ − ξ̂‖²_{0,H}).
pub fn stability_ratio(
    k: &EstimateConstants,
    a: &StateSolution,
    b: &StateSolution,
    xi: &Path,
    xi_hat: &Path,
) -> f64 {
    let diff = Path::new(
        *a.path.grid(),
        a.path
            .values()
            .iter()
            .zip(b.path.values())
            .map(|(x, y)| x - y)
            .collect(),
    )
    .expect("same grid");
    let (h, v) = energy(&diff, a.start_index, |h| h.clone());
    let d0 = xi.sup_dist(xi_hat, Space::H);
    (h * h + k.c2 * v) / (k.stability_k().powi(2) * d0 * d0)
}

/// max over s ∈ (r, T] of the short-time left side over its bound, for a
/// solution started from a path whose endpoint is ξ(r).
pub fn short_time_ratio(k: &EstimateConstants, sol: &StateSolution, xi_r: &HVector) -> f64 {
    let g = sol.path.grid();
    let a_sq = xi_r.apply_a().norm_sq(Space::H);
    let start = sol.start_index;
    let mut hmax: f64 = 0.0;
    let mut v = 0.0;
    let mut prev = 0.0;
    let mut worst: f64 = 0.0;
    for i in start + 1..=g.n_steps() {
        let x = sol.path.eval(g.node(i));
        let d = x - xi_r;
        hmax = hmax.max(d.norm(Space::H));
        let e = d.norm_sq(Space::V);
        v += 0.5 * g.dt() * (prev + e);
        prev = e;
        let lhs = hmax * hmax + k.c2 * v;
        worst = worst.max(lhs / k.short_time_bound(a_sq, g.node(i) - g.node(start)));
    }
    worst
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub draw: usize,
    pub instance: String,
    pub r: f64,
    pub energy: f64,
    pub modulus: f64,
    pub stability: f64,
    pub short_time: f64,
    /// Largest spread of any ratio across the control processes tried.
    pub control_spread: f64,
}

impl EstimateRecord {
    pub fn max_ratio(&self) -> f64 {
        self.energy
            .max(self.modulus)
            .max(self.stability)
            .max(self.short_time)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateSuiteReport {
    pub records: Vec<EstimateRecord>,
    pub violations: usize,
    pub max_control_spread: f64,
    pub constants: EstimateConstants,
}

const SUITE_INSTANCES: &[&str] = &["steer-1", "delay", "delay-vstar", "null", "random-f", "shifted-ou"];

fn ratios_for(
    instance: &ProblemInstance,
    k: &EstimateConstants,
    r: f64,
    xi: &Path,
    xi_hat: &Path,
    xi_const: &Path,
    theta: &ControlProcess,
    noise: &NoiseState,
    config: &SolverConfig,
) -> Result<[f64; 4]> {
    let sol = solve_state(instance, r, xi, theta, noise, config)?;
    let sol_hat = solve_state(instance, r, xi_hat, theta, noise, config)?;
    let sol_c = solve_state(instance, r, xi_const, theta, noise, config)?;
    Ok([
        energy_ratio(k, &sol, xi),
        modulus_ratio(k, &sol, xi),
        stability_ratio(k, &sol, &sol_hat, xi, xi_hat),
        short_time_ratio(k, &sol_c, xi_const.end_value()),
    ])
}

/// Random (instance, ξ, θ) draws; each estimate is measured as a ratio to its
/// bound, so a ratio above 1 is a violation. Each draw is repeated under five
/// control processes to measure the spread of the ratios.
pub fn run_estimate_suite(
    n_draws: usize,
    dim: usize,
    config: &SolverConfig,
    seed: u64,
) -> Result<EstimateSuiteReport> {
    let horizon = 1.0;
    let records: Vec<EstimateRecord> = (0..n_draws)
        .into_par_iter()
        .map(|draw| -> Result<EstimateRecord> {
            let mut rng = seed::rng(seed, "estimates", draw as u64);
            let name = SUITE_INSTANCES[rng.random_range(0..SUITE_INSTANCES.len())];
            let instance = builtin(name, dim, horizon)?;
            let k = EstimateConstants::from_instance(&instance);
            let n_total = (horizon / config.dt).round() as usize;
            let r = rng.random_range(0..=n_total / 2) as f64 * config.dt;
            let x0 = random_unit(dim, &mut rng).scaled(2.0 * rng.random::<f64>());
            let anchor = Path::point(0.0, config.dt, x0)?;
            let xi = sample_path_class(&PathClassSpec::new(1.0, anchor, r)?, &mut rng)?.path;
            let bump = random_unit(dim, &mut rng).scaled(0.1 * rng.random::<f64>() + 1e-3);
            let xi_hat = Path::from_fn(*xi.grid(), |s| xi.eval(s) + &bump);
            let mut low = HVector::zeros(dim);
            for a in low.coeffs_mut().iter_mut().take(4) {
                *a = rng.random::<f64>() - 0.5;
            }
            let xi_const = Path::constant(*xi.grid(), low);
            let noise = if instance.is_random() {
                let grid = TimeGrid::from_origin(horizon, config.dt)?;
                sample_wiener_with(grid, instance.m, &mut rng).noise_state()
            } else {
                NoiseState::zero(instance.m)
            };
            let random_labels: Vec<usize> = (0..8).map(|_| rng.random_range(0..3)).collect();
            let thetas = [
                ControlProcess::OpenLoop {
                    start: r,
                    end: horizon,
                    labels: random_labels,
                },
                ControlProcess::constant(r, horizon, 0),
                ControlProcess::constant(r, horizon, 1),
                ControlProcess::constant(r, horizon, 2),
                ControlProcess::OpenLoop {
                    start: r,
                    end: horizon,
                    labels: (0..8).map(|i| if i % 2 == 0 { 0 } else { 2 }).collect(),
                },
            ];
            let mut all = Vec::with_capacity(thetas.len());
            for theta in &thetas {
                all.push(ratios_for(
                    &instance, &k, r, &xi, &xi_hat, &xi_const, theta, &noise, config,
                )?);
            }
            let mut spread: f64 = 0.0;
            let mut worst = [0f64; 4];
            for q in 0..4 {
                let lo = all.iter().map(|a| a[q]).fold(f64::INFINITY, f64::min);
                let hi = all.iter().map(|a| a[q]).fold(0.0, f64::max);
                spread = spread.max(hi - lo);
                worst[q] = hi;
            }
            Ok(EstimateRecord {
                draw,
                instance: name.to_string(),
                r,
                energy: worst[0],
                modulus: worst[1],
                stability: worst[2],
                short_time: worst[3],
                control_spread: spread,
            })
        })
        .collect::<Result<_>>()?;
    let violations = records.iter().filter(|r| r.max_ratio() > 1.0).count();
    let max_control_spread = records.iter().map(|r| r.control_spread).fold(0.0, f64::max);
    Ok(EstimateSuiteReport {
        records,
        violations,
        max_control_spread,
        constants: EstimateConstants::laplacian(1.0, horizon),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_constants_unit_case() {
        let k = EstimateConstants::laplacian(1.0, 1.0);
        assert!((k.energy_k_sq() - 806.8575869854702).abs() < 1e-9);
        assert!((k.modulus_k() - 29.440421708994933).abs() < 1e-11);
        assert!((k.stability_k() - 155.91424496410247).abs() < 1e-10);
        assert_eq!(k.short_time_k(), 8.0);
        assert_eq!(k.value_bound(), 2.0);
    }
}

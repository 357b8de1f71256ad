//! Wiener noise: sampled paths and binomial scenario trees.
//!
//! Coefficients see the noise only through a [`NoiseState`], a step function
//! of W with equally spaced knots.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path::TimeGrid;
use crate::seed;

/// W as a step function: `values[j]` holds on `[j·step, (j+1)·step)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseState {
    step: f64,
    m: usize,
    values: Vec<Vec<f64>>,
}

impl NoiseState {
    /// W ≡ 0.
    pub fn zero(m: usize) -> Self {
        Self {
            step: 1.0,
            m,
            values: vec![vec![0.0; m]],
        }
    }

    pub fn from_knots(step: f64, values: Vec<Vec<f64>>) -> Self {
        let m = values.first().map_or(0, Vec::len);
        Self { step, m, values }
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn knots(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn knot_index(&self, s: f64) -> usize {
        let x = (s / self.step + 1e-9).floor();
        if x <= 0.0 {
            0
        } else {
            (x as usize).min(self.values.len() - 1)
        }
    }

    pub fn w_at(&self, s: f64) -> &[f64] {
        &self.values[self.knot_index(s)]
    }

    pub fn component(&self, s: f64, c: usize) -> f64 {
        self.values[self.knot_index(s)].get(c).copied().unwrap_or(0.0)
    }

    /// W frozen at the points of `partition_step`-spaced times before `t`, and
    /// W(t) from `t` on.
    pub fn frozen(&self, partition_step: f64, t: f64) -> NoiseState {
        let now = self.w_at(t).to_vec();
        let values = (0..self.values.len())
            .map(|j| {
                let s = j as f64 * self.step;
                if s >= t - 1e-9 * self.step {
                    now.clone()
                } else {
                    let b = ((s / partition_step) + 1e-9).floor() * partition_step;
                    self.w_at(b).to_vec()
                }
            })
            .collect();
        NoiseState {
            step: self.step,
            m: self.m,
            values,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|&w| w == 0.0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WienerPath {
    grid: TimeGrid,
    m: usize,
    increments: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
}

impl WienerPath {
    pub fn from_increments(grid: TimeGrid, increments: Vec<Vec<f64>>) -> Result<Self> {
        if increments.len() != grid.n_steps() {
            return Err(Error::Grid("one increment per step required".into()));
        }
        let m = increments.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(grid.len());
        let mut w = vec![0.0; m];
        values.push(w.clone());
        for inc in &increments {
            for (a, b) in w.iter_mut().zip(inc) {
                *a += b;
            }
            values.push(w.clone());
        }
        Ok(Self {
            grid,
            m,
            increments,
            values,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn increments(&self) -> &[Vec<f64>] {
        &self.increments
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn terminal(&self) -> &[f64] {
        self.values.last().expect("nonempty")
    }

    /// Knots on the path's own grid; the grid must start at 0.
    pub fn noise_state(&self) -> NoiseState {
        NoiseState::from_knots(self.grid.dt(), self.values.clone())
    }

    /// Sums of `stride` consecutive increments.
    pub fn coarsen(&self, stride: usize) -> Result<WienerPath> {
        if stride == 0 || self.grid.n_steps() % stride != 0 {
            return Err(Error::Grid(format!("stride {stride} does not divide the grid")));
        }
        let grid = TimeGrid::with_step(
            self.grid.t0(),
            self.grid.dt() * stride as f64,
            self.grid.n_steps() / stride,
        )?;
        let increments = self
            .increments
            .chunks(stride)
            .map(|c| {
                (0..self.m)
                    .map(|k| c.iter().map(|v| v[k]).sum())
                    .collect()
            })
            .collect();
        WienerPath::from_increments(grid, increments)
    }
}

pub fn sample_wiener_with<R: Rng>(grid: TimeGrid, m: usize, rng: &mut R) -> WienerPath {
    let sd = grid.dt().sqrt();
    let increments = (0..grid.n_steps())
        .map(|_| {
            (0..m)
                .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    WienerPath::from_increments(grid, increments).expect("one increment per step")
}

pub fn sample_wiener(grid: TimeGrid, m: usize, seed: u64) -> Result<WienerPath> {
    if m == 0 {
        return Err(Error::Config("noise dimension must be ≥ 1".into()));
    }
    Ok(sample_wiener_with(grid, m, &mut seed::rng(seed, "wiener", 0)))
}

/// Node of a scenario tree: `index` encodes the branch taken at each level,
/// most recent branch in the low bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Node {
    pub level: usize,
    pub index: u64,
}

impl Node {
    pub const ROOT: Node = Node { level: 0, index: 0 };
}

/// Binomial tree of Wiener increments ±√dt per component, optionally with an
/// independent factor B of `b_dim` more components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseTree {
    depth: usize,
    m: usize,
    b_dim: usize,
    dt: f64,
}

pub const DEFAULT_NODE_BUDGET: u128 = 1 << 22;

impl NoiseTree {
    pub fn new(depth: usize, m: usize, dt: f64) -> Result<Self> {
        Self::product(depth, m, 0, dt, DEFAULT_NODE_BUDGET)
    }

    pub fn product(depth: usize, m: usize, b_dim: usize, dt: f64, budget: u128) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Config(format!("tree step must be positive, got {dt}")));
        }
        let bits = (m + b_dim) as u32 * depth as u32;
        let leaves = if bits >= 127 { u128::MAX } else { 1u128 << bits };
        if bits >= 63 || leaves > budget {
            return Err(Error::Budget {
                what: "scenario tree leaves",
                needed: leaves,
                budget,
            });
        }
        Ok(Self {
            depth,
            m,
            b_dim,
            dt,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn b_dim(&self) -> usize {
        self.b_dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.depth as f64 * self.dt
    }

    pub fn branching(&self) -> u64 {
        1u64 << (self.m + self.b_dim)
    }

    pub fn level_size(&self, level: usize) -> u64 {
        1u64 << ((self.m + self.b_dim) * level)
    }

    pub fn time(&self, level: usize) -> f64 {
        level as f64 * self.dt
    }

    /// Level whose time is `t`.
    pub fn level_of(&self, t: f64) -> Result<usize> {
        let x = t / self.dt;
        let r = x.round();
        if (x - r).abs() > 1e-9 || r < 0.0 || r as usize > self.depth {
            return Err(Error::OffGrid(t));
        }
        Ok(r as usize)
    }

    pub fn children(&self, node: Node) -> impl Iterator<Item = Node> {
        let b = self.branching();
        (0..b).map(move |k| Node {
            level: node.level + 1,
            index: node.index * b + k,
        })
    }

    pub fn parent(&self, node: Node) -> Option<Node> {
        (node.level > 0).then(|| Node {
            level: node.level - 1,
            index: node.index / self.branching(),
        })
    }

    /// Branch taken at each step from the root to `node`.
    pub fn branches(&self, node: Node) -> Vec<u64> {
        let b = self.branching();
        let mut out = vec![0; node.level];
        let mut idx = node.index;
        for j in (0..node.level).rev() {
            out[j] = idx % b;
            idx /= b;
        }
        out
    }

    fn signs(&self, branch: u64, offset: usize, count: usize) -> Vec<f64> {
        let sd = self.dt.sqrt();
        (0..count)
            .map(|c| {
                if (branch >> (offset + c)) & 1 == 1 {
                    sd
                } else {
                    -sd
                }
            })
            .collect()
    }

    pub fn w_increment(&self, branch: u64) -> Vec<f64> {
        self.signs(branch, 0, self.m)
    }

    pub fn b_increment(&self, branch: u64) -> Vec<f64> {
        self.signs(branch, self.m, self.b_dim)
    }

    fn cumulative(&self, node: Node, f: impl Fn(u64) -> Vec<f64>, width: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(node.level + 1);
        let mut w = vec![0.0; width];
        out.push(w.clone());
        for br in self.branches(node) {
            for (a, b) in w.iter_mut().zip(f(br)) {
                *a += b;
            }
            out.push(w.clone());
        }
        out
    }

    /// W at levels 0..=node.level along the node's history.
    pub fn w_history(&self, node: Node) -> Vec<Vec<f64>> {
        self.cumulative(node, |b| self.w_increment(b), self.m)
    }

    /// B at levels 0..=node.level along the node's history.
    pub fn b_history(&self, node: Node) -> Vec<Vec<f64>> {
        self.cumulative(node, |b| self.b_increment(b), self.b_dim)
    }

    pub fn w_at(&self, node: Node) -> Vec<f64> {
        self.w_history(node).pop().expect("nonempty")
    }

    pub fn noise_state(&self, node: Node) -> NoiseState {
        NoiseState::from_knots(self.dt, self.w_history(node))
    }

    /// The node that a noise state with knots at the tree times passes through
    /// at `level`; B-bits are taken as zero.
    pub fn node_of(&self, noise: &NoiseState, level: usize) -> Node {
        let b = self.branching();
        let knots = noise.knots();
        let mut index = 0u64;
        for j in 0..level {
            let (a, c) = (&knots[j.min(knots.len() - 1)], &knots[(j + 1).min(knots.len() - 1)]);
            let mut br = 0u64;
            for k in 0..self.m {
                if c.get(k).copied().unwrap_or(0.0) - a.get(k).copied().unwrap_or(0.0) > 0.0 {
                    br |= 1 << k;
                }
            }
            index = index * b + br;
        }
        Node { level, index }
    }

    pub fn probability(&self, level: usize) -> f64 {
        1.0 / self.level_size(level) as f64
    }

    pub fn nodes_at(&self, level: usize) -> impl Iterator<Item = Node> {
        (0..self.level_size(level)).map(move |index| Node { level, index })
    }
}

pub fn build_noise_tree(depth: usize, m: usize, dt: f64, budget: u128) -> Result<NoiseTree> {
    NoiseTree::product(depth, m, 0, dt, budget)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_level_binomial() {
        let t = NoiseTree::new(2, 1, 0.25).unwrap();
        let wt: Vec<f64> = t.nodes_at(2).map(|n| t.w_at(n)[0]).collect();
        assert_eq!(wt, vec![-1.0, 0.0, 0.0, 1.0]);
        let second: f64 = wt.iter().map(|w| w * w).sum::<f64>() * t.probability(2);
        assert!((second - 0.5).abs() < 1e-15);
    }

    #[test]
    fn node_recovered_from_noise_state() {
        let t = NoiseTree::new(3, 2, 0.1).unwrap();
        for n in t.nodes_at(3) {
            assert_eq!(t.node_of(&t.noise_state(n), 3), n);
        }
    }

    #[test]
    fn budget_is_enforced() {
        assert!(NoiseTree::product(10, 3, 0, 0.1, 1 << 20).is_err());
    }

    #[test]
    fn freezing_noise() {
        let s = NoiseState::from_knots(0.25, vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]]);
        let f = s.frozen(0.5, 0.75);
        assert_eq!(f.w_at(0.25), &[0.0]);
        assert_eq!(f.w_at(0.5), &[2.0]);
        assert_eq!(f.w_at(0.75), &[3.0]);
    }
}

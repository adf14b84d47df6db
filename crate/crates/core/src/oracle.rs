//! Local objectives, their subgradients, and noisy subgradient oracles.
//!
//! Noise for block `s` is drawn from its own stream (`sub = s`), so a block
//! query only pays for `n_s` Gaussian draws and a full query is exactly the
//! concatenation of the block queries.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::blockgeom::{BlockSpec, FeasibleSet};
use crate::linalg::norm2;
use crate::rng::{Purpose, StreamKey};
use crate::{Error, Result};

/// A sum `f = Σ_i f_i` of convex local objectives over `R^n`.
pub trait MultiAgentObjective {
    fn num_agents(&self) -> usize;

    fn dim(&self) -> usize;

    /// `f_i(x)`.
    fn value(&self, agent: usize, x: &[f64]) -> Result<f64>;

    /// `f(x) = Σ_i f_i(x)`.
    fn global_value(&self, x: &[f64]) -> Result<f64> {
        (0..self.num_agents()).map(|i| self.value(i, x)).sum()
    }

    /// A subgradient `g_i(x) ∈ ∂f_i(x)`.
    fn subgradient_into(&self, agent: usize, x: &[f64], out: &mut [f64]) -> Result<()>;

    /// Coordinates `range` of `g_i(x)`. The default evaluates the full
    /// subgradient; implementations with separable structure override it.
    fn block_subgradient_into(
        &self,
        agent: usize,
        x: &[f64],
        range: Range<usize>,
        out: &mut [f64],
    ) -> Result<()> {
        let mut full = vec![0.0; self.dim()];
        self.subgradient_into(agent, x, &mut full)?;
        out.copy_from_slice(&full[range]);
        Ok(())
    }

    /// Minimiser of `f` over the feasible set and the optimal value.
    fn exact_optimum(&self, _spec: &BlockSpec) -> Result<(Vec<f64>, f64)> {
        Err(Error::Unsupported("no closed-form optimum for this objective"))
    }
}

/// `f_i(x) = a_i ‖x − b_i‖²`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuadraticSensorObjective {
    weights: Vec<f64>,
    anchors: Vec<Vec<f64>>,
}

impl QuadraticSensorObjective {
    pub fn new(weights: Vec<f64>, anchors: Vec<Vec<f64>>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("at least one agent is required"));
        }
        if weights.len() != anchors.len() {
            return Err(Error::DimensionMismatch {
                expected: weights.len(),
                found: anchors.len(),
            });
        }
        let n = anchors[0].len();
        if n == 0 {
            return Err(Error::invalid("anchors must be nonempty"));
        }
        if let Some(b) = anchors.iter().find(|b| b.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        if weights.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        if anchors.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("anchors must be finite"));
        }
        Ok(QuadraticSensorObjective { weights, anchors })
    }

    /// Draw `a_i ∈ (0, 1]` and `b_i ∈ [0, 1]^n` uniformly.
    pub fn generate(num_agents: usize, dim: usize, key: StreamKey) -> Result<Self> {
        let mut rng = key.purpose(Purpose::Data).rng();
        let mut weights = Vec::with_capacity(num_agents);
        let mut anchors = Vec::with_capacity(num_agents);
        for _ in 0..num_agents {
            weights.push(1.0 - rng.random::<f64>());
            anchors.push((0..dim).map(|_| rng.random::<f64>()).collect());
        }
        QuadraticSensorObjective::new(weights, anchors)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn anchors(&self) -> &[Vec<f64>] {
        &self.anchors
    }

    fn check(&self, agent: usize, x: &[f64]) -> Result<()> {
        if agent >= self.weights.len() {
            return Err(Error::AgentIndex {
                index: agent,
                count: self.weights.len(),
            });
        }
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `sup_{x ∈ X_s} ‖2 a_i (x − b_i)^{(s)}‖²`, exact for every shipped set.
    fn block_grad_sup_sq(&self, agent: usize, spec: &BlockSpec, s: usize) -> Result<f64> {
        let a = self.weights[agent];
        let b = &self.anchors[agent][spec.range(s)?];
        let scale = 4.0 * a * a;
        let sup = match &spec.block(s)?.set {
            FeasibleSet::Box { lo, hi } => {
                let mut acc = 0.0;
                for ((&l, &h), &bj) in lo.iter().zip(hi).zip(b) {
                    let w = (l - bj).abs().max((h - bj).abs());
                    if !w.is_finite() {
                        return Err(Error::Unbounded { block: s });
                    }
                    acc += w * w;
                }
                acc
            }
            FeasibleSet::Ball { radius } => {
                let r = radius + norm2(b);
                r * r
            }
            // A convex function peaks at a vertex e_j: ‖b‖² − 2 b_j + 1.
            FeasibleSet::Simplex => {
                let bsq: f64 = b.iter().map(|v| v * v).sum();
                let bmin = b.iter().copied().fold(f64::INFINITY, f64::min);
                bsq - 2.0 * bmin + 1.0
            }
        };
        Ok(scale * sup)
    }

    /// Worst-case block second moments `M̄_s` of the noisy oracle over `X`.
    pub fn analytic_bounds(&self, spec: &BlockSpec, noise: &NoiseModel) -> Result<SubgradBounds> {
        if spec.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: spec.dim(),
            });
        }
        let var = noise.variance();
        let mut per_block = Vec::with_capacity(spec.num_blocks());
        for s in 0..spec.num_blocks() {
            let mut worst: f64 = 0.0;
            for i in 0..self.num_agents() {
                let m_sq = self.block_grad_sup_sq(i, spec, s)? + spec.sizes()[s] as f64 * var;
                worst = worst.max(m_sq);
            }
            per_block.push(worst.sqrt());
        }
        Ok(SubgradBounds::from_blocks(per_block))
    }
}

impl MultiAgentObjective for QuadraticSensorObjective {
    fn num_agents(&self) -> usize {
        self.weights.len()
    }

    fn dim(&self) -> usize {
        self.anchors[0].len()
    }

    fn value(&self, agent: usize, x: &[f64]) -> Result<f64> {
        self.check(agent, x)?;
        let d: f64 = x
            .iter()
            .zip(&self.anchors[agent])
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(self.weights[agent] * d)
    }

    fn subgradient_into(&self, agent: usize, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.block_subgradient_into(agent, x, 0..self.dim(), out)
    }

    fn block_subgradient_into(
        &self,
        agent: usize,
        x: &[f64],
        range: Range<usize>,
        out: &mut [f64],
    ) -> Result<()> {
        self.check(agent, x)?;
        if range.end > x.len() || out.len() != range.len() {
            return Err(Error::DimensionMismatch {
                expected: range.len(),
                found: out.len(),
            });
        }
        let two_a = 2.0 * self.weights[agent];
        let b = &self.anchors[agent][range.clone()];
        for ((o, &xv), &bv) in out.iter_mut().zip(&x[range]).zip(b) {
            *o = two_a * (xv - bv);
        }
        Ok(())
    }

    /// Coordinatewise clip of the weighted anchor mean. Requires box blocks.
    fn exact_optimum(&self, spec: &BlockSpec) -> Result<(Vec<f64>, f64)> {
        if spec.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: spec.dim(),
            });
        }
        let total: f64 = self.weights.iter().sum();
        let mut x = vec![0.0; self.dim()];
        for (s, block) in spec.blocks().iter().enumerate() {
            let FeasibleSet::Box { lo, hi } = &block.set else {
                return Err(Error::Unsupported("closed-form optimum needs box blocks"));
            };
            for (k, j) in spec.range(s)?.enumerate() {
                let mean = if total > 0.0 {
                    self.weights
                        .iter()
                        .zip(&self.anchors)
                        .map(|(a, b)| a * b[j])
                        .sum::<f64>()
                        / total
                } else {
                    0.0
                };
                x[j] = mean.max(lo[k]).min(hi[k]);
            }
        }
        let f = self.global_value(&x)?;
        Ok((x, f))
    }
}

/// Additive noise on subgradients.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case", tag = "kind"))]
pub enum NoiseModel {
    #[default]
    None,
    /// Independent `N(0, σ²)` per coordinate.
    Gaussian { sigma: f64 },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseModel::Gaussian { sigma } if !(sigma.is_finite() && *sigma >= 0.0) => {
                Err(Error::invalid("noise sigma must be finite and nonnegative"))
            }
            _ => Ok(()),
        }
    }

    /// Per-coordinate variance.
    pub fn variance(&self) -> f64 {
        match self {
            NoiseModel::None => 0.0,
            NoiseModel::Gaussian { sigma } => sigma * sigma,
        }
    }
}

/// Block bounds `M̄_s` with `ℳ₁ = Σ M̄_s` and `ℳ₂ = (Σ M̄_s²)^{1/2}`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SubgradBounds {
    pub per_block: Vec<f64>,
    pub m1: f64,
    pub m2: f64,
}

impl SubgradBounds {
    pub fn from_blocks(per_block: Vec<f64>) -> Self {
        let m1 = per_block.iter().sum();
        let m2 = per_block.iter().map(|m| m * m).sum::<f64>().sqrt();
        SubgradBounds { per_block, m1, m2 }
    }

    /// `Σ_s p_s M̄_s`.
    pub fn weighted(&self, probabilities: &[f64]) -> f64 {
        self.per_block.iter().zip(probabilities).map(|(m, p)| m * p).sum()
    }
}

/// Objective plus noise model: the stochastic subgradient oracle `G_i(x, ξ)`.
#[derive(Debug, Clone)]
pub struct StochasticOracle<O> {
    pub objective: O,
    pub noise: NoiseModel,
}

impl<O: MultiAgentObjective> StochasticOracle<O> {
    pub fn new(objective: O, noise: NoiseModel) -> Result<Self> {
        noise.validate()?;
        Ok(StochasticOracle { objective, noise })
    }

    fn add_noise(&self, key: StreamKey, s: usize, out: &mut [f64]) {
        if let NoiseModel::Gaussian { sigma } = self.noise {
            if sigma > 0.0 {
                let mut rng = key.purpose(Purpose::Noise).sub(s as u64).rng();
                for o in out.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *o += sigma * z;
                }
            }
        }
    }

    /// Block `s` of `G_i(x, ξ)`; `key` addresses the agent/round stream.
    pub fn block_stoch_subgradient_into(
        &self,
        spec: &BlockSpec,
        agent: usize,
        x: &[f64],
        s: usize,
        key: StreamKey,
        out: &mut [f64],
    ) -> Result<()> {
        let range = spec.range(s)?;
        self.objective.block_subgradient_into(agent, x, range, out)?;
        self.add_noise(key, s, out);
        Ok(())
    }

    pub fn block_stoch_subgradient(
        &self,
        spec: &BlockSpec,
        agent: usize,
        x: &[f64],
        s: usize,
        key: StreamKey,
    ) -> Result<Vec<f64>> {
        let mut out = vec![0.0; spec.range(s)?.len()];
        self.block_stoch_subgradient_into(spec, agent, x, s, key, &mut out)?;
        Ok(out)
    }

    /// Full `G_i(x, ξ)`: the concatenation of every block draw.
    pub fn stoch_subgradient_into(
        &self,
        spec: &BlockSpec,
        agent: usize,
        x: &[f64],
        key: StreamKey,
        out: &mut [f64],
    ) -> Result<()> {
        if out.len() != spec.dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.dim(),
                found: out.len(),
            });
        }
        self.objective.subgradient_into(agent, x, out)?;
        for s in 0..spec.num_blocks() {
            self.add_noise(key, s, &mut out[spec.range(s)?]);
        }
        Ok(())
    }

    pub fn stoch_subgradient(
        &self,
        spec: &BlockSpec,
        agent: usize,
        x: &[f64],
        key: StreamKey,
    ) -> Result<Vec<f64>> {
        let mut out = vec![0.0; spec.dim()];
        self.stoch_subgradient_into(spec, agent, x, key, &mut out)?;
        Ok(out)
    }
}

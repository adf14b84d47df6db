//! Closed-form convergence bounds and compliance checks against runs.
//!
//! Notation: `N` agents, `b` blocks, `M̄_s` block subgradient bounds with
//! `ℳ₁ = Σ M̄_s`, `ℳ₂ = (Σ M̄_s²)^{1/2}`, block diameters `d_s²` with
//! `d_M² = Σ d_s²`, mixing constants `Γ, γ`, probabilities `p_s`.
//!
//! * averaged-output error at horizon `T`: `E1 + E2` with
//!   `E1 = [(4N²Γ/(1−γ) + 8N) ℳ₂ Σ p_s M̄_s + ½ N Σ M̄_s²] · (1/T) Σ_{k=0}^T α_k`
//!   and `E2 = (1/(T α_T)) Σ N d_s² / p_s`;
//! * with uniform `p` and `α_k = θ/√(k+1)`: error `≤ C/√T` where
//!   `C = [(1/b)(8N²Γ/(1−γ) + 16N) ℳ₁ℳ₂√2 + N ℳ₂²√2] θ + √2 b² N d_M² / θ`;
//! * `C` has the form `Aθ + B/θ`, minimised at `θ* = √(B/A)` with
//!   `C(θ*) = 2√(AB)`;
//! * `κ = max{(16Γ/(1−γ) + 32) ℳ₁ℳ₂ d_M², 2ℳ₂² d_M²}` and
//!   `T(ε) = ⌈8κ N³ b² / ε²⌉` rounds suffice for an `ε`-solution.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;


use crate::blockgeom::{BlockDiameter, BlockSpec};
use crate::engine::{stepsize, AgentStep, Observer, RunResult, PROBABILITY_TOL};
use crate::linalg::dot;
use crate::network::ErgodicityConstants;
use crate::oracle::SubgradBounds;
use crate::{Error, Result};

/// Slack applied to Monte Carlo estimates of expectations.
pub const MONTE_CARLO_SLACK: f64 = 0.05;

/// Absolute tolerance of the pathwise one-step inequality.
pub const PATHWISE_TOL: f64 = 1e-7;

const SQRT_2: f64 = core::f64::consts::SQRT_2;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundInputs {
    pub num_agents: usize,
    pub ergodicity: ErgodicityConstants,
    pub subgrad: SubgradBounds,
    /// `d_s²` per block.
    pub diameters: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub theta: f64,
}

impl BoundInputs {
    pub fn new(
        num_agents: usize,
        ergodicity: ErgodicityConstants,
        subgrad: SubgradBounds,
        diameters: BlockDiameter,
        probabilities: Vec<f64>,
        theta: f64,
    ) -> Result<Self> {
        let inputs = BoundInputs {
            num_agents,
            ergodicity,
            subgrad,
            diameters: diameters.d_squared,
            probabilities,
            theta,
        };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn validate(&self) -> Result<()> {
        let b = self.num_blocks();
        if self.num_agents == 0 || b == 0 {
            return Err(Error::invalid("need at least one agent and one block"));
        }
        if self.diameters.len() != b || self.probabilities.len() != b {
            return Err(Error::DimensionMismatch {
                expected: b,
                found: self.diameters.len().min(self.probabilities.len()),
            });
        }
        let ErgodicityConstants { gamma_big, gamma } = self.ergodicity;
        if !(gamma > 0.0 && gamma < 1.0 && gamma_big > 0.0) {
            return Err(Error::invalid("mixing constants need 0 < gamma < 1 and Gamma > 0"));
        }
        if self.subgrad.per_block.iter().any(|m| !(m.is_finite() && *m >= 0.0))
            || self.diameters.iter().any(|d| !(d.is_finite() && *d >= 0.0))
        {
            return Err(Error::invalid("bounds and diameters must be finite and nonnegative"));
        }
        crate::engine::validate_probabilities(&self.probabilities, b)?;
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::invalid("theta must be positive"));
        }
        Ok(())
    }

    pub fn num_blocks(&self) -> usize {
        self.subgrad.per_block.len()
    }

    /// `d_M² = Σ d_s²`.
    pub fn d_m_sq(&self) -> f64 {
        self.diameters.iter().sum()
    }

    /// The same problem seen as one block updated every round, which is how
    /// the full-vector method fits the single-block analysis.
    pub fn merged(&self) -> BoundInputs {
        BoundInputs {
            subgrad: SubgradBounds::from_blocks(vec![self.subgrad.m2]),
            diameters: vec![self.d_m_sq()],
            probabilities: vec![1.0],
            ..self.clone()
        }
    }

    /// `Σ p_s M̄_s`.
    pub fn weighted_bound(&self) -> f64 {
        self.subgrad.weighted(&self.probabilities)
    }

    fn mixing(&self) -> f64 {
        self.ergodicity.mixing_factor()
    }

    fn is_uniform(&self) -> bool {
        let u = 1.0 / self.num_blocks() as f64;
        self.probabilities.iter().all(|p| (p - u).abs() <= PROBABILITY_TOL)
    }

    /// `C = Aθ + B/θ`; returns `(A, B)`.
    fn rate_coefficients(&self) -> (f64, f64) {
        let n = self.num_agents as f64;
        let b = self.num_blocks() as f64;
        let (m1, m2) = (self.subgrad.m1, self.subgrad.m2);
        let a = (1.0 / b) * (8.0 * n * n * self.mixing() + 16.0 * n) * m1 * m2 * SQRT_2
            + n * m2 * m2 * SQRT_2;
        let bb = SQRT_2 * b * b * n * self.d_m_sq();
        (a, bb)
    }
}

/// Positive nonincreasing stepsizes `α_k`.
#[derive(Debug, Clone, PartialEq)]
pub enum StepSchedule {
    /// `θ / √(k+1)`.
    InverseSqrt { theta: f64 },
    /// `α_0, α_1, …`; must cover every index that is queried.
    Explicit(Vec<f64>),
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        match self {
            StepSchedule::InverseSqrt { theta } if !(*theta > 0.0 && theta.is_finite()) => {
                Err(Error::invalid("theta must be positive"))
            }
            StepSchedule::Explicit(a) => {
                if a.is_empty() || a.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    return Err(Error::invalid("stepsizes must be positive and finite"));
                }
                if a.windows(2).any(|w| w[1] > w[0]) {
                    return Err(Error::invalid("stepsizes must be nonincreasing"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn alpha(&self, k: usize) -> Result<f64> {
        match self {
            StepSchedule::InverseSqrt { theta } => Ok(stepsize(*theta, k)),
            StepSchedule::Explicit(a) => a
                .get(k)
                .copied()
                .ok_or_else(|| Error::invalid("explicit schedule is shorter than the horizon")),
        }
    }

    /// `Σ_{k=0}^T α_k`.
    pub fn partial_sum(&self, t: usize) -> Result<f64> {
        (0..=t).map(|k| self.alpha(k)).sum()
    }
}

/// `2θ√(T+1)`, the closed-form cap on `Σ_{k=0}^T θ/√(k+1)`.
pub fn stepsum_bound(theta: f64, t: usize) -> f64 {
    2.0 * theta * ((t + 1) as f64).sqrt()
}

/// `(E1, E2)` at horizon `T`.
pub fn averaged_error_bound(inputs: &BoundInputs, schedule: &StepSchedule, t: usize) -> Result<(f64, f64)> {
    if t == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    schedule.validate()?;
    let n = inputs.num_agents as f64;
    let m_sq: f64 = inputs.subgrad.per_block.iter().map(|m| m * m).sum();
    let coeff = (4.0 * n * n * inputs.mixing() + 8.0 * n) * inputs.subgrad.m2 * inputs.weighted_bound()
        + 0.5 * n * m_sq;
    let e1 = coeff * schedule.partial_sum(t)? / t as f64;
    let mut div = 0.0;
    for (d, p) in inputs.diameters.iter().zip(&inputs.probabilities) {
        if *d == 0.0 {
            continue;
        }
        div += if *p == 0.0 { f64::INFINITY } else { n * d / p };
    }
    let e2 = div / (t as f64 * schedule.alpha(t)?);
    Ok((e1, e2))
}

/// Rate constant `C` at stepsize scale `theta`; needs uniform `p`.
pub fn rate_constant_c(inputs: &BoundInputs, theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::invalid("theta must be positive"));
    }
    if !inputs.is_uniform() {
        return Err(Error::invalid("the rate constant assumes uniform probabilities"));
    }
    let (a, b) = inputs.rate_coefficients();
    Ok(a * theta + b / theta)
}

/// `θ* = √(d_M² b³ / [(8NΓ/(1−γ) + 16) ℳ₁ℳ₂ + ℳ₂² b])`, the minimiser of `C`.
pub fn optimal_theta(inputs: &BoundInputs) -> Result<f64> {
    let n = inputs.num_agents as f64;
    let b = inputs.num_blocks() as f64;
    let (m1, m2) = (inputs.subgrad.m1, inputs.subgrad.m2);
    let denom = (8.0 * n * inputs.mixing() + 16.0) * m1 * m2 + m2 * m2 * b;
    if !(denom > 0.0) {
        return Err(Error::invalid("subgradient bounds must be positive"));
    }
    Ok((inputs.d_m_sq() * b * b * b / denom).sqrt())
}

/// The expression for `θ*` without the square root. It is not the
/// minimiser of `C` unless it equals 1.
pub fn unrooted_theta(inputs: &BoundInputs) -> Result<f64> {
    optimal_theta(inputs).map(|t| t * t)
}

/// `C_min = 2√((16N³Γ/(1−γ) + 32N²) ℳ₁ℳ₂ d_M² b + 2N² ℳ₂² d_M² b²)`.
pub fn c_min(inputs: &BoundInputs) -> f64 {
    let n = inputs.num_agents as f64;
    let b = inputs.num_blocks() as f64;
    let (m1, m2, d) = (inputs.subgrad.m1, inputs.subgrad.m2, inputs.d_m_sq());
    let inner = (16.0 * n * n * n * inputs.mixing() + 32.0 * n * n) * m1 * m2 * d * b
        + 2.0 * n * n * m2 * m2 * d * b * b;
    2.0 * inner.sqrt()
}

/// `κ`.
pub fn kappa(inputs: &BoundInputs) -> f64 {
    let (m1, m2, d) = (inputs.subgrad.m1, inputs.subgrad.m2, inputs.d_m_sq());
    ((16.0 * inputs.mixing() + 32.0) * m1 * m2 * d).max(2.0 * m2 * m2 * d)
}

/// `T(ε) = ⌈8κN³b²/ε²⌉`.
pub fn complexity_rounds(inputs: &BoundInputs, eps: f64) -> Result<u64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let n = inputs.num_agents as f64;
    let b = inputs.num_blocks() as f64;
    let t = (8.0 * kappa(inputs) * n * n * n * b * b / (eps * eps)).ceil();
    if !(t < u64::MAX as f64) {
        return Err(Error::invalid("round count overflows"));
    }
    Ok(t as u64)
}

/// Projection-error bound `(Σ p_s M̄_s) α_k`.
pub fn projection_error_bound(inputs: &BoundInputs, alpha_k: f64) -> f64 {
    inputs.weighted_bound() * alpha_k
}

/// Cumulative consensus bound `(2N²Γ/(1−γ) + 4N)(Σ p_s M̄_s) Σ_{k=0}^T α_k`.
pub fn consensus_bound(inputs: &BoundInputs, schedule: &StepSchedule, t: usize) -> Result<f64> {
    schedule.validate()?;
    let n = inputs.num_agents as f64;
    Ok((2.0 * n * n * inputs.mixing() + 4.0 * n) * inputs.weighted_bound() * schedule.partial_sum(t)?)
}

/// Every closed-form quantity for one configuration.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateBounds {
    pub gamma_big: f64,
    pub gamma: f64,
    pub m1: f64,
    pub m2: f64,
    pub d_m_sq: f64,
    pub rounds: usize,
    pub e1: f64,
    pub e2: f64,
    /// `C` at the configured θ; `None` unless `p` is uniform.
    pub c: Option<f64>,
    pub theta_star: f64,
    pub c_min: f64,
    pub kappa: f64,
    pub eps: f64,
    pub t_of_eps: u64,
}

impl RateBounds {
    pub fn compute(inputs: &BoundInputs, rounds: usize, eps: f64) -> Result<Self> {
        inputs.validate()?;
        let schedule = StepSchedule::InverseSqrt {
            theta: inputs.theta,
        };
        let (e1, e2) = averaged_error_bound(inputs, &schedule, rounds)?;
        Ok(RateBounds {
            gamma_big: inputs.ergodicity.gamma_big,
            gamma: inputs.ergodicity.gamma,
            m1: inputs.subgrad.m1,
            m2: inputs.subgrad.m2,
            d_m_sq: inputs.d_m_sq(),
            rounds,
            e1,
            e2,
            c: rate_constant_c(inputs, inputs.theta).ok(),
            theta_star: optimal_theta(inputs)?,
            c_min: c_min(inputs),
            kappa: kappa(inputs),
            eps,
            t_of_eps: complexity_rounds(inputs, eps)?,
        })
    }

    /// `(key, value)` rows in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        let mut rows = vec![
            ("gamma_big", self.gamma_big),
            ("gamma", self.gamma),
            ("m1", self.m1),
            ("m2", self.m2),
            ("d_m_sq", self.d_m_sq),
            ("rounds", self.rounds as f64),
            ("e1", self.e1),
            ("e2", self.e2),
            ("e1_plus_e2", self.e1 + self.e2),
        ];
        if let Some(c) = self.c {
            rows.push(("c", c));
            rows.push(("c_over_sqrt_t", c / (self.rounds as f64).sqrt()));
        }
        rows.extend([
            ("theta_star", self.theta_star),
            ("c_min", self.c_min),
            ("kappa", self.kappa),
            ("eps", self.eps),
            ("t_of_eps", self.t_of_eps as f64),
        ]);
        rows
    }
}

impl fmt::Display for RateBounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.entries() {
            writeln!(f, "{k:<14} {v}")?;
        }
        Ok(())
    }
}

/// Checks the pathwise one-step inequality
/// `D(x*, x⁺) ≤ D(x*, y) − α⟨G, y − x*⟩ + ½α²‖G‖²_*` on every updated block.
/// The same check with `+α⟨G, y − x*⟩` is counted in `plus_sign_violations`;
/// that form does not follow from the mirror step and fails on ordinary paths.
#[derive(Debug, Clone)]
pub struct OneStepProbe<'a> {
    spec: &'a BlockSpec,
    optimum: &'a [f64],
    pub checks: usize,
    pub violations: usize,
    pub plus_sign_violations: usize,
    /// Largest `lhs − rhs` seen (negative when every check had room).
    pub max_excess: f64,
}

impl<'a> OneStepProbe<'a> {
    pub fn new(spec: &'a BlockSpec, optimum: &'a [f64]) -> Self {
        OneStepProbe {
            spec,
            optimum,
            checks: 0,
            violations: 0,
            plus_sign_violations: 0,
            max_excess: f64::NEG_INFINITY,
        }
    }

    fn check_block(&mut self, s: usize, step: &AgentStep<'_>, g: &[f64]) -> Result<()> {
        let r = self.spec.range(s)?;
        let star = &self.optimum[r.clone()];
        let y = &step.mixed[r.clone()];
        let next = &step.next[r];
        let lhs = self.spec.bregman_div(s, star, next)?;
        let diff: Vec<f64> = y.iter().zip(star).map(|(a, b)| a - b).collect();
        let gn = self.spec.block(s)?.dual_norm(g);
        let base = self.spec.bregman_div(s, star, y)? + 0.5 * step.alpha * step.alpha * gn * gn;
        let linear = step.alpha * dot(g, &diff);
        let excess = lhs - (base - linear);
        if lhs - (base + linear) > PATHWISE_TOL {
            self.plus_sign_violations += 1;
        }
        self.checks += 1;
        self.max_excess = self.max_excess.max(excess);
        if excess > PATHWISE_TOL {
            self.violations += 1;
        }
        Ok(())
    }
}

impl Observer for OneStepProbe<'_> {
    fn on_agent_step(&mut self, step: &AgentStep<'_>) -> Result<()> {
        match step.block {
            Some(s) => self.check_block(s, step, step.subgradient),
            None => {
                for s in 0..self.spec.num_blocks() {
                    let r = self.spec.range(s)?;
                    self.check_block(s, step, &step.subgradient[r])?;
                }
                Ok(())
            }
        }
    }
}

/// Monte Carlo means over runs of the bounded quantities.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunAggregates {
    pub runs: usize,
    pub rounds: usize,
    /// Per agent: mean of `f(x̂_h^T) − f*`.
    pub mean_final_errors: Option<Vec<f64>>,
    /// Per round: mean over agents and runs of `‖e_{i,k}‖`.
    pub mean_projection_errors: Vec<f64>,
    /// Per reference agent `j`: mean of `Σ_{k=1}^T Σ_i ‖x_{i,k} − x_{j,k}‖`.
    pub mean_distance_sums: Vec<f64>,
    /// Worst pathwise excess from a [`OneStepProbe`], if one was attached.
    pub one_step_max_excess: Option<f64>,
}

impl RunAggregates {
    /// Average runs that recorded per-round telemetry and final errors.
    pub fn from_runs(results: &[RunResult]) -> Result<Self> {
        let first = results
            .first()
            .ok_or_else(|| Error::invalid("no runs to aggregate"))?;
        let t = first.rounds;
        let n = first.final_iterates.len();
        let mut proj = vec![0.0; t];
        let mut dist = vec![0.0; n];
        let mut errs: Option<Vec<f64>> = Some(vec![0.0; n]);
        for r in results {
            if r.rounds != t || r.telemetry.len() != t || r.final_iterates.len() != n {
                return Err(Error::invalid("runs need per-round telemetry of equal shape"));
            }
            for (k, tel) in r.telemetry.iter().enumerate() {
                proj[k] += tel.projection_errors.iter().sum::<f64>() / n as f64;
                for (d, v) in dist.iter_mut().zip(&tel.distance_sums) {
                    *d += v;
                }
            }
            errs = match (errs, &r.final_errors) {
                (Some(mut acc), Some(e)) => {
                    acc.iter_mut().zip(e).for_each(|(a, v)| *a += v);
                    Some(acc)
                }
                _ => None,
            };
        }
        let m = results.len() as f64;
        proj.iter_mut().for_each(|v| *v /= m);
        dist.iter_mut().for_each(|v| *v /= m);
        Ok(RunAggregates {
            runs: results.len(),
            rounds: t,
            mean_final_errors: errs.map(|e| e.into_iter().map(|v| v / m).collect()),
            mean_projection_errors: proj,
            mean_distance_sums: dist,
            one_step_max_excess: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ComplianceEntry {
    pub quantity: String,
    pub measured: f64,
    pub bound: f64,
    /// Multiplier applied to the bound before comparing.
    pub slack: f64,
    pub holds: bool,
}

impl ComplianceEntry {
    fn new(quantity: &str, measured: f64, bound: f64, slack: f64) -> Self {
        ComplianceEntry {
            quantity: quantity.into(),
            measured,
            bound,
            slack,
            holds: measured <= bound * slack,
        }
    }

    /// `bound / measured`: how much room the bound leaves.
    pub fn dominance_factor(&self) -> f64 {
        self.bound / self.measured
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ComplianceReport {
    pub runs: usize,
    pub entries: Vec<ComplianceEntry>,
}

impl ComplianceReport {
    pub fn all_hold(&self) -> bool {
        self.entries.iter().all(|e| e.holds)
    }

    pub fn get(&self, quantity: &str) -> Option<&ComplianceEntry> {
        self.entries.iter().find(|e| e.quantity == quantity)
    }
}

/// Compare aggregates against the bounds. Expectation-based entries get
/// [`MONTE_CARLO_SLACK`]; the pathwise entry gets none.
pub fn check_run_against_bounds(agg: &RunAggregates, inputs: &BoundInputs) -> Result<ComplianceReport> {
    inputs.validate()?;
    let errors = agg
        .mean_final_errors
        .as_ref()
        .ok_or_else(|| Error::invalid("aggregates lack f* based errors"))?;
    let t = agg.rounds;
    let mc = 1.0 + MONTE_CARLO_SLACK;
    let schedule = StepSchedule::InverseSqrt {
        theta: inputs.theta,
    };
    let mut entries = Vec::new();

    let (e1, e2) = averaged_error_bound(inputs, &schedule, t)?;
    let worst = errors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    entries.push(ComplianceEntry::new("averaged_error", worst, e1 + e2, mc));
    if let Ok(c) = rate_constant_c(inputs, inputs.theta) {
        entries.push(ComplianceEntry::new(
            "averaged_error_rate",
            worst,
            c / (t as f64).sqrt(),
            mc,
        ));
    }

    // Worst round by measured/bound ratio.
    let mut proj = ComplianceEntry::new("projection_error", 0.0, 0.0, mc);
    let mut worst_ratio = f64::NEG_INFINITY;
    for (k, &m) in agg.mean_projection_errors.iter().enumerate() {
        let bound = projection_error_bound(inputs, stepsize(inputs.theta, k));
        let ratio = if bound > 0.0 { m / bound } else if m > 0.0 { f64::INFINITY } else { 0.0 };
        if ratio > worst_ratio {
            worst_ratio = ratio;
            proj = ComplianceEntry::new("projection_error", m, bound, mc);
        }
    }
    entries.push(proj);

    let cons = consensus_bound(inputs, &schedule, t)?;
    let worst_sum = agg
        .mean_distance_sums
        .iter()
        .copied()
        .fold(0.0, f64::max);
    entries.push(ComplianceEntry::new("consensus_distance", worst_sum, cons, mc));

    if let Some(excess) = agg.one_step_max_excess {
        let mut e = ComplianceEntry::new("one_step_descent", excess, PATHWISE_TOL, 1.0);
        e.holds = excess <= PATHWISE_TOL;
        entries.push(e);
    }
    Ok(ComplianceReport {
        runs: agg.runs,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_inputs(n: usize, b: usize, theta: f64) -> BoundInputs {
        let per = 1.0 / (b as f64).sqrt();
        // ℳ₁ = ℳ₂ = 1 only for b = 1; tests with b > 1 set fields directly.
        BoundInputs {
            num_agents: n,
            ergodicity: ErgodicityConstants {
                gamma_big: 1.0,
                gamma: 0.5,
            },
            subgrad: SubgradBounds {
                per_block: vec![per; b],
                m1: 1.0,
                m2: 1.0,
            },
            diameters: vec![1.0 / b as f64; b],
            probabilities: vec![1.0 / b as f64; b],
            theta,
        }
    }

    #[test]
    fn merged_inputs_keep_the_sums() {
        let inputs = BoundInputs {
            subgrad: SubgradBounds::from_blocks(vec![3.0, 4.0]),
            diameters: vec![1.0, 2.0],
            probabilities: vec![0.25, 0.75],
            ..unit_inputs(3, 2, 0.5)
        };
        let m = inputs.merged();
        m.validate().unwrap();
        assert_eq!(m.num_blocks(), 1);
        assert_eq!(m.subgrad.m1, 5.0);
        assert_eq!(m.subgrad.m2, 5.0);
        assert_eq!(m.d_m_sq(), 3.0);
        assert_eq!(m.weighted_bound(), 5.0);
        assert!(inputs.weighted_bound() < m.weighted_bound());
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn averaged_error_example() {
        let inputs = unit_inputs(1, 1, 1.0);
        let sched = StepSchedule::InverseSqrt { theta: 1.0 };
        let (e1, e2) = averaged_error_bound(&inputs, &sched, 3).unwrap();
        let stepsum = 1.0 + 1.0 / 2f64.sqrt() + 1.0 / 3f64.sqrt() + 0.5;
        assert!(rel(e1, 16.5 * stepsum / 3.0) < 1e-14);
        assert!((e1 - 15.315).abs() < 1e-3);
        assert!(rel(e2, 2.0 / 3.0) < 1e-14);
    }

    #[test]
    fn rate_constant_edge_cases() {
        let sched = StepSchedule::InverseSqrt { theta: 1.0 };
        let mut inputs = unit_inputs(1, 1, 1.0);
        inputs.diameters = vec![0.0];
        assert_eq!(averaged_error_bound(&inputs, &sched, 3).unwrap().1, 0.0);

        let mut two = unit_inputs(2, 2, 1.0);
        two.probabilities = vec![1.0, 0.0];
        assert!(averaged_error_bound(&two, &sched, 5).unwrap().1.is_infinite());

        // The first piece of E1 is linear in Σ p_s M̄_s.
        let mut a = unit_inputs(3, 2, 1.0);
        a.subgrad.per_block = vec![0.0, 0.0];
        a.subgrad.m2 = 1.0;
        let mut b = a.clone();
        a.subgrad.per_block = vec![0.5, 0.5];
        b.subgrad.per_block = vec![1.0, 1.0];
        let n = 3.0;
        let half = |i: &BoundInputs| {
            let m_sq: f64 = i.subgrad.per_block.iter().map(|m| m * m).sum();
            let e1 = averaged_error_bound(i, &sched, 10).unwrap().0;
            e1 - 0.5 * n * m_sq * sched.partial_sum(10).unwrap() / 10.0
        };
        assert!(rel(half(&b), 2.0 * half(&a)) < 1e-12);
    }

    #[test]
    fn rate_constant_example() {
        let inputs = unit_inputs(1, 1, 1.0);
        let c = rate_constant_c(&inputs, 1.0).unwrap();
        assert!(rel(c, 34.0 * SQRT_2) < 1e-14);
        assert!((c - 48.083).abs() < 1e-3);
        assert!(rate_constant_c(&inputs, 0.0).is_err());
        let mut skew = unit_inputs(2, 2, 1.0);
        skew.probabilities = vec![0.3, 0.7];
        assert!(rate_constant_c(&skew, 1.0).is_err());
    }

    #[test]
    fn optimal_theta_is_the_minimiser() {
        let inputs = unit_inputs(2, 1, 1.0);
        let theta = optimal_theta(&inputs).unwrap();
        assert!(rel(theta, (1.0f64 / 49.0).sqrt()) < 1e-14);
        assert!(rel(unrooted_theta(&inputs).unwrap(), 1.0 / 49.0) < 1e-14);
        let c_star = rate_constant_c(&inputs, theta).unwrap();
        assert!(rel(c_star, c_min(&inputs)) < 1e-12);
        // The unrooted expression gives a strictly larger C.
        assert!(rate_constant_c(&inputs, 1.0 / 49.0).unwrap() > c_star * 1.5);

        let mut wide = inputs.clone();
        wide.diameters = vec![4.0];
        assert!(rel(optimal_theta(&wide).unwrap(), 2.0 * theta) < 1e-14);
    }

    #[test]
    fn c_min_is_dominated_by_complexity_chain() {
        let inputs = unit_inputs(3, 2, 1.0);
        let b = 2.0;
        let n = 3.0;
        assert!(c_min(&inputs) <= 2.0 * (2.0 * kappa(&inputs) * b * b * n * n * n).sqrt());
    }

    #[test]
    fn complexity_example_and_scalings() {
        let inputs = unit_inputs(1, 1, 1.0);
        assert_eq!(kappa(&inputs), 64.0);
        assert_eq!(complexity_rounds(&inputs, 1.0).unwrap(), 512);
        assert_eq!(complexity_rounds(&inputs, 0.5).unwrap(), 2048);
        assert!(complexity_rounds(&inputs, 0.0).is_err());
    }

    #[test]
    fn projection_and_consensus_bounds() {
        let mut inputs = unit_inputs(1, 2, 0.1);
        inputs.subgrad = SubgradBounds::from_blocks(vec![2.0, 4.0]);
        inputs.probabilities = vec![0.5, 0.5];
        assert!(rel(projection_error_bound(&inputs, 0.1), 0.3) < 1e-15);

        let zero = BoundInputs {
            subgrad: SubgradBounds::from_blocks(vec![0.0, 0.0]),
            ..inputs.clone()
        };
        let sched = StepSchedule::InverseSqrt { theta: 1.0 };
        assert_eq!(projection_error_bound(&zero, 0.5), 0.0);
        assert_eq!(consensus_bound(&zero, &sched, 10).unwrap(), 0.0);

        // N = 1: coefficient 2Γ/(1−γ) + 4 = 8 here.
        let one = unit_inputs(1, 1, 1.0);
        let expected = 8.0 * 1.0 * sched.partial_sum(4).unwrap();
        assert!(rel(consensus_bound(&one, &sched, 4).unwrap(), expected) < 1e-14);
    }

    #[test]
    fn stepsum_cap() {
        for t in [1usize, 10, 100, 10_000] {
            let s = StepSchedule::InverseSqrt { theta: 1.3 }.partial_sum(t).unwrap();
            assert!(s <= stepsum_bound(1.3, t), "{t}");
        }
    }

    #[test]
    fn explicit_schedules() {
        let s = StepSchedule::Explicit(vec![1.0, 0.5, 0.5, 0.25]);
        assert_eq!(s.partial_sum(3).unwrap(), 2.25);
        assert!(s.alpha(4).is_err());
        assert!(StepSchedule::Explicit(vec![0.5, 1.0]).validate().is_err());
        assert!(StepSchedule::Explicit(vec![]).validate().is_err());
    }

    #[test]
    fn rate_bounds_table() {
        let inputs = unit_inputs(1, 1, 1.0);
        let tb = RateBounds::compute(&inputs, 3, 1.0).unwrap();
        assert_eq!(tb.t_of_eps, 512);
        assert!(tb.c.is_some());
        assert_eq!(tb.entries().len(), 16);
    }
}

//! Synchronous DSBCD and DSGD rounds.
//!
//! One round `k` does, for every agent `i`:
//!
//! 1. consensus `y_i = Σ_j [P_k]_ij x_j`;
//! 2. (DSBCD) sample a block `ζ ~ p`, query block `ζ` of the noisy subgradient
//!    at the agent's own iterate `x_i` (not at `y_i`), and replace block `ζ` of
//!    `y_i` by its Bregman projection step; every other block is copied from
//!    `y_i`;
//! 3. (DSGD) query the full noisy subgradient at `x_i` and project every
//!    block of `y_i`.
//!
//! The running average `x̂_i^T = (1/T) Σ_{k=1}^T x_{i,k}` excludes the start
//! point. Because stepsizes do not depend on the horizon, a run to `T_max`
//! passes through every shorter run with the same seed, which is what
//! checkpoints exploit.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::blockgeom::BlockSpec;
use crate::linalg::{dist2, norm2};
use crate::network::MixingSource;
use crate::oracle::{MultiAgentObjective, StochasticOracle};
use crate::rng::{Purpose, StreamKey};
use crate::{Error, Result};

/// Tolerance on the probability simplex.
pub const PROBABILITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Algorithm {
    /// One randomly sampled block per agent and round.
    Dsbcd,
    /// Full subgradient and projection on every block.
    Dsgd,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Dsbcd => "DSBCD",
            Algorithm::Dsgd => "DSGD",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AlgoConfig {
    pub algorithm: Algorithm,
    /// Horizon `T`.
    pub rounds: usize,
    /// Stepsize scale: `α_k = θ / √(k+1)`.
    pub theta: f64,
    /// Block sampling probabilities `p_s`.
    pub probabilities: Vec<f64>,
    /// Per-agent start points; `None` means the zero vector for everyone.
    pub initial_points: Option<Vec<Vec<f64>>>,
}

impl AlgoConfig {
    pub fn new(algorithm: Algorithm, rounds: usize, theta: f64, probabilities: Vec<f64>) -> Self {
        AlgoConfig {
            algorithm,
            rounds,
            theta,
            probabilities,
            initial_points: None,
        }
    }

    /// Uniform `p_s = 1/b`.
    pub fn uniform(algorithm: Algorithm, rounds: usize, theta: f64, num_blocks: usize) -> Self {
        AlgoConfig::new(
            algorithm,
            rounds,
            theta,
            vec![1.0 / num_blocks as f64; num_blocks],
        )
    }

    pub fn validate(&self, spec: &BlockSpec, num_agents: usize) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::invalid("rounds must be at least 1"));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::invalid("theta must be positive and finite"));
        }
        validate_probabilities(&self.probabilities, spec.num_blocks())?;
        match &self.initial_points {
            Some(points) => {
                if points.len() != num_agents {
                    return Err(Error::DimensionMismatch {
                        expected: num_agents,
                        found: points.len(),
                    });
                }
                for (i, x) in points.iter().enumerate() {
                    if x.len() != spec.dim() {
                        return Err(Error::DimensionMismatch {
                            expected: spec.dim(),
                            found: x.len(),
                        });
                    }
                    if !spec.contains(x) {
                        return Err(Error::InvalidParameter(alloc::format!(
                            "initial point of agent {i} is infeasible"
                        )));
                    }
                }
            }
            None => {
                if !spec.contains(&vec![0.0; spec.dim()]) {
                    return Err(Error::invalid(
                        "the zero vector is infeasible; supply initial points",
                    ));
                }
            }
        }
        Ok(())
    }

    fn start(&self, agent: usize, dim: usize) -> Vec<f64> {
        match &self.initial_points {
            Some(points) => points[agent].clone(),
            None => vec![0.0; dim],
        }
    }
}

pub fn validate_probabilities(p: &[f64], num_blocks: usize) -> Result<()> {
    if p.len() != num_blocks {
        return Err(Error::DimensionMismatch {
            expected: num_blocks,
            found: p.len(),
        });
    }
    if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid("probabilities must lie in [0, 1]"));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROBABILITY_TOL {
        return Err(Error::invalid("probabilities must sum to 1"));
    }
    Ok(())
}

/// `α_k = θ / √(k+1)`.
#[inline]
pub fn stepsize(theta: f64, k: usize) -> f64 {
    theta / ((k + 1) as f64).sqrt()
}

/// Draw a block index from `p` with one uniform variate.
pub fn sample_block<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (s, &ps) in p.iter().enumerate() {
        if ps <= 0.0 {
            continue;
        }
        acc += ps;
        last = s;
        if u < acc {
            return s;
        }
    }
    last
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AgentState {
    /// `x_{i,k}`.
    pub current: Vec<f64>,
    /// `Σ_{k=1}^t x_{i,k}`.
    pub avg_accumulator: Vec<f64>,
    pub rounds_accumulated: usize,
}

impl AgentState {
    pub fn new(start: Vec<f64>) -> Self {
        AgentState {
            avg_accumulator: vec![0.0; start.len()],
            current: start,
            rounds_accumulated: 0,
        }
    }

    /// `x̂ = (1/t) Σ_{k=1}^t x_{i,k}`; the start point before any round.
    pub fn average(&self) -> Vec<f64> {
        if self.rounds_accumulated == 0 {
            return self.current.clone();
        }
        let t = self.rounds_accumulated as f64;
        self.avg_accumulator.iter().map(|v| v / t).collect()
    }
}

/// `y_i = Σ_j P_ij x_j` for every agent, skipping zero weights.
pub fn consensus_step<S: MixingSource + ?Sized>(
    schedule: &S,
    k: usize,
    states: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let n = schedule.num_agents();
    if states.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: states.len(),
        });
    }
    let dim = states.first().map_or(0, Vec::len);
    if let Some(x) = states.iter().find(|x| x.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: x.len(),
        });
    }
    let p = schedule.matrix_at(k);
    let xs: Vec<&[f64]> = states.iter().map(Vec::as_slice).collect();
    let mut out = vec![vec![0.0; dim]; n];
    mix_into(p.rows(), &xs, &mut out);
    Ok(out)
}

fn mix_into<'a>(rows: impl Iterator<Item = &'a [f64]>, states: &[&[f64]], out: &mut [Vec<f64>]) {
    for (row, y) in rows.zip(out.iter_mut()) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (w, x) in row.iter().zip(states) {
            if *w == 0.0 {
                continue;
            }
            for (yv, xv) in y.iter_mut().zip(x.iter()) {
                *yv += w * xv;
            }
        }
    }
}

/// What happened to one agent in one round, passed to [`Observer`]s.
#[derive(Debug)]
pub struct AgentStep<'a> {
    pub round: usize,
    pub agent: usize,
    pub alpha: f64,
    /// Sampled block (DSBCD) or `None` when every block was updated (DSGD).
    pub block: Option<usize>,
    /// `x_{i,k}`, the point where the subgradient was queried.
    pub previous: &'a [f64],
    /// `y_{i,k}`.
    pub mixed: &'a [f64],
    /// `x_{i,k+1}`.
    pub next: &'a [f64],
    /// Block `ζ` of the noisy subgradient (DSBCD) or the full one (DSGD).
    pub subgradient: &'a [f64],
}

/// Hooks into a running simulation.
pub trait Observer {
    fn on_agent_step(&mut self, _step: &AgentStep<'_>) -> Result<()> {
        Ok(())
    }

    fn on_round_end(&mut self, _round: usize, _states: &[AgentState]) -> Result<()> {
        Ok(())
    }
}

impl Observer for () {}

impl<A: Observer, B: Observer> Observer for (A, B) {
    fn on_agent_step(&mut self, step: &AgentStep<'_>) -> Result<()> {
        self.0.on_agent_step(step)?;
        self.1.on_agent_step(step)
    }

    fn on_round_end(&mut self, round: usize, states: &[AgentState]) -> Result<()> {
        self.0.on_round_end(round, states)?;
        self.1.on_round_end(round, states)
    }
}

/// Measurements of round `k`, describing the iterates `x_{·,k+1}` it produced.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RoundTelemetry {
    pub round: usize,
    /// `f(x_{i,k+1}) − f*`, present when objective recording is on.
    pub objective_errors: Option<Vec<f64>>,
    /// `max_{i,j} ‖x_{i,k+1} − x_{j,k+1}‖`.
    pub consensus_spread: f64,
    /// `Σ_i ‖x_{i,k+1} − x_{j,k+1}‖` for every reference agent `j`.
    pub distance_sums: Vec<f64>,
    /// `‖e_{i,k}‖ = ‖x_{i,k+1} − y_{i,k}‖`.
    pub projection_errors: Vec<f64>,
    /// `ζ_{i,k}`; `None` for DSGD.
    pub sampled_blocks: Vec<Option<usize>>,
    /// Number of block projections performed per agent.
    pub projections_per_agent: usize,
    /// `x̄_{k+1}`.
    pub network_average: Vec<f64>,
}

/// Per-agent errors of the averaged outputs after `rounds` rounds.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Checkpoint {
    pub rounds: usize,
    /// `f(x̂_i^T) − f*`.
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunResult {
    pub algorithm: Algorithm,
    pub rounds: usize,
    pub telemetry: Vec<RoundTelemetry>,
    /// `x̂_i^T`.
    pub averaged_outputs: Vec<Vec<f64>>,
    /// `x_{i,T}`.
    pub final_iterates: Vec<Vec<f64>>,
    /// `f(x̂_i^T) − f*` when an optimum was supplied.
    pub final_errors: Option<Vec<f64>>,
    pub checkpoints: Vec<Checkpoint>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    /// Keep a [`RoundTelemetry`] for every round.
    pub record_rounds: bool,
    /// Evaluate `f(x_{i,k})` in telemetry (needs `optimum`).
    pub record_objective: bool,
    /// `f*`, enabling error reporting.
    pub optimum: Option<f64>,
    /// Round counts at which averaged-output errors are reported.
    pub checkpoints: Vec<usize>,
}

/// A configured simulation in progress.
pub struct Simulation<'a, O, S: ?Sized> {
    spec: &'a BlockSpec,
    network: &'a S,
    oracle: &'a StochasticOracle<O>,
    config: &'a AlgoConfig,
    key: StreamKey,
    states: Vec<AgentState>,
    round: usize,
    mixed: Vec<Vec<f64>>,
    next: Vec<f64>,
    grad: Vec<f64>,
}

impl<'a, O: MultiAgentObjective, S: MixingSource + ?Sized> Simulation<'a, O, S> {
    /// `key` addresses the run; agent and round are filled in per draw.
    pub fn new(
        spec: &'a BlockSpec,
        network: &'a S,
        oracle: &'a StochasticOracle<O>,
        config: &'a AlgoConfig,
        key: StreamKey,
    ) -> Result<Self> {
        let n = network.num_agents();
        if oracle.objective.num_agents() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: oracle.objective.num_agents(),
            });
        }
        if oracle.objective.dim() != spec.dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.dim(),
                found: oracle.objective.dim(),
            });
        }
        config.validate(spec, n)?;
        let states = (0..n)
            .map(|i| AgentState::new(config.start(i, spec.dim())))
            .collect();
        Ok(Simulation {
            spec,
            network,
            oracle,
            config,
            key,
            states,
            round: 0,
            mixed: vec![vec![0.0; spec.dim()]; n],
            next: vec![0.0; spec.dim()],
            grad: vec![0.0; spec.dim()],
        })
    }

    pub fn states(&self) -> &[AgentState] {
        &self.states
    }

    /// Index of the next round to execute.
    pub fn round(&self) -> usize {
        self.round
    }

    /// Execute one round. Telemetry is computed only when `record` is set.
    pub fn step<Obs: Observer + ?Sized>(
        &mut self,
        observer: &mut Obs,
        record: Option<&RunOptions>,
    ) -> Result<Option<RoundTelemetry>> {
        let k = self.round;
        let alpha = stepsize(self.config.theta, k);
        let n = self.states.len();
        {
            let p = self.network.matrix_at(k);
            let current: Vec<&[f64]> = self.states.iter().map(|s| s.current.as_slice()).collect();
            mix_into(p.rows(), &current, &mut self.mixed);
        }

        let mut proj_errors = Vec::new();
        let mut blocks = Vec::new();
        for i in 0..n {
            let key = self.key.agent(i).round(k);
            let block = self
                .agent_update(i, key, alpha)
                .map_err(|e| e.in_round(k, i))?;
            let g_len = match block {
                Some(s) => self.spec.sizes()[s],
                None => self.spec.dim(),
            };
            observer
                .on_agent_step(&AgentStep {
                    round: k,
                    agent: i,
                    alpha,
                    block,
                    previous: &self.states[i].current,
                    mixed: &self.mixed[i],
                    next: &self.next,
                    subgradient: &self.grad[..g_len],
                })
                .map_err(|e| e.in_round(k, i))?;
            if record.is_some() {
                proj_errors.push(dist2(&self.next, &self.mixed[i]));
                blocks.push(block);
            }
            // Stage x_{i,k+1} in `mixed` until every agent has used x_{·,k}.
            core::mem::swap(&mut self.mixed[i], &mut self.next);
        }
        for (state, x) in self.states.iter_mut().zip(&mut self.mixed) {
            core::mem::swap(&mut state.current, x);
            for (acc, v) in state.avg_accumulator.iter_mut().zip(&state.current) {
                *acc += v;
            }
            state.rounds_accumulated += 1;
        }
        self.round += 1;
        observer.on_round_end(k, &self.states)?;

        let Some(opts) = record else {
            return Ok(None);
        };
        Ok(Some(self.telemetry(k, proj_errors, blocks, opts)?))
    }

    /// Writes `x_{i,k+1}` into `self.next` and `G` into `self.grad`.
    fn agent_update(&mut self, i: usize, key: StreamKey, alpha: f64) -> Result<Option<usize>> {
        let x = &self.states[i].current;
        let y = &self.mixed[i];
        match self.config.algorithm {
            Algorithm::Dsbcd => {
                let mut rng = key.purpose(Purpose::BlockSample).rng();
                let s = sample_block(&self.config.probabilities, &mut rng);
                let r = self.spec.range(s)?;
                let g = &mut self.grad[..r.len()];
                self.oracle
                    .block_stoch_subgradient_into(self.spec, i, x, s, key, g)?;
                self.next.copy_from_slice(y);
                self.spec
                    .block_project_into(s, &y[r.clone()], g, alpha, &mut self.next[r])?;
                Ok(Some(s))
            }
            Algorithm::Dsgd => {
                self.oracle
                    .stoch_subgradient_into(self.spec, i, x, key, &mut self.grad)?;
                self.spec.full_project_into(y, &self.grad, alpha, &mut self.next)?;
                Ok(None)
            }
        }
    }

    fn telemetry(
        &self,
        k: usize,
        projection_errors: Vec<f64>,
        sampled_blocks: Vec<Option<usize>>,
        opts: &RunOptions,
    ) -> Result<RoundTelemetry> {
        let n = self.states.len();
        let xs: Vec<&[f64]> = self.states.iter().map(|s| s.current.as_slice()).collect();
        let mut spread: f64 = 0.0;
        let mut distance_sums = vec![0.0; n];
        for i in 0..n {
            for j in i + 1..n {
                let d = dist2(xs[i], xs[j]);
                spread = spread.max(d);
                distance_sums[i] += d;
                distance_sums[j] += d;
            }
        }
        let mut network_average = vec![0.0; self.spec.dim()];
        for x in &xs {
            for (a, v) in network_average.iter_mut().zip(x.iter()) {
                *a += v / n as f64;
            }
        }
        let objective_errors = match (opts.record_objective, opts.optimum) {
            (true, Some(fstar)) => Some(
                xs.iter()
                    .map(|x| Ok(self.oracle.objective.global_value(x)? - fstar))
                    .collect::<Result<Vec<_>>>()?,
            ),
            (true, None) => return Err(Error::invalid("objective recording needs the optimum")),
            _ => None,
        };
        Ok(RoundTelemetry {
            round: k,
            objective_errors,
            consensus_spread: spread,
            distance_sums,
            projection_errors,
            sampled_blocks,
            projections_per_agent: match self.config.algorithm {
                Algorithm::Dsbcd => 1,
                Algorithm::Dsgd => self.spec.num_blocks(),
            },
            network_average,
        })
    }

    /// `f(x̂_i) − f*` for every agent at the current round count.
    pub fn averaged_errors(&self, fstar: f64) -> Result<Vec<f64>> {
        self.states
            .iter()
            .map(|s| Ok(self.oracle.objective.global_value(&s.average())? - fstar))
            .collect()
    }

    /// Run the remaining rounds up to the configured horizon.
    pub fn run<Obs: Observer + ?Sized>(mut self, opts: &RunOptions, observer: &mut Obs) -> Result<RunResult> {
        if opts.record_objective && opts.optimum.is_none() {
            return Err(Error::invalid("objective recording needs the optimum"));
        }
        let mut checkpoints: Vec<usize> = opts.checkpoints.clone();
        checkpoints.sort_unstable();
        checkpoints.dedup();
        if checkpoints.iter().any(|&t| t == 0 || t > self.config.rounds) {
            return Err(Error::invalid("checkpoints must lie in 1..=rounds"));
        }
        if !checkpoints.is_empty() && opts.optimum.is_none() {
            return Err(Error::invalid("checkpoints need the optimum"));
        }
        let mut telemetry = Vec::new();
        let mut reached = Vec::with_capacity(checkpoints.len());
        let mut next_cp = checkpoints.iter().peekable();
        while self.round < self.config.rounds {
            let rec = if opts.record_rounds { Some(opts) } else { None };
            if let Some(t) = self.step(observer, rec)? {
                telemetry.push(t);
            }
            if next_cp.peek() == Some(&&self.round) {
                next_cp.next();
                let fstar = opts.optimum.unwrap_or_default();
                reached.push(Checkpoint {
                    rounds: self.round,
                    errors: self.averaged_errors(fstar)?,
                });
            }
        }
        let averaged_outputs: Vec<Vec<f64>> = self.states.iter().map(AgentState::average).collect();
        let final_errors = match opts.optimum {
            Some(fstar) => Some(self.averaged_errors(fstar)?),
            None => None,
        };
        Ok(RunResult {
            algorithm: self.config.algorithm,
            rounds: self.round,
            telemetry,
            averaged_outputs,
            final_iterates: self.states.into_iter().map(|s| s.current).collect(),
            final_errors,
            checkpoints: reached,
        })
    }
}

/// Build and run a simulation in one call.
pub fn run<O: MultiAgentObjective, S: MixingSource + ?Sized>(
    spec: &BlockSpec,
    network: &S,
    oracle: &StochasticOracle<O>,
    config: &AlgoConfig,
    key: StreamKey,
    opts: &RunOptions,
) -> Result<RunResult> {
    Simulation::new(spec, network, oracle, config, key)?.run(opts, &mut ())
}

/// Records every agent's iterate after each round.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryRecorder {
    /// `iterates[k][i] = x_{i,k+1}`.
    pub iterates: Vec<Vec<Vec<f64>>>,
}

impl Observer for TrajectoryRecorder {
    fn on_round_end(&mut self, _round: usize, states: &[AgentState]) -> Result<()> {
        self.iterates
            .push(states.iter().map(|s| s.current.clone()).collect());
        Ok(())
    }
}

/// Largest Euclidean norm over a set of vectors.
pub fn max_norm(vectors: &[Vec<f64>]) -> f64 {
    vectors.iter().map(|v| norm2(v)).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::network::{ExplicitSchedule, MixingKind, MixingSchedule, NetworkParams};
    use crate::oracle::{NoiseModel, QuadraticSensorObjective};

    fn scalar_problem() -> (BlockSpec, ExplicitSchedule, StochasticOracle<QuadraticSensorObjective>) {
        let spec = BlockSpec::uniform_box(&[1], -1.0, 1.0).unwrap();
        let net = ExplicitSchedule::identity(NetworkParams::new(1, 0.5, 1).unwrap());
        let obj = QuadraticSensorObjective::new(vec![1.0], vec![vec![0.0]]).unwrap();
        (spec, net, StochasticOracle::new(obj, NoiseModel::None).unwrap())
    }

    #[test]
    fn stepsizes() {
        assert_eq!(stepsize(1.0, 0), 1.0);
        assert_eq!(stepsize(1.0, 3), 0.5);
        let sum: f64 = (0..=3).map(|k| stepsize(1.0, k)).sum();
        assert!((sum - 2.784_457_050_376_173).abs() < 1e-12);
        assert!(sum <= 4.0);
    }

    #[test]
    fn consensus_examples() {
        let uniform = MixingSchedule::new(
            MixingKind::CompleteUniform,
            NetworkParams::new(2, 0.5, 1).unwrap(),
            0,
        )
        .unwrap();
        let y = consensus_step(&uniform, 0, &[vec![0.0, 2.0], vec![2.0, 0.0]]).unwrap();
        assert_eq!(y, vec![vec![1.0, 1.0], vec![1.0, 1.0]]);

        let id = ExplicitSchedule::identity(NetworkParams::new(2, 0.5, 1).unwrap());
        let xs = vec![vec![0.3, -0.1], vec![0.7, 0.2]];
        assert_eq!(consensus_step(&id, 5, &xs).unwrap(), xs);

        let ring = MixingSchedule::new(
            MixingKind::PeriodicRingParts,
            NetworkParams::new(3, 0.2, 3).unwrap(),
            0,
        )
        .unwrap();
        let xs = vec![vec![1.0], vec![2.0], vec![4.0]];
        let y = consensus_step(&ring, 1, &xs).unwrap();
        let p: Matrix = ring.matrix_at(1).into_owned();
        for i in 0..3 {
            let direct: f64 = (0..3).map(|j| p[(i, j)] * xs[j][0]).sum();
            assert_eq!(y[i][0], direct);
        }
        assert!(consensus_step(&ring, 0, &xs[..2]).is_err());
    }

    #[test]
    fn scalar_hand_trace() {
        // f = x², α_0 = 0.5: x_1 = clip(1 − 0.5·2) = 0, then g = 0 keeps it there.
        let (spec, net, oracle) = scalar_problem();
        for algorithm in [Algorithm::Dsbcd, Algorithm::Dsgd] {
            let mut cfg = AlgoConfig::new(algorithm, 3, 0.5, vec![1.0]);
            cfg.initial_points = Some(vec![vec![1.0]]);
            let mut rec = TrajectoryRecorder::default();
            let res = Simulation::new(&spec, &net, &oracle, &cfg, StreamKey::new(0))
                .unwrap()
                .run(&RunOptions::default(), &mut rec)
                .unwrap();
            assert_eq!(rec.iterates[0][0], vec![0.0]);
            assert_eq!(rec.iterates[2][0], vec![0.0]);
            assert_eq!(res.averaged_outputs[0], vec![0.0]);
        }
    }

    #[test]
    fn single_round_average_is_first_iterate() {
        let (spec, net, oracle) = scalar_problem();
        let mut cfg = AlgoConfig::new(Algorithm::Dsbcd, 1, 0.25, vec![1.0]);
        cfg.initial_points = Some(vec![vec![1.0]]);
        let res = run(&spec, &net, &oracle, &cfg, StreamKey::new(0), &RunOptions::default()).unwrap();
        assert_eq!(res.averaged_outputs, res.final_iterates);
        assert_eq!(res.final_iterates[0], vec![0.5]);
    }

    #[test]
    fn degenerate_probabilities_freeze_other_blocks() {
        let spec = BlockSpec::uniform_box(&[2, 2], -1.0, 1.0).unwrap();
        let params = NetworkParams::new(3, 0.2, 3).unwrap();
        let net = MixingSchedule::new(MixingKind::PeriodicRingParts, params, 0).unwrap();
        let obj = QuadraticSensorObjective::generate(3, 4, StreamKey::new(1)).unwrap();
        let oracle = StochasticOracle::new(obj, NoiseModel::Gaussian { sigma: 1.0 }).unwrap();
        let mut cfg = AlgoConfig::new(Algorithm::Dsbcd, 20, 1.0, vec![1.0, 0.0]);
        let starts = vec![vec![0.1, 0.2, 0.3, 0.4], vec![0.5, 0.6, -0.7, 0.8], vec![0.0; 4]];
        cfg.initial_points = Some(starts.clone());
        let mut rec = TrajectoryRecorder::default();
        Simulation::new(&spec, &net, &oracle, &cfg, StreamKey::new(2))
            .unwrap()
            .run(&RunOptions::default(), &mut rec)
            .unwrap();
        // Block 2 evolves by consensus alone.
        let mut tail: Vec<Vec<f64>> = starts.iter().map(|x| x[2..].to_vec()).collect();
        for (k, round) in rec.iterates.iter().enumerate() {
            tail = consensus_step(&net, k, &tail).unwrap();
            for (x, t) in round.iter().zip(&tail) {
                assert_eq!(&x[2..], t.as_slice());
            }
        }
    }

    #[test]
    fn telemetry_shapes_and_support() {
        let spec = BlockSpec::uniform_box(&[2, 3], -1.0, 1.0).unwrap();
        let params = NetworkParams::with_default_delta(4, 1).unwrap();
        let net = MixingSchedule::new(MixingKind::RandomMetropolis { edge_probability: 0.3 }, params, 7)
            .unwrap();
        let obj = QuadraticSensorObjective::generate(4, 5, StreamKey::new(3)).unwrap();
        let (_, fstar) = obj.exact_optimum(&spec).unwrap();
        let oracle = StochasticOracle::new(obj, NoiseModel::Gaussian { sigma: 0.5 }).unwrap();
        let opts = RunOptions {
            record_rounds: true,
            record_objective: true,
            optimum: Some(fstar),
            checkpoints: vec![5, 10],
        };
        for algorithm in [Algorithm::Dsbcd, Algorithm::Dsgd] {
            let cfg = AlgoConfig::uniform(algorithm, 10, 1.0, 2);
            let res = run(&spec, &net, &oracle, &cfg, StreamKey::new(4), &opts).unwrap();
            assert_eq!(res.telemetry.len(), 10);
            assert_eq!(res.checkpoints.len(), 2);
            assert_eq!(Some(&res.checkpoints[1].errors), res.final_errors.as_ref());
            for t in &res.telemetry {
                assert_eq!(t.projection_errors.len(), 4);
                assert!(t.objective_errors.as_ref().unwrap().iter().all(|e| *e >= -1e-12));
                match algorithm {
                    Algorithm::Dsbcd => {
                        assert!(t.sampled_blocks.iter().all(Option::is_some));
                        assert_eq!(t.projections_per_agent, 1);
                    }
                    Algorithm::Dsgd => assert_eq!(t.projections_per_agent, 2),
                }
            }
        }
    }

    #[test]
    fn determinism() {
        let spec = BlockSpec::uniform_box(&[2, 2], -1.0, 1.0).unwrap();
        let params = NetworkParams::with_default_delta(3, 1).unwrap();
        let net = MixingSchedule::new(MixingKind::RandomMetropolis { edge_probability: 0.5 }, params, 1)
            .unwrap();
        let obj = QuadraticSensorObjective::generate(3, 4, StreamKey::new(1)).unwrap();
        let oracle = StochasticOracle::new(obj, NoiseModel::Gaussian { sigma: 1.0 }).unwrap();
        let cfg = AlgoConfig::uniform(Algorithm::Dsbcd, 50, 1.0, 2);
        let opts = RunOptions {
            record_rounds: true,
            ..RunOptions::default()
        };
        let a = run(&spec, &net, &oracle, &cfg, StreamKey::new(9), &opts).unwrap();
        let b = run(&spec, &net, &oracle, &cfg, StreamKey::new(9), &opts).unwrap();
        assert_eq!(a, b);
        let c = run(&spec, &net, &oracle, &cfg, StreamKey::new(10), &opts).unwrap();
        assert_ne!(a.final_iterates, c.final_iterates);
    }

    #[test]
    fn config_validation() {
        let spec = BlockSpec::uniform_box(&[2, 2], -1.0, 1.0).unwrap();
        let ok = AlgoConfig::uniform(Algorithm::Dsbcd, 5, 1.0, 2);
        assert!(ok.validate(&spec, 2).is_ok());
        let mut bad = ok.clone();
        bad.probabilities = vec![0.6, 0.5];
        assert!(bad.validate(&spec, 2).is_err());
        let mut bad = ok.clone();
        bad.rounds = 0;
        assert!(bad.validate(&spec, 2).is_err());
        let mut bad = ok.clone();
        bad.theta = 0.0;
        assert!(bad.validate(&spec, 2).is_err());
        let mut bad = ok.clone();
        bad.initial_points = Some(vec![vec![2.0, 0.0, 0.0, 0.0], vec![0.0; 4]]);
        assert!(bad.validate(&spec, 2).is_err());
        let shifted = BlockSpec::uniform_box(&[1], 1.0, 2.0).unwrap();
        assert!(AlgoConfig::uniform(Algorithm::Dsgd, 5, 1.0, 1).validate(&shifted, 1).is_err());
    }

    #[test]
    fn block_sampling_follows_probabilities() {
        let mut rng = StreamKey::new(5).rng();
        let p = [0.2, 0.0, 0.8];
        let mut counts = [0usize; 3];
        for _ in 0..20_000 {
            counts[sample_block(&p, &mut rng)] += 1;
        }
        assert_eq!(counts[1], 0);
        let frac = counts[0] as f64 / 20_000.0;
        assert!((frac - 0.2).abs() < 0.015, "{counts:?}");
    }

    #[test]
    fn errors_carry_round_context() {
        struct Failing;
        impl Observer for Failing {
            fn on_agent_step(&mut self, step: &AgentStep<'_>) -> Result<()> {
                if step.round == 3 {
                    return Err(Error::Domain("probe"));
                }
                Ok(())
            }
        }
        let (spec, net, oracle) = scalar_problem();
        let cfg = AlgoConfig::new(Algorithm::Dsbcd, 10, 1.0, vec![1.0]);
        let err = Simulation::new(&spec, &net, &oracle, &cfg, StreamKey::new(0))
            .unwrap()
            .run(&RunOptions::default(), &mut Failing)
            .unwrap_err();
        assert!(matches!(err, Error::Round { round: 3, agent: 0, .. }), "{err:?}");
    }
}

//! Multi-run orchestration and aggregation.
//!
//! Seeds form a chain: master seed, then one cell seed per network size,
//! then one run seed per run index. Every random draw of a run is addressed
//! from its run seed, so cells and runs can execute in any order. The horizon
//! is not part of the chain: each run goes to the largest horizon and the
//! shorter ones are read off checkpoints, since the stepsizes do not depend
//! on the horizon. Both algorithms share run seeds, so they see the same
//! data and the same per-block noise draws.

use anyhow::{anyhow, Context};
use dsbcd_core::blockgeom::BlockSpec;
use dsbcd_core::bounds::{check_run_against_bounds, BoundInputs, ComplianceReport, RunAggregates};
use dsbcd_core::engine::{run, AlgoConfig, Algorithm, Checkpoint, RoundTelemetry, RunOptions};
use dsbcd_core::network::{MixingSchedule, MixingSource};
use dsbcd_core::oracle::{MultiAgentObjective, QuadraticSensorObjective, StochasticOracle, SubgradBounds};
use dsbcd_core::rng::{derive_seed, StreamKey};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::datafile::SensorData;

pub fn cell_seed(master: u64, num_agents: usize) -> u64 {
    derive_seed(master, num_agents as u64)
}

pub fn run_seed(cell: u64, run: usize) -> u64 {
    derive_seed(cell, run as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub agents: usize,
    pub rounds: usize,
    pub algorithm: Algorithm,
    pub mean: f64,
    /// Sample standard deviation over runs (0 for a single run).
    pub std_dev: f64,
    pub runs: usize,
}

/// Mean reporting-agent error per (N, T, algorithm).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AggregateTable {
    pub rows: Vec<AggregateRow>,
}

impl AggregateTable {
    pub fn get(&self, agents: usize, rounds: usize, algorithm: Algorithm) -> Option<&AggregateRow> {
        self.rows
            .iter()
            .find(|r| r.agents == agents && r.rounds == rounds && r.algorithm == algorithm)
    }

    /// Network sizes in first-seen order.
    pub fn agents(&self) -> Vec<usize> {
        unique(self.rows.iter().map(|r| r.agents))
    }

    /// Horizons, ascending.
    pub fn horizons(&self) -> Vec<usize> {
        let mut h = unique(self.rows.iter().map(|r| r.rounds));
        h.sort_unstable();
        h
    }

    pub fn algorithms(&self) -> Vec<Algorithm> {
        unique(self.rows.iter().map(|r| r.algorithm))
    }

    /// `(T, mean)` pairs for one column, ascending in `T`.
    pub fn column(&self, agents: usize, algorithm: Algorithm) -> Vec<(usize, f64)> {
        let mut c: Vec<(usize, f64)> = self
            .rows
            .iter()
            .filter(|r| r.agents == agents && r.algorithm == algorithm)
            .map(|r| (r.rounds, r.mean))
            .collect();
        c.sort_by_key(|p| p.0);
        c
    }
}

fn unique<T: PartialEq>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out = Vec::new();
    for it in items {
        if !out.contains(&it) {
            out.push(it);
        }
    }
    out
}

/// Checkpoint errors of every agent for one run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub agents: usize,
    pub algorithm: Algorithm,
    pub run: usize,
    pub seed: u64,
    pub optimum: f64,
    pub checkpoints: Vec<Checkpoint>,
    /// Kept for the leading `output.telemetry_runs` runs.
    pub telemetry: Option<Vec<RoundTelemetry>>,
}

#[derive(Debug, Clone)]
pub struct CellFailure {
    pub agents: usize,
    pub algorithm: Algorithm,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct CellCompliance {
    pub agents: usize,
    pub algorithm: Algorithm,
    pub report: ComplianceReport,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub table: AggregateTable,
    pub runs: Vec<RunRecord>,
    pub failures: Vec<CellFailure>,
    pub compliance: Vec<CellCompliance>,
}

/// Everything a run needs that is shared across the runs of one network size.
pub struct CellContext<'a> {
    pub config: &'a ExperimentConfig,
    pub spec: BlockSpec,
    pub schedule: MixingSchedule,
    pub agents: usize,
    pub seed: u64,
    pub data: Option<&'a SensorData>,
}

impl<'a> CellContext<'a> {
    pub fn new(config: &'a ExperimentConfig, agents: usize, data: Option<&'a SensorData>) -> anyhow::Result<Self> {
        Ok(CellContext {
            config,
            spec: config.block_spec()?,
            schedule: config.schedule(agents)?,
            agents,
            seed: cell_seed(config.master_seed, agents),
            data,
        })
    }

    /// Sensor data for one trial: the fixed file, or fresh draws per run.
    pub fn trial_objective(&self, run: usize) -> dsbcd_core::Result<QuadraticSensorObjective> {
        match self.data {
            Some(d) => d.objective(),
            None => QuadraticSensorObjective::generate(
                self.agents,
                self.spec.dim(),
                StreamKey::new(run_seed(self.seed, run)),
            ),
        }
    }

    pub fn algo_config(&self, algorithm: Algorithm) -> AlgoConfig {
        let cfg = &self.config.algo;
        AlgoConfig {
            algorithm,
            rounds: self.config.max_horizon(),
            theta: cfg.theta,
            probabilities: cfg.probabilities.clone(),
            initial_points: cfg.initial_point.as_ref().map(|x| vec![x.clone(); self.agents]),
        }
    }

    /// One run to the largest horizon with checkpoints at every horizon.
    pub fn execute(&self, algorithm: Algorithm, run_index: usize, record_rounds: bool, record_objective: bool) -> anyhow::Result<(RunRecord, dsbcd_core::engine::RunResult)> {
        let seed = run_seed(self.seed, run_index);
        let objective = self.trial_objective(run_index)?;
        let (_, fstar) = objective.exact_optimum(&self.spec)?;
        let oracle = StochasticOracle::new(objective, self.config.objective.noise.clone())?;
        let opts = RunOptions {
            record_rounds,
            record_objective,
            optimum: Some(fstar),
            checkpoints: self.config.horizons.clone(),
        };
        let algo = self.algo_config(algorithm);
        let mut result = run(&self.spec, &self.schedule, &oracle, &algo, StreamKey::new(seed), &opts)
            .with_context(|| format!("N = {}, {}, run {run_index}", self.agents, algorithm.name()))?;
        let record = RunRecord {
            agents: self.agents,
            algorithm,
            run: run_index,
            seed,
            optimum: fstar,
            checkpoints: std::mem::take(&mut result.checkpoints),
            telemetry: None,
        };
        Ok((record, result))
    }

    /// Largest `M̄_s` over the trial objectives of every run.
    pub fn worst_case_bounds(&self) -> anyhow::Result<SubgradBounds> {
        let mut worst = vec![0.0_f64; self.spec.num_blocks()];
        for r in 0..self.config.num_runs {
            let b = self
                .trial_objective(r)?
                .analytic_bounds(&self.spec, &self.config.objective.noise)?;
            worst.iter_mut().zip(&b.per_block).for_each(|(w, v)| *w = w.max(*v));
        }
        Ok(SubgradBounds::from_blocks(worst))
    }

    pub fn bound_inputs(&self, subgrad: SubgradBounds) -> anyhow::Result<BoundInputs> {
        Ok(BoundInputs::new(
            self.agents,
            self.schedule.params().ergodicity(),
            subgrad,
            self.spec.diameter_bound()?,
            self.config.algo.probabilities.clone(),
            self.config.algo.theta,
        )?)
    }
}

struct CellOutcome {
    rows: Vec<AggregateRow>,
    runs: Vec<RunRecord>,
    compliance: Option<ComplianceReport>,
}

/// Run every configured cell. A failing run fails its (N, algorithm) cell,
/// which is reported; other cells still run. Results are reduced in run
/// order, so the output does not depend on `parallel`.
pub fn run_experiment(config: &ExperimentConfig, parallel: bool) -> anyhow::Result<ExperimentOutput> {
    config
        .validate()
        .map_err(|issues| anyhow!(crate::config::ConfigError::Invalid(issues)))?;
    let data = config.sensor_data()?;
    let mut out = ExperimentOutput::default();
    for &n in &config.network.agents {
        let ctx = CellContext::new(config, n, data.as_ref())?;
        for &algorithm in &config.algo.algorithms {
            match run_cell(&ctx, algorithm, parallel) {
                Ok(cell) => {
                    out.table.rows.extend(cell.rows);
                    out.runs.extend(cell.runs);
                    if let Some(report) = cell.compliance {
                        out.compliance.push(CellCompliance {
                            agents: n,
                            algorithm,
                            report,
                        });
                    }
                }
                Err(e) => out.failures.push(CellFailure {
                    agents: n,
                    algorithm,
                    message: format!("{e:#}"),
                }),
            }
        }
    }
    Ok(out)
}

fn run_cell(ctx: &CellContext<'_>, algorithm: Algorithm, parallel: bool) -> anyhow::Result<CellOutcome> {
    let cfg = ctx.config;
    let compliance = cfg.output.compliance;
    let one = |r: usize| {
        let keep = r < cfg.output.telemetry_runs;
        let (mut record, mut result) = ctx.execute(algorithm, r, keep || compliance, keep)?;
        if keep {
            record.telemetry = Some(result.telemetry.clone());
        }
        if !compliance {
            result.telemetry = Vec::new();
        }
        Ok::<_, anyhow::Error>((record, result))
    };
    let results: Vec<anyhow::Result<_>> = if parallel {
        (0..cfg.num_runs).into_par_iter().map(one).collect()
    } else {
        (0..cfg.num_runs).map(one).collect()
    };
    let mut records = Vec::with_capacity(results.len());
    let mut full = Vec::new();
    for r in results {
        let (record, result) = r?;
        records.push(record);
        if compliance {
            full.push(result);
        }
    }
    let h = cfg.reporting_agent;
    let rows = cfg
        .horizons
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let errs: Vec<f64> = records.iter().map(|r| r.checkpoints[i].errors[h]).collect();
            let (mean, std_dev) = mean_std(&errs);
            AggregateRow {
                agents: ctx.agents,
                rounds: t,
                algorithm,
                mean,
                std_dev,
                runs: errs.len(),
            }
        })
        .collect();
    let compliance = if compliance {
        let agg = RunAggregates::from_runs(&full)?;
        let mut inputs = ctx.bound_inputs(ctx.worst_case_bounds()?)?;
        if algorithm == Algorithm::Dsgd {
            inputs = inputs.merged();
        }
        Some(check_run_against_bounds(&agg, &inputs)?)
    } else {
        None
    };
    Ok(CellOutcome {
        rows,
        runs: records,
        compliance,
    })
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Least-squares fit of `log(error)` against `log(T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub used: usize,
    /// Points dropped because the error was not positive.
    pub excluded: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RateFitError {
    #[error("a rate fit needs at least 4 horizons, got {0}")]
    TooFewPoints(usize),
    #[error("only {used} positive errors remain after excluding {excluded:?}")]
    TooFewPositive { used: usize, excluded: Vec<(usize, f64)> },
}

pub fn rate_fit(points: &[(usize, f64)]) -> Result<RateFit, RateFitError> {
    if points.len() < 4 {
        return Err(RateFitError::TooFewPoints(points.len()));
    }
    let (good, excluded): (Vec<_>, Vec<_>) = points.iter().partition(|p| p.1 > 0.0 && p.1.is_finite());
    if good.len() < 2 {
        return Err(RateFitError::TooFewPositive {
            used: good.len(),
            excluded,
        });
    }
    let xs: Vec<f64> = good.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = good.iter().map(|p| p.1.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    Ok(RateFit {
        slope,
        intercept: my - slope * mx,
        used: good.len(),
        excluded,
    })
}

/// Error and diagnostics of the consensus iterate telemetry of one run,
/// one `(k, agent)` row each.
pub fn telemetry_rows(telemetry: &[RoundTelemetry]) -> Vec<[String; 6]> {
    let mut rows = Vec::new();
    for t in telemetry {
        for (i, pe) in t.projection_errors.iter().enumerate() {
            let err = t
                .objective_errors
                .as_ref()
                .map_or(String::new(), |e| e[i].to_string());
            let block = t.sampled_blocks[i].map_or(String::new(), |s| s.to_string());
            rows.push([
                t.round.to_string(),
                i.to_string(),
                err,
                t.consensus_spread.to_string(),
                pe.to_string(),
                block,
            ]);
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config_str;

    const PUBLISHED_N5_DSBCD: [(usize, f64); 5] = [
        (800, 0.410303),
        (1500, 0.273356),
        (3000, 0.199701),
        (4000, 0.174655),
        (8000, 0.125145),
    ];

    #[test]
    fn fit_recovers_inverse_sqrt_exactly() {
        let pts: Vec<(usize, f64)> = [100, 400, 1600, 6400, 9000]
            .iter()
            .map(|&t| (t, 3.7 / (t as f64).sqrt()))
            .collect();
        let fit = rate_fit(&pts).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-9);
        assert!((fit.intercept - 3.7f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn constant_data_has_zero_slope() {
        let pts = [(1, 2.0), (2, 2.0), (3, 2.0), (4, 2.0)];
        assert_eq!(rate_fit(&pts).unwrap().slope, 0.0);
    }

    #[test]
    fn published_small_network_column_slope() {
        // Least squares on the published DSBCD column for N = 5.
        let fit = rate_fit(&PUBLISHED_N5_DSBCD).unwrap();
        assert!((fit.slope - (-0.506_739_307)).abs() < 1e-8, "{}", fit.slope);
    }

    #[test]
    fn nonpositive_points_are_excluded_and_reported() {
        let pts = [(10, 1.0), (20, -0.1), (40, 0.5), (80, 0.0), (160, 0.25)];
        let fit = rate_fit(&pts).unwrap();
        assert_eq!(fit.used, 3);
        assert_eq!(fit.excluded, vec![(20, -0.1), (80, 0.0)]);
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert_eq!(rate_fit(&pts[..3]), Err(RateFitError::TooFewPoints(3)));
        let bad = [(1, 0.0), (2, 0.0), (3, 0.0), (4, 1.0)];
        assert!(matches!(rate_fit(&bad), Err(RateFitError::TooFewPositive { used: 1, .. })));
    }

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
    }

    fn tiny() -> ExperimentConfig {
        parse_config_str(
            r#"{
                "master_seed": 5,
                "network": {"kind": "complete_uniform", "agents": [1]},
                "space": {"blocks": [{"size": 2, "set": {"box": {"lo": -1, "hi": 1}}}]},
                "objective": {},
                "algo": {"algorithms": ["dsbcd"], "theta": 1.0, "probabilities": [1.0]},
                "horizons": [1],
                "num_runs": 1
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn single_deterministic_row() {
        let cfg = tiny();
        let out = run_experiment(&cfg, false).unwrap();
        assert_eq!(out.table.rows.len(), 1);
        let row = &out.table.rows[0];
        assert_eq!((row.agents, row.rounds, row.runs, row.std_dev), (1, 1, 1, 0.0));
        // One noiseless step from 0 with unit stepsize lands on clip(2ab).
        let obj = QuadraticSensorObjective::generate(1, 2, StreamKey::new(run_seed(cell_seed(5, 1), 0))).unwrap();
        let b = &obj.anchors()[0];
        let a = obj.weights()[0];
        let x: Vec<f64> = b.iter().map(|v| (2.0 * a * v).clamp(-1.0, 1.0)).collect();
        let f = obj.global_value(&x).unwrap();
        let (_, fstar) = obj.exact_optimum(&cfg.block_spec().unwrap()).unwrap();
        assert!((row.mean - (f - fstar)).abs() < 1e-15);
    }

    #[test]
    fn seed_chain_is_cell_local() {
        assert_ne!(cell_seed(1, 5), cell_seed(1, 15));
        assert_ne!(run_seed(cell_seed(1, 5), 0), run_seed(cell_seed(1, 5), 1));
        assert_eq!(cell_seed(1, 5), derive_seed(1, 5));
    }
}

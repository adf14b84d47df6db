//! Experiment configuration: strict JSON, validated before any run starts.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use dsbcd_core::blockgeom::{BlockSpec, Dgf, FeasibleBlock, FeasibleSet};
use dsbcd_core::engine::{validate_probabilities, Algorithm};
use dsbcd_core::network::{MixingKind, MixingSchedule, NetworkParams, STOCHASTIC_TOL};
use dsbcd_core::oracle::NoiseModel;
use serde::{Deserialize, Serialize};

use crate::datafile::{self, SensorData};

/// The configuration used for the sensor-estimation table.
pub const TABLE1_JSON: &str = include_str!("../configs/table1.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub network: NetworkConfig,
    pub space: SpaceConfig,
    pub objective: ObjectiveConfig,
    pub algo: AlgoSection,
    /// Horizons `T`, strictly increasing. All are served by one run to the last.
    pub horizons: Vec<usize>,
    pub num_runs: usize,
    #[serde(default)]
    pub reporting_agent: usize,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkKind {
    CompleteUniform,
    PeriodicRingParts,
    RandomMetropolis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub kind: NetworkKind,
    /// Network sizes `N`, one table column pair each.
    pub agents: Vec<usize>,
    /// Entry floor; defaults to `min(1/N, 1/2)`.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub period: PeriodSpec,
    #[serde(default)]
    pub edge_probability: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

/// Connectivity period `B`, either shared or per network size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PeriodSpec {
    Fixed(usize),
    PerAgents(BTreeMap<String, usize>),
}

impl Default for PeriodSpec {
    fn default() -> Self {
        PeriodSpec::Fixed(1)
    }
}

impl PeriodSpec {
    pub fn for_agents(&self, n: usize) -> Option<usize> {
        match self {
            PeriodSpec::Fixed(b) => Some(*b),
            PeriodSpec::PerAgents(map) => map.get(&n.to_string()).copied(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub blocks: Vec<BlockConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    pub size: usize,
    pub set: SetConfig,
    #[serde(default = "euclidean")]
    pub dgf: Dgf,
}

fn euclidean() -> Dgf {
    Dgf::Euclidean
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SetConfig {
    Box { lo: Bound, hi: Bound },
    Simplex,
    Ball { radius: f64 },
}

/// A box bound given once for every coordinate or per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Bound {
    fn expand(&self, size: usize) -> Vec<f64> {
        match self {
            Bound::Scalar(v) => vec![*v; size],
            Bound::Vector(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    /// Fixed sensor data instead of per-trial generation.
    #[serde(default)]
    pub data_file: Option<PathBuf>,
    #[serde(default)]
    pub noise: NoiseModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgoSection {
    pub algorithms: Vec<Algorithm>,
    pub theta: f64,
    pub probabilities: Vec<f64>,
    /// Shared starting point; zeros when absent.
    #[serde(default)]
    pub initial_point: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Number of leading runs per cell that write per-round telemetry.
    #[serde(default)]
    pub telemetry_runs: usize,
    /// Record per-round telemetry for every run and check it against the bounds.
    #[serde(default)]
    pub compliance: bool,
}

/// One problem with a config, located by its field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config:\n{}", list(.0))]
    Invalid(Vec<ConfigIssue>),
}

fn list(issues: &[ConfigIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("  {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl ConfigError {
    pub fn issues(&self) -> &[ConfigIssue] {
        match self {
            ConfigError::Invalid(v) => v,
            _ => &[],
        }
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut cfg = parse_config_str(&text)?;
    if let Some(data) = &cfg.objective.data_file {
        if data.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.objective.data_file = Some(dir.join(data));
            }
        }
    }
    cfg.validate().map_err(ConfigError::Invalid)?;
    Ok(cfg)
}

/// Parses without resolving a relative data file and without validating.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig =
        serde_path_to_error::deserialize(&mut *de).map_err(|e| ConfigError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
    de.end().map_err(|e| ConfigError::Parse {
        path: ".".into(),
        message: e.to_string(),
    })?;
    Ok(cfg)
}

pub fn table1_config() -> ExperimentConfig {
    let cfg = parse_config_str(TABLE1_JSON).expect("embedded config parses");
    cfg.validate().expect("embedded config is valid");
    cfg
}

struct Issues(Vec<ConfigIssue>);

impl Issues {
    fn push(&mut self, path: impl Into<String>, message: impl fmt::Display) {
        self.0.push(ConfigIssue {
            path: path.into(),
            message: message.to_string(),
        });
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), Vec<ConfigIssue>> {
        let mut issues = Issues(Vec::new());
        self.validate_network(&mut issues);
        let spec = self.validate_space(&mut issues);
        self.validate_objective(&mut issues);
        self.validate_algo(spec.as_ref(), &mut issues);
        if self.horizons.is_empty() {
            issues.push("horizons", "at least one horizon is required");
        }
        if self.horizons.first() == Some(&0) {
            issues.push("horizons[0]", "horizons must be positive");
        }
        if let Some(i) = self.horizons.windows(2).position(|w| w[0] >= w[1]) {
            issues.push(format!("horizons[{}]", i + 1), "horizons must be strictly increasing");
        }
        if self.num_runs == 0 {
            issues.push("num_runs", "at least one run is required");
        }
        if let Some(&n) = self.network.agents.iter().min() {
            if self.reporting_agent >= n {
                issues.push(
                    "reporting_agent",
                    format!("agent {} does not exist in a network of {n}", self.reporting_agent),
                );
            }
        }
        if issues.0.is_empty() {
            Ok(())
        } else {
            Err(issues.0)
        }
    }

    fn validate_network(&self, issues: &mut Issues) {
        let net = &self.network;
        if net.agents.is_empty() {
            issues.push("network.agents", "at least one network size is required");
        }
        match (net.kind, net.edge_probability) {
            (NetworkKind::RandomMetropolis, None) => {
                issues.push("network.edge_probability", "required for random_metropolis")
            }
            (NetworkKind::RandomMetropolis, Some(p)) if !(0.0..=1.0).contains(&p) => {
                issues.push("network.edge_probability", "must lie in [0, 1]")
            }
            (NetworkKind::RandomMetropolis, _) => {}
            (_, Some(_)) => issues.push(
                "network.edge_probability",
                "only used by random_metropolis",
            ),
            _ => {}
        }
        if let PeriodSpec::PerAgents(map) = &net.period {
            for key in map.keys().filter(|k| k.parse::<usize>().is_err()) {
                issues.push(format!("network.period.{key}"), "keys must be network sizes");
            }
        }
        for (i, &n) in net.agents.iter().enumerate() {
            if n == 0 {
                issues.push(format!("network.agents[{i}]"), "a network needs at least one agent");
                continue;
            }
            if let Some(d) = net.delta {
                if !(d > 0.0 && d <= (1.0 + STOCHASTIC_TOL) / n as f64) {
                    issues.push("network.delta", format!("must lie in (0, 1/N] for N = {n}"));
                }
            }
            if net.period.for_agents(n).is_none() {
                issues.push("network.period", format!("no period given for N = {n}"));
                continue;
            }
            if net.kind == NetworkKind::RandomMetropolis && net.edge_probability.is_none() {
                continue;
            }
            if let Err(e) = self.schedule(n) {
                issues.push("network.period", format!("N = {n}: {e}"));
            }
        }
    }

    fn validate_space(&self, issues: &mut Issues) -> Option<BlockSpec> {
        if self.space.blocks.is_empty() {
            issues.push("space.blocks", "at least one block is required");
            return None;
        }
        let mut ok = true;
        for (i, b) in self.space.blocks.iter().enumerate() {
            if let Err(msg) = b.build() {
                issues.push(format!("space.blocks[{i}]"), msg);
                ok = false;
            }
        }
        if !ok {
            return None;
        }
        match self.block_spec() {
            Ok(spec) => Some(spec),
            Err(e) => {
                issues.push("space.blocks", e);
                None
            }
        }
    }

    fn validate_objective(&self, issues: &mut Issues) {
        if let Err(e) = self.objective.noise.validate() {
            issues.push("objective.noise", e);
        }
        let Some(path) = &self.objective.data_file else {
            return;
        };
        match datafile::read_sensor_data(path) {
            Ok(data) => {
                let dim: usize = self.space.blocks.iter().map(|b| b.size).sum();
                if data.dim() != dim {
                    issues.push(
                        "objective.data_file",
                        format!("data has dimension {}, space has {dim}", data.dim()),
                    );
                }
                if self.network.agents.iter().any(|&n| n != data.num_agents()) {
                    issues.push(
                        "network.agents",
                        format!("data file holds {} agents", data.num_agents()),
                    );
                }
            }
            Err(e) => issues.push("objective.data_file", format!("{e:#}")),
        }
    }

    fn validate_algo(&self, spec: Option<&BlockSpec>, issues: &mut Issues) {
        let algo = &self.algo;
        if algo.algorithms.is_empty() {
            issues.push("algo.algorithms", "at least one algorithm is required");
        }
        for (i, a) in algo.algorithms.iter().enumerate() {
            if algo.algorithms[..i].contains(a) {
                issues.push(format!("algo.algorithms[{i}]"), "duplicate algorithm");
            }
        }
        if !(algo.theta.is_finite() && algo.theta > 0.0) {
            issues.push("algo.theta", "must be positive and finite");
        }
        if let Err(e) = validate_probabilities(&algo.probabilities, self.space.blocks.len()) {
            issues.push("algo.probabilities", e);
        }
        if let (Some(x0), Some(spec)) = (&algo.initial_point, spec) {
            if x0.len() != spec.dim() {
                issues.push(
                    "algo.initial_point",
                    format!("expected {} coordinates, found {}", spec.dim(), x0.len()),
                );
            } else if !spec.contains(x0) {
                issues.push("algo.initial_point", "point is not feasible");
            }
        }
    }

    pub fn block_spec(&self) -> dsbcd_core::Result<BlockSpec> {
        let sizes = self.space.blocks.iter().map(|b| b.size).collect();
        let blocks = self
            .space
            .blocks
            .iter()
            .map(|b| b.build().map_err(dsbcd_core::Error::InvalidParameter))
            .collect::<dsbcd_core::Result<Vec<_>>>()?;
        BlockSpec::new(sizes, blocks)
    }

    pub fn network_params(&self, n: usize) -> dsbcd_core::Result<NetworkParams> {
        let period = self.network.period.for_agents(n).ok_or_else(|| {
            dsbcd_core::Error::InvalidParameter(format!("no period for N = {n}"))
        })?;
        match self.network.delta {
            Some(d) => NetworkParams::new(n, d, period),
            None => NetworkParams::with_default_delta(n, period),
        }
    }

    pub fn mixing_kind(&self) -> MixingKind {
        match self.network.kind {
            NetworkKind::CompleteUniform => MixingKind::CompleteUniform,
            NetworkKind::PeriodicRingParts => MixingKind::PeriodicRingParts,
            NetworkKind::RandomMetropolis => MixingKind::RandomMetropolis {
                edge_probability: self.network.edge_probability.unwrap_or(0.0),
            },
        }
    }

    /// The mixing schedule shared by every run at network size `n`.
    pub fn schedule(&self, n: usize) -> dsbcd_core::Result<MixingSchedule> {
        let seed = dsbcd_core::rng::derive_seed(self.network.seed, n as u64);
        MixingSchedule::new(self.mixing_kind(), self.network_params(n)?, seed)
    }

    pub fn sensor_data(&self) -> anyhow::Result<Option<SensorData>> {
        self.objective
            .data_file
            .as_deref()
            .map(datafile::read_sensor_data)
            .transpose()
    }

    pub fn max_horizon(&self) -> usize {
        self.horizons.last().copied().unwrap_or(0)
    }
}

impl BlockConfig {
    pub fn build(&self) -> Result<FeasibleBlock, String> {
        if self.size == 0 {
            return Err("block size must be positive".into());
        }
        let set = match &self.set {
            SetConfig::Box { lo, hi } => {
                let (lo, hi) = (lo.expand(self.size), hi.expand(self.size));
                if lo.len() != self.size || hi.len() != self.size {
                    return Err(format!("box bounds need {} coordinates", self.size));
                }
                if lo.iter().zip(&hi).any(|(l, h)| l.is_nan() || h.is_nan() || l > h) {
                    return Err("box needs lo <= hi in every coordinate".into());
                }
                FeasibleSet::Box { lo, hi }
            }
            SetConfig::Simplex => FeasibleSet::Simplex,
            SetConfig::Ball { radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err("ball radius must be positive and finite".into());
                }
                FeasibleSet::Ball { radius: *radius }
            }
        };
        if self.dgf == Dgf::Entropy && set != FeasibleSet::Simplex {
            return Err("the entropy distance needs a simplex block".into());
        }
        Ok(FeasibleBlock {
            set,
            dgf: self.dgf,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> String {
        r#"{
            "master_seed": 1,
            "network": {"kind": "periodic_ring_parts", "agents": [3], "period": {"3": 3}},
            "space": {"blocks": [
                {"size": 2, "set": {"box": {"lo": -1, "hi": 1}}},
                {"size": 2, "set": {"box": {"lo": [-1, 0], "hi": [1, 2]}}}
            ]},
            "objective": {"noise": {"kind": "gaussian", "sigma": 1.0}},
            "algo": {"algorithms": ["dsbcd", "dsgd"], "theta": 1.0, "probabilities": [0.5, 0.5]},
            "horizons": [10, 20, 40, 80],
            "num_runs": 2
        }"#
        .to_string()
    }

    #[test]
    fn shipped_table1_matches_the_sensor_setup() {
        let cfg = table1_config();
        assert_eq!(cfg.network.agents, vec![5, 15, 30]);
        assert_eq!(cfg.horizons, vec![800, 1500, 3000, 4000, 8000]);
        assert_eq!(cfg.num_runs, 30);
        assert_eq!(cfg.algo.theta, 1.0);
        assert_eq!(cfg.algo.probabilities, vec![0.5, 0.5]);
        assert_eq!(cfg.objective.noise, NoiseModel::Gaussian { sigma: 1.0 });
        let spec = cfg.block_spec().unwrap();
        assert_eq!(spec.sizes(), &[5, 5]);
        assert!(spec.contains(&[1.0; 10]) && spec.contains(&[-1.0; 10]));
        assert!(!spec.contains(&[1.5; 10]));
    }

    #[test]
    fn small_config_is_valid() {
        let cfg = parse_config_str(&small()).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.block_spec().unwrap().dim(), 4);
        assert_eq!(cfg.network_params(3).unwrap().period, 3);
    }

    #[test]
    fn empty_input_is_a_parse_error() {
        assert!(matches!(parse_config_str(""), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_path() {
        let text = small().replace("\"theta\"", "\"thetta\": 1, \"theta\"");
        match parse_config_str(&text) {
            Err(ConfigError::Parse { path, message }) => {
                assert_eq!(path, "algo.thetta");
                assert!(message.contains("unknown field"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn probabilities_off_the_simplex_are_located() {
        let text = small().replace("[0.5, 0.5]", "[0.6, 0.5]");
        let issues = parse_config_str(&text).unwrap().validate().unwrap_err();
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].path, "algo.probabilities");
    }

    #[test]
    fn every_issue_is_reported() {
        let text = small()
            .replace("\"num_runs\": 2", "\"num_runs\": 0")
            .replace("[10, 20, 40, 80]", "[10, 10]")
            .replace("\"lo\": -1,", "\"lo\": 2,")
            .replace("{\"3\": 3}", "{\"3\": 2}");
        let issues = parse_config_str(&text).unwrap().validate().unwrap_err();
        let paths: Vec<&str> = issues.iter().map(|i| i.path.as_str()).collect();
        assert_eq!(
            paths,
            ["network.period", "space.blocks[0]", "horizons[1]", "num_runs"]
        );
    }

    #[test]
    fn missing_period_and_bad_delta_are_caught() {
        let text = small()
            .replace("[3]", "[3, 4]")
            .replace("\"period\"", "\"delta\": 0.4, \"period\"");
        let issues = parse_config_str(&text).unwrap().validate().unwrap_err();
        let msgs: Vec<String> = issues.iter().map(ToString::to_string).collect();
        assert!(msgs.iter().any(|m| m.starts_with("network.period: no period given for N = 4")));
        assert!(msgs.iter().any(|m| m.starts_with("network.delta")));
    }
}

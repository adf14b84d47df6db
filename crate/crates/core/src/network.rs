//! Time-varying communication networks.
//!
//! A network is a sequence of doubly stochastic `N × N` matrices `P_k`. The
//! edge set of round `k` is `{(j, i) : [P_k]_ij ≥ δ, i ≠ j}`; the schedule is
//! admissible when every matrix has diagonal entries at least `δ` and the
//! union of edge sets over any `B` consecutive rounds is strongly connected.

use alloc::borrow::Cow;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::linalg::Matrix;
use crate::rng::{Purpose, StreamKey};
use crate::{Error, Result};

/// Tolerance on row and column sums and on the `δ` floor.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Slack added to the geometric bound when checking transition products.
pub const MIXING_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NetworkParams {
    pub num_agents: usize,
    /// Floor `δ` on diagonal and on positive off-diagonal entries.
    pub delta: f64,
    /// Connectivity window `B`.
    pub period: usize,
}

impl NetworkParams {
    pub fn new(num_agents: usize, delta: f64, period: usize) -> Result<Self> {
        let p = NetworkParams {
            num_agents,
            delta,
            period,
        };
        p.validate()?;
        Ok(p)
    }

    /// `δ = min(1/N, 1/2)`, the largest floor every shipped generator satisfies.
    pub fn with_default_delta(num_agents: usize, period: usize) -> Result<Self> {
        NetworkParams::new(num_agents, (1.0 / num_agents.max(1) as f64).min(0.5), period)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_agents == 0 {
            return Err(Error::invalid("network needs at least one agent"));
        }
        if self.period == 0 {
            return Err(Error::invalid("connectivity period must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid("delta must lie in (0, 1)"));
        }
        // A tiny relative slack keeps δ = 1/N admissible after rounding.
        if self.delta > (1.0 / self.num_agents as f64) * (1.0 + 1e-12) {
            return Err(Error::invalid("delta must not exceed 1/N"));
        }
        Ok(())
    }

    pub fn ergodicity(&self) -> ErgodicityConstants {
        ErgodicityConstants::from_params(self)
    }
}

/// Geometric mixing constants: `|[P(t,s)]_ij − 1/N| ≤ Γ γ^{t−s}`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ErgodicityConstants {
    pub gamma_big: f64,
    pub gamma: f64,
}

impl ErgodicityConstants {
    pub fn from_params(p: &NetworkParams) -> Self {
        let n = p.num_agents as f64;
        let base = 1.0 - p.delta / (4.0 * n * n);
        ErgodicityConstants {
            gamma_big: base.powi(-2),
            gamma: base.powf(1.0 / p.period as f64),
        }
    }

    /// `Γ γ^{lag}`.
    pub fn bound(&self, lag: usize) -> f64 {
        self.gamma_big * self.gamma.powf(lag as f64)
    }

    /// `Γ / (1 − γ)`, the factor shared by the consensus-dependent bounds.
    pub fn mixing_factor(&self) -> f64 {
        self.gamma_big / (1.0 - self.gamma)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case", tag = "kind"))]
pub enum MixingKind {
    /// Every entry `1/N`.
    CompleteUniform,
    /// Undirected ring edges spread over the `B` rounds of a period, one
    /// matching per round, each edge averaged with weight ½.
    PeriodicRingParts,
    /// Fresh random connected graph every round with Metropolis weights.
    RandomMetropolis { edge_probability: f64 },
}

/// Anything that yields one mixing matrix per round.
pub trait MixingSource {
    fn params(&self) -> &NetworkParams;

    /// `P_k`.
    fn matrix_at(&self, k: usize) -> Cow<'_, Matrix>;

    fn num_agents(&self) -> usize {
        self.params().num_agents
    }
}

/// A deterministic generator of admissible mixing matrices.
#[derive(Debug, Clone)]
pub struct MixingSchedule {
    kind: MixingKind,
    params: NetworkParams,
    seed: u64,
    cache: Vec<Matrix>,
}

impl MixingSchedule {
    pub fn new(kind: MixingKind, params: NetworkParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let n = params.num_agents;
        let cache = match &kind {
            MixingKind::CompleteUniform => vec![Matrix::filled(n, 1.0 / n as f64)],
            MixingKind::PeriodicRingParts => {
                if params.delta > 0.5 {
                    return Err(Error::invalid("ring averaging weight 1/2 is below delta"));
                }
                ring_parts(n, params.period)?
            }
            MixingKind::RandomMetropolis { edge_probability } => {
                if !(0.0..=1.0).contains(edge_probability) {
                    return Err(Error::invalid("edge probability must lie in [0, 1]"));
                }
                Vec::new()
            }
        };
        Ok(MixingSchedule {
            kind,
            params,
            seed,
            cache,
        })
    }

    pub fn kind(&self) -> &MixingKind {
        &self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl MixingSource for MixingSchedule {
    fn params(&self) -> &NetworkParams {
        &self.params
    }

    fn matrix_at(&self, k: usize) -> Cow<'_, Matrix> {
        match &self.kind {
            MixingKind::CompleteUniform => Cow::Borrowed(&self.cache[0]),
            MixingKind::PeriodicRingParts => Cow::Borrowed(&self.cache[k % self.cache.len()]),
            MixingKind::RandomMetropolis { edge_probability } => Cow::Owned(random_metropolis(
                self.params.num_agents,
                *edge_probability,
                StreamKey::new(self.seed).round(k).purpose(Purpose::Network),
            )),
        }
    }
}

/// Cycles through a fixed list of matrices. Nothing is validated, which
/// makes it the vehicle for negative controls.
#[derive(Debug, Clone)]
pub struct ExplicitSchedule {
    params: NetworkParams,
    matrices: Vec<Matrix>,
}

impl ExplicitSchedule {
    pub fn new(params: NetworkParams, matrices: Vec<Matrix>) -> Result<Self> {
        if matrices.is_empty() {
            return Err(Error::invalid("explicit schedule needs at least one matrix"));
        }
        if let Some(m) = matrices.iter().find(|m| m.dim() != params.num_agents) {
            return Err(Error::DimensionMismatch {
                expected: params.num_agents,
                found: m.dim(),
            });
        }
        Ok(ExplicitSchedule { params, matrices })
    }

    /// `P_k = I` for every `k`.
    pub fn identity(params: NetworkParams) -> Self {
        ExplicitSchedule {
            matrices: vec![Matrix::identity(params.num_agents)],
            params,
        }
    }
}

impl MixingSource for ExplicitSchedule {
    fn params(&self) -> &NetworkParams {
        &self.params
    }

    fn matrix_at(&self, k: usize) -> Cow<'_, Matrix> {
        Cow::Borrowed(&self.matrices[k % self.matrices.len()])
    }
}

/// Smallest period for which every ring round is a matching.
pub fn min_ring_period(n: usize) -> usize {
    if n <= 2 {
        return 1;
    }
    (2..=n).find(|&b| b == n || (n - 1) % b != 0).unwrap_or(n)
}

/// Ring edge `e` joins `e` and `e+1 (mod N)` and is active in round `e mod B`.
fn ring_edges(n: usize) -> Vec<(usize, usize)> {
    match n {
        0 | 1 => Vec::new(),
        2 => vec![(0, 1)],
        _ => (0..n).map(|e| (e, (e + 1) % n)).collect(),
    }
}

fn ring_parts(n: usize, period: usize) -> Result<Vec<Matrix>> {
    let mut mats = vec![Matrix::identity(n); period];
    let mut used = vec![vec![false; n]; period];
    for (e, (a, b)) in ring_edges(n).into_iter().enumerate() {
        let r = e % period;
        if used[r][a] || used[r][b] {
            return Err(Error::InvalidParameter(format!(
                "ring period {period} puts two edges at agent {} into round {r}; \
                 choose a period of at least 2 with (N-1) mod period != 0",
                if used[r][a] { a } else { b }
            )));
        }
        used[r][a] = true;
        used[r][b] = true;
        let m = &mut mats[r];
        m[(a, a)] = 0.5;
        m[(b, b)] = 0.5;
        m[(a, b)] = 0.5;
        m[(b, a)] = 0.5;
    }
    Ok(mats)
}

/// Random spanning tree plus independent extra edges, Metropolis weights
/// `1/(1 + max(deg_i, deg_j))`, diagonal as the residual.
fn random_metropolis(n: usize, edge_probability: f64, key: StreamKey) -> Matrix {
    let mut rng = key.rng();
    let mut adj = vec![false; n * n];
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    for idx in 1..n {
        let parent = order[rng.random_range(0..idx)];
        let child = order[idx];
        adj[parent * n + child] = true;
        adj[child * n + parent] = true;
    }
    for i in 0..n {
        for j in i + 1..n {
            if !adj[i * n + j] && rng.random::<f64>() < edge_probability {
                adj[i * n + j] = true;
                adj[j * n + i] = true;
            }
        }
    }
    let deg: Vec<usize> = (0..n)
        .map(|i| adj[i * n..(i + 1) * n].iter().filter(|&&e| e).count())
        .collect();
    let mut m = Matrix::zeros(n);
    for i in 0..n {
        let mut off = 0.0;
        for j in 0..n {
            if adj[i * n + j] {
                let w = 1.0 / (1 + deg[i].max(deg[j])) as f64;
                m[(i, j)] = w;
                off += w;
            }
        }
        m[(i, i)] = 1.0 - off;
    }
    m
}

/// First defect found when validating schedules or single matrices.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum Violation {
    Dimension { round: usize, found: usize },
    NegativeEntry { round: usize, row: usize, col: usize, value: f64 },
    RowSum { round: usize, row: usize, sum: f64 },
    ColumnSum { round: usize, col: usize, sum: f64 },
    DiagonalBelowFloor { round: usize, agent: usize, value: f64 },
    EntryBelowFloor { round: usize, row: usize, col: usize, value: f64 },
    Disconnected { window_start: usize, window_end: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Dimension { round, found } => {
                write!(f, "round {round}: matrix has dimension {found}")
            }
            Violation::NegativeEntry { round, row, col, value } => {
                write!(f, "round {round}: negative entry ({row},{col}) = {value}")
            }
            Violation::RowSum { round, row, sum } => {
                write!(f, "round {round}: row {row} sums to {sum}")
            }
            Violation::ColumnSum { round, col, sum } => {
                write!(f, "round {round}: column {col} sums to {sum}")
            }
            Violation::DiagonalBelowFloor { round, agent, value } => {
                write!(f, "round {round}: diagonal entry of agent {agent} is {value}, below delta")
            }
            Violation::EntryBelowFloor { round, row, col, value } => {
                write!(f, "round {round}: positive entry ({row},{col}) = {value} is below delta")
            }
            Violation::Disconnected { window_start, window_end } => write!(
                f,
                "rounds {window_start}..={window_end}: union graph is not strongly connected"
            ),
        }
    }
}

/// Check one matrix: nonnegative, doubly stochastic, diagonal and positive
/// entries at least `delta`.
pub fn validate_matrix(m: &Matrix, n: usize, delta: f64, round: usize) -> Option<Violation> {
    if m.dim() != n {
        return Some(Violation::Dimension {
            round,
            found: m.dim(),
        });
    }
    for i in 0..n {
        for j in 0..n {
            let v = m[(i, j)];
            if v < 0.0 || v.is_nan() {
                return Some(Violation::NegativeEntry {
                    round,
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
    }
    for i in 0..n {
        let sum = m.row_sum(i);
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Some(Violation::RowSum { round, row: i, sum });
        }
    }
    for j in 0..n {
        let sum = m.col_sum(j);
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Some(Violation::ColumnSum { round, col: j, sum });
        }
    }
    for i in 0..n {
        if m[(i, i)] < delta - STOCHASTIC_TOL {
            return Some(Violation::DiagonalBelowFloor {
                round,
                agent: i,
                value: m[(i, i)],
            });
        }
    }
    for i in 0..n {
        for j in 0..n {
            let v = m[(i, j)];
            if i != j && v > 0.0 && v < delta - STOCHASTIC_TOL {
                return Some(Violation::EntryBelowFloor {
                    round,
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
    }
    None
}

/// Directed edges `(j, i)` with `[P]_ij ≥ δ`, `i ≠ j`.
pub fn edge_set(m: &Matrix, delta: f64) -> Vec<(usize, usize)> {
    let n = m.dim();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && m[(i, j)] >= delta - STOCHASTIC_TOL {
                edges.push((j, i));
            }
        }
    }
    edges
}

/// Strong connectivity of a directed graph given as an `n × n` adjacency mask.
pub fn strongly_connected(n: usize, adj: &[bool]) -> bool {
    if n <= 1 {
        return true;
    }
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                let e = if forward { adj[u * n + v] } else { adj[v * n + u] };
                if e && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.iter().all(|&s| s)
    };
    reach(true) && reach(false)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ValidationReport {
    pub horizon: usize,
    pub matrices_checked: usize,
    pub windows_checked: usize,
    pub violation: Option<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violation.is_none()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "horizon: {}", self.horizon)?;
        writeln!(f, "matrices_checked: {}", self.matrices_checked)?;
        writeln!(f, "windows_checked: {}", self.windows_checked)?;
        match &self.violation {
            None => write!(f, "status: valid"),
            Some(v) => write!(f, "status: violation\nfirst_violation: {v}"),
        }
    }
}

/// Check every matrix in rounds `0..horizon` and every window of `B`
/// consecutive rounds inside it. Stops at the first violation.
pub fn validate_schedule<S: MixingSource + ?Sized>(schedule: &S, horizon: usize) -> ValidationReport {
    let p = *schedule.params();
    let n = p.num_agents;
    let b = p.period;
    let mut report = ValidationReport {
        horizon,
        matrices_checked: 0,
        windows_checked: 0,
        violation: None,
    };
    // Edge masks of the last B rounds, indexed by round mod B.
    let mut masks = vec![vec![false; n * n]; b];
    for k in 0..horizon {
        let m = schedule.matrix_at(k);
        report.matrices_checked += 1;
        if let Some(v) = validate_matrix(&m, n, p.delta, k) {
            report.violation = Some(v);
            return report;
        }
        let mask = &mut masks[k % b];
        mask.iter_mut().for_each(|e| *e = false);
        for (j, i) in edge_set(&m, p.delta) {
            mask[j * n + i] = true;
        }
        if k + 1 >= b {
            let mut union = vec![false; n * n];
            for mask in &masks {
                for (u, &e) in union.iter_mut().zip(mask) {
                    *u |= e;
                }
            }
            report.windows_checked += 1;
            if !strongly_connected(n, &union) {
                report.violation = Some(Violation::Disconnected {
                    window_start: k + 1 - b,
                    window_end: k,
                });
                return report;
            }
        }
    }
    report
}

/// `P(t, s) = P_t P_{t−1} ⋯ P_s`.
pub fn transition_product<S: MixingSource + ?Sized>(schedule: &S, t: usize, s: usize) -> Result<Matrix> {
    if t < s {
        return Err(Error::invalid("transition product needs t >= s"));
    }
    let mut acc = schedule.matrix_at(s).into_owned();
    for r in s + 1..=t {
        acc = schedule.matrix_at(r).matmul(&acc);
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct MixingCheckReport {
    pub constants: ErgodicityConstants,
    pub pairs_checked: usize,
    pub violations: usize,
    /// Smallest `bound − deviation` over all pairs (negative on failure).
    pub min_slack: f64,
    /// Largest `deviation / bound`.
    pub max_ratio: f64,
    /// First failing `(t, s, deviation, bound)`.
    pub first_violation: Option<(usize, usize, f64, f64)>,
}

impl MixingCheckReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Check `|[P(t,s)]_ij − 1/N| ≤ Γ γ^{t−s} + 1e-9` for all `0 ≤ s ≤ t ≤ horizon`.
pub fn check_geometric_mixing<S: MixingSource + ?Sized>(schedule: &S, horizon: usize) -> MixingCheckReport {
    let constants = schedule.params().ergodicity();
    let mut report = MixingCheckReport {
        constants,
        pairs_checked: 0,
        violations: 0,
        min_slack: f64::INFINITY,
        max_ratio: 0.0,
        first_violation: None,
    };
    let mats: Vec<Matrix> = (0..=horizon).map(|k| schedule.matrix_at(k).into_owned()).collect();
    for s in 0..=horizon {
        let mut acc = mats[s].clone();
        for t in s..=horizon {
            if t > s {
                acc = mats[t].matmul(&acc);
            }
            let dev = acc.max_deviation_from_uniform();
            let bound = constants.bound(t - s);
            report.pairs_checked += 1;
            report.min_slack = report.min_slack.min(bound - dev);
            report.max_ratio = report.max_ratio.max(dev / bound);
            if dev > bound + MIXING_SLACK {
                report.violations += 1;
                if report.first_violation.is_none() {
                    report.first_violation = Some((t, s, dev, bound));
                }
            }
        }
    }
    report
}

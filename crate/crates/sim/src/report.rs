//! Files and text reports written by the CLI.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use dsbcd_core::blockgeom::BlockSpec;
use dsbcd_core::bounds::{
    consensus_bound, projection_error_bound, ComplianceReport, StepSchedule,
    RateBounds,
};
use dsbcd_core::engine::{stepsize, Algorithm};
use dsbcd_core::network::{check_geometric_mixing, validate_schedule, MixingSource};
use dsbcd_core::oracle::{NoiseModel, QuadraticSensorObjective, SubgradBounds};

use crate::config::ExperimentConfig;
use crate::experiment::{telemetry_rows, CellContext, ExperimentOutput};
use crate::table::{emit_table, Format};

const TELEMETRY_HEADER: [&str; 6] = [
    "k",
    "agent",
    "error",
    "consensus_spread",
    "proj_err_norm",
    "sampled_block",
];

fn alg_key(a: Algorithm) -> &'static str {
    match a {
        Algorithm::Dsbcd => "dsbcd",
        Algorithm::Dsgd => "dsgd",
    }
}

/// Write the aggregate CSV, the markdown table, per-run errors, telemetry,
/// compliance reports and cell failures into `dir`. Returns the paths written.
pub fn write_outputs(dir: &Path, out: &ExperimentOutput) -> anyhow::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    let mut put = |name: String, text: String| -> anyhow::Result<()> {
        let path = dir.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
        Ok(())
    };
    put("aggregate.csv".into(), emit_table(&out.table, Format::Csv))?;
    put("table.md".into(), emit_table(&out.table, Format::Markdown))?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["agents", "algorithm", "run", "seed", "rounds", "agent", "error"])?;
    for r in &out.runs {
        for cp in &r.checkpoints {
            for (i, e) in cp.errors.iter().enumerate() {
                w.write_record([
                    r.agents.to_string(),
                    alg_key(r.algorithm).into(),
                    r.run.to_string(),
                    r.seed.to_string(),
                    cp.rounds.to_string(),
                    i.to_string(),
                    e.to_string(),
                ])?;
            }
        }
    }
    put("runs.csv".into(), String::from_utf8(w.into_inner()?)?)?;

    for r in &out.runs {
        let Some(tel) = &r.telemetry else { continue };
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(TELEMETRY_HEADER)?;
        for row in telemetry_rows(tel) {
            w.write_record(&row)?;
        }
        put(
            format!("telemetry_n{}_{}_run{}.csv", r.agents, alg_key(r.algorithm), r.run),
            String::from_utf8(w.into_inner()?)?,
        )?;
    }

    for c in &out.compliance {
        put(
            format!("compliance_n{}_{}.csv", c.agents, alg_key(c.algorithm)),
            compliance_csv(&c.report)?,
        )?;
    }

    if !out.failures.is_empty() {
        let mut text = String::new();
        for f in &out.failures {
            writeln!(text, "N={} {}: {}", f.agents, f.algorithm.name(), f.message)?;
        }
        put("failures.txt".into(), text)?;
    }
    Ok(written)
}

pub fn compliance_csv(report: &ComplianceReport) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["quantity", "measured", "bound", "slack", "holds", "dominance_factor", "runs"])?;
    for e in &report.entries {
        w.write_record([
            e.quantity.clone(),
            e.measured.to_string(),
            e.bound.to_string(),
            e.slack.to_string(),
            e.holds.to_string(),
            e.dominance_factor().to_string(),
            report.runs.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// `M̄_s` valid for every trial the sensor generator can draw: weights in
/// `[0, 1]` and anchors in `[0, 1]^n`. The block supremum is convex in the
/// anchor, so it is attained at a vertex of the unit cube, which is
/// enumerated per block. Fixed data files use their own values.
pub fn support_bounds(spec: &BlockSpec, noise: &NoiseModel) -> anyhow::Result<SubgradBounds> {
    let dim = spec.dim();
    let mut per_block = Vec::with_capacity(spec.num_blocks());
    for s in 0..spec.num_blocks() {
        let range = spec.range(s)?;
        if range.len() > 20 {
            bail!("block {s} is too large for vertex enumeration");
        }
        let mut worst: f64 = 0.0;
        for mask in 0u32..(1 << range.len()) {
            let mut anchor = vec![0.0; dim];
            for (bit, j) in range.clone().enumerate() {
                if mask & (1 << bit) != 0 {
                    anchor[j] = 1.0;
                }
            }
            let obj = QuadraticSensorObjective::new(vec![1.0], vec![anchor])?;
            worst = worst.max(obj.analytic_bounds(spec, noise)?.per_block[s]);
        }
        per_block.push(worst);
    }
    Ok(SubgradBounds::from_blocks(per_block))
}

/// Key-value listing of every constant, per network size.
pub fn bounds_report(cfg: &ExperimentConfig, eps: f64) -> anyhow::Result<String> {
    let data = cfg.sensor_data()?;
    let mut out = String::new();
    for &n in &cfg.network.agents {
        let ctx = CellContext::new(cfg, n, data.as_ref())?;
        let subgrad = match &data {
            Some(d) => d.objective()?.analytic_bounds(&ctx.spec, &cfg.objective.noise)?,
            None => support_bounds(&ctx.spec, &cfg.objective.noise)?,
        };
        let inputs = ctx.bound_inputs(subgrad)?;
        let t = cfg.max_horizon();
        let params = ctx.schedule.params();
        writeln!(out, "[N={n}]")?;
        writeln!(out, "{:<14} {}", "agents", n)?;
        writeln!(out, "{:<14} {}", "delta", params.delta)?;
        writeln!(out, "{:<14} {}", "period", params.period)?;
        writeln!(out, "{:<14} {}", "blocks", inputs.num_blocks())?;
        writeln!(out, "{:<14} {}", "theta", inputs.theta)?;
        for (s, m) in inputs.subgrad.per_block.iter().enumerate() {
            writeln!(out, "{:<14} {m}", format!("m_bar_{s}"))?;
        }
        for (s, d) in inputs.diameters.iter().enumerate() {
            writeln!(out, "{:<14} {d}", format!("d_sq_{s}"))?;
        }
        write!(out, "{}", RateBounds::compute(&inputs, t, eps)?)?;
        let sched = StepSchedule::InverseSqrt { theta: inputs.theta };
        writeln!(out, "{:<14} {}", "proj_err_k0", projection_error_bound(&inputs, stepsize(inputs.theta, 0)))?;
        writeln!(out, "{:<14} {}", "consensus_sum", consensus_bound(&inputs, &sched, t)?)?;
        writeln!(out)?;
    }
    Ok(out)
}

/// Structural validation and the geometric mixing check, per network size.
pub fn network_report(cfg: &ExperimentConfig, horizon: usize) -> anyhow::Result<(String, bool)> {
    let mut out = String::new();
    let mut all_ok = true;
    for &n in &cfg.network.agents {
        let schedule = cfg.schedule(n)?;
        let report = validate_schedule(&schedule, horizon);
        let mixing = check_geometric_mixing(&schedule, horizon);
        all_ok &= report.is_valid() && mixing.passed();
        writeln!(out, "[N={n}]")?;
        writeln!(out, "kind: {:?}", schedule.kind())?;
        writeln!(out, "delta: {}", schedule.params().delta)?;
        writeln!(out, "period: {}", schedule.params().period)?;
        writeln!(out, "{report}")?;
        writeln!(out, "mixing_pairs_checked: {}", mixing.pairs_checked)?;
        writeln!(out, "mixing_violations: {}", mixing.violations)?;
        writeln!(out, "mixing_min_slack: {}", mixing.min_slack)?;
        writeln!(out, "mixing_max_ratio: {}", mixing.max_ratio)?;
        writeln!(out, "mixing_status: {}", if mixing.passed() { "pass" } else { "fail" })?;
        writeln!(out)?;
    }
    Ok((out, all_ok))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn support_bound_on_the_unit_box() {
        // Worst case: weight 1, anchor 1, x = -1 gives |2(x - b)| = 4 per coordinate.
        let spec = BlockSpec::uniform_box(&[5, 5], -1.0, 1.0).unwrap();
        let b = support_bounds(&spec, &NoiseModel::Gaussian { sigma: 1.0 }).unwrap();
        for m in &b.per_block {
            assert!((m * m - (5.0 * 16.0 + 5.0)).abs() < 1e-9, "{m}");
        }
    }

    #[test]
    fn support_bound_dominates_generated_trials() {
        let spec = BlockSpec::uniform_box(&[3, 2], -1.0, 0.5).unwrap();
        let noise = NoiseModel::Gaussian { sigma: 0.3 };
        let sup = support_bounds(&spec, &noise).unwrap();
        for seed in 0..50 {
            let obj = QuadraticSensorObjective::generate(4, 5, dsbcd_core::rng::StreamKey::new(seed)).unwrap();
            let b = obj.analytic_bounds(&spec, &noise).unwrap();
            for (x, y) in b.per_block.iter().zip(&sup.per_block) {
                assert!(x <= y);
            }
        }
    }
}

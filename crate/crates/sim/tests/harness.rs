use std::path::PathBuf;
use std::process::Command;

use dsbcd_core::engine::Algorithm;
use dsbcd_sim::config::parse_config_str;
use dsbcd_sim::report::write_outputs;
use dsbcd_sim::{emit_table, parse_config, parse_table_csv, run_experiment, ExperimentConfig, Format};

fn small_config() -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/small.json");
    let mut cfg = parse_config(&path).unwrap();
    cfg.num_runs = 4;
    cfg.output.telemetry_runs = 0;
    cfg.output.compliance = false;
    cfg
}

fn two_sizes() -> ExperimentConfig {
    let mut cfg = small_config();
    cfg.network.agents = vec![3, 4];
    cfg.network.period = dsbcd_sim::config::PeriodSpec::Fixed(4);
    cfg.validate().unwrap();
    cfg
}

#[test]
fn same_seed_gives_identical_bytes() {
    let cfg = two_sizes();
    let a = run_experiment(&cfg, true).unwrap();
    let b = run_experiment(&cfg, false).unwrap();
    let c = run_experiment(&cfg, true).unwrap();
    let md = emit_table(&a.table, Format::Markdown);
    assert_eq!(md, emit_table(&b.table, Format::Markdown));
    assert_eq!(md, emit_table(&c.table, Format::Markdown));
    assert_eq!(a.table, b.table);
    let mut other = cfg.clone();
    other.master_seed += 1;
    assert_ne!(run_experiment(&other, true).unwrap().table, a.table);
}

#[test]
fn removing_cells_leaves_other_cells_unchanged() {
    let cfg = two_sizes();
    let full = run_experiment(&cfg, true).unwrap().table;

    let mut fewer_sizes = cfg.clone();
    fewer_sizes.network.agents = vec![4];
    let part = run_experiment(&fewer_sizes, true).unwrap().table;
    for row in &part.rows {
        assert_eq!(Some(row), full.get(row.agents, row.rounds, row.algorithm));
    }

    let mut fewer_horizons = cfg.clone();
    fewer_horizons.horizons = vec![100, 300];
    let part = run_experiment(&fewer_horizons, true).unwrap().table;
    assert_eq!(part.rows.len(), 2 * 2 * 2);
    for row in &part.rows {
        assert_eq!(Some(row), full.get(row.agents, row.rounds, row.algorithm));
    }

    let mut one_alg = cfg;
    one_alg.algo.algorithms = vec![Algorithm::Dsgd];
    let part = run_experiment(&one_alg, true).unwrap().table;
    for row in &part.rows {
        assert_eq!(Some(row), full.get(row.agents, row.rounds, row.algorithm));
    }
}

#[test]
fn table_rows_cover_every_cell() {
    let cfg = two_sizes();
    let out = run_experiment(&cfg, true).unwrap();
    assert!(out.failures.is_empty());
    assert_eq!(out.table.rows.len(), 2 * 5 * 2);
    assert!(out.table.rows.iter().all(|r| r.runs == 4 && r.mean.is_finite()));
    assert_eq!(out.runs.len(), 2 * 2 * 4);
    let md = emit_table(&out.table, Format::Markdown);
    assert!(md.starts_with("T | N=3 DSBCD | N=3 DSGD | N=4 DSBCD | N=4 DSGD\n"));
}

#[test]
fn failing_cell_is_reported_and_others_proceed() {
    // The closed-form optimum needs box blocks, so a ball block fails every
    // run of the cell at setup.
    let text = r#"{
        "master_seed": 1,
        "network": {"kind": "complete_uniform", "agents": [2, 3]},
        "space": {"blocks": [{"size": 2, "set": {"ball": {"radius": 1.0}}}]},
        "objective": {},
        "algo": {"algorithms": ["dsbcd"], "theta": 1.0, "probabilities": [1.0]},
        "horizons": [5],
        "num_runs": 2
    }"#;
    let cfg = parse_config_str(text).unwrap();
    let out = run_experiment(&cfg, false).unwrap();
    assert_eq!(out.failures.len(), 2);
    assert!(out.failures[0].message.contains("box"), "{}", out.failures[0].message);
    assert!(out.table.rows.is_empty());
}

#[test]
fn written_outputs_parse_back() {
    let mut cfg = small_config();
    cfg.output.telemetry_runs = 1;
    cfg.output.compliance = true;
    let out = run_experiment(&cfg, true).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = write_outputs(dir.path(), &out).unwrap();
    let names: Vec<String> = written
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    for expected in [
        "aggregate.csv",
        "table.md",
        "runs.csv",
        "telemetry_n3_dsbcd_run0.csv",
        "telemetry_n3_dsgd_run0.csv",
        "compliance_n3_dsbcd.csv",
        "compliance_n3_dsgd.csv",
    ] {
        assert!(names.iter().any(|n| n == expected), "{expected} missing from {names:?}");
    }
    let back = parse_table_csv(std::fs::File::open(dir.path().join("aggregate.csv")).unwrap()).unwrap();
    assert_eq!(back.rows.len(), out.table.rows.len());

    let mut tel = csv::Reader::from_path(dir.path().join("telemetry_n3_dsbcd_run0.csv")).unwrap();
    assert_eq!(
        tel.headers().unwrap().iter().collect::<Vec<_>>(),
        ["k", "agent", "error", "consensus_spread", "proj_err_norm", "sampled_block"]
    );
    let rows: Vec<csv::StringRecord> = tel.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 500 * 3);
    assert!(rows.iter().all(|r| r[5] == *"0" || r[5] == *"1"));
    let mut tel = csv::Reader::from_path(dir.path().join("telemetry_n3_dsgd_run0.csv")).unwrap();
    assert!(tel.records().all(|r| r.unwrap()[5].is_empty()));

    let runs = std::fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 2 * 4 * 5 * 3);
    assert!(out.compliance.iter().all(|c| c.report.all_hold()));
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dsbcd"))
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs")
}

#[test]
fn cli_run_then_rate_fit() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(configs().join("small.json"))
        .args(["--seed", "11", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("T | N=3 DSBCD | N=3 DSGD\n"), "{stdout}");
    assert!(stdout.contains("bounds N=3 DSBCD: holds"));

    let fit = bin()
        .args(["rate-fit", "--in"])
        .arg(dir.path().join("aggregate.csv"))
        .output()
        .unwrap();
    assert!(fit.status.success());
    let text = String::from_utf8(fit.stdout).unwrap();
    assert!(text.contains("N=3 DSBCD: slope -"), "{text}");
    assert!(text.contains("over 5 points"));
}

#[test]
fn cli_bounds_and_network_reports() {
    let out = bin()
        .args(["bounds", "--eps", "0.5", "--config"])
        .arg(configs().join("table1.json"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for key in ["[N=30]", "gamma_big", "e1_plus_e2", "theta_star", "kappa", "t_of_eps", "consensus_sum"] {
        assert!(text.contains(key), "{key} missing");
    }

    let out = bin()
        .args(["validate-network", "--horizon", "60", "--config"])
        .arg(configs().join("table1.json"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.matches("status: valid").count(), 3);
    assert_eq!(text.matches("mixing_status: pass").count(), 3);
}

#[test]
fn cli_reports_config_errors_with_paths() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let text = std::fs::read_to_string(configs().join("small.json"))
        .unwrap()
        .replace("[0.5, 0.5]", "[0.6, 0.5]");
    std::fs::write(&path, text).unwrap();
    let out = bin().args(["bounds", "--config"]).arg(&path).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("algo.probabilities"), "{err}");

    std::fs::write(&path, "").unwrap();
    let out = bin().args(["bounds", "--config"]).arg(&path).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("parse error"));
}

#[test]
fn data_file_config_uses_fixed_data() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("sensors.csv"), "0.5, 0.1, 0.2\n1.0, 0.9, 0.4\n").unwrap();
    let cfg_text = r#"{
        "master_seed": 3,
        "network": {"kind": "complete_uniform", "agents": [2]},
        "space": {"blocks": [{"size": 1, "set": {"box": {"lo": -1, "hi": 1}}},
                              {"size": 1, "set": {"box": {"lo": -1, "hi": 1}}}]},
        "objective": {"data_file": "sensors.csv"},
        "algo": {"algorithms": ["dsbcd"], "theta": 1.0, "probabilities": [0.5, 0.5]},
        "horizons": [50, 400],
        "num_runs": 3
    }"#;
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, cfg_text).unwrap();
    let cfg = parse_config(&path).unwrap();
    let out = run_experiment(&cfg, false).unwrap();
    let opt: Vec<f64> = out.runs.iter().map(|r| r.optimum).collect();
    assert!(opt.windows(2).all(|w| w[0] == w[1]));
    let col = out.table.column(2, Algorithm::Dsbcd);
    assert!(col[1].1 < col[0].1);

    let bad = cfg_text.replace("\"agents\": [2]", "\"agents\": [3]");
    std::fs::write(&path, bad).unwrap();
    let err = parse_config(&path).unwrap_err();
    assert!(err.issues().iter().any(|i| i.path == "network.agents"));
}

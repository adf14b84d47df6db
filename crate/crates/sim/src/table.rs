//! Table emission: markdown in the published layout and long-form CSV.

use std::io::Read;

use anyhow::{bail, Context};
use dsbcd_core::engine::Algorithm;

use crate::experiment::{AggregateRow, AggregateTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Markdown,
    Csv,
}

pub const CSV_HEADER: [&str; 6] = ["agents", "rounds", "algorithm", "mean", "std_dev", "runs"];

/// Six decimals, rounding the exact binary value to nearest.
pub fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

pub fn emit_table(table: &AggregateTable, format: Format) -> String {
    match format {
        Format::Markdown => markdown(table),
        Format::Csv => csv_text(table),
    }
}

/// One row per horizon, one column per (N, algorithm) pair.
fn markdown(table: &AggregateTable) -> String {
    let agents = table.agents();
    let algs = table.algorithms();
    let mut header = vec!["T".to_string()];
    for n in &agents {
        for a in &algs {
            header.push(format!("N={n} {}", a.name()));
        }
    }
    let mut out = header.join(" | ");
    out.push('\n');
    out.push_str(&vec!["---"; header.len()].join(" | "));
    out.push('\n');
    for t in table.horizons() {
        let mut cells = vec![t.to_string()];
        for &n in &agents {
            for &a in &algs {
                cells.push(table.get(n, t, a).map_or("-".to_string(), |r| fmt6(r.mean)));
            }
        }
        out.push_str(&cells.join(" | "));
        out.push('\n');
    }
    out
}

fn csv_text(table: &AggregateTable) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for r in &table.rows {
        w.write_record([
            r.agents.to_string(),
            r.rounds.to_string(),
            algorithm_key(r.algorithm).to_string(),
            fmt6(r.mean),
            fmt6(r.std_dev),
            r.runs.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

fn algorithm_key(a: Algorithm) -> &'static str {
    match a {
        Algorithm::Dsbcd => "dsbcd",
        Algorithm::Dsgd => "dsgd",
    }
}

fn parse_algorithm(s: &str) -> anyhow::Result<Algorithm> {
    match s.to_ascii_lowercase().as_str() {
        "dsbcd" => Ok(Algorithm::Dsbcd),
        "dsgd" => Ok(Algorithm::Dsgd),
        other => bail!("unknown algorithm {other:?}"),
    }
}

/// Reads the CSV written by [`emit_table`].
pub fn parse_table_csv<R: Read>(input: R) -> anyhow::Result<AggregateTable> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.iter().ne(CSV_HEADER) {
        bail!("expected header {:?}, found {:?}", CSV_HEADER, headers);
    }
    let mut table = AggregateTable::default();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let field = |k: usize| rec.get(k).with_context(|| format!("line {line}: missing field"));
        table.rows.push(AggregateRow {
            agents: field(0)?.parse().with_context(|| format!("line {line}: agents"))?,
            rounds: field(1)?.parse().with_context(|| format!("line {line}: rounds"))?,
            algorithm: parse_algorithm(field(2)?).with_context(|| format!("line {line}"))?,
            mean: field(3)?.parse().with_context(|| format!("line {line}: mean"))?,
            std_dev: field(4)?.parse().with_context(|| format!("line {line}: std_dev"))?,
            runs: field(5)?.parse().with_context(|| format!("line {line}: runs"))?,
        });
    }
    Ok(table)
}

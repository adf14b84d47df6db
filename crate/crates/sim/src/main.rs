use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use dsbcd_sim::experiment::rate_fit;
use dsbcd_sim::report::{bounds_report, network_report, write_outputs};
use dsbcd_sim::{parse_config, parse_table_csv, run_experiment, table1_config, ExperimentConfig};

#[derive(Parser)]
#[command(name = "dsbcd", version, about = "Distributed stochastic block coordinate descent simulator")]
struct Cli {
    /// Run cells one run at a time instead of in parallel.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the shipped sensor-estimation comparison.
    Table1 {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print every bound constant for a config.
    Bounds {
        #[arg(long)]
        config: PathBuf,
        /// Target accuracy for the round complexity.
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
    },
    /// Check the configured mixing schedules over a horizon.
    ValidateNetwork {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        horizon: usize,
    },
    /// Fit log(error) against log(T) for each column of an aggregate CSV.
    RateFit {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    let parallel = !cli.sequential;
    match cli.command {
        Command::Run { config, seed, out } => {
            let mut cfg = parse_config(&config)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            experiment(&cfg, &out, parallel)
        }
        Command::Table1 { out, seed } => {
            let mut cfg = table1_config();
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            experiment(&cfg, &out, parallel)
        }
        Command::Bounds { config, eps } => {
            let cfg = parse_config(&config)?;
            print!("{}", bounds_report(&cfg, eps)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::ValidateNetwork { config, horizon } => {
            let cfg = parse_config(&config)?;
            let (text, ok) = network_report(&cfg, horizon)?;
            print!("{text}");
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::RateFit { input } => {
            let file = File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let table = parse_table_csv(file)?;
            for n in table.agents() {
                for a in table.algorithms() {
                    let column = table.column(n, a);
                    match rate_fit(&column) {
                        Ok(fit) => {
                            print!("N={n} {}: slope {:.6} over {} points", a.name(), fit.slope, fit.used);
                            if !fit.excluded.is_empty() {
                                print!(", excluded {:?}", fit.excluded);
                            }
                            println!();
                        }
                        Err(e) => println!("N={n} {}: {e}", a.name()),
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn experiment(cfg: &ExperimentConfig, out: &Path, parallel: bool) -> anyhow::Result<ExitCode> {
    let result = run_experiment(cfg, parallel)?;
    let written = write_outputs(out, &result)?;
    print!("{}", dsbcd_sim::emit_table(&result.table, dsbcd_sim::Format::Markdown));
    for f in &result.failures {
        eprintln!("cell failed: N={} {}: {}", f.agents, f.algorithm.name(), f.message);
    }
    for c in &result.compliance {
        let status = if c.report.all_hold() { "holds" } else { "VIOLATED" };
        println!("bounds N={} {}: {status}", c.agents, c.algorithm.name());
    }
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(if result.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

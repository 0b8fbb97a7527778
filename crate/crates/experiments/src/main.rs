use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tempered_vb::config::{DivergenceParams, ExperimentConfig, ExperimentKind};
use tempered_vb::harness::{run_experiment, RunContext};
use tempered_vb::ExpError;

#[derive(Parser)]
#[command(name = "tempered-vb", version, about = "Tempered variational Bayes experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config file.
    Run {
        /// Path to the experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Output stem for the report files (overrides the config's `out`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config's global seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's replication count.
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Run the divergence property grid and report the maximum deviation.
    CheckDivergences,
    /// Print the artifact version.
    Version,
}

fn dispatch(cli: Cli) -> Result<(), ExpError> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            reps,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(reps) = reps {
                cfg.reps = reps;
            }
            let ctx = RunContext { cli_out: out };
            let report = run_experiment(&cfg, &ctx)?;
            println!("experiment: {}", cfg.kind);
            for (key, value) in &report.summary {
                println!("  {key} = {}", value.get());
            }
            Ok(())
        }
        Command::CheckDivergences => {
            let cfg = ExperimentConfig {
                kind: ExperimentKind::DivergenceCheck,
                alpha: 0.5,
                seed: 0,
                reps: 1,
                out: Some("divergence-check".into()),
                logistic: None,
                matcomp: None,
                regression: None,
                mixture: None,
                divergence: Some(DivergenceParams { grid: 5, pairs: 1000 }),
            };
            let report = run_experiment(&cfg, &RunContext::default())?;
            println!(
                "max closed-form vs quadrature deviation: {:.3e}",
                report.summary["max_gaussian_deviation"].get()
            );
            println!(
                "property violations: {}",
                report.summary["property_violations"].get()
            );
            Ok(())
        }
        Command::Version => {
            println!("tempered-vb {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

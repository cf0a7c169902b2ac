use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use speedtrack::experiment::{self, Arm, ExperimentConfig, Preset};
use speedtrack::Result;

/// Sound speed tracking and speed-compensated sound zone experiments.
#[derive(Parser)]
#[command(name = "speedtrack", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate and store the IR banks needed by a configuration.
    SimulateIrs {
        config: PathBuf,
        /// Use the full-scale preset as the base configuration.
        #[arg(long)]
        full: bool,
    },
    /// Design VAST filters from the stored IR banks.
    DesignFilters {
        config: PathBuf,
        #[arg(long)]
        full: bool,
    },
    /// Run the closed-loop experiment and write per-frame traces.
    Run {
        config: PathBuf,
        /// Methods to run (repeatable); defaults to all.
        #[arg(long = "arm", value_parser = parse_arm)]
        arms: Vec<Arm>,
        #[arg(long)]
        full: bool,
    },
    /// Summarize the traces in a run directory.
    Metrics { run_dir: PathBuf },
}

fn parse_arm(s: &str) -> std::result::Result<Arm, String> {
    Arm::parse(s).ok_or_else(|| {
        let names: Vec<_> = Arm::ALL.iter().map(|a| a.label()).collect();
        format!("unknown arm `{s}`; expected one of {}", names.join(", "))
    })
}

fn load(path: &Path, full: bool) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path, if full { Preset::Full } else { Preset::Desk })
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SimulateIrs { config, full } => {
            for path in experiment::simulate_irs(&load(&config, full)?)? {
                println!("{}", path.display());
            }
        }
        Command::DesignFilters { config, full } => {
            for path in experiment::design_filters(&load(&config, full)?)? {
                println!("{}", path.display());
            }
        }
        Command::Run { config, arms, full } => {
            let arms = if arms.is_empty() { Arm::ALL.to_vec() } else { arms };
            let dir = experiment::run_to_disk(&load(&config, full)?, &arms)?;
            println!("{}", dir.display());
        }
        Command::Metrics { run_dir } => {
            let summary = experiment::summary_csv(&experiment::summarize_run(&run_dir)?);
            let path = run_dir.join("summary.csv");
            std::fs::write(&path, &summary).map_err(|e| speedtrack::Error::Io { path, source: e })?;
            print!("{summary}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

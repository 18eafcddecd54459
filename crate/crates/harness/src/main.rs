//! Command-line entry point.
//!
//! Exit codes: 0 on full success, 1 on config errors, 2 when some scenarios
//! failed (their rows carry `converged = false`).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dma_ee_harness::config::{ExperimentConfig, SweepAxis};
use dma_ee_harness::csvio::emit_csv;
use dma_ee_harness::report::{render_report, validate_de};
use dma_ee_harness::runner::run_with_jobs;
use dma_ee_harness::HarnessError;

#[derive(Parser)]
#[command(name = "dma-ee", about = "Energy-efficiency experiments for DMA massive MIMO uplink")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment description (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Override the number of seeds.
    #[arg(long)]
    seeds: Option<u32>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by the config.
    Run(CommonArgs),
    /// Compare the deterministic-equivalent rate against Monte-Carlo.
    ValidateDe {
        #[arg(long)]
        config: PathBuf,
        /// Optional path for the report table; printed to stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the Monte-Carlo trial count.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Run a power-budget sweep (forces the sweep axis).
    SweepPower(CommonArgs),
    /// Run a microstrip-count sweep at fixed total elements.
    SweepMicrostrips(CommonArgs),
}

fn load(path: &PathBuf) -> Result<ExperimentConfig, HarnessError> {
    ExperimentConfig::load(path)
}

fn apply_common(cfg: &mut ExperimentConfig, args: &CommonArgs) {
    if let Some(seeds) = args.seeds {
        cfg.run.seeds = seeds;
    }
    if let Some(jobs) = args.jobs {
        cfg.run.jobs = jobs;
    }
}

fn run_and_emit(cfg: &ExperimentConfig, out: &PathBuf) -> Result<usize, HarnessError> {
    let report = run_with_jobs(cfg, cfg.run.jobs)?;
    emit_csv(&report.records, out)?;
    eprintln!(
        "wrote {} records to {} ({} failed scenarios)",
        report.records.len(),
        out.display(),
        report.failed_jobs
    );
    Ok(report.failed_jobs)
}

fn dispatch(cli: Cli) -> Result<usize, HarnessError> {
    match cli.command {
        Command::Run(args) => {
            let mut cfg = load(&args.config)?;
            apply_common(&mut cfg, &args);
            cfg.validate()?;
            run_and_emit(&cfg, &args.out)
        }
        Command::SweepPower(args) => {
            let mut cfg = load(&args.config)?;
            apply_common(&mut cfg, &args);
            cfg.sweep.axis = SweepAxis::PowerBudget;
            if cfg.sweep.power_budget_dbm.is_empty() {
                cfg.sweep.power_budget_dbm = vec![-10.0, 0.0, 10.0, 20.0, 30.0, 40.0];
            }
            cfg.validate()?;
            run_and_emit(&cfg, &args.out)
        }
        Command::SweepMicrostrips(args) => {
            let mut cfg = load(&args.config)?;
            apply_common(&mut cfg, &args);
            cfg.sweep.axis = SweepAxis::Microstrips;
            if cfg.sweep.microstrip_counts.is_empty() {
                let m = cfg.dims.microstrips * cfg.dims.elements_per_strip;
                cfg.sweep.microstrip_counts =
                    (0..).map(|i| 1usize << i).take_while(|&k| k <= m).filter(|&k| m % k == 0).collect();
            }
            cfg.validate()?;
            run_and_emit(&cfg, &args.out)
        }
        Command::ValidateDe { config, out, trials } => {
            let mut cfg = load(&config)?;
            if let Some(t) = trials {
                cfg.run.trials = t;
            }
            cfg.validate()?;
            let report = validate_de(&cfg)?;
            let text = render_report(&report);
            match out {
                Some(path) => std::fs::write(&path, &text)
                    .map_err(|e| HarnessError::Io(format!("cannot write {}: {e}", path.display())))?,
                None => print!("{text}"),
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(2),
        Err(HarnessError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qtraj_core::bench::{cmd_check, cmd_run, cmd_sweep, with_jobs, BenchError, ExperimentConfig};

/// Finite-time-step quantum trajectory benchmarks.
#[derive(Parser, Debug)]
#[command(name = "qtraj", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the trajectory ensemble and write histograms and summaries.
    Run(Common),
    /// Fit single-bin error against step size for every map.
    Sweep(Common),
    /// Check algebraic and quadrature invariants of the maps.
    Check(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment file (flat key = value).
    #[arg(long)]
    config: PathBuf,
    /// Override the seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Use the full ensemble of 5000 trajectories.
    #[arg(long)]
    full: bool,
    /// Worker threads (default: all cores). Does not change results.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory, overriding `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(c: &Common) -> Result<ExperimentConfig, BenchError> {
    ExperimentConfig::load(&c.config)?.with_overrides(c.seed, c.full, c.out.clone())
}

fn execute(cli: Cli) -> Result<(), BenchError> {
    match cli.command {
        Command::Run(c) => {
            let cfg = load(&c)?;
            let report = with_jobs(c.jobs, || cmd_run(&cfg))??;
            for s in &report.summaries {
                println!(
                    "{:<14} mtrse {:.4e}  mtrae {:.4e}",
                    s.kind.name(),
                    s.mtrse,
                    s.mtrae
                );
            }
            println!(
                "{} of {} trajectories completed; outputs in {}",
                report.realizations - report.aborted,
                report.realizations,
                cfg.output_dir.display()
            );
        }
        Command::Sweep(c) => {
            let cfg = load(&c)?;
            let report = with_jobs(c.jobs, || cmd_sweep(&cfg))??;
            for (kind, fit) in &report.fits {
                println!(
                    "{:<14} slope {:.3}  r2 {:.4}",
                    kind.name(),
                    fit.slope,
                    fit.r_squared
                );
            }
        }
        Command::Check(c) => {
            let cfg = load(&c)?;
            with_jobs(c.jobs, || cmd_check(&cfg, &mut std::io::stdout().lock()))??;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qtraj: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

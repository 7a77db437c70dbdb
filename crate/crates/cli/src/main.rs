mod commands;
mod output;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use output::Format;

#[derive(Debug, Parser)]
#[command(name = "stickypair", version, about = "Two interacting random walkers: exact transforms, simulation and duality covariances")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Output format
    #[arg(long, value_enum, default_value = "csv", global = true)]
    pub format: Format,
    /// Write to this file instead of standard output
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, env = "STICKYPAIR_SEED", default_value_t = 1, global = true)]
    pub seed: u64,
    /// Worker threads for sweeps and ensembles (0 = all cores)
    #[arg(long, default_value_t = 0, global = true)]
    pub jobs: usize,
    /// κ-grid points for Fourier integrals (odd)
    #[arg(long, default_value_t = 1025, global = true)]
    pub quad_points: usize,
    /// Gaver–Stehfest terms (even, 4..=20)
    #[arg(long, default_value_t = 12, global = true)]
    pub gs_terms: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form kernel G(w, w′, κ, λ) or the leftmost/rightmost transform
    Transform(commands::TransformArgs),
    /// Time-domain occupation of the meeting state by Laplace inversion
    Invert(commands::InvertArgs),
    /// Monte Carlo simulation
    #[command(subcommand)]
    Simulate(commands::SimulateCommand),
    /// Sticky Brownian transforms and their lattice approximations
    Sticky(commands::StickyArgs),
    /// Closed form against the truncated-generator oracle
    Validate(commands::ValidateArgs),
    /// Covariance scaling in the sticky regime
    Covariance(commands::CovarianceArgs),
    /// Variance of the density fluctuation field
    Densityfield(commands::DensityFieldArgs),
}

/// A command either succeeds, or runs to completion but reports failed checks.
pub enum Outcome {
    Ok,
    ValidationFailed,
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    rayon::ThreadPoolBuilder::new().num_threads(cli.global.jobs).build_global().ok();
    let (table, outcome) = commands::dispatch(&cli.command, &cli.global)?;
    let mut sink: Box<dyn Write> = match &cli.global.output {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    table.write(cli.global.format, &mut sink)?;
    sink.flush()?;
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::ValidationFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

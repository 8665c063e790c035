//! `quasi2d` command-line front end.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "quasi2d", version, about = "Slab electrostatics: energies, error scans, MD and timings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (sectioned key = value file).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `[run] output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for every random stream, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// ewald2d, soewald2d or rbse2d.
    #[arg(long)]
    method: Option<String>,
    /// Worker threads for the force kernels.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Check neutrality, SOE certification and cutoffs; print predicted errors.
    Validate(Common),
    /// One-shot energy and forces.
    Energy {
        #[command(flatten)]
        common: Common,
        /// Add the brute-force image sum.
        #[arg(long)]
        oracle: bool,
        /// Number of evaluations to average.
        #[arg(long, default_value_t = 1)]
        repeats: usize,
    },
    /// Error against the stable reference over s, N, Lz, or per particle.
    ScanError(Common),
    /// Molecular dynamics run.
    Simulate(Common),
    /// Wall time per energy+force evaluation.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        repeats: Option<usize>,
    },
}

fn prepare(common: &Common) -> Result<RunConfig, CliError> {
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot set thread count: {e}")))?;
    }
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.reseed(seed);
    }
    if let Some(m) = &common.method {
        cfg.method = m.parse()?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Validate(c) => commands::validate(&prepare(&c)?),
        Command::Energy { common, oracle, repeats } => commands::energy(&prepare(&common)?, oracle, repeats),
        Command::ScanError(c) => commands::scan_error(&prepare(&c)?),
        Command::Simulate(c) => commands::simulate(&prepare(&c)?),
        Command::Bench { common, repeats } => commands::bench(&prepare(&common)?, repeats),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nmwalk_cli::pipelines::{run_choi_scan, run_spectrum, run_walk, run_witness};
use nmwalk_cli::{parse_config, CliError, ExperimentConfig};

/// Noisy quantum-walk experiments: walk statistics, correlation witnesses,
/// Choi-matrix divisibility scans and backflow spectra.
#[derive(Parser)]
#[command(name = "nmwalk", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Position distribution and variance per step.
    Walk(Common),
    /// Witness series (td, mi, mid, qd, entropy, variance) and metadata.
    Witness(Common),
    /// Choi eigenvalues of the intermediate maps from t1.
    Choi(Common),
    /// Monotone fit, residual, spectrum and peaks of a (step, value) CSV.
    Spectrum {
        /// Input series with a header row.
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// JSON configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accepted for interface stability and recorded in metadata. Every
    /// computation is deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

fn load(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            parse_config(&text)
        }
        None => parse_config("{}"),
    }
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let (common, input) = match &cli.command {
        Command::Walk(c) | Command::Witness(c) | Command::Choi(c) => (c, None),
        Command::Spectrum { input, common } => (common, Some(input)),
    };
    let cfg = load(common.config.as_deref())?;
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir());
    match &cli.command {
        Command::Walk(_) => run_walk(&cfg, &out),
        Command::Witness(_) => run_witness(&cfg, &out, common.seed),
        Command::Choi(_) => run_choi_scan(&cfg, &out),
        Command::Spectrum { .. } => run_spectrum(&cfg, input.expect("spectrum has an input"), &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

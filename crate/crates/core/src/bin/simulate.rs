//! `simulate <study> --config <path> [--out <path>] [--threads N]`
//!
//! Exit codes: 0 success, 1 validation error, 2 numerical-instability or
//! resolution error, 3 I/O error.

use clap::{Args, Parser, Subcommand};
use cvteleport::cli::{self, CliError, Study};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "simulate",
    about = "Config-driven studies of CV teleportation over non-Markovian channels",
    version
)]
struct Cli {
    #[command(subcommand)]
    study: StudyCmd,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment definition (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Output CSV path; defaults to the config's `output` or `<study>.csv`
    #[arg(long)]
    out: Option<PathBuf>,
    /// Thread cap; results never depend on it. Defaults to SIMULATE_THREADS
    /// or the core count.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum StudyCmd {
    /// Entanglement decay of the resource state (channel vs Markovian reference)
    Entanglement(RunArgs),
    /// Average-fidelity curves of the teleportation pipeline
    Fidelity(RunArgs),
    /// BLP non-Markovianity over a (gamma0, kappa0) parameter sweep
    BlpSurface(RunArgs),
    /// Wigner functions of reconstructed output states
    Wigner(RunArgs),
    /// Relative average fidelity across input-state families
    CompareInputs(RunArgs),
    /// Noise power spectral density
    Psd(RunArgs),
}

impl StudyCmd {
    fn split(&self) -> (Study, &RunArgs) {
        match self {
            StudyCmd::Entanglement(a) => (Study::Entanglement, a),
            StudyCmd::Fidelity(a) => (Study::Fidelity, a),
            StudyCmd::BlpSurface(a) => (Study::BlpSurface, a),
            StudyCmd::Wigner(a) => (Study::Wigner, a),
            StudyCmd::CompareInputs(a) => (Study::CompareInputs, a),
            StudyCmd::Psd(a) => (Study::Psd, a),
        }
    }
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    let (study, args) = cli.study.split();

    let threads = args.threads.or_else(|| {
        std::env::var("SIMULATE_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .ok();
    }

    let cfg = cli::parse_config(&args.config)?;
    if cfg.study != study {
        return Err(CliError::Validation(vec![format!(
            "study mismatch: subcommand '{}' but config declares '{}'",
            study.name(),
            cfg.study.name()
        )]));
    }
    let written = cli::execute(&cfg, args.out.as_deref())?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

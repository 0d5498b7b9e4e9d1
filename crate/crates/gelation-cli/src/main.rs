//! `gelation`: configuration-driven runs of the solvers in the `gelation` crate.

mod checks;
mod config;
mod error;
mod run;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use error::CliError;
use run::Log;

#[derive(Parser, Debug)]
#[command(name = "gelation", version, about = "Gelling solutions of the coagulation equation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// TOML run configuration; every block is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Direct integration of the coagulation equation.
    Simulate,
    /// Fixed-point construction of the gelling solution.
    Construct,
    /// Contour evaluation of the fundamental solution and Θ(τ).
    Fundsol,
    /// Norms of a trajectory CSV.
    Norms,
    /// Quick identity checks; exits 1 on any failure.
    Validate,
    /// The pipeline in `[sweep]`, once per λ, in parallel.
    Sweep,
}

impl Cmd {
    fn name(self) -> &'static str {
        match self {
            Cmd::Simulate => "simulate",
            Cmd::Construct => "construct",
            Cmd::Fundsol => "fundsol",
            Cmd::Norms => "norms",
            Cmd::Validate => "validate",
            Cmd::Sweep => "sweep",
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let raw = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let cfg = raw.resolve()?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::config("--threads", "must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config("--threads", e.to_string()))?;
    }
    let dir = cli.out.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out").join(cli.cmd.name()));
    let log = Log { verbose: cli.verbose };
    let summary = match cli.cmd {
        Cmd::Simulate => run::simulate(&cfg, &dir, log)?,
        Cmd::Construct => run::construct(&cfg, &dir, log)?,
        Cmd::Fundsol => run::fundsol(&cfg, &dir, log)?,
        Cmd::Norms => run::norms(&cfg, &dir, log)?,
        Cmd::Validate => run::validate(&cfg, &dir, log)?,
        Cmd::Sweep => run::sweep(&raw, &dir, log)?,
    };
    log.info(format!("{}: {summary}", cli.cmd.name()));
    println!("wrote {}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

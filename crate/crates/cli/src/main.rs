use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qcga_cli::commands;
use qcga_cli::config::{JobConfig, OutputFormat};
use qcga_cli::CliError;

/// Design and compare statistical QC procedures.
#[derive(Parser)]
#[command(name = "qcga", version)]
struct Cli {
    /// Job configuration (TOML). Defaults describe a sodium assay.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for the search, the simulation and the comparison replicates.
    #[arg(long, global = true, env = "QCGA_SEED")]
    seed: Option<u64>,
    /// Worker threads. Output does not depend on it.
    #[arg(long, global = true, env = "QCGA_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the genetic search.
    Design,
    /// Estimate one procedure.
    Evaluate {
        procedure: String,
    },
    /// Rank procedures over paired replicates.
    Compare {
        procedures: Vec<String>,
        /// Leave the builtin library out.
        #[arg(long)]
        no_builtin: bool,
    },
    ListLibrary,
    CriticalErrors,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => JobConfig::load(path)?,
        None => JobConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = cli.out {
        cfg.output.path = Some(out);
    }
    if let Some(format) = cli.format {
        cfg.output.format = format;
    }
    cfg.validate()?;
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }

    let format = cfg.output.format;
    let text = match &cli.command {
        Command::Design => commands::design(&cfg, format)?,
        Command::Evaluate { procedure } => commands::evaluate(&cfg, procedure, format)?,
        Command::Compare { procedures, no_builtin } => {
            commands::compare(&cfg, procedures, cfg.compare.include_builtin && !no_builtin, format)?
        }
        Command::ListLibrary => commands::list_library(&cfg, format)?,
        Command::CriticalErrors => commands::critical_errors(&cfg, format)?,
    };
    match &cfg.output.path {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qcga: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aae_cli::config::{BackendTag, Mode};
use aae_cli::output::{write_error, write_outputs};
use aae_cli::{execute, load_config, RunError};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Amplified amplitude estimation of a single marked probability.
    Aae,
    /// One-body observable on a ground state.
    Operator,
    /// Energy difference along a Hamiltonian path.
    EnergyDiff,
    /// Query-scaling sweep over a grid of target errors.
    Sweep,
    /// Newton-Cotes weights.
    Weights,
}

impl Command {
    fn mode(self) -> Mode {
        match self {
            Command::Aae => Mode::Aae,
            Command::Operator => Mode::Operator,
            Command::EnergyDiff => Mode::EnergyDiff,
            Command::Sweep => Mode::Sweep,
            Command::Weights => Mode::Weights,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendArg {
    Qpe,
    Exact,
}

#[derive(Debug, Parser)]
#[command(name = "aae", version, about = "Amplified amplitude estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "AAE_OUT_DIR", default_value = "results")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, env = "AAE_WORKERS", default_value_t = 1)]
    workers: usize,
    /// Overrides the config backend.
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendArg>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(config_path) = cli.config.clone() else {
        eprintln!("invalid config: --config: required");
        return ExitCode::from(1);
    };
    let mut config = match load_config(&config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("invalid config: {e}");
            return ExitCode::from(1);
        }
    };
    if config.mode != cli.command.mode() {
        eprintln!(
            "invalid config: mode: config says {} but subcommand is {}",
            config.mode,
            cli.command.mode()
        );
        return ExitCode::from(1);
    }
    if let Some(s) = cli.seed {
        config.seed = Some(s);
    }
    if let Some(b) = cli.backend {
        config.backend = Some(match b {
            BackendArg::Qpe => BackendTag::Qpe,
            BackendArg::Exact => BackendTag::Exact,
        });
    }
    let base = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
    match execute(&config, &base, cli.workers) {
        Ok(out) => match write_outputs(&cli.out, &config, &out) {
            Ok(m) => {
                for f in &m.files {
                    eprintln!("wrote {} ({} rows)", cli.out.join(&f.name).display(), f.rows);
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("cannot write outputs to {}: {e}", cli.out.display());
                ExitCode::from(2)
            }
        },
        Err(RunError::Validation(errs)) => {
            for e in &errs {
                eprintln!("invalid config: {e}");
            }
            ExitCode::from(1)
        }
        Err(err @ RunError::Pipeline(_)) => {
            let RunError::Pipeline(rec) = &err else { unreachable!() };
            eprintln!("{}: {}", rec.kind, rec.message);
            if let Err(e) = write_error(&cli.out, &config, rec) {
                eprintln!("cannot write error record to {}: {e}", cli.out.display());
            }
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

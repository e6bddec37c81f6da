use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nlch_cli::commands::{self, CliError, Overrides};

/// Spectral Galerkin simulator and verification suite for nonlocal and
/// local Cahn-Hilliard dynamics with multiplicative noise.
#[derive(Parser)]
#[command(name = "nlch", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Configuration file (key = value sections); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Override the number of sample paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Worker threads (results are identical for any count).
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate sample paths and write their diagnostic time series.
    Simulate {
        #[command(flatten)]
        common: CommonOpts,
        /// Print the fully resolved configuration and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Nonlocal-to-local convergence rate over the configured epsilon grid.
    RateStudy {
        #[command(flatten)]
        common: CommonOpts,
        /// Exit nonzero when the result leaves the acceptance band.
        #[arg(long)]
        strict: bool,
    },
    /// Continuous dependence on the initial datum.
    CdepStudy {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        strict: bool,
    },
    /// Regularization sweep against the raw-potential reference.
    YosidaStudy {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        strict: bool,
    },
    /// Kernel family diagnostics (normalization, consistency, mass bounds).
    KernelCheck {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Quick closed-form sanity checks.
    Selftest,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let load = |common: &CommonOpts| {
        let ov = Overrides {
            seed: common.seed,
            out_dir: common.out_dir.clone(),
            paths: common.paths,
        };
        commands::load_config(common.config.as_deref(), &ov)
    };
    match cli.command {
        Command::Simulate { common, print_config } => {
            let cfg = load(&common)?;
            commands::simulate(&cfg, common.workers, print_config)
        }
        Command::RateStudy { common, strict } => {
            let cfg = load(&common)?;
            commands::rate_study_cmd(&cfg, common.workers, strict)
        }
        Command::CdepStudy { common, strict } => {
            let cfg = load(&common)?;
            commands::cdep_study_cmd(&cfg, common.workers, strict)
        }
        Command::YosidaStudy { common, strict } => {
            let cfg = load(&common)?;
            commands::yosida_study_cmd(&cfg, common.workers, strict)
        }
        Command::KernelCheck { common } => {
            let cfg = load(&common)?;
            commands::kernel_check_cmd(&cfg)
        }
        Command::Selftest => commands::selftest(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

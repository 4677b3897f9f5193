use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use eit_fd::cli::{self, CheckKind, RunConfig, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "eit-fd", version, about = "Finite-difference complete-electrode EIT solver and convergence lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides `seed` from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the discrete state for a given control.
    Forward,
    /// Reconstruct conductivity and voltages from electrode data.
    Invert,
    /// Run a refinement study against a fine-grid reference.
    Study,
    /// Run a single audit.
    Check {
        #[arg(value_enum)]
        which: Which,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Energy,
    Steklov,
    Pmap,
    Gradient,
}

fn main() -> ExitCode {
    let args = match Cli::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    }
    let Some(path) = args.config.as_deref() else {
        eprintln!("error: --config PATH is required");
        return ExitCode::from(EXIT_CONFIG as u8);
    };
    let mut cfg = match RunConfig::load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(cli::exit_code(&e) as u8);
        }
    };
    if let Some(s) = args.seed {
        cfg.set_seed(s);
    }
    let result = match args.command {
        Command::Forward => cli::forward(&cfg, &args.out),
        Command::Invert => cli::invert(&cfg, &args.out),
        Command::Study => cli::study(&cfg, &args.out),
        Command::Check { which } => {
            let kind = match which {
                Which::Energy => CheckKind::Energy,
                Which::Steklov => CheckKind::Steklov,
                Which::Pmap => CheckKind::Pmap,
                Which::Gradient => CheckKind::Gradient,
            };
            cli::check(kind, &cfg, &args.out)
        }
    };
    match result {
        Ok(status) => ExitCode::from(cli::status_code(status) as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use prufer::cli::{configure_threads, load_config, run_command, Command};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    /// Exact divisor identity suite.
    Verify,
    /// Prüfer trajectories against the Schrödinger oracle.
    Simulate,
    /// Energy scan with flagged set and box-counting dimension.
    Scan,
    /// Assembled growth bound per η.
    Bound,
    /// Discrete recursions with the Szegő oracle.
    Discrete,
    /// Hölder integral check.
    Holder,
}

/// Prüfer-variable experiments driven by one TOML config file.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    #[arg(value_enum)]
    command: Cmd,
    /// Config file.
    config: PathBuf,
    /// Output directory (overrides `out_dir` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let cfg = match load_config(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cmd = match args.command {
        Cmd::Verify => Command::Verify,
        Cmd::Simulate => Command::Simulate,
        Cmd::Scan => Command::Scan,
        Cmd::Bound => Command::Bound,
        Cmd::Discrete => Command::Discrete,
        Cmd::Holder => Command::Holder,
    };
    match run_command(cmd, &cfg, args.out.as_deref()) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            for v in &outcome.violations {
                eprintln!("violation: {v}");
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

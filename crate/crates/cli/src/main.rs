//! `d2dsched`: run, sweep, validate and export link-scheduling experiments.
//!
//! Exit status: 0 success, 1 invalid input or configuration, 2 runtime
//! failure, 3 an oracle check failed. Diagnostics go to stderr only.

mod commands;
mod export;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "d2dsched", version, about = "D2D link-scheduling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; must not exist unless --force is given.
    #[arg(long)]
    out: PathBuf,
    /// Base seed, overriding run.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores), overriding run.workers.
    #[arg(long)]
    workers: Option<usize>,
    /// Config override `key=value`; repeatable, applied in order.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Replace an existing output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every configured scheduler over the configured seeds.
    Run(ExperimentArgs),
    /// One run per value of a config key.
    Sweep {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// `key=v1,v2,...`
        #[arg(long)]
        sweep: String,
    },
    /// Check the ergodic-rate machinery against independent oracles.
    Validate {
        #[arg(long, default_value = "fast")]
        level: String,
        /// Also write the checks as CSV into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Deliberately break the integrator (to see the suites fail).
        #[arg(long, hide = true)]
        tamper_quadrature: bool,
    },
    /// Convert a run or sweep directory into long-format CSV (and charts).
    Export {
        /// Directory written by `run` or `sweep`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also render SVG charts.
        #[arg(long)]
        svg: bool,
        /// Replace an existing output directory.
        #[arg(long)]
        force: bool,
    },
}

/// An error with the exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn invalid(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn oracle(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }
}

impl From<d2dsched::Error> for Failure {
    fn from(e: d2dsched::Error) -> Self {
        use d2dsched::Error as E;
        let code = match e {
            E::Config { .. } | E::Parameter(_) | E::Parse(_) | E::Capacity { .. } => 1,
            _ => 2,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(args) => commands::run(&args),
        Command::Sweep { experiment, sweep } => commands::sweep(&experiment, &sweep),
        Command::Validate {
            level,
            out,
            seed,
            tamper_quadrature,
        } => commands::validate(&level, out.as_deref(), seed, tamper_quadrature),
        Command::Export { input, out, svg, force } => export::export(&input, &out, svg, force),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

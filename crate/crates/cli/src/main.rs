//! `kfwpe`: corpus generation, enhancement, evaluation, benchmarking and
//! parity fixtures for the online dereverberation engine.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! failure. `KFWPE_THREADS` overrides the worker thread count.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod bench;
mod config;
mod corpus;
mod enhance;
mod error;
mod evaluate;
mod golden;
mod synth;
mod wav;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::FileConfig;
use error::{CliError, CliResult};

const DEFAULT_SEED: u64 = 42;

#[derive(Parser, Debug)]
#[command(
    name = "kfwpe",
    version,
    about = "Online Kalman/RLS WPE dereverberation"
)]
struct Cli {
    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic reverberant corpus with ground-truth components.
    Synth(synth::SynthCmd),
    /// Dereverberate a corpus or a single WAV file.
    Enhance(enhance::EnhanceCmd),
    /// Score enhanced outputs against the corpus ground truth.
    Evaluate(evaluate::EvaluateCmd),
    /// Measure the real-time factor and print the analytic MAC count.
    Bench(bench::BenchCmd),
    /// Write or verify the cross-implementation parity fixtures.
    Golden(golden::GoldenCmd),
}

fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("KFWPE_THREADS") else {
        return Ok(());
    };
    let n: usize =
        v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            CliError::config(format!("KFWPE_THREADS={v} is not a positive integer"))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config(e.to_string()))
}

fn run(cli: &Cli) -> CliResult<()> {
    init_threads()?;
    let file = FileConfig::load(cli.config.as_deref())?;
    let seed = cli.seed.or(file.seed);
    match &cli.command {
        Command::Synth(c) => synth::run(c, &file, seed),
        Command::Enhance(c) => enhance::run(c, &file),
        Command::Evaluate(c) => evaluate::run(c, &file).map(drop),
        Command::Bench(c) => bench::run(c, seed.unwrap_or(DEFAULT_SEED)).map(drop),
        Command::Golden(c) => golden::run(c, seed.unwrap_or(DEFAULT_SEED)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kfwpe: {e}");
            e.exit_code()
        }
    }
}

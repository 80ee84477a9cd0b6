//! `ope`: generate or load logged bandit feedback, estimate policy values
//! and benchmark estimators.

mod benchmark;
mod data;
mod learn;
mod ope;
mod policy;
mod synth;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ope", version, about = "Off-policy evaluation for contextual bandits")]
struct Cli {
    /// Worker threads for bootstrap replications and simulations (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic log in the dataset's CSV schema plus a ground-truth sidecar.
    Synth(synth::SynthArgs),
    /// Estimate one evaluation policy's value from a log.
    Ope(ope::OpeArgs),
    /// Run the bootstrap benchmark in both directions between two policies.
    Benchmark(benchmark::BenchmarkArgs),
    /// Learn a deterministic policy by maximising the IPW objective.
    Learn(learn::LearnArgs),
    /// Fit a Beta-Bernoulli posterior for Thompson sampling from a log.
    BtsFit(learn::BtsFitArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Output destination shared by the reporting subcommands.
#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Write here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

impl OutputArgs {
    pub fn write(&self, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        match &self.out {
            Some(path) => write_file(path, f),
            None => {
                let stdout = io::stdout();
                let mut lock = stdout.lock();
                f(&mut lock)?;
                lock.flush()?;
                Ok(())
            }
        }
    }
}

pub fn write_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush().with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    match cli.command {
        Command::Synth(a) => synth::run(&a),
        Command::Ope(a) => ope::run(&a),
        Command::Benchmark(a) => benchmark::run(&a),
        Command::Learn(a) => learn::run_learn(&a),
        Command::BtsFit(a) => learn::run_bts_fit(&a),
    }
}

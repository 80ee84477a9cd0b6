use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use ope_core::policies::{bts_update, ipw_learner_fit};
use ope_core::{BetaPosteriorState, FitConfig};

use crate::data::{load, BehaviorArg, SchemaArgs};

#[derive(Debug, Args)]
pub struct LearnArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, env = "OPE_BENCH_DATA_DIR")]
    data_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = BehaviorArg::Random)]
    behavior: BehaviorArg,
    #[command(flatten)]
    schema: SchemaArgs,
    #[arg(long, default_value_t = 1000.0)]
    c: f64,
    #[arg(long)]
    seed: u64,
    /// Destination of the policy JSON, usable as `det:FILE`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BtsFitArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, env = "OPE_BENCH_DATA_DIR")]
    data_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = BehaviorArg::Random)]
    behavior: BehaviorArg,
    #[command(flatten)]
    schema: SchemaArgs,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Destination of the posterior JSON, usable as `bts:FILE`.
    #[arg(long)]
    out: PathBuf,
}

pub fn run_learn(a: &LearnArgs) -> Result<()> {
    let fb = load(a.data.as_deref(), a.data_dir.as_deref(), &a.schema, a.behavior)?;
    let policy = ipw_learner_fit(&fb, &FitConfig { c: a.c, seed: a.seed, ..FitConfig::default() })?;
    let json = policy.to_json()?;
    crate::write_file(&a.out, |w| Ok(writeln!(w, "{json}")?))
}

/// Every logged record, at any slot, counts as one Bernoulli observation of
/// its item.
pub fn run_bts_fit(a: &BtsFitArgs) -> Result<()> {
    let fb = load(a.data.as_deref(), a.data_dir.as_deref(), &a.schema, a.behavior)?;
    let mut state = BetaPosteriorState::symmetric(fb.n_actions(), a.alpha, a.beta)?;
    for t in 0..fb.n_rounds() {
        state = bts_update(&state, fb.actions()[t], fb.rewards()[t])?;
    }
    let json = state.to_json()?;
    crate::write_file(&a.out, |w| Ok(writeln!(w, "{json}")?))
}

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use ndarray::Array2;
use ope_core::data::{generate_synthetic, PolicySpec};
use ope_core::estimators::{benchmark_grid, DEFAULT_GRID};
use ope_core::policies::{bts_update, compute_batch_action_dist, DEFAULT_N_SIM};
use ope_core::protocol::{run_protocol, BenchmarkReport, Mode, WithBehavior, DEFAULT_BOOTSTRAP};
use ope_core::reward_model::DEFAULT_TRAIN_FRACTION;
use ope_core::rng::derive_seed;
use ope_core::{BanditFeedback, BetaPosteriorState, EstimatorKind, FitConfig, ProtocolConfig, SyntheticConfig};

use crate::data::{load, BehaviorArg, SchemaArgs};
use crate::policy::{PolicyArg, Resolved};
use crate::{Format, OutputArgs};

/// Share of uniform mass mixed into the synthetic Thompson-sampling logger so
/// every action keeps a positive logging probability.
const SYNTH_UNIFORM_MIX: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    In,
    Out,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Generate both logs: a uniform logger and a Thompson-sampling logger.
    #[arg(long, conflicts_with_all = ["data_a", "data_b"])]
    synthetic: bool,
    #[arg(long, default_value_t = 10_000)]
    n_rounds: usize,
    #[arg(long, default_value_t = 5)]
    dim_context: usize,
    /// Records used to fit the synthetic Thompson-sampling posterior.
    #[arg(long, default_value_t = 500)]
    bts_warmup: usize,

    /// Log of policy A; defaults to the `random` folder under the data root.
    #[arg(long, requires = "data_b")]
    data_a: Option<PathBuf>,
    /// Log of policy B; defaults to the `bts` folder under the data root.
    #[arg(long, requires = "data_a")]
    data_b: Option<PathBuf>,
    #[arg(long, env = "OPE_BENCH_DATA_DIR")]
    data_dir: Option<PathBuf>,
    #[command(flatten)]
    schema: SchemaArgs,
    #[arg(long, default_value = "uniform")]
    policy_a: PolicyArg,
    #[arg(long, default_value = "logged")]
    policy_b: PolicyArg,
    #[arg(long, default_value = "random")]
    label_a: String,
    #[arg(long, default_value = "bts")]
    label_b: String,

    /// Restrict to one mode. Without it, in-sample always runs and
    /// out-sample runs as well when a split point is given.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// First test record of the out-sample split.
    #[arg(long)]
    split_point: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP)]
    bootstrap: usize,
    #[arg(long = "tau", value_delimiter = ',', default_values_t = DEFAULT_GRID)]
    taus: Vec<f64>,
    #[arg(long = "lambda", value_delimiter = ',', default_values_t = DEFAULT_GRID)]
    lambdas: Vec<f64>,
    /// Comma-separated estimators; overrides the `--tau`/`--lambda` grid.
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<String>>,
    #[arg(long, default_value_t = 1000.0)]
    c: f64,
    #[arg(long, default_value_t = DEFAULT_N_SIM)]
    n_sim: usize,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

struct Arm {
    label: String,
    log: BanditFeedback,
    policy: Resolved,
}

/// Action count of the synthetic logs when `--n-actions` is absent.
const SYNTH_N_ACTIONS: usize = 10;

fn synthetic_arms(a: &BenchmarkArgs) -> Result<(Arm, Arm)> {
    let k = a.schema.n_actions.unwrap_or(SYNTH_N_ACTIONS);
    let cfg = SyntheticConfig::random_linear(k, a.dim_context, derive_seed(a.seed, 10));
    let (random_log, _) = generate_synthetic(&cfg.with_seed(derive_seed(a.seed, 11)), a.n_rounds)?;
    let (warmup, _) = generate_synthetic(&cfg.with_seed(derive_seed(a.seed, 12)), a.bts_warmup.max(1))?;
    let mut state = BetaPosteriorState::new(k);
    for t in 0..warmup.n_rounds() {
        state = bts_update(&state, warmup.actions()[t], warmup.rewards()[t])?;
    }
    let sim = compute_batch_action_dist(&state, a.n_sim, 1, 1, derive_seed(a.seed, 13))?;
    let probs: Vec<f64> =
        (0..k).map(|i| (1.0 - SYNTH_UNIFORM_MIX) * sim.prob(0, i, 0) + SYNTH_UNIFORM_MIX / k as f64).collect();
    let (bts_log, _) =
        generate_synthetic(&cfg.with_behavior(PolicySpec::Fixed(probs.clone())).with_seed(derive_seed(a.seed, 14)), a.n_rounds)?;
    let table = Array2::from_shape_vec((k, 1), probs)?;
    Ok((
        Arm { label: a.label_a.clone(), log: random_log, policy: Resolved::Uniform { n_actions: k, len_list: 1 } },
        Arm { label: a.label_b.clone(), log: bts_log, policy: Resolved::Table(table) },
    ))
}

fn data_arms(a: &BenchmarkArgs) -> Result<(Arm, Arm)> {
    for p in [&a.policy_a, &a.policy_b] {
        if *p == PolicyArg::Behavior {
            bail!("`behavior` is not a policy that can be evaluated on another policy's log");
        }
    }
    let log_a = load(a.data_a.as_deref(), a.data_dir.as_deref(), &a.schema, BehaviorArg::Random)?;
    let log_b = load(a.data_b.as_deref(), a.data_dir.as_deref(), &a.schema, BehaviorArg::Bts)?;
    let policy_a = Resolved::new(&a.policy_a, &log_a, a.n_sim, derive_seed(a.seed, 13)).context("policy A")?;
    let policy_b = Resolved::new(&a.policy_b, &log_b, a.n_sim, derive_seed(a.seed, 14)).context("policy B")?;
    Ok((Arm { label: a.label_a.clone(), log: log_a, policy: policy_a }, Arm { label: a.label_b.clone(), log: log_b, policy: policy_b }))
}

fn modes(a: &BenchmarkArgs) -> Result<Vec<Mode>> {
    Ok(match (a.mode, a.split_point) {
        (Some(ModeArg::In), _) => vec![Mode::InSample],
        (Some(ModeArg::Out), Some(_)) => vec![Mode::OutSample],
        (Some(ModeArg::Out), None) => bail!("--mode out needs --split-point"),
        (None, Some(_)) => vec![Mode::InSample, Mode::OutSample],
        (None, None) => vec![Mode::InSample],
    })
}

pub fn run(a: &BenchmarkArgs) -> Result<()> {
    let modes = modes(a)?;
    let estimators: Vec<EstimatorKind> = match &a.estimators {
        Some(names) => names.iter().map(|n| EstimatorKind::parse(n.trim())).collect::<ope_core::Result<_>>()?,
        None => benchmark_grid(&a.taus, &a.lambdas),
    };
    let (arm_a, arm_b) = if a.synthetic { synthetic_arms(a)? } else { data_arms(a)? };
    if arm_a.log.n_actions() != arm_b.log.n_actions() || arm_a.log.len_list() != arm_b.log.len_list() {
        bail!("the two logs disagree on the number of actions or slots");
    }

    let mut report = BenchmarkReport::default();
    let mut run_idx = 0u64;
    for (behavior, evaluation) in [(&arm_a, &arm_b), (&arm_b, &arm_a)] {
        let direction = format!("{}->{}", behavior.label, evaluation.label);
        let builder = WithBehavior(|fb: &BanditFeedback| evaluation.policy.dist(fb), |fb: &BanditFeedback| behavior.policy.dist(fb));
        for &mode in &modes {
            let cfg = ProtocolConfig {
                mode,
                split_point: if mode == Mode::OutSample { a.split_point } else { None },
                n_bootstrap: a.bootstrap,
                estimators: estimators.clone(),
                fit: FitConfig { c: a.c, seed: a.seed, ..FitConfig::default() },
                train_fraction: DEFAULT_TRAIN_FRACTION,
                seed: derive_seed(a.seed, 100 + run_idx),
            };
            run_idx += 1;
            let r = run_protocol(&behavior.log, &evaluation.log, &builder, &cfg)
                .with_context(|| format!("{direction}, {}-sample", mode.as_str()))?;
            report.push(direction.clone(), r);
        }
    }

    a.output.write(|w| {
        match a.output.format {
            Format::Json => {
                w.write_all(report.to_json()?.as_bytes())?;
                w.write_all(b"\n")?;
            }
            Format::Csv => report.write_csv(w)?,
        }
        Ok(())
    })?;
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    Ok(())
}

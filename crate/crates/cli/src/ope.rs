use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use ope_core::estimators::{benchmark_grid, estimate, fit_mrdr, EstimatorInput, DEFAULT_GRID};
use ope_core::policies::DEFAULT_N_SIM;
use ope_core::reward_model::{cross_fit_split, fit_logistic, predict_q, DEFAULT_TRAIN_FRACTION};
use ope_core::rng::derive_seed;
use ope_core::{EstimatorKind, FitConfig, RewardModel};
use serde::Serialize;

use crate::data::{load, BehaviorArg, SchemaArgs};
use crate::policy::{PolicyArg, Resolved};
use crate::{Format, OutputArgs};

#[derive(Debug, Args)]
pub struct OpeArgs {
    /// Log file in the dataset's CSV schema (optionally gzipped).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Dataset root, used when `--data` is absent.
    #[arg(long, env = "OPE_BENCH_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Which logging policy's folder to read under the dataset root.
    #[arg(long, value_enum, default_value_t = BehaviorArg::Random)]
    behavior: BehaviorArg,
    #[command(flatten)]
    schema: SchemaArgs,
    /// Evaluation policy: uniform, behavior, logged, bts:FILE or det:FILE.
    #[arg(long)]
    policy: PolicyArg,
    /// Full logging-policy distribution, needed only by Switch-IPW.
    #[arg(long)]
    behavior_policy: Option<PolicyArg>,
    /// Comma-separated estimators such as `ipw,dr,switch-dr:50`. Defaults to
    /// the full grid with a reward model and to `ipw,snipw` without one.
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<String>>,
    #[arg(long = "tau", value_delimiter = ',', default_values_t = DEFAULT_GRID)]
    taus: Vec<f64>,
    #[arg(long = "lambda", value_delimiter = ',', default_values_t = DEFAULT_GRID)]
    lambdas: Vec<f64>,
    /// Saved reward model (JSON).
    #[arg(long, conflicts_with = "fit_reward_model")]
    reward_model: Option<PathBuf>,
    /// Fit reward models on a 30% split and estimate on the remaining 70%.
    #[arg(long)]
    fit_reward_model: bool,
    /// Inverse L2 strength of the logistic reward model.
    #[arg(long, default_value_t = 1000.0)]
    c: f64,
    /// Monte-Carlo draws for Thompson-sampling policies.
    #[arg(long, default_value_t = DEFAULT_N_SIM)]
    n_sim: usize,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Serialize)]
struct Estimate {
    estimator: String,
    tau: Option<f64>,
    lambda: Option<f64>,
    estimate: f64,
    /// Estimate divided by the log's mean reward.
    ratio_to_mean_reward: Option<f64>,
}

#[derive(Debug, Serialize)]
struct OpeReport {
    n_rounds: usize,
    mean_reward: f64,
    estimates: Vec<Estimate>,
}

pub fn run(a: &OpeArgs) -> Result<()> {
    let fb = load(a.data.as_deref(), a.data_dir.as_deref(), &a.schema, a.behavior)?;
    let fit = FitConfig { c: a.c, seed: a.seed, ..FitConfig::default() };
    let (train, eval) = if a.fit_reward_model {
        let (t, e) = cross_fit_split(&fb, DEFAULT_TRAIN_FRACTION, derive_seed(a.seed, 0))?;
        (Some(t), e)
    } else {
        (None, fb.clone())
    };

    let policy = Resolved::new(&a.policy, &fb, a.n_sim, derive_seed(a.seed, 1))?;
    let dist = policy.dist(&eval)?;

    let q_hat = match (&a.reward_model, &train) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            let m = RewardModel::from_json(&text).with_context(|| format!("bad reward model in {}", path.display()))?;
            Some(predict_q(&m, &eval)?.table)
        }
        (None, Some(train)) => Some(predict_q(&fit_logistic(train, &fit).context("fitting the reward model")?, &eval)?.table),
        (None, None) => None,
    };
    let mrdr_q = match &train {
        Some(train) => {
            let m = fit_mrdr(train, &policy.dist(train)?, &fit).context("fitting the MRDR model")?;
            Some(predict_q(m.model(), &eval)?.table)
        }
        None => None,
    };
    let behavior = match &a.behavior_policy {
        Some(PolicyArg::Behavior) => bail!("--behavior-policy needs the full distribution; `behavior` only knows logged actions"),
        Some(arg) => Some(Resolved::new(arg, &fb, a.n_sim, derive_seed(a.seed, 2))?.dist(&eval)?),
        None => None,
    };

    let kinds: Vec<EstimatorKind> = match &a.estimators {
        Some(names) => names.iter().map(|n| EstimatorKind::parse(n.trim())).collect::<ope_core::Result<_>>()?,
        None if q_hat.is_some() => benchmark_grid(&a.taus, &a.lambdas),
        None => vec![EstimatorKind::Ipw, EstimatorKind::Snipw],
    };
    let input = EstimatorInput {
        feedback: &eval,
        dist: &dist,
        q_hat: q_hat.as_ref(),
        mrdr_q_hat: mrdr_q.as_ref(),
        behavior_dist: behavior.as_ref(),
    };
    let mean_reward = eval.mean_reward();
    let estimates = kinds
        .iter()
        .map(|&k| {
            let r = estimate(k, &input)?;
            Ok(Estimate {
                estimator: r.estimator,
                tau: r.tau,
                lambda: r.lambda,
                estimate: r.estimate,
                ratio_to_mean_reward: (mean_reward != 0.0).then(|| r.estimate / mean_reward),
            })
        })
        .collect::<ope_core::Result<Vec<_>>>()?;
    let report = OpeReport { n_rounds: eval.n_rounds(), mean_reward, estimates };

    a.output.write(|w| {
        match a.output.format {
            Format::Json => {
                serde_json::to_writer_pretty(&mut *w, &report)?;
                writeln!(w)?;
            }
            Format::Csv => {
                writeln!(w, "estimator,tau,lambda,estimate,ratio_to_mean_reward")?;
                let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
                for e in &report.estimates {
                    writeln!(w, "{},{},{},{},{}", e.estimator, opt(e.tau), opt(e.lambda), e.estimate, opt(e.ratio_to_mean_reward))?;
                }
            }
        }
        Ok(())
    })
}

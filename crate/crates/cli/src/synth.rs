use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use ope_core::data::{generate_synthetic, write_obd, PolicySpec};
use ope_core::policies::uniform_dist;
use ope_core::rng::{derive_seed, seeded};
use ope_core::SyntheticConfig;
use rand::Rng;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthBehavior {
    Uniform,
    /// Softmax over random linear scores.
    Softmax,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 4)]
    n_actions: usize,
    #[arg(long, default_value_t = 1000)]
    n_rounds: usize,
    #[arg(long, default_value_t = 5)]
    dim_context: usize,
    #[arg(long, value_enum, default_value_t = SynthBehavior::Uniform)]
    behavior_policy: SynthBehavior,
    /// Softmax temperature for `--behavior-policy softmax`.
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long)]
    seed: u64,
    /// CSV destination; the sidecar goes next to it as `<stem>.truth.json`.
    #[arg(long, default_value = "synthetic.csv")]
    out: PathBuf,
}

/// Ground truth stored next to a synthetic log.
#[derive(Debug, Serialize)]
struct Sidecar<'a> {
    n_rounds: usize,
    config: &'a SyntheticConfig,
    /// Mean over generated contexts of `sum_a q(x_t, a) / n_actions`.
    v_uniform: f64,
    /// The same average under the behaviour policy.
    v_behavior: f64,
    /// `q(x_t, a)` for every round and action.
    q_table: Vec<Vec<f64>>,
}

pub fn sidecar_path(out: &std::path::Path) -> PathBuf {
    out.with_extension("truth.json")
}

fn config(a: &SynthArgs) -> Result<SyntheticConfig> {
    let cfg = SyntheticConfig::random_linear(a.n_actions, a.dim_context, a.seed);
    Ok(match a.behavior_policy {
        SynthBehavior::Uniform => cfg,
        SynthBehavior::Softmax => {
            if !(a.temperature > 0.0) {
                bail!("temperature must be positive");
            }
            let mut r = seeded(derive_seed(a.seed, 1));
            let coef = (0..a.n_actions).map(|_| (0..a.dim_context).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
            let intercept = (0..a.n_actions).map(|_| r.random_range(-0.5..0.5)).collect();
            cfg.with_behavior(PolicySpec::Softmax { coef, intercept, temperature: a.temperature })
        }
    })
}

pub fn run(a: &SynthArgs) -> Result<()> {
    if a.n_rounds == 0 {
        bail!("--n-rounds must be positive");
    }
    let cfg = config(a)?;
    let (fb, truth) = generate_synthetic(&cfg, a.n_rounds)?;
    let v_uniform = truth.true_policy_value(&uniform_dist(fb.n_rounds(), fb.n_actions(), 1))?;
    let v_behavior = truth.true_policy_value(&cfg.behavior.action_dist(fb.contexts(), fb.n_actions())?)?;
    let sidecar = Sidecar {
        n_rounds: a.n_rounds,
        config: &cfg,
        v_uniform,
        v_behavior,
        q_table: truth.q_table().outer_iter().map(|r| r.to_vec()).collect(),
    };

    crate::write_file(&a.out, |w| Ok(write_obd(&fb, w)?))?;
    let side = sidecar_path(&a.out);
    crate::write_file(&side, |w| {
        serde_json::to_writer_pretty(&mut *w, &sidecar).context("cannot serialise the sidecar")?;
        Ok(writeln!(w)?)
    })?;
    eprintln!("wrote {} rounds to {} and ground truth to {}", a.n_rounds, a.out.display(), side.display());
    Ok(())
}

//! Evaluation-policy arguments: `uniform`, `behavior`, `logged`,
//! `bts:FILE` and `det:FILE`.

use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use ndarray::Array2;
use ope_core::policies::{compute_batch_action_dist, logged_context_free_probs, policy_to_action_dist, uniform_dist};
use ope_core::{ActionDist, BanditFeedback, BetaPosteriorState, DeterministicPolicy};

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyArg {
    /// Every action equally likely.
    Uniform,
    /// The logging policy itself, read off the recorded propensities.
    Behavior,
    /// A context-free policy rebuilt from its own log's propensities.
    Logged,
    /// Thompson sampling from a saved posterior.
    Bts(PathBuf),
    /// A learned deterministic policy.
    Det(PathBuf),
}

impl FromStr for PolicyArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "uniform" => Ok(PolicyArg::Uniform),
            None if s == "behavior" => Ok(PolicyArg::Behavior),
            None if s == "logged" => Ok(PolicyArg::Logged),
            Some(("bts", p)) if !p.is_empty() => Ok(PolicyArg::Bts(p.into())),
            Some(("det", p)) if !p.is_empty() => Ok(PolicyArg::Det(p.into())),
            _ => Err(format!("unknown policy `{s}`; expected uniform, behavior, logged, bts:FILE or det:FILE")),
        }
    }
}

/// A policy ready to produce distributions over arbitrary record batches.
#[derive(Debug, Clone)]
pub enum Resolved {
    Uniform { n_actions: usize, len_list: usize },
    Behavior,
    Table(Array2<f64>),
    Det(DeterministicPolicy),
}

impl Resolved {
    /// `own_log` is the log the policy generated, used by `logged`.
    pub fn new(arg: &PolicyArg, own_log: &BanditFeedback, n_sim: usize, seed: u64) -> Result<Self> {
        let (k, l) = (own_log.n_actions(), own_log.len_list());
        Ok(match arg {
            PolicyArg::Uniform => Resolved::Uniform { n_actions: k, len_list: l },
            PolicyArg::Behavior => Resolved::Behavior,
            PolicyArg::Logged => Resolved::Table(logged_context_free_probs(own_log)?),
            PolicyArg::Bts(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
                let state = BetaPosteriorState::from_json(&text).with_context(|| format!("bad posterior in {}", path.display()))?;
                if state.n_actions() != k {
                    bail!("posterior has {} actions but the log has {k}", state.n_actions());
                }
                Resolved::Table(compute_batch_action_dist(&state, n_sim, 1, l, seed)?.to_dense().index_axis_move(ndarray::Axis(0), 0))
            }
            PolicyArg::Det(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
                let p = DeterministicPolicy::from_json(&text).with_context(|| format!("bad policy in {}", path.display()))?;
                if p.n_actions != k || p.len_list != l {
                    bail!("policy ranks {} of {} actions but the log has {l} slots and {k} actions", p.len_list, p.n_actions);
                }
                Resolved::Det(p)
            }
        })
    }

    pub fn dist(&self, fb: &BanditFeedback) -> ope_core::Result<ActionDist> {
        match self {
            Resolved::Uniform { n_actions, len_list } => Ok(uniform_dist(fb.n_rounds(), *n_actions, *len_list)),
            Resolved::Behavior => ActionDist::from_logged_propensities(fb),
            Resolved::Table(t) => ActionDist::shared(t.clone(), fb.n_rounds()),
            Resolved::Det(p) => policy_to_action_dist(p, fb.contexts()),
        }
    }
}

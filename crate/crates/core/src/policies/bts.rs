//! Bernoulli Thompson sampling with a top-`len_list` slate.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ActionDist;
use crate::error::{OpeError, Result};
use crate::rng;

pub const DEFAULT_N_SIM: usize = 100_000;
const SIM_CHUNK: usize = 4096;

/// Beta posterior per action: `Beta(successes + alpha, failures + beta)`.
///
/// Priors are per action so production-specific priors can be plugged in;
/// [`BetaPosteriorState::new`] uses the symmetric `(1, 1)` prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaPosteriorState {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub successes: Vec<u64>,
    pub failures: Vec<u64>,
}

impl BetaPosteriorState {
    pub fn new(n_actions: usize) -> Self {
        Self::symmetric(n_actions, 1.0, 1.0).expect("unit prior is valid")
    }

    pub fn symmetric(n_actions: usize, alpha: f64, beta: f64) -> Result<Self> {
        Self::with_priors(vec![alpha; n_actions], vec![beta; n_actions])
    }

    pub fn with_priors(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        let state = Self { successes: vec![0; alpha.len()], failures: vec![0; alpha.len()], alpha, beta };
        state.validate()?;
        Ok(state)
    }

    pub fn n_actions(&self) -> usize {
        self.alpha.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.alpha.len();
        if k == 0 {
            return Err(OpeError::Config("posterior needs at least one action".into()));
        }
        if self.beta.len() != k || self.successes.len() != k || self.failures.len() != k {
            return Err(OpeError::Shape("posterior vectors disagree in length".into()));
        }
        if self.alpha.iter().chain(&self.beta).any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(OpeError::Config("Beta priors must be positive".into()));
        }
        Ok(())
    }

    pub fn posterior_mean(&self, action: usize) -> f64 {
        let a = self.successes[action] as f64 + self.alpha[action];
        let b = self.failures[action] as f64 + self.beta[action];
        a / (a + b)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let state: Self = serde_json::from_str(s)?;
        state.validate()?;
        Ok(state)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn samplers(&self) -> Vec<Beta<f64>> {
        (0..self.n_actions())
            .map(|a| {
                Beta::new(self.successes[a] as f64 + self.alpha[a], self.failures[a] as f64 + self.beta[a])
                    .expect("validated posterior parameters")
            })
            .collect()
    }
}

/// Draws one score per action and returns the `len_list` best actions in
/// descending score order; equal scores go to the lower action index.
pub fn bts_select<R: Rng + ?Sized>(state: &BetaPosteriorState, len_list: usize, rng: &mut R) -> Result<Vec<usize>> {
    state.validate()?;
    check_len_list(state, len_list)?;
    let samplers = state.samplers();
    let mut draws = vec![0.0; samplers.len()];
    let mut order: Vec<usize> = (0..samplers.len()).collect();
    Ok(select_with(&samplers, len_list, rng, &mut draws, &mut order).to_vec())
}

fn check_len_list(state: &BetaPosteriorState, len_list: usize) -> Result<()> {
    if len_list == 0 || len_list > state.n_actions() {
        return Err(OpeError::InvalidArgument(format!(
            "len_list {len_list} must lie in 1..={} (number of actions)",
            state.n_actions()
        )));
    }
    Ok(())
}

fn select_with<'a, R: Rng + ?Sized>(
    samplers: &[Beta<f64>],
    len_list: usize,
    rng: &mut R,
    draws: &mut [f64],
    order: &'a mut [usize],
) -> &'a [usize] {
    for (d, s) in draws.iter_mut().zip(samplers) {
        *d = s.sample(rng);
    }
    for (i, o) in order.iter_mut().enumerate() {
        *o = i;
    }
    let cmp = |a: &usize, b: &usize| draws[*b].total_cmp(&draws[*a]).then(a.cmp(b));
    if len_list < order.len() {
        order.select_nth_unstable_by(len_list - 1, cmp);
    }
    order[..len_list].sort_unstable_by(cmp);
    &order[..len_list]
}

/// Records one binary reward for `action`.
pub fn bts_update(state: &BetaPosteriorState, action: usize, reward: f64) -> Result<BetaPosteriorState> {
    if action >= state.n_actions() {
        return Err(OpeError::InvalidArgument(format!("action {action} out of range")));
    }
    let mut next = state.clone();
    if reward == 1.0 {
        next.successes[action] += 1;
    } else if reward == 0.0 {
        next.failures[action] += 1;
    } else {
        return Err(OpeError::InvalidArgument(format!("Thompson sampling needs binary rewards, got {reward}")));
    }
    Ok(next)
}

/// Monte-Carlo estimate of `P(action a shown at position k)` from `n_sim`
/// independent slate draws, broadcast over `n_rounds` rounds.
///
/// Simulations run in fixed-size chunks with derived seeds, so the result
/// depends only on `(state, n_sim, seed)` and not on the thread count.
pub fn compute_batch_action_dist(
    state: &BetaPosteriorState,
    n_sim: usize,
    n_rounds: usize,
    len_list: usize,
    seed: u64,
) -> Result<ActionDist> {
    state.validate()?;
    check_len_list(state, len_list)?;
    if n_sim == 0 {
        return Err(OpeError::InvalidArgument("n_sim must be at least 1".into()));
    }
    let k = state.n_actions();
    let samplers = state.samplers();
    let n_chunks = n_sim.div_ceil(SIM_CHUNK);
    let counts = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::seeded(rng::derive_seed(seed, c as u64));
            let mut counts = vec![0u64; k * len_list];
            let mut draws = vec![0.0; k];
            let mut order: Vec<usize> = (0..k).collect();
            let sims = SIM_CHUNK.min(n_sim - c * SIM_CHUNK);
            for _ in 0..sims {
                for (pos, &a) in select_with(&samplers, len_list, &mut r, &mut draws, &mut order).iter().enumerate() {
                    counts[a * len_list + pos] += 1;
                }
            }
            counts
        })
        .reduce(
            || vec![0u64; k * len_list],
            |mut acc, c| {
                acc.iter_mut().zip(c).for_each(|(x, y)| *x += y);
                acc
            },
        );
    let probs = Array2::from_shape_fn((k, len_list), |(a, pos)| counts[a * len_list + pos] as f64 / n_sim as f64);
    ActionDist::shared(probs, n_rounds)
}

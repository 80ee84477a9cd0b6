//! Logged bandit feedback and the operations that produce or reshape it.

mod classification;
mod obd;
mod synthetic;

pub use classification::classification_to_bandit;
pub use obd::{load_obd, read_obd, write_obd, BehaviorPolicy, Campaign, LoadOptions, DEFAULT_HASH_DIMS};
#[cfg(test)]
pub(crate) use synthetic::sample_categorical;
pub use synthetic::{
    generate_synthetic, ContextSpec, PolicySpec, RewardSpec, SyntheticConfig, SyntheticGroundTruth,
};

use ndarray::{Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OpeError, Result};
use crate::rng;

/// A batch of logged `(context, action, position, reward, propensity)` records.
///
/// Records are flattened to (impression, position) granularity: an impression
/// that showed three slots contributes three records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditFeedback {
    n_actions: usize,
    len_list: usize,
    contexts: Array2<f64>,
    actions: Vec<usize>,
    positions: Vec<usize>,
    rewards: Vec<f64>,
    propensities: Vec<f64>,
    timestamps: Option<Vec<i64>>,
}

impl BanditFeedback {
    /// Validates every invariant and builds the batch.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_actions: usize,
        len_list: usize,
        contexts: Array2<f64>,
        actions: Vec<usize>,
        positions: Vec<usize>,
        rewards: Vec<f64>,
        propensities: Vec<f64>,
        timestamps: Option<Vec<i64>>,
    ) -> Result<Self> {
        if n_actions == 0 || len_list == 0 {
            return Err(OpeError::Config("n_actions and len_list must be positive".into()));
        }
        let n = actions.len();
        let lens = [contexts.nrows(), positions.len(), rewards.len(), propensities.len()];
        if lens.iter().any(|&l| l != n) {
            return Err(OpeError::Shape(format!(
                "record arrays disagree in length: actions={n}, contexts={}, positions={}, rewards={}, propensities={}",
                lens[0], lens[1], lens[2], lens[3]
            )));
        }
        if let Some(ts) = &timestamps {
            if ts.len() != n {
                return Err(OpeError::Shape(format!("timestamps has {} entries, expected {n}", ts.len())));
            }
            if let Some(i) = ts.windows(2).position(|w| w[1] < w[0]) {
                return Err(OpeError::Data { row: i + 1, message: "timestamps are not non-decreasing".into() });
            }
        }
        for i in 0..n {
            if actions[i] >= n_actions {
                return Err(OpeError::Data { row: i, message: format!("action {} >= n_actions {n_actions}", actions[i]) });
            }
            if positions[i] >= len_list {
                return Err(OpeError::Data { row: i, message: format!("position {} >= len_list {len_list}", positions[i]) });
            }
            let p = propensities[i];
            if !(p > 0.0 && p <= 1.0) {
                return Err(OpeError::Data { row: i, message: format!("propensity {p} outside (0, 1]") });
            }
            if !rewards[i].is_finite() || rewards[i] < 0.0 {
                return Err(OpeError::Data { row: i, message: format!("reward {} is not a finite non-negative value", rewards[i]) });
            }
        }
        Ok(Self { n_actions, len_list, contexts, actions, positions, rewards, propensities, timestamps })
    }

    pub fn n_rounds(&self) -> usize {
        self.actions.len()
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn len_list(&self) -> usize {
        self.len_list
    }

    pub fn dim_context(&self) -> usize {
        self.contexts.ncols()
    }

    pub fn contexts(&self) -> &Array2<f64> {
        &self.contexts
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn propensities(&self) -> &[f64] {
        &self.propensities
    }

    pub fn timestamps(&self) -> Option<&[i64]> {
        self.timestamps.as_deref()
    }

    pub fn mean_reward(&self) -> f64 {
        self.rewards.iter().sum::<f64>() / self.n_rounds() as f64
    }

    /// Gathers the given records, in the order given. Repeats are allowed.
    ///
    /// Panics if an index is out of range.
    pub fn select(&self, indices: &[usize]) -> BanditFeedback {
        let pick = |v: &[usize]| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        BanditFeedback {
            n_actions: self.n_actions,
            len_list: self.len_list,
            contexts: self.contexts.select(Axis(0), indices),
            actions: pick(&self.actions),
            positions: pick(&self.positions),
            rewards: indices.iter().map(|&i| self.rewards[i]).collect(),
            propensities: indices.iter().map(|&i| self.propensities[i]).collect(),
            timestamps: self.timestamps.as_ref().map(|ts| indices.iter().map(|&i| ts[i]).collect()),
        }
    }

    /// Appends `later` after `self`. Timestamps of `later` are shifted so the
    /// result stays ordered.
    pub fn concat(&self, later: &BanditFeedback) -> Result<BanditFeedback> {
        if self.n_actions != later.n_actions || self.len_list != later.len_list || self.dim_context() != later.dim_context() {
            return Err(OpeError::Shape("cannot concatenate feedback with different shapes".into()));
        }
        let contexts = ndarray::concatenate(Axis(0), &[self.contexts.view(), later.contexts.view()])
            .map_err(|e| OpeError::Shape(e.to_string()))?;
        let timestamps = match (&self.timestamps, &later.timestamps) {
            (Some(a), Some(b)) => {
                let offset = match (a.last(), b.first()) {
                    (Some(&last), Some(&first)) if first <= last => last - first + 1,
                    _ => 0,
                };
                Some(a.iter().copied().chain(b.iter().map(|t| t + offset)).collect())
            }
            _ => None,
        };
        let cat = |x: &[usize], y: &[usize]| x.iter().chain(y).copied().collect::<Vec<_>>();
        let catf = |x: &[f64], y: &[f64]| x.iter().chain(y).copied().collect::<Vec<_>>();
        BanditFeedback::new(
            self.n_actions,
            self.len_list,
            contexts,
            cat(&self.actions, &later.actions),
            cat(&self.positions, &later.positions),
            catf(&self.rewards, &later.rewards),
            catf(&self.propensities, &later.propensities),
            timestamps,
        )
    }

    /// Returns a copy with every reward replaced.
    pub fn with_rewards(&self, rewards: Vec<f64>) -> Result<BanditFeedback> {
        BanditFeedback::new(
            self.n_actions,
            self.len_list,
            self.contexts.clone(),
            self.actions.clone(),
            self.positions.clone(),
            rewards,
            self.propensities.clone(),
            self.timestamps.clone(),
        )
    }

    pub fn is_binary_reward(&self) -> bool {
        self.rewards.iter().all(|&r| r == 0.0 || r == 1.0)
    }
}

/// Splits into records `[0, split_point)` and `[split_point, n)`.
///
/// Without timestamps the stored order is taken as the time order.
pub fn split_by_time(fb: &BanditFeedback, split_point: usize) -> Result<(BanditFeedback, BanditFeedback)> {
    let n = fb.n_rounds();
    if split_point == 0 || split_point >= n {
        return Err(OpeError::InvalidArgument(format!(
            "split point {split_point} must lie strictly between 0 and n_rounds={n}"
        )));
    }
    if let Some(ts) = fb.timestamps() {
        if let Some(i) = ts.windows(2).position(|w| w[1] < w[0]) {
            return Err(OpeError::Data { row: i + 1, message: "records are not ordered by timestamp".into() });
        }
    }
    let head: Vec<usize> = (0..split_point).collect();
    let tail: Vec<usize> = (split_point..n).collect();
    Ok((fb.select(&head), fb.select(&tail)))
}

/// Resamples `n_rounds` records uniformly with replacement.
///
/// The drawn indices are sorted before gathering so the output keeps the
/// input's time order.
pub fn bootstrap_sample(fb: &BanditFeedback, seed: u64) -> BanditFeedback {
    fb.select(&bootstrap_indices(fb.n_rounds(), seed))
}

pub(crate) fn bootstrap_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng::seeded(seed);
    let mut idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    idx.sort_unstable();
    idx
}

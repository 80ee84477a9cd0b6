//! Decision-making policies and the action-choice distributions they induce.

mod bts;
mod ipw_learner;

pub use bts::{bts_select, bts_update, compute_batch_action_dist, BetaPosteriorState, DEFAULT_N_SIM};
pub use ipw_learner::{ipw_learner_fit, policy_to_action_dist, DeterministicPolicy};

use ndarray::{Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::data::BanditFeedback;
use crate::error::{OpeError, Result};

const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Storage {
    /// `(n_rounds, n_actions, len_list)`.
    PerRound(Array3<f64>),
    /// `(n_actions, len_list)`, identical for every round.
    Shared(Array2<f64>),
}

/// Evaluation-policy choice probabilities `pi(a | x_t, k)` indexed by
/// `(round, action, position)`.
///
/// Context-free policies store one `(action, position)` table that is shared
/// by every round, so a Thompson-sampling distribution over a million rounds
/// costs no more than over one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDist {
    n_rounds: usize,
    storage: Storage,
}

impl ActionDist {
    pub fn from_array(probs: Array3<f64>) -> Result<Self> {
        let (n, k, l) = probs.dim();
        if k == 0 || l == 0 {
            return Err(OpeError::Shape("action distribution needs at least one action and one position".into()));
        }
        for t in 0..n {
            check_slices(probs.index_axis(Axis(0), t), t)?;
        }
        Ok(Self { n_rounds: n, storage: Storage::PerRound(probs) })
    }

    /// A context-free table broadcast over `n_rounds`.
    pub fn shared(probs: Array2<f64>, n_rounds: usize) -> Result<Self> {
        let (k, l) = probs.dim();
        if k == 0 || l == 0 {
            return Err(OpeError::Shape("action distribution needs at least one action and one position".into()));
        }
        check_slices(probs.view(), 0)?;
        Ok(Self { n_rounds, storage: Storage::Shared(probs) })
    }

    /// Places the logged propensity on each logged `(action, position)` and
    /// spreads the remaining mass uniformly, so importance weights are all 1.
    pub fn from_logged_propensities(fb: &BanditFeedback) -> Result<Self> {
        let (n, k, l) = (fb.n_rounds(), fb.n_actions(), fb.len_list());
        let mut probs = Array3::from_elem((n, k, l), 1.0 / k as f64);
        for t in 0..n {
            let (a, pos, p) = (fb.actions()[t], fb.positions()[t], fb.propensities()[t]);
            if k == 1 {
                if p != 1.0 {
                    return Err(OpeError::Data { row: t, message: "single-action log must have propensity 1".into() });
                }
                continue;
            }
            let rest = (1.0 - p) / (k - 1) as f64;
            for b in 0..k {
                probs[[t, b, pos]] = if b == a { p } else { rest };
            }
        }
        Self::from_array(probs)
    }

    pub fn n_rounds(&self) -> usize {
        self.n_rounds
    }

    pub fn n_actions(&self) -> usize {
        match &self.storage {
            Storage::PerRound(p) => p.dim().1,
            Storage::Shared(p) => p.dim().0,
        }
    }

    pub fn len_list(&self) -> usize {
        match &self.storage {
            Storage::PerRound(p) => p.dim().2,
            Storage::Shared(p) => p.dim().1,
        }
    }

    pub fn is_shared(&self) -> bool {
        matches!(self.storage, Storage::Shared(_))
    }

    #[inline]
    pub fn prob(&self, round: usize, action: usize, position: usize) -> f64 {
        match &self.storage {
            Storage::PerRound(p) => p[[round, action, position]],
            Storage::Shared(p) => {
                debug_assert!(round < self.n_rounds);
                p[[action, position]]
            }
        }
    }

    /// Rows gathered in the given order, matching [`BanditFeedback::select`].
    pub fn select(&self, indices: &[usize]) -> ActionDist {
        match &self.storage {
            Storage::PerRound(p) => ActionDist { n_rounds: indices.len(), storage: Storage::PerRound(p.select(Axis(0), indices)) },
            Storage::Shared(p) => ActionDist { n_rounds: indices.len(), storage: Storage::Shared(p.clone()) },
        }
    }

    pub fn to_dense(&self) -> Array3<f64> {
        match &self.storage {
            Storage::PerRound(p) => p.clone(),
            Storage::Shared(p) => {
                let (k, l) = p.dim();
                Array3::from_shape_fn((self.n_rounds, k, l), |(_, a, pos)| p[[a, pos]])
            }
        }
    }

    /// Fails unless rounds, actions and positions line up with `fb`.
    pub fn check_compatible(&self, fb: &BanditFeedback) -> Result<()> {
        if self.n_rounds != fb.n_rounds() || self.n_actions() != fb.n_actions() || self.len_list() < fb.len_list() {
            return Err(OpeError::Shape(format!(
                "action distribution is ({}, {}, {}) but feedback has {} rounds, {} actions, {} positions",
                self.n_rounds,
                self.n_actions(),
                self.len_list(),
                fb.n_rounds(),
                fb.n_actions(),
                fb.len_list()
            )));
        }
        Ok(())
    }
}

fn check_slices(probs: ndarray::ArrayView2<f64>, round: usize) -> Result<()> {
    for (pos, col) in probs.axis_iter(Axis(1)).enumerate() {
        if let Some(v) = col.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(OpeError::InvalidArgument(format!("probability {v} at round {round}, position {pos}")));
        }
        let s: f64 = col.sum();
        if (s - 1.0).abs() > NORMALIZATION_TOL {
            return Err(OpeError::InvalidArgument(format!(
                "probabilities at round {round}, position {pos} sum to {s}"
            )));
        }
    }
    Ok(())
}

/// Every entry `1 / n_actions`.
pub fn uniform_dist(n_rounds: usize, n_actions: usize, len_list: usize) -> ActionDist {
    ActionDist {
        n_rounds,
        storage: Storage::Shared(Array2::from_elem((n_actions, len_list), 1.0 / n_actions as f64)),
    }
}

/// Recovers a context-free policy's `(action, position)` table from its own
/// logs: each logged pair gets its mean recorded propensity and positions'
/// leftover mass is split evenly over pairs that never appear. Each column is
/// then renormalised to sum to one.
pub fn logged_context_free_probs(fb: &BanditFeedback) -> Result<Array2<f64>> {
    let (k, l) = (fb.n_actions(), fb.len_list());
    let mut sum = Array2::<f64>::zeros((k, l));
    let mut count = Array2::<f64>::zeros((k, l));
    for t in 0..fb.n_rounds() {
        let (a, pos) = (fb.actions()[t], fb.positions()[t]);
        sum[[a, pos]] += fb.propensities()[t];
        count[[a, pos]] += 1.0;
    }
    let mut probs = Array2::zeros((k, l));
    for pos in 0..l {
        let seen: f64 = (0..k).filter(|&a| count[[a, pos]] > 0.0).map(|a| sum[[a, pos]] / count[[a, pos]]).sum();
        let unseen = (0..k).filter(|&a| count[[a, pos]] == 0.0).count();
        if unseen == k {
            return Err(OpeError::InvalidArgument(format!("no records at position {pos}")));
        }
        let fill = if unseen > 0 { (1.0 - seen).max(0.0) / unseen as f64 } else { 0.0 };
        for a in 0..k {
            probs[[a, pos]] = if count[[a, pos]] > 0.0 { sum[[a, pos]] / count[[a, pos]] } else { fill };
        }
        let total: f64 = probs.column(pos).sum();
        probs.column_mut(pos).mapv_inplace(|v| v / total);
    }
    Ok(probs)
}

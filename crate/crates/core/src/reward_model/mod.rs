//! Logistic reward regression `q̂(x, a)` over `context ⊕ one-hot(action)`
//! features, plus the metrics used to score it.

mod metrics;
pub mod optim;

pub use metrics::{auc, auc_with_ties, rce, TieHandling};

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::BanditFeedback;
use crate::error::{OpeError, Result};
use crate::rng;

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Inverse L2 regularisation strength.
    pub c: f64,
    pub max_iter: usize,
    /// Stop once the gradient norm of the (mean-scaled) objective falls below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { c: 1000.0, max_iter: 5000, tol: 1e-6, seed: 0 }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !(self.tol > 0.0) {
            return Err(OpeError::Config("C and tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub iterations: usize,
    pub final_loss: f64,
    pub grad_norm: f64,
    pub converged: bool,
    pub seed: u64,
}

/// `q̂(x, a) = sigmoid(w_ctx . x + w_act[a] + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardModel {
    pub dim_context: usize,
    pub n_actions: usize,
    /// Context weights followed by one weight per action.
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub c: f64,
    pub metadata: FitMetadata,
}

/// Per-record `q̂(x_t, a_t)` and the full `(round, action)` table.
#[derive(Debug, Clone, PartialEq)]
pub struct QPrediction {
    pub per_record: Vec<f64>,
    pub table: Array2<f64>,
}

impl RewardModel {
    pub fn from_parts(dim_context: usize, n_actions: usize, weights: Vec<f64>, intercept: f64) -> Result<Self> {
        if weights.len() != dim_context + n_actions {
            return Err(OpeError::Shape(format!(
                "expected {} weights, got {}",
                dim_context + n_actions,
                weights.len()
            )));
        }
        Ok(Self {
            dim_context,
            n_actions,
            weights,
            intercept,
            c: f64::INFINITY,
            metadata: FitMetadata { iterations: 0, final_loss: f64::NAN, grad_norm: f64::NAN, converged: true, seed: 0 },
        })
    }

    pub(crate) fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.push(self.intercept);
        p
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Uniform random partition into a training part of `⌊fraction · n⌋`
/// records and an evaluation part with the rest. Both keep input order.
pub fn cross_fit_split(fb: &BanditFeedback, fraction: f64, seed: u64) -> Result<(BanditFeedback, BanditFeedback)> {
    let (train, eval) = cross_fit_indices(fb.n_rounds(), fraction, seed)?;
    Ok((fb.select(&train), fb.select(&eval)))
}

pub(crate) fn cross_fit_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(OpeError::InvalidArgument(format!("fraction {fraction} must lie in (0, 1)")));
    }
    let n_train = (fraction * n as f64).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(OpeError::InvalidArgument(format!(
            "fraction {fraction} of {n} records leaves an empty part"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::seeded(seed));
    let mut train = idx[..n_train].to_vec();
    let mut eval = idx[n_train..].to_vec();
    train.sort_unstable();
    eval.sort_unstable();
    Ok((train, eval))
}

/// Weighted, L2-penalised logistic loss over `[context, one-hot(action)?, 1]`
/// features. Parameters are laid out `[w_ctx; w_act; b]`; the intercept is
/// not penalised.
pub(crate) struct LogisticObjective<'a> {
    pub contexts: ArrayView2<'a, f64>,
    pub actions: Option<&'a [usize]>,
    pub n_actions: usize,
    pub labels: &'a [f64],
    pub sample_weights: Option<&'a [f64]>,
    pub c: f64,
}

impl LogisticObjective<'_> {
    pub fn n_params(&self) -> usize {
        self.contexts.ncols() + if self.actions.is_some() { self.n_actions } else { 0 } + 1
    }

    fn total_weight(&self) -> f64 {
        self.sample_weights.map_or(self.labels.len() as f64, |w| w.iter().sum())
    }

    pub fn logit(&self, params: &[f64], t: usize) -> f64 {
        let d = self.contexts.ncols();
        let mut z = params[params.len() - 1];
        for (w, x) in params[..d].iter().zip(self.contexts.row(t)) {
            z += w * x;
        }
        if let Some(actions) = self.actions {
            z += params[d + actions[t]];
        }
        z
    }

    /// Mean penalised negative log-likelihood and its gradient.
    pub fn value_and_grad(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let d = self.contexts.ncols();
        let p = params.len();
        let total = self.total_weight();
        let mut loss = 0.0;
        let mut grad = vec![0.0; p];
        for t in 0..self.labels.len() {
            let s = self.sample_weights.map_or(1.0, |w| w[t]);
            if s == 0.0 {
                continue;
            }
            let z = self.logit(params, t);
            let y = self.labels[t];
            loss += s * (softplus(z) - y * z);
            let r = s * (sigmoid(z) - y);
            for (g, x) in grad[..d].iter_mut().zip(self.contexts.row(t)) {
                *g += r * x;
            }
            if let Some(actions) = self.actions {
                grad[d + actions[t]] += r;
            }
            grad[p - 1] += r;
        }
        let penalty_scale = 1.0 / (self.c * total);
        let sq: f64 = params[..p - 1].iter().map(|w| w * w).sum();
        loss = loss / total + 0.5 * penalty_scale * sq;
        for (g, w) in grad[..p - 1].iter_mut().zip(&params[..p - 1]) {
            *g = *g / total + penalty_scale * w;
        }
        grad[p - 1] /= total;
        (loss, grad)
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean penalised negative log-likelihood of the reward model at `params`
/// (`[w_ctx; w_act; b]`) and its gradient.
pub fn logistic_objective(fb: &BanditFeedback, c: f64, params: &[f64]) -> Result<(f64, Vec<f64>)> {
    let objective = LogisticObjective {
        contexts: fb.contexts().view(),
        actions: Some(fb.actions()),
        n_actions: fb.n_actions(),
        labels: fb.rewards(),
        sample_weights: None,
        c,
    };
    if params.len() != objective.n_params() {
        return Err(OpeError::Shape(format!("expected {} parameters, got {}", objective.n_params(), params.len())));
    }
    Ok(objective.value_and_grad(params))
}

/// Fits the reward model by maximising the L2-penalised Bernoulli
/// log-likelihood. Non-convergence is reported in the metadata, not as an
/// error.
pub fn fit_logistic(fb: &BanditFeedback, cfg: &FitConfig) -> Result<RewardModel> {
    cfg.validate()?;
    if !fb.is_binary_reward() {
        return Err(OpeError::InvalidArgument("logistic reward model needs binary rewards".into()));
    }
    let positives = fb.rewards().iter().filter(|&&r| r == 1.0).count();
    if positives == 0 || positives == fb.n_rounds() {
        return Err(OpeError::Degenerate("rewards contain a single class".into()));
    }
    let objective = LogisticObjective {
        contexts: fb.contexts().view(),
        actions: Some(fb.actions()),
        n_actions: fb.n_actions(),
        labels: fb.rewards(),
        sample_weights: None,
        c: cfg.c,
    };
    let res = optim::minimize(|p| objective.value_and_grad(p), vec![0.0; objective.n_params()], cfg.max_iter, cfg.tol);
    let mut weights = res.x;
    let intercept = weights.pop().expect("intercept");
    Ok(RewardModel {
        dim_context: fb.dim_context(),
        n_actions: fb.n_actions(),
        weights,
        intercept,
        c: cfg.c,
        metadata: FitMetadata {
            iterations: res.iterations,
            final_loss: res.value,
            grad_norm: res.grad_norm,
            converged: res.converged,
            seed: cfg.seed,
        },
    })
}

/// Scores every record against every action.
pub fn predict_q(m: &RewardModel, fb: &BanditFeedback) -> Result<QPrediction> {
    if fb.dim_context() != m.dim_context || fb.n_actions() != m.n_actions {
        return Err(OpeError::Shape(format!(
            "model expects {} context dims and {} actions, data has {} and {}",
            m.dim_context,
            m.n_actions,
            fb.dim_context(),
            fb.n_actions()
        )));
    }
    let d = m.dim_context;
    let n = fb.n_rounds();
    let mut table = Array2::zeros((n, m.n_actions));
    for (t, x) in fb.contexts().outer_iter().enumerate() {
        let base: f64 = m.intercept + m.weights[..d].iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        for a in 0..m.n_actions {
            table[[t, a]] = sigmoid(base + m.weights[d + a]);
        }
    }
    let per_record = fb.actions().iter().enumerate().map(|(t, &a)| table[[t, a]]).collect();
    Ok(QPrediction { per_record, table })
}

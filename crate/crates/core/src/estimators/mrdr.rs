//! Reward model chosen to minimise the empirical variance of the per-record
//! DR terms `d_t = q̂(x_t, pi_e) + w_t (r_t - q̂(x_t, a_t))`, over the same
//! logistic family as the ordinary reward model.

use serde::{Deserialize, Serialize};

use super::{dr_sum, importance_weights, EstimatorKind, EstimatorResult};
use crate::data::BanditFeedback;
use crate::error::{OpeError, Result};
use crate::policies::ActionDist;
use crate::reward_model::{fit_logistic, optim, predict_q, sigmoid, FitConfig, FitMetadata, RewardModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrdrModel(pub RewardModel);

impl MrdrModel {
    pub fn model(&self) -> &RewardModel {
        &self.0
    }
}

/// Empirical variance of the DR terms and its gradient with respect to the
/// logistic parameters `[w_ctx; w_act; b]`.
pub fn mrdr_objective(fb: &BanditFeedback, dist: &ActionDist, params: &[f64]) -> Result<(f64, Vec<f64>)> {
    let w = importance_weights(fb, dist)?;
    let (d, k) = (fb.dim_context(), fb.n_actions());
    if params.len() != d + k + 1 {
        return Err(OpeError::Shape(format!("expected {} parameters, got {}", d + k + 1, params.len())));
    }
    Ok(variance_and_grad(fb, dist, w.as_slice(), params))
}

pub(super) fn variance_and_grad(fb: &BanditFeedback, dist: &ActionDist, w: &[f64], params: &[f64]) -> (f64, Vec<f64>) {
    let (n, d, k) = (fb.n_rounds(), fb.dim_context(), fb.n_actions());
    let b = params[d + k];
    let mut terms = Vec::with_capacity(n);
    // per record: sigmoid values and their derivatives for every action
    let mut s = vec![0.0; n * k];
    for (t, x) in fb.contexts().outer_iter().enumerate() {
        let base: f64 = b + params[..d].iter().zip(x).map(|(p, v)| p * v).sum::<f64>();
        let pos = fb.positions()[t];
        let a_t = fb.actions()[t];
        let mut q_pi = 0.0;
        for a in 0..k {
            let v = sigmoid(base + params[d + a]);
            s[t * k + a] = v;
            q_pi += v * dist.prob(t, a, pos);
        }
        terms.push(q_pi + w[t] * (fb.rewards()[t] - s[t * k + a_t]));
    }
    let mean = terms.iter().sum::<f64>() / n as f64;
    let var = terms.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;

    let mut grad = vec![0.0; d + k + 1];
    for (t, x) in fb.contexts().outer_iter().enumerate() {
        let coef = 2.0 * (terms[t] - mean) / n as f64;
        if coef == 0.0 {
            continue;
        }
        let pos = fb.positions()[t];
        let a_t = fb.actions()[t];
        let mut shared = 0.0;
        for a in 0..k {
            let v = s[t * k + a];
            let mut da = dist.prob(t, a, pos) * v * (1.0 - v);
            if a == a_t {
                da -= w[t] * v * (1.0 - v);
            }
            grad[d + a] += coef * da;
            shared += da;
        }
        for (g, xv) in grad[..d].iter_mut().zip(x) {
            *g += coef * shared * xv;
        }
        grad[d + k] += coef * shared;
    }
    (var, grad)
}

/// Fits the variance-minimising model, warm-started from the ordinary
/// logistic fit when the rewards allow one, otherwise from zero.
pub fn fit_mrdr(fb: &BanditFeedback, dist: &ActionDist, cfg: &FitConfig) -> Result<MrdrModel> {
    let init = match fit_logistic(fb, cfg) {
        Ok(m) => m,
        Err(OpeError::Degenerate(_)) | Err(OpeError::InvalidArgument(_)) => {
            RewardModel::from_parts(fb.dim_context(), fb.n_actions(), vec![0.0; fb.dim_context() + fb.n_actions()], 0.0)?
        }
        Err(e) => return Err(e),
    };
    fit_mrdr_from(fb, dist, cfg, &init)
}

/// Gradient descent on the DR-term variance starting from `init`. The
/// result's variance never exceeds that of `init`.
pub fn fit_mrdr_from(fb: &BanditFeedback, dist: &ActionDist, cfg: &FitConfig, init: &RewardModel) -> Result<MrdrModel> {
    cfg.validate()?;
    let w = importance_weights(fb, dist)?;
    if init.dim_context != fb.dim_context() || init.n_actions != fb.n_actions() {
        return Err(OpeError::Shape("initial model does not match the feedback".into()));
    }
    let res = optim::minimize(|p| variance_and_grad(fb, dist, w.as_slice(), p), init.params(), cfg.max_iter, cfg.tol);
    let mut weights = res.x;
    let intercept = weights.pop().expect("intercept");
    Ok(MrdrModel(RewardModel {
        dim_context: fb.dim_context(),
        n_actions: fb.n_actions(),
        weights,
        intercept,
        c: init.c,
        metadata: FitMetadata {
            iterations: res.iterations,
            final_loss: res.value,
            grad_norm: res.grad_norm,
            converged: res.converged,
            seed: cfg.seed,
        },
    }))
}

/// DR with the variance-minimising model's table.
pub fn estimate_mrdr(fb: &BanditFeedback, dist: &ActionDist, m: &MrdrModel) -> Result<EstimatorResult> {
    let w = importance_weights(fb, dist)?;
    let q = predict_q(&m.0, fb)?;
    EstimatorResult::new(EstimatorKind::Mrdr, dr_sum(fb, dist, &q.table, &w, |w| w) / fb.n_rounds() as f64, &w)
}

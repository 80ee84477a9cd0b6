//! Off-policy estimators of `V(pi_e)` from logged feedback.
//!
//! Every estimator is a pure function of the logged batch, the evaluation
//! policy's [`ActionDist`] and, where needed, a reward-model table
//! `q̂[t, a] = q̂(x_t, a)`. Sums run sequentially in record order, so results
//! are bit-reproducible.

mod mrdr;

pub use mrdr::{estimate_mrdr, fit_mrdr, fit_mrdr_from, mrdr_objective, MrdrModel};

use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::BanditFeedback;
use crate::error::{OpeError, Result};
use crate::policies::ActionDist;

/// Hyperparameter grid used for both Switch-DR's `tau` and DRos's `lambda`.
pub const DEFAULT_GRID: [f64; 6] = [5.0, 10.0, 50.0, 100.0, 500.0, 1000.0];

/// Per-record importance weights `pi_e(a_t|x_t,k_t) / pi_b(a_t|x_t,k_t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    fn diagnostics(&self, tau: Option<f64>) -> WeightDiagnostics {
        WeightDiagnostics {
            max_weight: self.max(),
            mean_weight: self.mean(),
            frac_above_tau: tau.map(|tau| self.0.iter().filter(|&&w| w > tau).count() as f64 / self.0.len() as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightDiagnostics {
    pub max_weight: f64,
    pub mean_weight: f64,
    /// Switch family only: share of records whose weight exceeds `tau`.
    pub frac_above_tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub estimator: String,
    pub tau: Option<f64>,
    pub lambda: Option<f64>,
    pub estimate: f64,
    pub diagnostics: WeightDiagnostics,
}

impl EstimatorResult {
    fn new(kind: EstimatorKind, estimate: f64, weights: &WeightVector) -> Result<Self> {
        if !estimate.is_finite() {
            return Err(OpeError::NonFinite { index: 0, what: format!("{kind} estimate {estimate}") });
        }
        let (tau, lambda) = kind.hyperparameters();
        Ok(Self { estimator: kind.name().to_string(), tau, lambda, estimate, diagnostics: weights.diagnostics(tau) })
    }
}

/// The estimators and their hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum EstimatorKind {
    Dm,
    Ipw,
    Snipw,
    Dr,
    Sndr,
    SwitchDr { tau: f64 },
    SwitchIpw { tau: f64 },
    #[serde(rename = "dros")]
    DrOs { lambda: f64 },
    Mrdr,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Dm => "dm",
            EstimatorKind::Ipw => "ipw",
            EstimatorKind::Snipw => "snipw",
            EstimatorKind::Dr => "dr",
            EstimatorKind::Sndr => "sndr",
            EstimatorKind::SwitchDr { .. } => "switch-dr",
            EstimatorKind::SwitchIpw { .. } => "switch-ipw",
            EstimatorKind::DrOs { .. } => "dros",
            EstimatorKind::Mrdr => "mrdr",
        }
    }

    pub fn hyperparameters(&self) -> (Option<f64>, Option<f64>) {
        match *self {
            EstimatorKind::SwitchDr { tau } | EstimatorKind::SwitchIpw { tau } => (Some(tau), None),
            EstimatorKind::DrOs { lambda } => (None, Some(lambda)),
            _ => (None, None),
        }
    }

    /// Whether the estimator reads the logistic reward model's table.
    pub fn needs_reward_model(&self) -> bool {
        !matches!(self, EstimatorKind::Ipw | EstimatorKind::Snipw | EstimatorKind::Mrdr)
    }

    /// Parses `dm`, `ipw`, ..., `switch-dr:50`, `switch-ipw:5`, `dros:100`, `mrdr`.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let value = |what: &str| -> Result<f64> {
            let v: f64 = arg
                .ok_or_else(|| OpeError::InvalidArgument(format!("`{name}` needs `:{what}`")))?
                .parse()
                .map_err(|_| OpeError::InvalidArgument(format!("bad {what} in `{s}`")))?;
            if !(v >= 0.0) {
                return Err(OpeError::InvalidArgument(format!("{what} must be non-negative")));
            }
            Ok(v)
        };
        Ok(match name.to_ascii_lowercase().as_str() {
            "dm" => EstimatorKind::Dm,
            "ipw" => EstimatorKind::Ipw,
            "snipw" => EstimatorKind::Snipw,
            "dr" => EstimatorKind::Dr,
            "sndr" => EstimatorKind::Sndr,
            "switch-dr" => EstimatorKind::SwitchDr { tau: value("tau")? },
            "switch-ipw" => EstimatorKind::SwitchIpw { tau: value("tau")? },
            "dros" => EstimatorKind::DrOs { lambda: value("lambda")? },
            "mrdr" => EstimatorKind::Mrdr,
            other => return Err(OpeError::InvalidArgument(format!("unknown estimator `{other}`"))),
        })
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            EstimatorKind::SwitchDr { tau } | EstimatorKind::SwitchIpw { tau } => write!(f, "{} (tau={tau})", self.name()),
            EstimatorKind::DrOs { lambda } => write!(f, "{} (lambda={lambda})", self.name()),
            _ => f.write_str(self.name()),
        }
    }
}

/// DM, IPW, SNIPW, DR, SNDR, Switch-DR over `taus`, DRos over `lambdas`, MRDR.
/// With the default grids this is eighteen estimators.
pub fn benchmark_grid(taus: &[f64], lambdas: &[f64]) -> Vec<EstimatorKind> {
    let mut v = vec![EstimatorKind::Dm, EstimatorKind::Ipw, EstimatorKind::Snipw, EstimatorKind::Dr, EstimatorKind::Sndr];
    v.extend(taus.iter().map(|&tau| EstimatorKind::SwitchDr { tau }));
    v.extend(lambdas.iter().map(|&lambda| EstimatorKind::DrOs { lambda }));
    v.push(EstimatorKind::Mrdr);
    v
}

pub fn default_grid() -> Vec<EstimatorKind> {
    benchmark_grid(&DEFAULT_GRID, &DEFAULT_GRID)
}

/// Everything an estimator may read.
#[derive(Debug, Clone, Copy)]
pub struct EstimatorInput<'a> {
    pub feedback: &'a BanditFeedback,
    pub dist: &'a ActionDist,
    /// Reward-model table used by the DM/DR family.
    pub q_hat: Option<&'a Array2<f64>>,
    /// Table from the variance-minimising model, used by MRDR.
    pub mrdr_q_hat: Option<&'a Array2<f64>>,
    /// Full behaviour distribution, needed by Switch-IPW.
    pub behavior_dist: Option<&'a ActionDist>,
}

/// Runs one estimator.
pub fn estimate(kind: EstimatorKind, input: &EstimatorInput<'_>) -> Result<EstimatorResult> {
    let (fb, dist) = (input.feedback, input.dist);
    let q = || input.q_hat.ok_or_else(|| OpeError::MissingRewardModel { estimator: kind.name().into() });
    match kind {
        EstimatorKind::Dm => estimate_dm(fb, dist, q()?),
        EstimatorKind::Ipw => estimate_ipw(fb, dist),
        EstimatorKind::Snipw => estimate_snipw(fb, dist),
        EstimatorKind::Dr => estimate_dr(fb, dist, q()?),
        EstimatorKind::Sndr => estimate_sndr(fb, dist, q()?),
        EstimatorKind::SwitchDr { tau } => estimate_switch_dr(fb, dist, q()?, tau),
        EstimatorKind::SwitchIpw { tau } => {
            let behavior = input
                .behavior_dist
                .ok_or_else(|| OpeError::MissingBehaviorDist { estimator: kind.name().into() })?;
            estimate_switch_ipw(fb, dist, behavior, q()?, tau)
        }
        EstimatorKind::DrOs { lambda } => estimate_dros(fb, dist, q()?, lambda),
        EstimatorKind::Mrdr => {
            let m = input.mrdr_q_hat.ok_or_else(|| OpeError::MissingRewardModel { estimator: kind.name().into() })?;
            let w = importance_weights(fb, dist)?;
            check_q(fb, m)?;
            EstimatorResult::new(kind, dr_sum(fb, dist, m, &w, |w| w) / fb.n_rounds() as f64, &w)
        }
    }
}

/// `w_t = pi_e(a_t | x_t, k_t) / pi_b(a_t | x_t, k_t)`.
pub fn importance_weights(fb: &BanditFeedback, dist: &ActionDist) -> Result<WeightVector> {
    dist.check_compatible(fb)?;
    let mut w = Vec::with_capacity(fb.n_rounds());
    for t in 0..fb.n_rounds() {
        let p = fb.propensities()[t];
        if !(p > 0.0) {
            return Err(OpeError::Data { row: t, message: format!("propensity {p} must be positive") });
        }
        let v = dist.prob(t, fb.actions()[t], fb.positions()[t]) / p;
        if !v.is_finite() {
            return Err(OpeError::NonFinite { index: t, what: format!("importance weight {v}") });
        }
        w.push(v);
    }
    Ok(WeightVector(w))
}

fn check_q(fb: &BanditFeedback, q: &Array2<f64>) -> Result<()> {
    if q.dim() != (fb.n_rounds(), fb.n_actions()) {
        return Err(OpeError::Shape(format!(
            "reward table is {:?} but feedback needs ({}, {})",
            q.dim(),
            fb.n_rounds(),
            fb.n_actions()
        )));
    }
    Ok(())
}

/// `q̂(x_t, pi_e) = sum_a q̂(x_t, a) pi_e(a | x_t, k_t)`.
#[inline]
fn q_under_policy(fb: &BanditFeedback, dist: &ActionDist, q: &Array2<f64>, t: usize) -> f64 {
    let k = fb.positions()[t];
    q.row(t).iter().enumerate().map(|(a, &v)| v * dist.prob(t, a, k)).sum()
}

/// `sum_t [ q̂(x_t, pi_e) + shrink(w_t) (r_t - q̂(x_t, a_t)) ]`.
fn dr_sum(fb: &BanditFeedback, dist: &ActionDist, q: &Array2<f64>, w: &WeightVector, shrink: impl Fn(f64) -> f64) -> f64 {
    (0..fb.n_rounds())
        .map(|t| {
            let a = fb.actions()[t];
            q_under_policy(fb, dist, q, t) + shrink(w.0[t]) * (fb.rewards()[t] - q[[t, a]])
        })
        .sum()
}

pub fn estimate_dm(fb: &BanditFeedback, dist: &ActionDist, q: &Array2<f64>) -> Result<EstimatorResult> {
    let w = importance_weights(fb, dist)?;
    check_q(fb, q)?;
    let v: f64 = (0..fb.n_rounds()).map(|t| q_under_policy(fb, dist, q, t)).sum::<f64>() / fb.n_rounds() as f64;
    EstimatorResult::new(EstimatorKind::Dm, v, &w)
}

pub fn estimate_ipw(fb: &BanditFeedback, dist: &ActionDist) -> Result<EstimatorResult> {
    let w = importance_weights(fb, dist)?;
    let v = weighted_reward_sum(fb, &w) / fb.n_rounds() as f64;
    EstimatorResult::new(EstimatorKind::Ipw, v, &w)
}

fn weighted_reward_sum(fb: &BanditFeedback, w: &WeightVector) -> f64 {
    w.0.iter().zip(fb.rewards()).map(|(w, r)| w * r).sum()
}

fn weight_sum(w: &WeightVector) -> Result<f64> {
    let s: f64 = w.0.iter().sum();
    if !(s > 0.0) {
        return Err(OpeError::Degenerate(
            "importance weights sum to zero: the evaluation policy never takes a logged action".into(),
        ));
    }
    Ok(s)
}

pub fn estimate_snipw(fb: &BanditFeedback, dist: &ActionDist) -> Result<EstimatorResult> {
    let w = importance_weights(fb, dist)?;
    let v = weighted_reward_sum(fb, &w) / weight_sum(&w)?;
    EstimatorResult::new(EstimatorKind::Snipw, v, &w)
}

pub fn estimate_dr(fb: &BanditFeedback, dist: &ActionDist, q: &Array2<f64>) -> Result<EstimatorResult> {
    let w = importance_weights(fb, dist)?;
    check_q(fb, q)?;
    EstimatorResult::new(EstimatorKind::Dr, dr_sum(fb, dist, q, &w, |w| w) / fb.n_rounds() as f64, &w)
}

pub fn estimate_sndr(fb: &BanditFeedback, dist: &ActionDist, q: &Array2<f64>) -> Result<EstimatorResult> {
    let w = importance_weights(fb, dist)?;
    check_q(fb, q)?;
    let mean_w = weight_sum(&w)? / fb.n_rounds() as f64;
    EstimatorResult::new(EstimatorKind::Sndr, dr_sum(fb, dist, q, &w, |w| w / mean_w) / fb.n_rounds() as f64, &w)
}

/// DR on records with `w_t <= tau`, DM elsewhere.
pub fn estimate_switch_dr(fb: &BanditFeedback, dist: &ActionDist, q: &Array2<f64>, tau: f64) -> Result<EstimatorResult> {
    check_tau(tau, "tau")?;
    let w = importance_weights(fb, dist)?;
    check_q(fb, q)?;
    let v = dr_sum(fb, dist, q, &w, |w| if w <= tau { w } else { 0.0 }) / fb.n_rounds() as f64;
    EstimatorResult::new(EstimatorKind::SwitchDr { tau }, v, &w)
}

/// IPW on records with `w_t <= tau`; the model term covers every action whose
/// full-table weight `pi_e(a|x_t,k_t) / pi_b(a|x_t,k_t)` exceeds `tau`.
pub fn estimate_switch_ipw(
    fb: &BanditFeedback,
    dist: &ActionDist,
    behavior: &ActionDist,
    q: &Array2<f64>,
    tau: f64,
) -> Result<EstimatorResult> {
    check_tau(tau, "tau")?;
    let w = importance_weights(fb, dist)?;
    check_q(fb, q)?;
    behavior.check_compatible(fb)?;
    let mut total = 0.0;
    for t in 0..fb.n_rounds() {
        let k = fb.positions()[t];
        let mut model_part = 0.0;
        for a in 0..fb.n_actions() {
            let pe = dist.prob(t, a, k);
            if pe == 0.0 {
                continue;
            }
            let pb = behavior.prob(t, a, k);
            let wa = if pb > 0.0 { pe / pb } else { f64::INFINITY };
            if wa > tau {
                model_part += q[[t, a]] * pe;
            }
        }
        let wt = w.0[t];
        let ipw_part = if wt <= tau { wt * fb.rewards()[t] } else { 0.0 };
        total += model_part + ipw_part;
    }
    EstimatorResult::new(EstimatorKind::SwitchIpw { tau }, total / fb.n_rounds() as f64, &w)
}

/// Shrunk weight `lambda w / (w^2 + lambda)`, zero when `lambda = 0`.
pub fn optimistic_shrinkage(w: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        0.0
    } else {
        lambda * w / (w * w + lambda)
    }
}

pub fn estimate_dros(fb: &BanditFeedback, dist: &ActionDist, q: &Array2<f64>, lambda: f64) -> Result<EstimatorResult> {
    check_tau(lambda, "lambda")?;
    let w = importance_weights(fb, dist)?;
    check_q(fb, q)?;
    let v = dr_sum(fb, dist, q, &w, |w| optimistic_shrinkage(w, lambda)) / fb.n_rounds() as f64;
    EstimatorResult::new(EstimatorKind::DrOs { lambda }, v, &w)
}

fn check_tau(v: f64, what: &str) -> Result<()> {
    if !(v >= 0.0) {
        return Err(OpeError::InvalidArgument(format!("{what} must be non-negative, got {v}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests;

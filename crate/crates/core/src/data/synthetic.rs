use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::BanditFeedback;
use crate::error::{OpeError, Result};
use crate::policies::ActionDist;
use crate::rng;

pub const DEFAULT_PROPENSITY_FLOOR: f64 = 1e-6;

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// How contexts are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextSpec {
    /// Independent standard normal features.
    Gaussian,
    /// Uniform over a finite support; allows exact population values.
    Discrete(Vec<Vec<f64>>),
}

/// Mean reward function `q(x, a)`. Rewards are Bernoulli(q).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardSpec {
    /// Context-free `q(x, a) = values[a]`.
    Constant(Vec<f64>),
    /// `q(x, a) = sigmoid(coef[a] . x + intercept[a])`.
    LinearLogistic { coef: Vec<Vec<f64>>, intercept: Vec<f64> },
    /// `q(x, a) = sigmoid(coef[a] . x + quad[a] . (x * x) + intercept[a])`.
    QuadraticLogistic { coef: Vec<Vec<f64>>, quad: Vec<Vec<f64>>, intercept: Vec<f64> },
}

impl RewardSpec {
    pub fn mean_reward(&self, x: ArrayView1<f64>, action: usize) -> f64 {
        match self {
            RewardSpec::Constant(v) => v[action],
            RewardSpec::LinearLogistic { coef, intercept } => sigmoid(dot(&coef[action], x) + intercept[action]),
            RewardSpec::QuadraticLogistic { coef, quad, intercept } => {
                let q: f64 = quad[action].iter().zip(x.iter()).map(|(c, v)| c * v * v).sum();
                sigmoid(dot(&coef[action], x) + q + intercept[action])
            }
        }
    }

    fn validate(&self, n_actions: usize, dim: usize) -> Result<()> {
        let check_rows = |rows: &[Vec<f64>], what: &str| -> Result<()> {
            if rows.len() != n_actions || rows.iter().any(|r| r.len() != dim) {
                return Err(OpeError::Config(format!("reward {what} must be {n_actions} x {dim}")));
            }
            Ok(())
        };
        let check_len = |v: &[f64], what: &str| -> Result<()> {
            if v.len() != n_actions {
                return Err(OpeError::Config(format!("reward {what} must have {n_actions} entries")));
            }
            Ok(())
        };
        match self {
            RewardSpec::Constant(v) => {
                check_len(v, "values")?;
                if v.iter().any(|q| !(0.0..=1.0).contains(q)) {
                    return Err(OpeError::Config("constant mean rewards must lie in [0, 1]".into()));
                }
            }
            RewardSpec::LinearLogistic { coef, intercept } => {
                check_rows(coef, "coef")?;
                check_len(intercept, "intercept")?;
            }
            RewardSpec::QuadraticLogistic { coef, quad, intercept } => {
                check_rows(coef, "coef")?;
                check_rows(quad, "quad")?;
                check_len(intercept, "intercept")?;
            }
        }
        Ok(())
    }
}

/// A single-slot stochastic policy used for synthetic logging and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicySpec {
    Uniform,
    /// Context-free probabilities.
    Fixed(Vec<f64>),
    /// `pi(a|x) ∝ exp((coef[a] . x + intercept[a]) / temperature)`.
    Softmax { coef: Vec<Vec<f64>>, intercept: Vec<f64>, temperature: f64 },
}

impl PolicySpec {
    pub fn probs(&self, x: ArrayView1<f64>, n_actions: usize) -> Vec<f64> {
        match self {
            PolicySpec::Uniform => vec![1.0 / n_actions as f64; n_actions],
            PolicySpec::Fixed(p) => p.clone(),
            PolicySpec::Softmax { coef, intercept, temperature } => {
                let scores: Vec<f64> =
                    (0..n_actions).map(|a| (dot(&coef[a], x) + intercept[a]) / temperature).collect();
                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                let z: f64 = exps.iter().sum();
                exps.into_iter().map(|e| e / z).collect()
            }
        }
    }

    pub fn validate(&self, n_actions: usize, dim: usize) -> Result<()> {
        match self {
            PolicySpec::Uniform => Ok(()),
            PolicySpec::Fixed(p) => {
                if p.len() != n_actions || p.iter().any(|v| *v < 0.0) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(OpeError::Config("fixed policy must be a probability vector over actions".into()));
                }
                Ok(())
            }
            PolicySpec::Softmax { coef, intercept, temperature } => {
                if coef.len() != n_actions || coef.iter().any(|r| r.len() != dim) || intercept.len() != n_actions {
                    return Err(OpeError::Config(format!("softmax policy must have {n_actions} x {dim} coefficients")));
                }
                if !(*temperature > 0.0) {
                    return Err(OpeError::Config("softmax temperature must be positive".into()));
                }
                Ok(())
            }
        }
    }

    /// Action distribution over the given contexts, single slot.
    pub fn action_dist(&self, contexts: &Array2<f64>, n_actions: usize) -> Result<ActionDist> {
        let n = contexts.nrows();
        match self {
            PolicySpec::Uniform => Ok(crate::policies::uniform_dist(n, n_actions, 1)),
            PolicySpec::Fixed(p) => {
                ActionDist::shared(Array2::from_shape_fn((n_actions, 1), |(a, _)| p[a]), n)
            }
            PolicySpec::Softmax { .. } => {
                let mut dense = ndarray::Array3::zeros((n, n_actions, 1));
                for (t, x) in contexts.outer_iter().enumerate() {
                    for (a, p) in self.probs(x, n_actions).into_iter().enumerate() {
                        dense[[t, a, 0]] = p;
                    }
                }
                ActionDist::from_array(dense)
            }
        }
    }
}

/// Configuration of the synthetic logged-feedback generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_actions: usize,
    pub dim_context: usize,
    pub context: ContextSpec,
    pub reward: RewardSpec,
    pub behavior: PolicySpec,
    pub propensity_floor: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    /// Gaussian contexts, random linear-logistic rewards, uniform logging.
    pub fn random_linear(n_actions: usize, dim_context: usize, seed: u64) -> Self {
        let mut r = rng::seeded(rng::derive_seed(seed, u64::MAX));
        let coef = (0..n_actions)
            .map(|_| (0..dim_context).map(|_| r.sample::<f64, _>(StandardNormal) * 0.5).collect())
            .collect();
        let intercept = (0..n_actions).map(|_| r.random_range(-1.5..0.0)).collect();
        SyntheticConfig {
            n_actions,
            dim_context,
            context: ContextSpec::Gaussian,
            reward: RewardSpec::LinearLogistic { coef, intercept },
            behavior: PolicySpec::Uniform,
            propensity_floor: DEFAULT_PROPENSITY_FLOOR,
            seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SyntheticConfig { seed, ..self.clone() }
    }

    pub fn with_behavior(&self, behavior: PolicySpec) -> Self {
        SyntheticConfig { behavior, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_actions < 2 {
            return Err(OpeError::Config("n_actions must be at least 2".into()));
        }
        if self.dim_context < 1 {
            return Err(OpeError::Config("dim_context must be at least 1".into()));
        }
        if !(self.propensity_floor >= 0.0 && self.propensity_floor < 1.0) {
            return Err(OpeError::Config("propensity floor must lie in [0, 1)".into()));
        }
        if let ContextSpec::Discrete(support) = &self.context {
            if support.is_empty() || support.iter().any(|x| x.len() != self.dim_context) {
                return Err(OpeError::Config("discrete context support must be non-empty rows of dim_context".into()));
            }
        }
        self.reward.validate(self.n_actions, self.dim_context)?;
        self.behavior.validate(self.n_actions, self.dim_context)
    }

    /// Exact `V(pi)` under the context distribution. Only available for a
    /// discrete context support.
    pub fn exact_policy_value(&self, policy: &PolicySpec) -> Result<f64> {
        let ContextSpec::Discrete(support) = &self.context else {
            return Err(OpeError::InvalidArgument("exact policy value needs a discrete context support".into()));
        };
        let total: f64 = support
            .iter()
            .map(|x| {
                let x = ArrayView1::from(x.as_slice());
                let p = policy.probs(x, self.n_actions);
                (0..self.n_actions).map(|a| p[a] * self.reward.mean_reward(x, a)).sum::<f64>()
            })
            .sum();
        Ok(total / support.len() as f64)
    }
}

/// Exact mean rewards for the contexts that were generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGroundTruth {
    q_table: Array2<f64>,
}

impl SyntheticGroundTruth {
    pub fn new(q_table: Array2<f64>) -> Self {
        Self { q_table }
    }

    /// `q(x_t, a)` for every generated round `t` and action `a`.
    pub fn q_table(&self) -> &Array2<f64> {
        &self.q_table
    }

    /// `V(pi)` averaged over the generated contexts: `mean_t sum_a q(x_t,a) pi(a|x_t)`.
    pub fn true_policy_value(&self, dist: &ActionDist) -> Result<f64> {
        let (n, k) = self.q_table.dim();
        if dist.n_rounds() != n || dist.n_actions() != k {
            return Err(OpeError::Shape(format!(
                "distribution is {}x{} but ground truth covers {n}x{k}",
                dist.n_rounds(),
                dist.n_actions()
            )));
        }
        let total: f64 = (0..n).map(|t| (0..k).map(|a| self.q_table[[t, a]] * dist.prob(t, a, 0)).sum::<f64>()).sum();
        Ok(total / n as f64)
    }
}

/// Draws `n_rounds` i.i.d. records from `p(x) pi_b(a|x) p(r|x,a)`.
pub fn generate_synthetic(config: &SyntheticConfig, n_rounds: usize) -> Result<(BanditFeedback, SyntheticGroundTruth)> {
    config.validate()?;
    if n_rounds == 0 {
        return Err(OpeError::Config("n_rounds must be positive".into()));
    }
    let (k, d) = (config.n_actions, config.dim_context);
    let mut r = rng::seeded(config.seed);
    let mut contexts = Array2::<f64>::zeros((n_rounds, d));
    let mut q_table = Array2::<f64>::zeros((n_rounds, k));
    let mut actions = Vec::with_capacity(n_rounds);
    let mut rewards = Vec::with_capacity(n_rounds);
    let mut propensities = Vec::with_capacity(n_rounds);

    for t in 0..n_rounds {
        match &config.context {
            ContextSpec::Gaussian => {
                for j in 0..d {
                    contexts[[t, j]] = StandardNormal.sample(&mut r);
                }
            }
            ContextSpec::Discrete(support) => {
                let row = &support[r.random_range(0..support.len())];
                for j in 0..d {
                    contexts[[t, j]] = row[j];
                }
            }
        }
        let x = contexts.row(t);
        for a in 0..k {
            q_table[[t, a]] = config.reward.mean_reward(x, a);
        }
        let probs = config.behavior.probs(x, k);
        if let Some((a, p)) = probs.iter().enumerate().find(|(_, p)| **p < config.propensity_floor) {
            return Err(OpeError::Config(format!(
                "behavior probability {p:e} of action {a} at round {t} is below the floor {:e}",
                config.propensity_floor
            )));
        }
        let a = sample_categorical(&probs, r.random::<f64>());
        let reward = if r.random::<f64>() < q_table[[t, a]] { 1.0 } else { 0.0 };
        actions.push(a);
        rewards.push(reward);
        propensities.push(probs[a]);
    }

    let fb = BanditFeedback::new(
        k,
        1,
        contexts,
        actions,
        vec![0; n_rounds],
        rewards,
        propensities,
        Some((0..n_rounds as i64).collect()),
    )?;
    Ok((fb, SyntheticGroundTruth::new(q_table)))
}

/// Inverse-CDF draw; never returns an action with zero probability.
pub(crate) fn sample_categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (a, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = a;
        if u < acc {
            return a;
        }
    }
    last
}

fn dot(w: &[f64], x: ArrayView1<f64>) -> f64 {
    w.iter().zip(x.iter()).map(|(a, b)| a * b).sum()
}

//! Off-policy learning by maximising the IPW objective, reduced to
//! cost-sensitive classification with per-record weight `r_t / pi_b(a_t|x_t)`.

use ndarray::{Array2, Array3, ArrayView1};
use serde::{Deserialize, Serialize};

use super::ActionDist;
use crate::data::BanditFeedback;
use crate::error::{OpeError, Result};
use crate::reward_model::{optim, FitConfig};

/// One-vs-rest linear scorer. Position `k` gets the action with the
/// `k`-th highest score; equal scores go to the lower action index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterministicPolicy {
    pub dim_context: usize,
    pub n_actions: usize,
    pub len_list: usize,
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
}

impl DeterministicPolicy {
    pub fn scores(&self, x: ArrayView1<f64>) -> Vec<f64> {
        (0..self.n_actions)
            .map(|a| self.intercepts[a] + self.weights[a].iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    /// Actions for positions `0..len_list`.
    pub fn ranking(&self, x: ArrayView1<f64>) -> Vec<usize> {
        let s = self.scores(x);
        let mut order: Vec<usize> = (0..self.n_actions).collect();
        order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
        order.truncate(self.len_list);
        order
    }

    pub fn choose(&self, x: ArrayView1<f64>) -> usize {
        self.ranking(x)[0]
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s)?;
        if p.weights.len() != p.n_actions
            || p.intercepts.len() != p.n_actions
            || p.weights.iter().any(|w| w.len() != p.dim_context)
            || p.len_list == 0
            || p.len_list > p.n_actions
        {
            return Err(OpeError::Shape("deterministic policy parameters are inconsistent".into()));
        }
        Ok(p)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Learns `argmin_pi E_D[(r_t / pi_b) 1{pi(x_t) != a_t}]` through a weighted
/// multinomial logistic surrogate. Weights are rescaled to mean one, so
/// multiplying every reward by a positive constant yields the same policy.
pub fn ipw_learner_fit(fb: &BanditFeedback, cfg: &FitConfig) -> Result<DeterministicPolicy> {
    cfg.validate()?;
    let n = fb.n_rounds();
    let raw: Vec<f64> = (0..n).map(|t| fb.rewards()[t] / fb.propensities()[t]).collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(OpeError::Degenerate("all rewards are zero; the IPW objective is constant".into()));
    }
    let mean = total / n as f64;
    let sample_weights: Vec<f64> = raw.iter().map(|w| w / mean).collect();
    let (d, k) = (fb.dim_context(), fb.n_actions());
    let len_list = fb.len_list().min(k);

    if k == 1 {
        return Ok(DeterministicPolicy { dim_context: d, n_actions: 1, len_list: 1, weights: vec![vec![0.0; d]], intercepts: vec![0.0] });
    }

    let res = optim::minimize(
        |p| softmax_objective(fb, &sample_weights, cfg.c, p),
        vec![0.0; k * (d + 1)],
        cfg.max_iter,
        cfg.tol,
    );
    let weights = (0..k).map(|a| res.x[a * (d + 1)..a * (d + 1) + d].to_vec()).collect();
    let intercepts = (0..k).map(|a| res.x[a * (d + 1) + d]).collect();
    Ok(DeterministicPolicy { dim_context: d, n_actions: k, len_list, weights, intercepts })
}

/// `(1/W) sum_t s_t [logsumexp(z_t) - z_{t,a_t}] + |W_ctx|^2 / (2 C W)` with
/// per-action blocks `[w_a; b_a]`; intercepts are not penalised.
fn softmax_objective(fb: &BanditFeedback, s: &[f64], c: f64, p: &[f64]) -> (f64, Vec<f64>) {
    let (d, k) = (fb.dim_context(), fb.n_actions());
    let total: f64 = s.iter().sum();
    let mut loss = 0.0;
    let mut grad = vec![0.0; p.len()];
    let mut z = vec![0.0; k];
    for (t, x) in fb.contexts().outer_iter().enumerate() {
        if s[t] == 0.0 {
            continue;
        }
        for (a, za) in z.iter_mut().enumerate() {
            let block = &p[a * (d + 1)..(a + 1) * (d + 1)];
            *za = block[d] + block[..d].iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        let a_t = fb.actions()[t];
        loss += s[t] * (lse - z[a_t]);
        for a in 0..k {
            let g = s[t] * ((z[a] - lse).exp() - (a == a_t) as u8 as f64);
            let block = &mut grad[a * (d + 1)..(a + 1) * (d + 1)];
            for (gj, xv) in block[..d].iter_mut().zip(x) {
                *gj += g * xv;
            }
            block[d] += g;
        }
    }
    for a in 0..k {
        for j in 0..d {
            let i = a * (d + 1) + j;
            loss += p[i] * p[i] / (2.0 * c);
            grad[i] += p[i] / c;
        }
    }
    grad.iter_mut().for_each(|g| *g /= total);
    (loss / total, grad)
}

/// One-hot distribution: probability one on the ranked action at each position.
pub fn policy_to_action_dist(p: &DeterministicPolicy, contexts: &Array2<f64>) -> Result<ActionDist> {
    if contexts.nrows() == 0 {
        return Err(OpeError::InvalidArgument("no contexts".into()));
    }
    if contexts.ncols() != p.dim_context {
        return Err(OpeError::Shape(format!("policy expects {} features, got {}", p.dim_context, contexts.ncols())));
    }
    let mut probs = Array3::zeros((contexts.nrows(), p.n_actions, p.len_list));
    for (t, x) in contexts.outer_iter().enumerate() {
        for (pos, a) in p.ranking(x).into_iter().enumerate() {
            probs[[t, a, pos]] = 1.0;
        }
    }
    ActionDist::from_array(probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::BanditFeedback;
    use crate::estimators::estimate_ipw;
    use crate::rng;
    use rand::Rng;

    /// Uniform logging; reward 1 exactly when the action equals the argmax of
    /// a fixed linear scorer.
    fn separable(n: usize, seed: u64) -> BanditFeedback {
        let k = 3;
        let truth: [[f64; 2]; 3] = [[2.0, 0.0], [-1.0, 1.7], [-1.0, -1.7]];
        let mut r = rng::seeded(seed);
        let x = Array2::from_shape_fn((n, 2), |_| r.random_range(-1.0..1.0));
        let actions: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let rewards = (0..n)
            .map(|t| {
                let best = (0..k)
                    .max_by(|&a, &b| {
                        let sa = truth[a][0] * x[[t, 0]] + truth[a][1] * x[[t, 1]];
                        let sb = truth[b][0] * x[[t, 0]] + truth[b][1] * x[[t, 1]];
                        sa.total_cmp(&sb)
                    })
                    .unwrap();
                (actions[t] == best) as u8 as f64
            })
            .collect();
        BanditFeedback::new(k, 1, x, actions, vec![0; n], rewards, vec![1.0 / 3.0; n], None).unwrap()
    }

    #[test]
    fn recovers_the_bayes_policy() {
        let train = separable(6000, 1);
        let test = separable(4000, 2);
        let p = ipw_learner_fit(&train, &FitConfig::default()).unwrap();
        let agree = (0..test.n_rounds())
            .filter(|&t| {
                let chosen = p.choose(test.contexts().row(t));
                // under the construction, the optimal action earns reward 1
                let truth: [[f64; 2]; 3] = [[2.0, 0.0], [-1.0, 1.7], [-1.0, -1.7]];
                let x = test.contexts().row(t);
                let best = (0..3)
                    .max_by(|&a, &b| {
                        (truth[a][0] * x[0] + truth[a][1] * x[1]).total_cmp(&(truth[b][0] * x[0] + truth[b][1] * x[1]))
                    })
                    .unwrap();
                chosen == best
            })
            .count();
        assert!(agree as f64 / test.n_rounds() as f64 >= 0.99, "{agree}");
    }

    #[test]
    fn softmax_gradient_matches_finite_differences() {
        let fb = separable(40, 7);
        let s: Vec<f64> = (0..40).map(|t| 0.5 + (t % 3) as f64).collect();
        let mut r = rng::seeded(8);
        let p: Vec<f64> = (0..9).map(|_| r.random_range(-1.0..1.0)).collect();
        let (_, g) = softmax_objective(&fb, &s, 2.0, &p);
        for i in 0..p.len() {
            let (mut hi, mut lo) = (p.clone(), p.clone());
            hi[i] += 1e-6;
            lo[i] -= 1e-6;
            let fd = (softmax_objective(&fb, &s, 2.0, &hi).0 - softmax_objective(&fb, &s, 2.0, &lo).0) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-6, "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn single_action_is_constant() {
        let fb = BanditFeedback::new(1, 1, Array2::zeros((3, 2)), vec![0; 3], vec![0; 3], vec![1.0, 0.0, 1.0], vec![1.0; 3], None).unwrap();
        let p = ipw_learner_fit(&fb, &FitConfig::default()).unwrap();
        assert_eq!(p.choose(fb.contexts().row(1)), 0);
    }

    #[test]
    fn all_zero_rewards_rejected() {
        let fb = separable(50, 3).with_rewards(vec![0.0; 50]).unwrap();
        assert!(matches!(ipw_learner_fit(&fb, &FitConfig::default()), Err(OpeError::Degenerate(_))));
    }

    #[test]
    fn reward_scaling_leaves_policy_unchanged() {
        let fb = separable(1500, 4);
        let p1 = ipw_learner_fit(&fb, &FitConfig::default()).unwrap();
        let doubled = fb.with_rewards(fb.rewards().iter().map(|r| r * 2.0).collect()).unwrap();
        assert_eq!(ipw_learner_fit(&doubled, &FitConfig::default()).unwrap(), p1);
        let tripled = fb.with_rewards(fb.rewards().iter().map(|r| r * 3.0).collect()).unwrap();
        let p3 = ipw_learner_fit(&tripled, &FitConfig::default()).unwrap();
        let holdout = separable(2000, 5);
        for x in holdout.contexts().outer_iter() {
            assert_eq!(p1.choose(x), p3.choose(x));
        }
    }

    #[test]
    fn one_hot_distribution_reproduces_ipw_objective() {
        let fb = separable(1200, 6);
        let p = ipw_learner_fit(&fb, &FitConfig::default()).unwrap();
        let dist = policy_to_action_dist(&p, fb.contexts()).unwrap();
        for t in 0..fb.n_rounds() {
            let s: f64 = (0..3).map(|a| dist.prob(t, a, 0)).sum();
            assert_eq!(s, 1.0);
        }
        let direct: f64 = (0..fb.n_rounds())
            .map(|t| {
                let hit = p.choose(fb.contexts().row(t)) == fb.actions()[t];
                if hit { fb.rewards()[t] / fb.propensities()[t] } else { 0.0 }
            })
            .sum::<f64>()
            / fb.n_rounds() as f64;
        let est = estimate_ipw(&fb, &dist).unwrap().estimate;
        assert!((est - direct).abs() < 1e-12);
    }

    #[test]
    fn multi_slot_ranking_is_one_hot_per_position() {
        let p = DeterministicPolicy {
            dim_context: 1,
            n_actions: 4,
            len_list: 2,
            weights: vec![vec![1.0], vec![-1.0], vec![0.0], vec![0.5]],
            intercepts: vec![0.0; 4],
        };
        let x = Array2::from_shape_vec((2, 1), vec![1.0, -1.0]).unwrap();
        let d = policy_to_action_dist(&p, &x).unwrap();
        assert_eq!(d.prob(0, 0, 0), 1.0);
        assert_eq!(d.prob(0, 3, 1), 1.0);
        assert_eq!(d.prob(1, 1, 0), 1.0);
        assert!(policy_to_action_dist(&p, &Array2::zeros((0, 1))).is_err());
        assert_eq!(DeterministicPolicy::from_json(&p.to_json().unwrap()).unwrap(), p);
    }
}

use ndarray::Array2;
use rand::Rng;

use super::synthetic::sample_categorical;
use super::BanditFeedback;
use crate::error::{OpeError, Result};
use crate::policies::ActionDist;
use crate::rng;

/// Turns a multiclass dataset into single-slot bandit feedback: one action is
/// drawn per row from `behavior`, the reward is `1{action == label}`.
pub fn classification_to_bandit(
    features: &Array2<f64>,
    labels: &[usize],
    behavior: &ActionDist,
    seed: u64,
) -> Result<BanditFeedback> {
    let n = labels.len();
    if features.nrows() != n || behavior.n_rounds() != n {
        return Err(OpeError::Shape(format!(
            "features ({}), labels ({n}) and behavior ({}) disagree in rows",
            features.nrows(),
            behavior.n_rounds()
        )));
    }
    let n_classes = behavior.n_actions();
    if let Some(row) = labels.iter().position(|&y| y >= n_classes) {
        return Err(OpeError::Data { row, message: format!("label {} >= n_classes {n_classes}", labels[row]) });
    }
    let mut r = rng::seeded(seed);
    let mut actions = Vec::with_capacity(n);
    let mut propensities = Vec::with_capacity(n);
    let mut rewards = Vec::with_capacity(n);
    for (t, &label) in labels.iter().enumerate() {
        let probs: Vec<f64> = (0..n_classes).map(|a| behavior.prob(t, a, 0)).collect();
        let a = sample_categorical(&probs, r.random::<f64>());
        if !(probs[a] > 0.0) {
            return Err(OpeError::Degenerate(format!("behavior assigns zero probability to sampled class at row {t}")));
        }
        actions.push(a);
        propensities.push(probs[a]);
        rewards.push(if a == label { 1.0 } else { 0.0 });
    }
    BanditFeedback::new(n_classes, 1, features.clone(), actions, vec![0; n], rewards, propensities, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::uniform_dist;

    #[test]
    fn uniform_behavior_mean_reward_is_one_third() {
        let n = 60_000;
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let fb = classification_to_bandit(&Array2::zeros((n, 1)), &labels, &uniform_dist(n, 3, 1), 3).unwrap();
        let se = ((1.0 / 3.0) * (2.0 / 3.0) / n as f64).sqrt();
        assert!((fb.mean_reward() - 1.0 / 3.0).abs() < 3.0 * se);
    }

    #[test]
    fn deterministic_behavior_on_labels() {
        let labels = vec![0, 2, 1, 1, 0];
        let mut dense = ndarray::Array3::zeros((5, 3, 1));
        for (t, &y) in labels.iter().enumerate() {
            dense[[t, y, 0]] = 1.0;
        }
        let fb = classification_to_bandit(&Array2::zeros((5, 2)), &labels, &ActionDist::from_array(dense).unwrap(), 0).unwrap();
        assert!(fb.rewards().iter().all(|&r| r == 1.0));
        assert!(fb.propensities().iter().all(|&p| p == 1.0));
    }

    #[test]
    fn single_class_data() {
        let labels = vec![0; 20];
        let fb = classification_to_bandit(&Array2::zeros((20, 1)), &labels, &uniform_dist(20, 2, 1), 1).unwrap();
        assert!(fb.propensities().iter().all(|&p| p == 0.5));
    }

    #[test]
    fn label_out_of_range() {
        assert!(classification_to_bandit(&Array2::zeros((2, 1)), &[0, 3], &uniform_dist(2, 3, 1), 1).is_err());
    }
}

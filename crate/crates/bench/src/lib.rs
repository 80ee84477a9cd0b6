//! Shared inputs for the criterion benchmarks.

use ope_core::data::{generate_synthetic, PolicySpec};
use ope_core::{ActionDist, BanditFeedback, SyntheticConfig};

/// Synthetic batch with a fixed seed and an evaluation policy that weights
/// action `a` proportionally to `a + 1`.
pub fn workload(n_rounds: usize, n_actions: usize, dim_context: usize) -> (BanditFeedback, ActionDist) {
    let cfg = SyntheticConfig::random_linear(n_actions, dim_context, 1);
    let (fb, _) = generate_synthetic(&cfg, n_rounds).expect("synthetic config is valid");
    let mut probs: Vec<f64> = (1..=n_actions).map(|a| a as f64).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    let dist = PolicySpec::Fixed(probs).action_dist(fb.contexts(), n_actions).expect("valid policy");
    (fb, dist)
}

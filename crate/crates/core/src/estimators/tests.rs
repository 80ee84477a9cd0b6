use ndarray::{Array2, Array3};
use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::data::{generate_synthetic, BanditFeedback, PolicySpec, SyntheticConfig};
use crate::policies::uniform_dist;
use crate::reward_model::{fit_logistic, predict_q, FitConfig, RewardModel};
use crate::rng;

/// Four records over two actions, logged uniformly:
/// (a, r, p) = (0,0,.5), (1,1,.5), (1,0,.5), (0,1,.5).
fn fixture() -> BanditFeedback {
    BanditFeedback::new(
        2,
        1,
        Array2::from_shape_vec((4, 1), vec![0.1, -0.3, 0.7, 1.2]).unwrap(),
        vec![0, 1, 1, 0],
        vec![0; 4],
        vec![0.0, 1.0, 0.0, 1.0],
        vec![0.5; 4],
        None,
    )
    .unwrap()
}

fn shared(p: &[f64], n: usize) -> ActionDist {
    ActionDist::shared(Array2::from_shape_fn((p.len(), 1), |(a, _)| p[a]), n).unwrap()
}

fn const_q(n: usize, row: &[f64]) -> Array2<f64> {
    Array2::from_shape_fn((n, row.len()), |(_, a)| row[a])
}

#[test]
fn weights_basic_cases() {
    let fb = fixture();
    let w = importance_weights(&fb, &uniform_dist(4, 2, 1)).unwrap();
    assert!(w.as_slice().iter().all(|&v| v == 1.0));
    let w = importance_weights(&fb, &shared(&[0.0, 1.0], 4)).unwrap();
    assert_eq!(w.as_slice(), &[0.0, 2.0, 2.0, 0.0]);
    assert!(importance_weights(&fb, &uniform_dist(5, 2, 1)).is_err());
}

#[test]
fn fixture_ipw_and_snipw() {
    let fb = fixture();
    let e = shared(&[0.0, 1.0], 4);
    // (0 + 2*1 + 2*0 + 0) / 4
    assert_eq!(estimate_ipw(&fb, &e).unwrap().estimate, 0.5);
    // sum w r = 2, sum w = 4
    assert_eq!(estimate_snipw(&fb, &e).unwrap().estimate, 0.5);
}

#[test]
fn fixture_doubly_robust_family() {
    let fb = fixture();
    let e = shared(&[0.2, 0.8], 4);
    let q = const_q(4, &[0.1, 0.6]);
    // w = 0.2/0.5 = 0.4 for action 0, 0.8/0.5 = 1.6 for action 1
    // q̂(x, pi_e) = 0.2*0.1 + 0.8*0.6 = 0.5
    let dr_terms = [0.5 + 0.4 * (0.0 - 0.1), 0.5 + 1.6 * (1.0 - 0.6), 0.5 + 1.6 * (0.0 - 0.6), 0.5 + 0.4 * (1.0 - 0.1)];
    let dr = dr_terms.iter().sum::<f64>() / 4.0;
    assert!((estimate_dr(&fb, &e, &q).unwrap().estimate - dr).abs() < 1e-15);
    assert!((estimate_dm(&fb, &e, &q).unwrap().estimate - 0.5).abs() < 1e-15);

    // mean weight (0.4 + 1.6 + 1.6 + 0.4) / 4 = 1, so SNDR matches DR here
    assert!((estimate_sndr(&fb, &e, &q).unwrap().estimate - dr).abs() < 1e-15);

    // tau = 1 keeps the correction only for the 0.4 weights
    let switch = (dr_terms[0] + 0.5 + 0.5 + dr_terms[3]) / 4.0;
    let r = estimate_switch_dr(&fb, &e, &q, 1.0).unwrap();
    assert!((r.estimate - switch).abs() < 1e-15);
    assert_eq!(r.diagnostics.frac_above_tau, Some(0.5));

    // full-table weights (0.4, 1.6): action 1 goes to the model branch
    let sipw = (4.0 * (0.6 * 0.8) + 0.4 * 0.0 + 0.4 * 1.0) / 4.0;
    let b = uniform_dist(4, 2, 1);
    assert!((estimate_switch_ipw(&fb, &e, &b, &q, 1.0).unwrap().estimate - sipw).abs() < 1e-15);

    // lambda = 1: w_o(0.4) = 0.4 / 1.16, w_o(1.6) = 1.6 / 3.56
    let (s0, s1) = (0.4 / 1.16, 1.6 / 3.56);
    let dros = ((0.5 + s0 * -0.1) + (0.5 + s1 * 0.4) + (0.5 + s1 * -0.6) + (0.5 + s0 * 0.9)) / 4.0;
    assert!((estimate_dros(&fb, &e, &q, 1.0).unwrap().estimate - dros).abs() < 1e-15);
    assert_eq!(optimistic_shrinkage(1.0, 1.0), 0.5);
    assert_eq!(optimistic_shrinkage(0.0, 0.0), 0.0);
}

#[test]
fn fixture_sndr_with_constant_model() {
    let fb = fixture();
    let e = shared(&[0.0, 1.0], 4);
    let q = const_q(4, &[0.25, 0.25]);
    // mean weight 1; terms .25, .25 + 2 * .75, .25 - 2 * .25, .25
    let expected = (0.25 + 1.75 - 0.25 + 0.25) / 4.0;
    assert!((estimate_sndr(&fb, &e, &q).unwrap().estimate - expected).abs() < 1e-15);
}

#[test]
fn fixture_mrdr_uses_dr_arithmetic() {
    let fb = fixture();
    let e = shared(&[0.2, 0.8], 4);
    // intercept-only model: q̂ = sigmoid(0) = 0.5 everywhere
    let m = MrdrModel(RewardModel::from_parts(1, 2, vec![0.0; 3], 0.0).unwrap());
    let expected = ((0.5 + 0.4 * -0.5) + (0.5 + 1.6 * 0.5) + (0.5 + 1.6 * -0.5) + (0.5 + 0.4 * 0.5)) / 4.0;
    let r = estimate_mrdr(&fb, &e, &m).unwrap();
    assert!((r.estimate - expected).abs() < 1e-15);
    assert_eq!(r.estimator, "mrdr");

    let zero = MrdrModel(RewardModel::from_parts(1, 2, vec![0.0; 3], f64::NEG_INFINITY).unwrap());
    assert_eq!(estimate_mrdr(&fb, &e, &zero).unwrap().estimate, estimate_ipw(&fb, &e).unwrap().estimate);
}

#[test]
fn degenerate_and_missing_inputs() {
    let fb = fixture();
    let never = shared(&[1.0, 0.0], 4);
    let only_one = BanditFeedback::new(2, 1, Array2::zeros((2, 1)), vec![1, 1], vec![0, 0], vec![1.0, 0.0], vec![0.5, 0.5], None).unwrap();
    assert!(matches!(estimate_snipw(&only_one, &shared(&[1.0, 0.0], 2)), Err(OpeError::Degenerate(_))));
    assert!(estimate_sndr(&only_one, &shared(&[1.0, 0.0], 2), &const_q(2, &[0.1, 0.1])).is_err());
    assert!(estimate_ipw(&fb, &never).is_ok());

    let input = EstimatorInput { feedback: &fb, dist: &never, q_hat: None, mrdr_q_hat: None, behavior_dist: None };
    match estimate(EstimatorKind::Dm, &input) {
        Err(OpeError::MissingRewardModel { estimator }) => assert_eq!(estimator, "dm"),
        other => panic!("unexpected {other:?}"),
    }
    let q = const_q(4, &[0.1, 0.1]);
    let input = EstimatorInput { q_hat: Some(&q), ..input };
    assert!(matches!(estimate(EstimatorKind::SwitchIpw { tau: 1.0 }, &input), Err(OpeError::MissingBehaviorDist { .. })));
    assert!(estimate_switch_dr(&fb, &never, &q, -1.0).is_err());
    assert!(estimate_dm(&fb, &never, &const_q(3, &[0.1, 0.1])).is_err());
}

#[test]
fn switch_dr_tau_zero_is_dm() {
    let fb = fixture();
    let e = shared(&[0.3, 0.7], 4);
    let q = const_q(4, &[0.2, 0.9]);
    assert_eq!(estimate_switch_dr(&fb, &e, &q, 0.0).unwrap().estimate, estimate_dm(&fb, &e, &q).unwrap().estimate);
    let b = uniform_dist(4, 2, 1);
    assert!(
        (estimate_switch_ipw(&fb, &e, &b, &q, 0.0).unwrap().estimate - estimate_dm(&fb, &e, &q).unwrap().estimate).abs()
            < 1e-15
    );
}

#[test]
fn dros_large_lambda_approaches_dr() {
    let fb = fixture();
    let e = shared(&[0.3, 0.7], 4);
    let q = const_q(4, &[0.2, 0.9]);
    let dr = estimate_dr(&fb, &e, &q).unwrap().estimate;
    assert!((estimate_dros(&fb, &e, &q, 1e12).unwrap().estimate - dr).abs() < 1e-6);
    assert_eq!(estimate_dros(&fb, &e, &q, 0.0).unwrap().estimate, estimate_dm(&fb, &e, &q).unwrap().estimate);
}

#[test]
fn dr_with_unit_weights_and_one_hot_logged_policy() {
    // pi_e puts all mass on the logged action and pi_b = 1 there
    let fb = BanditFeedback::new(3, 1, Array2::zeros((3, 1)), vec![0, 2, 1], vec![0; 3], vec![1.0, 0.0, 1.0], vec![1.0; 3], None).unwrap();
    let mut p = Array3::zeros((3, 3, 1));
    for (t, &a) in fb.actions().iter().enumerate() {
        p[[t, a, 0]] = 1.0;
    }
    let e = ActionDist::from_array(p).unwrap();
    let q = const_q(3, &[0.3, 0.1, 0.8]);
    assert!((estimate_dr(&fb, &e, &q).unwrap().estimate - fb.mean_reward()).abs() < 1e-15);
}

#[test]
fn single_action_dm_is_mean_model() {
    let fb = BanditFeedback::new(1, 1, Array2::zeros((3, 1)), vec![0; 3], vec![0; 3], vec![1.0, 0.0, 1.0], vec![1.0; 3], None).unwrap();
    let q = Array2::from_shape_vec((3, 1), vec![0.1, 0.4, 0.7]).unwrap();
    assert!((estimate_dm(&fb, &uniform_dist(3, 1, 1), &q).unwrap().estimate - 0.4).abs() < 1e-15);
}

#[test]
fn dm_with_exact_model_tracks_ground_truth() {
    let cfg = SyntheticConfig::random_linear(4, 3, 21);
    let (fb, gt) = generate_synthetic(&cfg, 5000).unwrap();
    let policy = PolicySpec::Fixed(vec![0.1, 0.2, 0.3, 0.4]);
    let e = policy.action_dist(fb.contexts(), 4).unwrap();
    let dm = estimate_dm(&fb, &e, gt.q_table()).unwrap().estimate;
    // DM with the exact table is the ground truth on the sampled contexts
    assert!((dm - gt.true_policy_value(&e).unwrap()).abs() < 1e-12);
}

#[test]
fn mrdr_with_zero_weights_prefers_constant_predictions() {
    let cfg = SyntheticConfig::random_linear(3, 2, 31);
    let (fb, _) = generate_synthetic(&cfg, 600).unwrap();
    // pi_e never picks a logged action: put all mass on an action with no logs
    let fb = {
        let keep: Vec<usize> = (0..fb.n_rounds()).filter(|&t| fb.actions()[t] != 2).collect();
        fb.select(&keep)
    };
    let e = shared(&[0.0, 0.0, 1.0], fb.n_rounds());
    assert!(importance_weights(&fb, &e).unwrap().as_slice().iter().all(|&w| w == 0.0));
    let cfg = FitConfig { max_iter: 20_000, tol: 1e-10, ..FitConfig::default() };
    let init = fit_logistic(&fb, &cfg).unwrap();
    let before = mrdr_objective(&fb, &e, &init.params()).unwrap().0;
    let m = fit_mrdr(&fb, &e, &cfg).unwrap();
    let after = m.model().metadata.final_loss;
    assert!(after <= before);
    assert!(after < 1e-3 * before, "{before} -> {after}");
    let q = predict_q(m.model(), &fb).unwrap();
    let col: Vec<f64> = q.table.column(2).to_vec();
    let mean = col.iter().sum::<f64>() / col.len() as f64;
    let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
    assert!(sd < 0.01, "spread {sd}");
}

#[test]
fn mrdr_variance_not_above_logistic_start() {
    let cfg = SyntheticConfig::random_linear(3, 2, 41)
        .with_behavior(PolicySpec::Fixed(vec![0.6, 0.3, 0.1]));
    let (fb, _) = generate_synthetic(&cfg, 1500).unwrap();
    let e = shared(&[0.1, 0.2, 0.7], fb.n_rounds());
    let fit = FitConfig::default();
    let lr = fit_logistic(&fb, &fit).unwrap();
    let v_lr = mrdr_objective(&fb, &e, &lr.params()).unwrap().0;
    let m = fit_mrdr(&fb, &e, &fit).unwrap();
    let v_mrdr = mrdr_objective(&fb, &e, &m.model().params()).unwrap().0;
    assert!(v_mrdr <= v_lr + 1e-9, "{v_mrdr} > {v_lr}");
}

#[test]
fn mrdr_history_is_monotone() {
    let cfg = SyntheticConfig::random_linear(3, 2, 43);
    let (fb, _) = generate_synthetic(&cfg, 400).unwrap();
    let e = shared(&[0.5, 0.3, 0.2], fb.n_rounds());
    let w = importance_weights(&fb, &e).unwrap();
    let res = crate::reward_model::optim::minimize(
        |p| mrdr::variance_and_grad(&fb, &e, w.as_slice(), p),
        vec![0.1; 6],
        300,
        1e-9,
    );
    assert!(res.history.windows(2).all(|h| h[1] <= h[0]));
}

#[test]
fn grid_has_eighteen_rows() {
    let g = default_grid();
    assert_eq!(g.len(), 18);
    assert_eq!(g[5], EstimatorKind::SwitchDr { tau: 5.0 });
    assert_eq!(g[16], EstimatorKind::DrOs { lambda: 1000.0 });
    assert_eq!(g[17], EstimatorKind::Mrdr);
}

#[test]
fn parse_names() {
    assert_eq!(EstimatorKind::parse("switch-dr:50").unwrap(), EstimatorKind::SwitchDr { tau: 50.0 });
    assert_eq!(EstimatorKind::parse("DROS:5").unwrap(), EstimatorKind::DrOs { lambda: 5.0 });
    assert_eq!(EstimatorKind::parse("mrdr").unwrap(), EstimatorKind::Mrdr);
    assert!(EstimatorKind::parse("switch-dr").is_err());
    assert!(EstimatorKind::parse("foo").is_err());
    let json = serde_json::to_string(&EstimatorKind::DrOs { lambda: 5.0 }).unwrap();
    assert_eq!(json, r#"{"name":"dros","lambda":5.0}"#);
}

#[test]
fn result_serializes() {
    let r = estimate_ipw(&fixture(), &shared(&[0.0, 1.0], 4)).unwrap();
    let v: serde_json::Value = serde_json::to_value(&r).unwrap();
    assert_eq!(v["estimator"], "ipw");
    assert_eq!(v["estimate"], 0.5);
    assert_eq!(v["diagnostics"]["max_weight"], 2.0);
}

/// Random logged batch with a random per-round evaluation policy and model.
fn random_instance(seed: u64) -> (BanditFeedback, ActionDist, ActionDist, Array2<f64>) {
    let mut r = rng::seeded(seed);
    let n = r.random_range(1..60);
    let k = r.random_range(1..6);
    let behavior = Array3::from_shape_fn((n, k, 1), |_| r.random_range(0.05..1.0));
    let behavior = normalize(behavior);
    let eval = normalize(Array3::from_shape_fn((n, k, 1), |_| if r.random::<f64>() < 0.3 { 0.0 } else { r.random::<f64>() }));
    let mut actions = Vec::new();
    let mut props = Vec::new();
    for t in 0..n {
        let probs: Vec<f64> = (0..k).map(|a| behavior[[t, a, 0]]).collect();
        let a = crate::data::sample_categorical(&probs, r.random());
        actions.push(a);
        props.push(probs[a]);
    }
    let rewards = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
    let fb = BanditFeedback::new(k, 1, Array2::zeros((n, 1)), actions, vec![0; n], rewards, props, None).unwrap();
    let q = Array2::from_shape_fn((n, k), |_| r.random::<f64>());
    (fb, ActionDist::from_array(eval).unwrap(), ActionDist::from_array(behavior).unwrap(), q)
}

fn normalize(mut p: Array3<f64>) -> Array3<f64> {
    let (n, k, _) = p.dim();
    for t in 0..n {
        let mut s: f64 = (0..k).map(|a| p[[t, a, 0]]).sum();
        if s == 0.0 {
            p[[t, 0, 0]] = 1.0;
            s = 1.0;
        }
        for a in 0..k {
            p[[t, a, 0]] /= s;
        }
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn identity_lattice(seed in any::<u64>()) {
        let (fb, e, b, q) = random_instance(seed);
        let w = importance_weights(&fb, &e).unwrap();
        let zero = Array2::zeros(q.dim());
        let dr = estimate_dr(&fb, &e, &q).unwrap().estimate;
        prop_assert!((estimate_switch_dr(&fb, &e, &q, w.max()).unwrap().estimate - dr).abs() < 1e-12);
        prop_assert!((estimate_dros(&fb, &e, &q, 0.0).unwrap().estimate - estimate_dm(&fb, &e, &q).unwrap().estimate).abs() < 1e-12);
        let ipw = estimate_ipw(&fb, &e).unwrap().estimate;
        prop_assert!((estimate_dr(&fb, &e, &zero).unwrap().estimate - ipw).abs() < 1e-12);
        let full_max = (0..fb.n_rounds())
            .flat_map(|t| (0..fb.n_actions()).map(move |a| (t, a)))
            .map(|(t, a)| e.prob(t, a, 0) / b.prob(t, a, 0))
            .fold(0.0, f64::max);
        prop_assert!((estimate_switch_ipw(&fb, &e, &b, &q, full_max).unwrap().estimate - ipw).abs() < 1e-12);
        if w.as_slice().iter().sum::<f64>() > 0.0 {
            prop_assert!((estimate_sndr(&fb, &e, &zero).unwrap().estimate - estimate_snipw(&fb, &e).unwrap().estimate).abs() < 1e-12);
        }
    }

    #[test]
    fn snipw_is_bounded(seed in any::<u64>()) {
        let (fb, e, _, _) = random_instance(seed);
        if let Ok(r) = estimate_snipw(&fb, &e) {
            let max_r = fb.rewards().iter().cloned().fold(0.0, f64::max);
            prop_assert!(r.estimate >= 0.0 && r.estimate <= max_r + 1e-12);
        }
    }

    #[test]
    fn dr_translation(seed in any::<u64>(), c in 0.0f64..5.0) {
        let (fb, e, _, q) = random_instance(seed);
        let shifted = fb.with_rewards(fb.rewards().iter().map(|r| r + c).collect()).unwrap();
        let qs = q.mapv(|v| v + c);
        let a = estimate_dr(&fb, &e, &q).unwrap().estimate;
        let b = estimate_dr(&shifted, &e, &qs).unwrap().estimate;
        prop_assert!((b - a - c).abs() < 1e-9);
    }

    #[test]
    fn permutation_invariance(seed in any::<u64>(), rot in 0usize..100) {
        let (fb, e, b, q) = random_instance(seed);
        let n = fb.n_rounds();
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
        let (fb2, e2, b2) = (fb.select(&perm), e.select(&perm), b.select(&perm));
        let q2 = q.select(ndarray::Axis(0), &perm);
        let kinds = [
            EstimatorKind::Dm, EstimatorKind::Ipw, EstimatorKind::Snipw, EstimatorKind::Dr, EstimatorKind::Sndr,
            EstimatorKind::SwitchDr { tau: 1.5 }, EstimatorKind::SwitchIpw { tau: 1.5 }, EstimatorKind::DrOs { lambda: 2.0 },
        ];
        for kind in kinds {
            let i1 = EstimatorInput { feedback: &fb, dist: &e, q_hat: Some(&q), mrdr_q_hat: None, behavior_dist: Some(&b) };
            let i2 = EstimatorInput { feedback: &fb2, dist: &e2, q_hat: Some(&q2), mrdr_q_hat: None, behavior_dist: Some(&b2) };
            match (estimate(kind, &i1), estimate(kind, &i2)) {
                (Ok(x), Ok(y)) => prop_assert!((x.estimate - y.estimate).abs() < 1e-12),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "{kind} disagrees on success"),
            }
        }
    }

    #[test]
    fn equal_weights_snipw_equals_ipw(seed in any::<u64>()) {
        let (fb, _, _, _) = random_instance(seed);
        let e = ActionDist::from_logged_propensities(&fb).unwrap();
        prop_assert!((estimate_snipw(&fb, &e).unwrap().estimate - estimate_ipw(&fb, &e).unwrap().estimate).abs() < 1e-12);
    }
}

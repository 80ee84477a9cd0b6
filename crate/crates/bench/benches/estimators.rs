use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ope_bench::workload;
use ope_core::estimators::{default_grid, estimate, fit_mrdr, EstimatorInput};
use ope_core::policies::{compute_batch_action_dist, uniform_dist};
use ope_core::protocol::{run_protocol, WithBehavior};
use ope_core::reward_model::{fit_logistic, predict_q};
use ope_core::{BanditFeedback, BetaPosteriorState, EstimatorKind, FitConfig, ProtocolConfig};

fn estimators(c: &mut Criterion) {
    let (fb, dist) = workload(20_000, 10, 5);
    let cfg = FitConfig::default();
    let q = predict_q(&fit_logistic(&fb, &cfg).unwrap(), &fb).unwrap().table;
    let mrdr_q = predict_q(fit_mrdr(&fb, &dist, &cfg).unwrap().model(), &fb).unwrap().table;
    let behavior = uniform_dist(fb.n_rounds(), fb.n_actions(), fb.len_list());
    let input = EstimatorInput {
        feedback: &fb,
        dist: &dist,
        q_hat: Some(&q),
        mrdr_q_hat: Some(&mrdr_q),
        behavior_dist: Some(&behavior),
    };
    let mut kinds = vec![EstimatorKind::Dm, EstimatorKind::Ipw, EstimatorKind::Snipw, EstimatorKind::Dr];
    kinds.extend([
        EstimatorKind::Sndr,
        EstimatorKind::SwitchDr { tau: 10.0 },
        EstimatorKind::SwitchIpw { tau: 10.0 },
        EstimatorKind::DrOs { lambda: 10.0 },
        EstimatorKind::Mrdr,
    ]);
    let mut group = c.benchmark_group("estimate_20k");
    for kind in kinds {
        let label = match kind.hyperparameters() {
            (Some(t), _) => format!("{}_{t}", kind.name()),
            (_, Some(l)) => format!("{}_{l}", kind.name()),
            _ => kind.name().to_string(),
        };
        group.bench_function(label, |b| b.iter(|| estimate(kind, black_box(&input)).unwrap()));
    }
    group.finish();
}

fn reward_models(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    for n in [2_000, 10_000] {
        let (fb, dist) = workload(n, 10, 5);
        let cfg = FitConfig::default();
        group.bench_with_input(BenchmarkId::new("logistic", n), &fb, |b, fb| b.iter(|| fit_logistic(fb, &cfg).unwrap()));
        group.bench_with_input(BenchmarkId::new("mrdr", n), &fb, |b, fb| b.iter(|| fit_mrdr(fb, &dist, &cfg).unwrap()));
    }
    group.finish();
}

fn thompson_sampling(c: &mut Criterion) {
    let state = BetaPosteriorState::new(80);
    let mut group = c.benchmark_group("bts_action_dist");
    group.sample_size(10);
    for n_sim in [10_000, 100_000] {
        group.bench_with_input(BenchmarkId::from_parameter(n_sim), &n_sim, |b, &n| {
            b.iter(|| compute_batch_action_dist(&state, n, 1, 3, 7).unwrap())
        });
    }
    group.finish();
}

fn protocol(c: &mut Criterion) {
    let (d_b, _) = workload(5_000, 10, 5);
    let (d_e, _) = workload(5_000, 10, 5);
    let uniform = |fb: &BanditFeedback| Ok(uniform_dist(fb.n_rounds(), fb.n_actions(), fb.len_list()));
    let builder = WithBehavior(uniform, uniform);
    let cfg = ProtocolConfig { n_bootstrap: 8, estimators: default_grid(), seed: 1, ..Default::default() };
    let mut group = c.benchmark_group("protocol");
    group.sample_size(10);
    group.bench_function("grid_5k_b8", |b| b.iter(|| run_protocol(&d_b, &d_e, &builder, &cfg).unwrap()));
    group.finish();
}

criterion_group!(benches, estimators, reward_models, thompson_sampling, protocol);
criterion_main!(benches);

//! Bootstrap benchmark of OPE estimators against on-policy ground truth.
//!
//! Logs from a behaviour policy supply the evaluation set `D_ev`; logs
//! collected by the evaluation policy itself supply the test set `D_te`,
//! whose mean reward `V_on` is the target. Each replication resamples
//! `D_ev`, fits the reward model on a 30% part and runs every estimator on
//! the remaining 70%.

use std::io::Write;
use std::ops::Range;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{bootstrap_sample, split_by_time, BanditFeedback};
use crate::error::{OpeError, Result};
use crate::estimators::{default_grid, estimate, fit_mrdr, EstimatorInput, EstimatorKind};
use crate::policies::ActionDist;
use crate::reward_model::{cross_fit_split, fit_logistic, predict_q, FitConfig, DEFAULT_TRAIN_FRACTION};
use crate::rng::derive_seed;

pub const DEFAULT_BOOTSTRAP: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// `D_ev` is all behaviour data and `D_te` all evaluation data.
    InSample,
    /// `D_ev` is behaviour records before the split point and `D_te`
    /// evaluation records from the split point on.
    OutSample,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::InSample => "in",
            Mode::OutSample => "out",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub mode: Mode,
    /// Required in out-sample mode: index of the first test record.
    pub split_point: Option<usize>,
    pub n_bootstrap: usize,
    pub estimators: Vec<EstimatorKind>,
    pub fit: FitConfig,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            mode: Mode::InSample,
            split_point: None,
            n_bootstrap: DEFAULT_BOOTSTRAP,
            estimators: default_grid(),
            fit: FitConfig::default(),
            train_fraction: DEFAULT_TRAIN_FRACTION,
            seed: 0,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_bootstrap == 0 {
            return Err(OpeError::Config("at least one bootstrap replication is required".into()));
        }
        if self.estimators.is_empty() {
            return Err(OpeError::Config("no estimators configured".into()));
        }
        if self.mode == Mode::OutSample && self.split_point.is_none() {
            return Err(OpeError::Config("out-sample mode needs a split point".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(OpeError::Config(format!("train fraction {} must lie in (0, 1)", self.train_fraction)));
        }
        self.fit.validate()
    }
}

/// Builds the evaluation policy's distribution over the records of a batch.
/// Switch-IPW additionally needs the behaviour policy's full distribution.
pub trait DistBuilder: Sync {
    fn evaluation(&self, fb: &BanditFeedback) -> Result<ActionDist>;

    fn behavior(&self, _fb: &BanditFeedback) -> Option<Result<ActionDist>> {
        None
    }
}

impl<F> DistBuilder for F
where
    F: Fn(&BanditFeedback) -> Result<ActionDist> + Sync,
{
    fn evaluation(&self, fb: &BanditFeedback) -> Result<ActionDist> {
        self(fb)
    }
}

/// Evaluation and behaviour builders together.
pub struct WithBehavior<E, B>(pub E, pub B);

impl<E, B> DistBuilder for WithBehavior<E, B>
where
    E: Fn(&BanditFeedback) -> Result<ActionDist> + Sync,
    B: Fn(&BanditFeedback) -> Result<ActionDist> + Sync,
{
    fn evaluation(&self, fb: &BanditFeedback) -> Result<ActionDist> {
        (self.0)(fb)
    }

    fn behavior(&self, fb: &BanditFeedback) -> Option<Result<ActionDist>> {
        Some((self.1)(fb))
    }
}

/// Mean reward of the test set.
pub fn on_policy_value(test: &BanditFeedback) -> Result<f64> {
    if test.n_rounds() == 0 {
        return Err(OpeError::InvalidArgument("test set is empty".into()));
    }
    Ok(test.mean_reward())
}

/// `|(estimate - v_on) / v_on|`.
pub fn relative_ee(estimate: f64, v_on: f64) -> Result<f64> {
    if v_on == 0.0 || !v_on.is_finite() {
        return Err(OpeError::InvalidArgument(format!("ground truth {v_on} must be finite and non-zero")));
    }
    Ok(((estimate - v_on) / v_on).abs())
}

/// Mean and standard deviation with the `B - 1` denominator.
pub fn aggregate(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(OpeError::InvalidArgument(format!(
            "standard deviation needs at least two values, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Ok((mean, (ss / (n - 1.0)).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFailure {
    pub replication: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorRow {
    pub estimator: String,
    pub tau: Option<f64>,
    pub lambda: Option<f64>,
    /// Mean relative-EE over successful replications.
    pub mean_relative_ee: Option<f64>,
    /// `None` with fewer than two successful replications.
    pub std_relative_ee: Option<f64>,
    /// One entry per replication; `None` where the estimator failed.
    pub values: Vec<Option<f64>>,
    pub failures: Vec<ReplicationFailure>,
}

impl EstimatorRow {
    fn from_values(kind: EstimatorKind, values: Vec<Option<f64>>, failures: Vec<ReplicationFailure>) -> Self {
        let ok: Vec<f64> = values.iter().flatten().copied().collect();
        let mean = (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64);
        let std = aggregate(&ok).ok().map(|(_, s)| s);
        let (tau, lambda) = kind.hyperparameters();
        Self {
            estimator: kind.name().to_string(),
            tau,
            lambda,
            mean_relative_ee: mean,
            std_relative_ee: std,
            values,
            failures,
        }
    }

    /// Display label such as `switch-dr (tau=5)`.
    pub fn label(&self) -> String {
        match (self.tau, self.lambda) {
            (Some(t), _) => format!("{} (tau={t})", self.estimator),
            (_, Some(l)) => format!("{} (lambda={l})", self.estimator),
            _ => self.estimator.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub mode: Mode,
    pub split_point: Option<usize>,
    pub n_bootstrap: usize,
    pub seed: u64,
    /// Indices of the behaviour records that form `D_ev`.
    pub ev_range: Range<usize>,
    /// Indices of the evaluation-policy records that form `D_te`.
    pub te_range: Range<usize>,
    pub v_on: f64,
    pub rows: Vec<EstimatorRow>,
}

impl ProtocolReport {
    pub fn row(&self, estimator: &str, tau: Option<f64>, lambda: Option<f64>) -> Option<&EstimatorRow> {
        self.rows.iter().find(|r| r.estimator == estimator && r.tau == tau && r.lambda == lambda)
    }

    /// Largest deviation between stored aggregates and those recomputed from
    /// the stored per-replication values.
    pub fn max_aggregate_discrepancy(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for row in &self.rows {
            let ok: Vec<f64> = row.values.iter().flatten().copied().collect();
            let mean = (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64);
            let std = aggregate(&ok).ok().map(|(_, s)| s);
            for (a, b) in [(mean, row.mean_relative_ee), (std, row.std_relative_ee)] {
                worst = worst.max(match (a, b) {
                    (Some(a), Some(b)) => (a - b).abs(),
                    (None, None) => 0.0,
                    _ => f64::INFINITY,
                });
            }
        }
        worst
    }

    pub fn warnings(&self, direction: &str) -> Vec<String> {
        self.rows
            .iter()
            .flat_map(|r| {
                r.failures.iter().map(move |f| {
                    format!("{direction}/{}: {} failed in replication {}: {}", self.mode.as_str(), r.label(), f.replication, f.reason)
                })
            })
            .collect()
    }
}

struct Replication {
    /// Per estimator: relative-EE or the failure reason.
    outcomes: Vec<std::result::Result<f64, String>>,
}

/// Runs the benchmark.
///
/// `builder` maps a batch of behaviour records to the evaluation policy's
/// distribution on those records. Replications run in parallel with seeds
/// derived from `cfg.seed`, so the report does not depend on thread count.
pub fn run_protocol(
    d_behavior: &BanditFeedback,
    d_evaluation: &BanditFeedback,
    builder: &dyn DistBuilder,
    cfg: &ProtocolConfig,
) -> Result<ProtocolReport> {
    cfg.validate()?;
    if d_behavior.n_rounds() == 0 || d_evaluation.n_rounds() == 0 {
        return Err(OpeError::InvalidArgument("both datasets must be non-empty".into()));
    }
    let (d_ev, d_te, ev_range, te_range) = match cfg.mode {
        Mode::InSample => (
            d_behavior.clone(),
            d_evaluation.clone(),
            0..d_behavior.n_rounds(),
            0..d_evaluation.n_rounds(),
        ),
        Mode::OutSample => {
            let s = cfg.split_point.expect("validated");
            let (ev, _) = split_by_time(d_behavior, s)?;
            let (_, te) = split_by_time(d_evaluation, s)?;
            (ev, te, 0..s, s..d_evaluation.n_rounds())
        }
    };
    let v_on = on_policy_value(&d_te)?;
    relative_ee(v_on, v_on)?;

    let reps: Vec<Replication> = (0..cfg.n_bootstrap)
        .into_par_iter()
        .map(|b| replicate(&d_ev, builder, cfg, v_on, b))
        .collect();

    let rows = cfg
        .estimators
        .iter()
        .enumerate()
        .map(|(j, &kind)| {
            let mut values = Vec::with_capacity(reps.len());
            let mut failures = Vec::new();
            for (b, rep) in reps.iter().enumerate() {
                match &rep.outcomes[j] {
                    Ok(v) => values.push(Some(*v)),
                    Err(reason) => {
                        values.push(None);
                        failures.push(ReplicationFailure { replication: b, reason: reason.clone() });
                    }
                }
            }
            EstimatorRow::from_values(kind, values, failures)
        })
        .collect();

    Ok(ProtocolReport {
        mode: cfg.mode,
        split_point: cfg.split_point,
        n_bootstrap: cfg.n_bootstrap,
        seed: cfg.seed,
        ev_range,
        te_range,
        v_on,
        rows,
    })
}

fn replicate(d_ev: &BanditFeedback, builder: &dyn DistBuilder, cfg: &ProtocolConfig, v_on: f64, b: usize) -> Replication {
    let all_fail = |reason: String| Replication { outcomes: vec![Err(reason); cfg.estimators.len()] };
    let boot = bootstrap_sample(d_ev, derive_seed(cfg.seed, 2 * b as u64));
    let (train, eval) = match cross_fit_split(&boot, cfg.train_fraction, derive_seed(cfg.seed, 2 * b as u64 + 1)) {
        Ok(parts) => parts,
        Err(e) => return all_fail(e.to_string()),
    };
    let dist = match builder.evaluation(&eval) {
        Ok(d) => d,
        Err(e) => return all_fail(format!("evaluation policy: {e}")),
    };

    let needs_q = cfg.estimators.iter().any(|k| k.needs_reward_model());
    let q_hat: Option<std::result::Result<Array2<f64>, String>> = needs_q.then(|| {
        fit_logistic(&train, &cfg.fit)
            .and_then(|m| predict_q(&m, &eval))
            .map(|p| p.table)
            .map_err(|e| format!("reward model: {e}"))
    });
    let mrdr_q: Option<std::result::Result<Array2<f64>, String>> =
        cfg.estimators.contains(&EstimatorKind::Mrdr).then(|| {
            builder
                .evaluation(&train)
                .and_then(|train_dist| fit_mrdr(&train, &train_dist, &cfg.fit))
                .and_then(|m| predict_q(m.model(), &eval))
                .map(|p| p.table)
                .map_err(|e| format!("mrdr model: {e}"))
        });
    let behavior = builder.behavior(&eval).map(|r| r.map_err(|e| format!("behavior policy: {e}")));

    let outcomes = cfg
        .estimators
        .iter()
        .map(|&kind| {
            let input = EstimatorInput {
                feedback: &eval,
                dist: &dist,
                q_hat: match &q_hat {
                    Some(Ok(q)) => Some(q),
                    Some(Err(e)) if kind.needs_reward_model() => return Err(e.clone()),
                    _ => None,
                },
                mrdr_q_hat: match &mrdr_q {
                    Some(Ok(q)) => Some(q),
                    Some(Err(e)) if kind == EstimatorKind::Mrdr => return Err(e.clone()),
                    _ => None,
                },
                behavior_dist: match &behavior {
                    Some(Ok(d)) => Some(d),
                    Some(Err(e)) if matches!(kind, EstimatorKind::SwitchIpw { .. }) => return Err(e.clone()),
                    _ => None,
                },
            };
            estimate(kind, &input)
                .and_then(|r| relative_ee(r.estimate, v_on))
                .map_err(|e| e.to_string())
        })
        .collect();
    Replication { outcomes }
}

/// One protocol run labelled by its direction, e.g. `random->bts`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkEntry {
    pub direction: String,
    pub report: ProtocolReport,
}

/// Several protocol runs (directions × modes) with their warnings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub entries: Vec<BenchmarkEntry>,
    pub warnings: Vec<String>,
}

pub const CSV_HEADER: [&str; 7] =
    ["estimator", "tau", "lambda", "direction", "mode", "mean_relative_ee", "std_relative_ee"];

impl BenchmarkReport {
    pub fn push(&mut self, direction: impl Into<String>, report: ProtocolReport) {
        let direction = direction.into();
        self.warnings.extend(report.warnings(&direction));
        self.entries.push(BenchmarkEntry { direction, report });
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One line per (estimator, direction, mode); missing aggregates are
    /// left empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for entry in &self.entries {
            for row in &entry.report.rows {
                w.write_record([
                    row.estimator.clone(),
                    opt(row.tau),
                    opt(row.lambda),
                    entry.direction.clone(),
                    entry.report.mode.as_str().to_string(),
                    opt(row.mean_relative_ee),
                    opt(row.std_relative_ee),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

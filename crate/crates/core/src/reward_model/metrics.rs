use crate::error::{OpeError, Result};

const LOG_CLIP: f64 = 1e-12;

/// How tied positive/negative scores count towards the AUC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieHandling {
    /// Only strictly higher positive scores count; a constant predictor scores 0.
    #[default]
    Strict,
    /// Ties count one half, the usual Mann-Whitney convention.
    Half,
}

fn class_counts(labels: &[f64]) -> Result<(usize, usize)> {
    if let Some(i) = labels.iter().position(|&y| y != 0.0 && y != 1.0) {
        return Err(OpeError::Data { row: i, message: format!("label {} is not binary", labels[i]) });
    }
    let pos = labels.iter().filter(|&&y| y == 1.0).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(OpeError::Degenerate("labels contain a single class".into()));
    }
    Ok((pos, neg))
}

/// Relative cross entropy: one minus the ratio of the model's log-loss to
/// the log-loss of predicting the label mean everywhere.
pub fn rce(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(OpeError::Shape("predictions and labels differ in length".into()));
    }
    let (pos, _) = class_counts(labels)?;
    let naive = pos as f64 / labels.len() as f64;
    let ll = |q: f64, y: f64| {
        let q = q.clamp(LOG_CLIP, 1.0 - LOG_CLIP);
        y * q.ln() + (1.0 - y) * (1.0 - q).ln()
    };
    let model: f64 = predictions.iter().zip(labels).map(|(&q, &y)| ll(q, y)).sum();
    let baseline: f64 = labels.iter().map(|&y| ll(naive, y)).sum();
    Ok(1.0 - model / baseline)
}

/// Fraction of (positive, negative) pairs where the positive scores strictly
/// higher.
pub fn auc(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    auc_with_ties(predictions, labels, TieHandling::Strict)
}

pub fn auc_with_ties(predictions: &[f64], labels: &[f64], ties: TieHandling) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(OpeError::Shape("predictions and labels differ in length".into()));
    }
    let (n_pos, n_neg) = class_counts(labels)?;
    let mut neg: Vec<f64> = predictions.iter().zip(labels).filter(|(_, &y)| y == 0.0).map(|(&q, _)| q).collect();
    neg.sort_by(f64::total_cmp);
    let mut score = 0.0;
    for (&q, _) in predictions.iter().zip(labels).filter(|(_, &y)| y == 1.0) {
        let below = neg.partition_point(|&v| v < q);
        score += below as f64;
        if ties == TieHandling::Half {
            let not_above = neg.partition_point(|&v| v <= q);
            score += 0.5 * (not_above - below) as f64;
        }
    }
    Ok(score / (n_pos as f64 * n_neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_auc(q: &[f64], y: &[f64], half: bool) -> f64 {
        let mut s = 0.0;
        let mut pairs = 0.0;
        for i in 0..q.len() {
            for j in 0..q.len() {
                if y[i] == 1.0 && y[j] == 0.0 {
                    pairs += 1.0;
                    if q[i] > q[j] {
                        s += 1.0;
                    } else if half && q[i] == q[j] {
                        s += 0.5;
                    }
                }
            }
        }
        s / pairs
    }

    #[test]
    fn auc_extremes() {
        let y = [1.0, 1.0, 0.0, 0.0];
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &y).unwrap(), 1.0);
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &y).unwrap(), 0.0);
        assert_eq!(auc(&[0.5; 4], &y).unwrap(), 0.0);
        assert_eq!(auc_with_ties(&[0.5; 4], &y, TieHandling::Half).unwrap(), 0.5);
        assert!(auc(&[0.1, 0.2], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn rce_reference_points() {
        let y = [1.0, 0.0, 0.0, 1.0, 0.0];
        assert!(rce(&[0.4; 5], &y).unwrap().abs() < 1e-15);
        let perfect: Vec<f64> = y.iter().map(|&v| if v == 1.0 { 1.0 - 1e-12 } else { 1e-12 }).collect();
        let r = rce(&perfect, &y).unwrap();
        assert!(r < 1.0 && r > 1.0 - 1e-9);
        assert!(rce(&[0.5, 0.5], &[0.0, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise_count(q in proptest::collection::vec(0u8..6, 2..40), y in proptest::collection::vec(any::<bool>(), 2..40)) {
            let n = q.len().min(y.len());
            let q: Vec<f64> = q[..n].iter().map(|&v| v as f64 / 5.0).collect();
            let y: Vec<f64> = y[..n].iter().map(|&b| b as u8 as f64).collect();
            prop_assume!(y.contains(&1.0) && y.contains(&0.0));
            prop_assert!((auc(&q, &y).unwrap() - brute_auc(&q, &y, false)).abs() < 1e-12);
            prop_assert!((auc_with_ties(&q, &y, TieHandling::Half).unwrap() - brute_auc(&q, &y, true)).abs() < 1e-12);
        }

        #[test]
        fn auc_invariant_under_monotone_transform(q in proptest::collection::vec(-3.0f64..3.0, 4..40), seed in any::<u64>()) {
            let y: Vec<f64> = (0..q.len()).map(|i| ((seed >> (i % 64)) & 1) as f64).collect();
            prop_assume!(y.contains(&1.0) && y.contains(&0.0));
            let t: Vec<f64> = q.iter().map(|v| v.exp() * 3.0 + 1.0).collect();
            prop_assert_eq!(auc(&q, &y).unwrap(), auc(&t, &y).unwrap());
        }

        #[test]
        fn rce_invariant_under_reordering(q in proptest::collection::vec(0.01f64..0.99, 4..30), shift in 1usize..29) {
            let y: Vec<f64> = (0..q.len()).map(|i| (i % 3 == 0) as u8 as f64).collect();
            let k = shift % q.len();
            let mut q2 = q.clone();
            let mut y2 = y.clone();
            q2.rotate_left(k);
            y2.rotate_left(k);
            prop_assert!((rce(&q, &y).unwrap() - rce(&q2, &y2).unwrap()).abs() < 1e-12);
        }
    }
}

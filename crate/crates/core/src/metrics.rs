//! AUC, the loss interface used by the explainers, and train/test
//! performance reports.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::explain::Response;

/// Probability that a random bad scores above a random good, ties counted
/// one half. Computed from midranks in `O(n log n)`.
pub fn auc(scores: &[f64], y: &[u8]) -> Result<f64> {
    if scores.len() != y.len() {
        return Err(Error::Schema(format!("{} scores for {} labels", scores.len(), y.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN score".into()));
    }
    let n_bad = y.iter().filter(|&&t| t == 1).count();
    let n_good = y.len() - n_bad;
    if n_bad == 0 || n_good == 0 {
        return Err(Error::SingleClass);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_bad = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j + 2) as f64 / 2.0;
        let bads = idx[i..=j].iter().filter(|&&k| y[k] == 1).count();
        rank_sum_bad += mid * bads as f64;
        i = j + 1;
    }
    let u = rank_sum_bad - (n_bad * (n_bad + 1)) as f64 / 2.0;
    Ok(u / (n_bad as f64 * n_good as f64))
}

/// A loss-oriented measure: lower is better.
pub trait Loss: Send + Sync {
    fn name(&self) -> &str;

    fn loss(&self, scores: &[f64], y: &[u8]) -> Result<f64>;

    /// The underlying performance value when the loss is a transform of
    /// one.
    fn performance(&self, _loss: f64) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OneMinusAuc;

impl Loss for OneMinusAuc {
    fn name(&self) -> &str {
        "1-AUC"
    }

    fn loss(&self, scores: &[f64], y: &[u8]) -> Result<f64> {
        Ok(1.0 - auc(scores, y)?)
    }

    fn performance(&self, loss: f64) -> Option<f64> {
        Some(1.0 - loss)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub model: String,
    pub measure: String,
    pub train_loss: f64,
    pub test_loss: f64,
    /// `test_loss - train_loss`; for 1-AUC this is train AUC minus test
    /// AUC, positive when the model fits the training sample better.
    pub overfitting_gap: f64,
    /// `train_loss - test_loss`, the same difference with the opposite sign.
    pub loss_difference: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_performance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_performance: Option<f64>,
}

/// Loss of `model` on both samples.
pub fn evaluate<R: Response + ?Sized>(
    model_name: &str,
    model: &R,
    train: &Dataset,
    test: &Dataset,
    measure: &dyn Loss,
) -> Result<PerformanceReport> {
    let train_loss = measure.loss(&model.respond(train.names(), train.rows())?, train.y())?;
    let test_loss = measure.loss(&model.respond(test.names(), test.rows())?, test.y())?;
    Ok(PerformanceReport {
        model: model_name.to_string(),
        measure: measure.name().to_string(),
        train_loss,
        test_loss,
        overfitting_gap: test_loss - train_loss,
        loss_difference: train_loss - test_loss,
        train_performance: measure.performance(train_loss),
        test_performance: measure.performance(test_loss),
    })
}

/// Train-vs-test points, one row per model.
pub fn write_scatter_csv<W: Write>(reports: &[PerformanceReport], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["model", "measure", "train", "test", "overfitting_gap"])?;
    for r in reports {
        let (train, test) = match (r.train_performance, r.test_performance) {
            (Some(a), Some(b)) => (a, b),
            _ => (r.train_loss, r.test_loss),
        };
        w.write_record([
            r.model.clone(),
            r.measure.clone(),
            train.to_string(),
            test.to_string(),
            r.overfitting_gap.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("scatter csv", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_ranking() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
    }

    #[test]
    fn all_ties() {
        assert_eq!(auc(&[0.3; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
    }

    #[test]
    fn three_of_four_pairs() {
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(), 0.75);
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(auc(&[0.1, 0.2], &[1, 1]), Err(Error::SingleClass)));
    }

    #[test]
    fn reversal_complements() {
        let s = [0.3, 0.1, 0.7, 0.2, 0.9];
        let y = [0, 1, 1, 0, 1];
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        assert!((auc(&s, &y).unwrap() + auc(&neg, &y).unwrap() - 1.0).abs() < 1e-15);
    }
}

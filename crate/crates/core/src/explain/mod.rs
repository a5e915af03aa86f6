//! Model-agnostic explanations. Everything here works through [`Response`],
//! so the same code explains probabilities, log-odds or scorecard points.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Record, Row, Value};
use crate::error::{Error, Result};
use crate::logistic::logit;
use crate::models::PredictiveModel;

pub mod global;
pub mod local;

pub use global::{
    default_grid, pd_profile, permutation_importance, points_range_importance, ImportanceConfig, ImportanceEntry,
    ImportanceReport, PdConfig, PdProfile,
};
pub use local::{
    breakdown, cp_profile, shap_values, top_k, Attribution, BreakdownOrder, Contribution, CpProfile, Segment,
    ShapConfig, REMAINDER_LABEL,
};

/// Default cap on the reference sample used by local attributions.
pub const REFERENCE_CAP: usize = 500;

/// A real-valued function of rows, usually a model's PD.
pub trait Response: Sync {
    fn respond(&self, names: &[String], rows: &[Row]) -> Result<Vec<f64>>;

    /// Label of the output scale.
    fn scale(&self) -> &'static str {
        "probability"
    }
}

impl<M: PredictiveModel + ?Sized> Response for M {
    fn respond(&self, names: &[String], rows: &[Row]) -> Result<Vec<f64>> {
        self.predict(names, rows)
    }
}

/// A model's predictions on the log-odds scale.
#[derive(Clone, Copy)]
pub struct LogitScale<'a, M: ?Sized>(pub &'a M);

impl<M: PredictiveModel + ?Sized> Response for LogitScale<'_, M> {
    fn respond(&self, names: &[String], rows: &[Row]) -> Result<Vec<f64>> {
        Ok(self.0.predict(names, rows)?.into_iter().map(logit).collect())
    }

    fn scale(&self) -> &'static str {
        "logit"
    }
}

/// Which scale an explanation is requested on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Probability,
    Logit,
    Points,
}

/// Lay out `record` in the column order of `names`.
pub fn record_to_row(record: &Record, names: &[String]) -> Result<Row> {
    names
        .iter()
        .map(|n| record.get(n).cloned().ok_or_else(|| Error::UnknownColumn(n.clone())))
        .collect()
}

/// Fixed-seed sample of at most `cap` rows, or the whole set when `cap` is
/// `None`.
pub fn reference_sample(ds: &Dataset, cap: Option<usize>, seed: u64) -> Result<Dataset> {
    match cap {
        Some(c) => ds.sample(c, seed),
        None => Ok(ds.clone()),
    }
}

/// Copy of `rows` with column `col` replaced by `value`.
pub(crate) fn substitute(rows: &[Row], col: usize, value: &Value) -> Vec<Row> {
    rows.iter()
        .map(|r| {
            let mut r = r.clone();
            r[col] = value.clone();
            r
        })
        .collect()
}

/// Arithmetic mean; exact when every element is the same.
pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.iter().all(|x| x.to_bits() == v[0].to_bits()) {
        return v[0];
    }
    v.iter().sum::<f64>() / v.len() as f64
}

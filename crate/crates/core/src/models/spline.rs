//! Logistic regression on restricted cubic spline expansions.
//!
//! With knots `t_1 < ... < t_k` the basis of `x` is `x` itself plus, for
//! `j = 1..k-2`,
//!
//! `s_j(x) = [(x-t_j)+^3 - (x-t_{k-1})+^3 (t_k-t_j)/(t_k-t_{k-1})
//!            + (x-t_k)+^3 (t_{k-1}-t_j)/(t_k-t_{k-1})] / (t_k-t_1)^2`
//!
//! which is linear outside `[t_1, t_k]` and twice continuously
//! differentiable everywhere.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{feature_indices, numeric_cell, PredictiveModel};
use crate::data::{ColumnKind, ColumnSpec, Dataset, Row, Value};
use crate::error::{Error, Result};
use crate::logistic::{fit_logistic, LogisticConfig, LogisticFit};

pub const DEFAULT_KNOT_QUANTILES: [f64; 5] = [0.05, 0.275, 0.5, 0.725, 0.95];

fn cube_plus(v: f64) -> f64 {
    if v > 0.0 {
        v * v * v
    } else {
        0.0
    }
}

fn check_knots(knots: &[f64]) -> Result<()> {
    if knots.len() < 3 {
        return Err(Error::InvalidConfig(format!(
            "restricted cubic splines need at least 3 knots, got {}",
            knots.len()
        )));
    }
    if knots.iter().any(|k| !k.is_finite()) || knots.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig(format!(
            "knots must be finite and strictly increasing: {knots:?}"
        )));
    }
    Ok(())
}

/// Basis values of a single point: `[x, s_1(x), ..., s_{k-2}(x)]`.
pub fn rcs_row(x: f64, knots: &[f64]) -> Vec<f64> {
    let k = knots.len();
    let (tk1, tk) = (knots[k - 2], knots[k - 1]);
    let norm = (tk - knots[0]).powi(2);
    let mut out = Vec::with_capacity(k - 1);
    out.push(x);
    for &tj in &knots[..k - 2] {
        let s = cube_plus(x - tj) - cube_plus(x - tk1) * (tk - tj) / (tk - tk1)
            + cube_plus(x - tk) * (tk1 - tj) / (tk - tk1);
        out.push(s / norm);
    }
    out
}

/// Basis columns of `x`: `k - 1` columns for `k` knots.
pub fn rcs_basis(x: &[f64], knots: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_knots(knots)?;
    let mut cols = vec![Vec::with_capacity(x.len()); knots.len() - 1];
    for &v in x {
        for (c, b) in cols.iter_mut().zip(rcs_row(v, knots)) {
            c.push(b);
        }
    }
    Ok(cols)
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcsConfig {
    /// Variables expanded with splines.
    pub spline: Vec<String>,
    /// Knot quantiles used when a variable has no explicit knots.
    pub quantiles: Vec<f64>,
    /// Explicit knots per variable.
    #[serde(default)]
    pub knots: BTreeMap<String, Vec<f64>>,
    /// Other variables entering linearly (categoricals as level dummies).
    /// `None` means every remaining column.
    #[serde(default)]
    pub linear: Option<Vec<String>>,
    #[serde(default)]
    pub logistic: LogisticConfig,
}

impl Default for RcsConfig {
    fn default() -> Self {
        RcsConfig {
            spline: Vec::new(),
            quantiles: DEFAULT_KNOT_QUANTILES.to_vec(),
            knots: BTreeMap::new(),
            linear: None,
            logistic: LogisticConfig::default(),
        }
    }
}

impl RcsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.quantiles.len() < 3 {
            return Err(Error::InvalidConfig("at least 3 knot quantiles are required".into()));
        }
        if self.quantiles.iter().any(|q| !(0.0..=1.0).contains(q)) || self.quantiles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig(
                "knot quantiles must increase within [0, 1]".into(),
            ));
        }
        for k in self.knots.values() {
            check_knots(k)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    Linear,
    Spline {
        knots: Vec<f64>,
    },
    /// Indicator of one categorical level.
    Level {
        level: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcsTerm {
    pub variable: String,
    pub kind: TermKind,
    /// Special codes of the variable; they are replaced by `impute`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub special_codes: Vec<Value>,
    #[serde(default)]
    pub impute: f64,
}

impl RcsTerm {
    fn width(&self) -> usize {
        match &self.kind {
            TermKind::Spline { knots } => knots.len() - 1,
            _ => 1,
        }
    }

    fn push_values(&self, v: &Value, out: &mut Vec<f64>) -> Result<()> {
        if let TermKind::Level { level } = &self.kind {
            out.push(f64::from(u8::from(v.to_string() == *level)));
            return Ok(());
        }
        let x = if self.special_codes.iter().any(|c| c.matches(v)) {
            self.impute
        } else {
            numeric_cell(&self.variable, v)?
        };
        match &self.kind {
            TermKind::Spline { knots } => out.extend(rcs_row(x, knots)),
            _ => out.push(x),
        }
        Ok(())
    }

    fn column_names(&self) -> Vec<String> {
        match &self.kind {
            TermKind::Linear => vec![self.variable.clone()],
            TermKind::Spline { knots } => (0..knots.len() - 1)
                .map(|j| {
                    if j == 0 {
                        self.variable.clone()
                    } else {
                        format!("{}'{}", self.variable, "'".repeat(j - 1))
                    }
                })
                .collect(),
            TermKind::Level { level } => vec![format!("{}={}", self.variable, level)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcsModel {
    pub name: String,
    pub terms: Vec<RcsTerm>,
    pub fit: LogisticFit,
    /// Variables requested as splines whose data gave fewer than 3 distinct
    /// knots; they enter linearly.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub linear_fallback: Vec<String>,
    /// Single-column terms left out because their training column was
    /// constant or repeated an earlier column.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliased: Vec<String>,
}

impl RcsModel {
    fn variables(&self) -> Vec<String> {
        let mut v: Vec<String> = Vec::new();
        for t in &self.terms {
            if !v.contains(&t.variable) {
                v.push(t.variable.clone());
            }
        }
        v
    }

    fn design_row(&self, idx: &BTreeMap<&str, usize>, row: &Row) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for t in &self.terms {
            t.push_values(&row[idx[t.variable.as_str()]], &mut out)?;
        }
        Ok(out)
    }

    /// Residual deviance on a dataset, `-2 ln L`.
    pub fn deviance(&self, ds: &Dataset) -> Result<f64> {
        let p = self.predict(ds.names(), ds.rows())?;
        Ok(-2.0
            * p.iter()
                .zip(ds.y())
                .map(|(&pi, &t)| if t == 1 { pi.ln() } else { (1.0 - pi).ln() })
                .sum::<f64>())
    }
}

impl PredictiveModel for RcsModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn features(&self) -> Vec<String> {
        self.variables()
    }

    fn predict(&self, names: &[String], rows: &[Row]) -> Result<Vec<f64>> {
        let vars = self.variables();
        let pos = feature_indices(&vars, names)?;
        let idx: BTreeMap<&str, usize> = vars.iter().map(String::as_str).zip(pos).collect();
        rows.iter()
            .map(|r| Ok(self.fit.predict_proba(&self.design_row(&idx, r)?)))
            .collect()
    }
}

fn regular_values(ds: &Dataset, j: usize, spec: &ColumnSpec) -> Result<Vec<f64>> {
    let mut v: Vec<f64> = ds
        .column(j)
        .filter(|v| !spec.is_special(v))
        .map(|v| numeric_cell(&spec.name, v))
        .collect::<Result<_>>()?;
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Fit a logistic regression with spline terms for `cfg.spline` and linear
/// terms for the remaining variables.
pub fn train_rcs_logistic(train: &Dataset, cfg: &RcsConfig) -> Result<RcsModel> {
    cfg.validate()?;
    let linear: Vec<String> = match &cfg.linear {
        Some(l) => l.clone(),
        None => train
            .names()
            .iter()
            .filter(|n| !cfg.spline.contains(n))
            .cloned()
            .collect(),
    };
    let mut terms = Vec::new();
    let mut linear_fallback = Vec::new();
    for name in cfg.spline.iter().chain(&linear) {
        let j = train.column_index(name)?;
        let spec = &train.columns()[j];
        let splined = cfg.spline.contains(name);
        if spec.kind == ColumnKind::Categorical {
            if splined {
                return Err(Error::InvalidConfig(format!("spline variable `{name}` is categorical")));
            }
            let mut levels: Vec<String> = train.column(j).map(|v| v.to_string()).collect();
            levels.sort();
            levels.dedup();
            // first level is the reference
            for level in levels.into_iter().skip(1) {
                terms.push(RcsTerm {
                    variable: name.clone(),
                    kind: TermKind::Level { level },
                    special_codes: Vec::new(),
                    impute: 0.0,
                });
            }
            continue;
        }
        let values = regular_values(train, j, spec)?;
        if values.is_empty() {
            return Err(Error::EmptyInput(format!("`{name}` has only special codes")));
        }
        let impute = quantile(&values, 0.5);
        let kind = if splined {
            let mut knots = match cfg.knots.get(name) {
                Some(k) => k.clone(),
                None => cfg.quantiles.iter().map(|&q| quantile(&values, q)).collect(),
            };
            knots.dedup();
            if knots.len() >= 3 {
                TermKind::Spline { knots }
            } else {
                linear_fallback.push(name.clone());
                TermKind::Linear
            }
        } else {
            TermKind::Linear
        };
        terms.push(RcsTerm {
            variable: name.clone(),
            kind,
            special_codes: spec.special_codes.clone(),
            impute,
        });
    }

    let mut model = RcsModel {
        name: "rcs".to_string(),
        terms,
        fit: LogisticFit {
            names: Vec::new(),
            intercept: 0.0,
            coefficients: Vec::new(),
            status: crate::logistic::FitStatus::Converged,
            iterations: 0,
            log_likelihood: 0.0,
            ll_trace: Vec::new(),
            gradient_norm: 0.0,
        },
        linear_fallback,
        aliased: Vec::new(),
    };
    let vars = model.variables();
    let pos = feature_indices(&vars, train.names())?;
    let idx: BTreeMap<&str, usize> = vars.iter().map(String::as_str).zip(pos).collect();
    let width: usize = model.terms.iter().map(RcsTerm::width).sum();
    let mut all = vec![Vec::with_capacity(train.n()); width];
    for r in train.rows() {
        for (c, v) in all.iter_mut().zip(model.design_row(&idx, r)?) {
            c.push(v);
        }
    }

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(width);
    let mut kept = Vec::with_capacity(model.terms.len());
    let mut offset = 0;
    for term in std::mem::take(&mut model.terms) {
        let w = term.width();
        let block = &all[offset..offset + w];
        offset += w;
        let redundant = w == 1 && {
            let c = &block[0];
            c.iter().all(|&v| v == c[0]) || columns.iter().any(|k| k == c)
        };
        if redundant {
            model.aliased.push(term.column_names().remove(0));
        } else {
            columns.extend(block.iter().cloned());
            kept.push(term);
        }
    }
    model.terms = kept;
    let names: Vec<String> = model.terms.iter().flat_map(RcsTerm::column_names).collect();
    model.fit = fit_logistic(&columns, &names, train.y(), &cfg.logistic)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    const KNOTS: [f64; 5] = [0.0, 1.0, 2.5, 4.0, 6.0];

    #[test]
    fn three_knots_two_columns() {
        let cols = rcs_basis(&[0.5, 1.5], &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(cols.len(), 2);
        assert_eq!(cols[0], vec![0.5, 1.5]);
    }

    #[test]
    fn zero_below_first_knot() {
        for x in [-10.0, -0.1, 0.0] {
            assert!(rcs_row(x, &KNOTS)[1..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn linear_above_last_knot() {
        // second differences vanish beyond t_k
        for x in [6.5, 10.0, 100.0] {
            let h = 0.25;
            let (a, b, c) = (rcs_row(x - h, &KNOTS), rcs_row(x, &KNOTS), rcs_row(x + h, &KNOTS));
            for j in 1..4 {
                let d2 = a[j] - 2.0 * b[j] + c[j];
                assert!(d2.abs() < 1e-9 * (1.0 + b[j].abs()), "x={x} j={j} d2={d2}");
            }
        }
    }

    #[test]
    fn second_derivative_zero_at_boundary_knots() {
        let h = 1e-4;
        for &t in &[KNOTS[0], KNOTS[4]] {
            let (a, b, c) = (rcs_row(t - h, &KNOTS), rcs_row(t, &KNOTS), rcs_row(t + h, &KNOTS));
            for j in 1..4 {
                let d2 = (a[j] - 2.0 * b[j] + c[j]) / (h * h);
                assert!(d2.abs() < 1e-3, "t={t} j={j} d2={d2}");
            }
        }
    }

    #[test]
    fn bad_knots_rejected() {
        assert!(rcs_basis(&[1.0], &[0.0, 1.0]).is_err());
        assert!(rcs_basis(&[1.0], &[0.0, 1.0, 1.0]).is_err());
        assert!(rcs_basis(&[1.0], &[2.0, 1.0, 3.0]).is_err());
    }

    #[test]
    fn duplicate_column_is_aliased() {
        use crate::data::ColumnSpec;
        let rows: Vec<Row> = (0..60)
            .map(|i| {
                let d = f64::from(u8::from(i % 7 == 0));
                vec![
                    Value::Num(f64::from(i % 11)),
                    Value::Num(d),
                    Value::Num(d),
                    Value::Num(1.0),
                ]
            })
            .collect();
        let y = (0..60).map(|i| u8::from(i % 11 > 4 || i % 5 == 0)).collect();
        let cols = ["x", "d1", "d2", "k"].map(ColumnSpec::numeric).to_vec();
        let ds = Dataset::new(cols, rows, "y", y).unwrap();
        let m = train_rcs_logistic(&ds, &RcsConfig::default()).unwrap();
        assert_eq!(m.aliased, vec!["d2".to_string(), "k".to_string()]);
        assert_eq!(m.features(), vec!["x".to_string(), "d1".to_string()]);
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 0.125), 1.5);
    }
}

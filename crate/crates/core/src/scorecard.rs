//! Points scaling, scoring and scorecard-native attribution.
//!
//! A score is an affine function of the log good:bad odds,
//! `score = base_score + factor * ln(odds / base_odds)` with
//! `factor = pdo / ln 2`. For a logistic model on WOE columns with
//! coefficients `b0, b_j`, bin points are `-factor * b_j * WOE(bin)` and the
//! intercept carries `offset - factor * b0` where
//! `offset = base_score - factor * ln(base_odds)`.

use serde::{Deserialize, Serialize};

use crate::binning::{locate_in, BinDef};
use crate::data::{Record, Row, Value};
use crate::error::{Error, Result};
use crate::logistic::LogisticFit;
use crate::models::PredictiveModel;
use crate::woe::WoeTable;

pub const SCORECARD_FORMAT: &str = "creditlens.scorecard/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub base_score: f64,
    pub base_odds: f64,
    pub pdo: f64,
}

impl Default for Scaling {
    fn default() -> Self {
        Scaling {
            base_score: 500.0,
            base_odds: 50.0,
            pdo: 20.0,
        }
    }
}

impl Scaling {
    pub fn factor(&self) -> f64 {
        self.pdo / std::f64::consts::LN_2
    }

    pub fn offset(&self) -> f64 {
        self.base_score - self.factor() * self.base_odds.ln()
    }

    /// Score for good:bad odds `odds`.
    pub fn score_from_odds(&self, odds: f64) -> f64 {
        self.base_score + self.factor() * (odds / self.base_odds).ln()
    }

    /// Score for a model logit of default, `ln(p / (1 - p))`.
    pub fn score_from_logit(&self, logit_pd: f64) -> f64 {
        self.base_score + self.factor() * (-logit_pd - self.base_odds.ln())
    }

    /// Log good:bad odds implied by `score`.
    pub fn log_odds_from_score(&self, score: f64) -> f64 {
        (score - self.base_score) / self.factor() + self.base_odds.ln()
    }

    pub fn pd_from_score(&self, score: f64) -> f64 {
        1.0 / (1.0 + self.log_odds_from_score(score).exp())
    }
}

/// Descriptive statistics attached to a bin or to the whole population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationStats {
    pub pop_share: f64,
    pub default_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub average_pd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardBin {
    pub definition: BinDef,
    pub points: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points_unrounded: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub woe: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pop_share: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub average_pd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardVariable {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficient: Option<f64>,
    /// Mean points of this variable over the training sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_points: Option<f64>,
    pub bins: Vec<CardBin>,
}

impl CardVariable {
    pub fn locate(&self, value: &Value) -> Option<usize> {
        locate_in(self.bins.iter().map(|b| &b.definition), value)
    }

    /// Training mean of the points, falling back to the population-share
    /// weighted mean of the bin points.
    pub fn mean_points(&self) -> f64 {
        self.mean_points.unwrap_or_else(|| {
            let total: f64 = self.bins.iter().filter_map(|b| b.pop_share).sum();
            if total == 0.0 {
                return 0.0;
            }
            self.bins
                .iter()
                .map(|b| b.pop_share.unwrap_or(0.0) * b.points as f64)
                .sum::<f64>()
                / total
        })
    }

    pub fn points_range(&self) -> i64 {
        let max = self.bins.iter().map(|b| b.points).max().unwrap_or(0);
        let min = self.bins.iter().map(|b| b.points).min().unwrap_or(0);
        max - min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scorecard {
    #[serde(default = "default_format")]
    pub format: String,
    pub scaling: Scaling,
    pub intercept_points: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intercept_points_unrounded: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intercept_coefficient: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<PopulationStats>,
    pub variables: Vec<CardVariable>,
    /// Variable count stated by the card's author, when it differs from the
    /// number of variable blocks actually listed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reported_variable_count: Option<usize>,
}

fn default_format() -> String {
    SCORECARD_FORMAT.to_string()
}

/// Result of scoring one applicant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResult {
    pub total: i64,
    pub per_variable: Vec<(String, i64)>,
    /// PD implied by the integer total; approximate because of rounding.
    pub pd: f64,
    /// Exact affine score, present when the card carries unrounded points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unrounded_total: Option<f64>,
}

impl Scorecard {
    pub fn from_json(text: &str) -> Result<Self> {
        let card: Scorecard = serde_json::from_str(text)?;
        card.validate()?;
        Ok(card)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scaling.pdo > 0.0 && self.scaling.base_odds > 0.0) {
            return Err(Error::InvalidConfig("scaling needs positive pdo and base odds".into()));
        }
        for v in &self.variables {
            if v.bins.is_empty() {
                return Err(Error::Schema(format!("variable `{}` has no bins", v.name)));
            }
        }
        Ok(())
    }

    pub fn variable_names(&self) -> Vec<String> {
        self.variables.iter().map(|v| v.name.clone()).collect()
    }

    /// `(listed, reported)` when the stated variable count disagrees with
    /// the listed blocks.
    pub fn variable_count_mismatch(&self) -> Option<(usize, usize)> {
        self.reported_variable_count
            .filter(|&r| r != self.variables.len())
            .map(|r| (self.variables.len(), r))
    }

    fn bin_for(&self, var: &CardVariable, value: &Value) -> Result<usize> {
        var.locate(value).ok_or_else(|| Error::UncoveredValue {
            variable: var.name.clone(),
            value: value.to_string(),
        })
    }

    /// Score one row laid out as `names`.
    pub fn score_row(&self, names: &[String], row: &Row) -> Result<ScoreResult> {
        let mut total = self.intercept_points;
        let mut unrounded = self.intercept_points_unrounded;
        let mut per_variable = Vec::with_capacity(self.variables.len());
        for var in &self.variables {
            let idx = names
                .iter()
                .position(|n| *n == var.name)
                .ok_or_else(|| Error::UnknownColumn(var.name.clone()))?;
            let bin = &var.bins[self.bin_for(var, &row[idx])?];
            total += bin.points;
            unrounded = match (unrounded, bin.points_unrounded) {
                (Some(u), Some(p)) => Some(u + p),
                _ => None,
            };
            per_variable.push((var.name.clone(), bin.points));
        }
        Ok(ScoreResult {
            total,
            per_variable,
            pd: self.scaling.pd_from_score(total as f64),
            unrounded_total: unrounded,
        })
    }

    pub fn score(&self, applicant: &Record) -> Result<ScoreResult> {
        let names: Vec<String> = self.variable_names();
        let row = names
            .iter()
            .map(|n| applicant.get(n).cloned().ok_or_else(|| Error::UnknownColumn(n.clone())))
            .collect::<Result<Row>>()?;
        self.score_row(&names, &row)
    }

    pub fn mean_points(&self) -> Vec<(String, f64)> {
        self.variables
            .iter()
            .map(|v| (v.name.clone(), v.mean_points()))
            .collect()
    }

    pub fn mean_total(&self) -> f64 {
        self.intercept_points as f64 + self.variables.iter().map(CardVariable::mean_points).sum::<f64>()
    }

    /// Fill `mean_points` from a training sample.
    pub fn with_training_means(mut self, names: &[String], rows: &[Row]) -> Result<Self> {
        let mut sums = vec![0.0; self.variables.len()];
        for row in rows {
            let s = self.score_row(names, row)?;
            for (acc, (_, p)) in sums.iter_mut().zip(&s.per_variable) {
                *acc += *p as f64;
            }
        }
        for (v, s) in self.variables.iter_mut().zip(sums) {
            v.mean_points = Some(s / rows.len() as f64);
        }
        Ok(self)
    }
}

/// Points per bin from a fitted WOE logistic regression. Every variable of
/// `fit` must have a scheme in `woe`.
pub fn scale_to_points(fit: &LogisticFit, woe: &WoeTable, scaling: Scaling) -> Result<Scorecard> {
    let factor = scaling.factor();
    let intercept_unrounded = scaling.score_from_logit(fit.intercept);
    let mut variables = Vec::with_capacity(fit.names.len());
    let mut population = None;
    for (name, &beta) in fit.names.iter().zip(&fit.coefficients) {
        let scheme = woe.scheme(name).ok_or_else(|| Error::UnknownColumn(name.clone()))?;
        let bins: Vec<CardBin> = scheme
            .bins
            .iter()
            .map(|b| {
                let raw = -factor * beta * b.woe;
                CardBin {
                    definition: b.definition.clone(),
                    points: raw.round() as i64,
                    points_unrounded: Some(raw),
                    woe: Some(b.woe),
                    pop_share: Some(b.pop_share),
                    default_rate: Some(b.default_rate),
                    average_pd: None,
                }
            })
            .collect();
        let mean_points = bins
            .iter()
            .map(|b| b.pop_share.unwrap_or(0.0) * b.points as f64)
            .sum::<f64>();
        if population.is_none() {
            let (tb, tg) = scheme.class_totals();
            population = Some(PopulationStats {
                pop_share: 1.0,
                default_rate: tb as f64 / (tb + tg) as f64,
                average_pd: None,
            });
        }
        variables.push(CardVariable {
            name: name.clone(),
            coefficient: Some(beta),
            mean_points: Some(mean_points),
            bins,
        });
    }
    Ok(Scorecard {
        format: SCORECARD_FORMAT.to_string(),
        scaling,
        intercept_points: intercept_unrounded.round() as i64,
        intercept_points_unrounded: Some(intercept_unrounded),
        intercept_coefficient: Some(fit.intercept),
        population,
        variables,
        reported_variable_count: None,
    })
}

/// Points of `applicant` in each variable minus that variable's training
/// mean. The deltas sum to the applicant's total minus the mean total.
pub fn scorecard_attribution(
    card: &Scorecard,
    applicant: &Record,
    train_means: &[(String, f64)],
) -> Result<Vec<(String, f64)>> {
    let s = card.score(applicant)?;
    s.per_variable
        .iter()
        .map(|(name, pts)| {
            let mean = train_means
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, m)| *m)
                .ok_or_else(|| Error::UnknownColumn(name.clone()))?;
            Ok((name.clone(), *pts as f64 - mean))
        })
        .collect()
}

/// A scorecard used as a PD model. Predictions are the PDs implied by the
/// integer point totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorecardModel {
    pub name: String,
    pub card: Scorecard,
}

impl ScorecardModel {
    pub fn new(name: impl Into<String>, card: Scorecard) -> Self {
        ScorecardModel {
            name: name.into(),
            card,
        }
    }

    /// The same card responding in points instead of probabilities.
    pub fn points(&self) -> ScorecardPoints<'_> {
        ScorecardPoints(self)
    }

    fn project(&self, names: &[String], rows: &[Row]) -> Result<(Vec<String>, Vec<Row>)> {
        let idx = self
            .card
            .variables
            .iter()
            .map(|v| {
                names
                    .iter()
                    .position(|n| *n == v.name)
                    .ok_or_else(|| Error::UnknownColumn(v.name.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        let own = self.card.variable_names();
        let projected = rows
            .iter()
            .map(|r| idx.iter().map(|&i| r[i].clone()).collect())
            .collect();
        Ok((own, projected))
    }
}

impl PredictiveModel for ScorecardModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn features(&self) -> Vec<String> {
        self.card.variable_names()
    }

    fn predict(&self, names: &[String], rows: &[Row]) -> Result<Vec<f64>> {
        let (own, projected) = self.project(names, rows)?;
        projected
            .iter()
            .map(|r| self.card.score_row(&own, r).map(|s| s.pd))
            .collect()
    }
}

/// Point totals of a scorecard as a real-valued response.
#[derive(Debug, Clone, Copy)]
pub struct ScorecardPoints<'a>(pub &'a ScorecardModel);

impl crate::explain::Response for ScorecardPoints<'_> {
    fn respond(&self, names: &[String], rows: &[Row]) -> Result<Vec<f64>> {
        let (own, projected) = self.0.project(names, rows)?;
        projected
            .iter()
            .map(|r| self.0.card.score_row(&own, r).map(|s| s.total as f64))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_score_at_base_odds_is_exact() {
        let s = Scaling::default();
        assert_eq!(s.score_from_odds(50.0), 500.0);
        assert_eq!(s.score_from_logit(-(50f64.ln())), 500.0);
    }

    #[test]
    fn doubling_odds_adds_pdo() {
        let s = Scaling::default();
        for q in [0.01, 0.5, 1.0, 7.3, 50.0, 1234.5] {
            let d = s.score_from_odds(2.0 * q) - s.score_from_odds(q);
            assert!((d - 20.0).abs() < 1e-9, "{q}: {d}");
        }
    }

    #[test]
    fn pd_round_trips_through_score() {
        let s = Scaling::default();
        for pd in [0.01, 0.2, 0.52, 0.9] {
            let score = s.score_from_logit(crate::logistic::logit(pd));
            assert!((s.pd_from_score(score) - pd).abs() < 1e-12);
        }
    }

    fn one_var_card() -> Scorecard {
        Scorecard {
            format: SCORECARD_FORMAT.into(),
            scaling: Scaling::default(),
            intercept_points: 400,
            intercept_points_unrounded: None,
            intercept_coefficient: None,
            population: None,
            variables: vec![CardVariable {
                name: "x".into(),
                coefficient: None,
                mean_points: Some(5.0),
                bins: vec![
                    CardBin {
                        definition: BinDef::Interval {
                            lo: f64::NEG_INFINITY,
                            hi: 10.0,
                        },
                        points: 0,
                        points_unrounded: None,
                        woe: None,
                        pop_share: Some(0.5),
                        default_rate: None,
                        average_pd: None,
                    },
                    CardBin {
                        definition: BinDef::Interval {
                            lo: 10.0,
                            hi: f64::INFINITY,
                        },
                        points: 15,
                        points_unrounded: None,
                        woe: None,
                        pop_share: Some(0.5),
                        default_rate: None,
                        average_pd: None,
                    },
                ],
            }],
            reported_variable_count: None,
        }
    }

    #[test]
    fn zero_points_gives_intercept() {
        let card = one_var_card();
        let rec: Record = [("x".to_string(), Value::Num(3.0))].into();
        assert_eq!(card.score(&rec).unwrap().total, 400);
    }

    #[test]
    fn single_variable_attribution() {
        let card = one_var_card();
        let rec: Record = [("x".to_string(), Value::Num(30.0))].into();
        let d = scorecard_attribution(&card, &rec, &card.mean_points()).unwrap();
        assert_eq!(d, vec![("x".to_string(), 10.0)]);
    }

    #[test]
    fn uncovered_value_reported() {
        let card = one_var_card();
        let rec: Record = [("x".to_string(), Value::Cat("abc".into()))].into();
        assert!(matches!(card.score(&rec), Err(Error::UncoveredValue { .. })));
    }
}

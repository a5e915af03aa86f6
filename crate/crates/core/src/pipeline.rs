//! Scorecard development end to end: coarse classing, monotonicity repair,
//! WOE, MIV forward selection, logistic fit and points scaling.

use serde::{Deserialize, Serialize};

use crate::binning::{
    auto_bin_categorical, auto_bin_numeric, repair_monotonicity, BinningScheme, CategoricalBinning, NumericBinning,
};
use crate::data::{ColumnKind, Dataset};
use crate::error::{Error, Result};
use crate::logistic::LogisticConfig;
use crate::scorecard::{scale_to_points, PopulationStats, Scaling, Scorecard};
use crate::selection::{forward_select_miv, Selection};
use crate::woe::WoeTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorecardConfig {
    pub numeric: NumericBinning,
    pub categorical: CategoricalBinning,
    pub min_miv: f64,
    pub logistic: LogisticConfig,
    pub scaling: Scaling,
    /// Merge bins that break a declared monotonicity constraint.
    pub repair_monotonicity: bool,
}

impl Default for ScorecardConfig {
    fn default() -> Self {
        ScorecardConfig {
            numeric: NumericBinning::default(),
            categorical: CategoricalBinning::default(),
            min_miv: 0.01,
            logistic: LogisticConfig::default(),
            scaling: Scaling::default(),
            repair_monotonicity: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorecardBuild {
    /// Binning of every candidate variable.
    pub schemes: Vec<BinningScheme>,
    pub selection: Selection,
    pub card: Scorecard,
}

impl ScorecardBuild {
    /// WOE table restricted to the selected variables.
    pub fn woe_table(&self) -> WoeTable {
        WoeTable {
            schemes: self
                .schemes
                .iter()
                .filter(|s| self.selection.selected.contains(&s.variable))
                .cloned()
                .collect(),
        }
    }
}

/// Bin every column of `train`, repairing declared monotonicity.
pub fn bin_all(train: &Dataset, cfg: &ScorecardConfig) -> Result<Vec<BinningScheme>> {
    train
        .columns()
        .iter()
        .map(|spec| {
            let scheme = match spec.kind {
                ColumnKind::Numeric => auto_bin_numeric(train, &spec.name, &cfg.numeric, &spec.special_codes)?,
                ColumnKind::Categorical => auto_bin_categorical(train, &spec.name, &cfg.categorical)?,
            };
            if cfg.repair_monotonicity {
                repair_monotonicity(&scheme)
            } else {
                Ok(scheme)
            }
        })
        .collect()
}

pub fn build_scorecard(train: &Dataset, cfg: &ScorecardConfig) -> Result<ScorecardBuild> {
    if !train.has_both_classes() {
        return Err(Error::SingleClass);
    }
    let schemes = bin_all(train, cfg)?;
    let all = WoeTable {
        schemes: schemes.clone(),
    };
    let woe_ds = all.apply(train)?;
    let candidates: Vec<(String, Vec<f64>)> = schemes
        .iter()
        .map(|s| Ok((s.variable.clone(), woe_ds.numeric_column(&s.variable)?)))
        .collect::<Result<_>>()?;
    let selection = forward_select_miv(&candidates, train.y(), cfg.min_miv, &cfg.logistic)?;
    let fit = selection
        .fit
        .clone()
        .ok_or_else(|| Error::EmptyInput("no variable reached the minimum MIV".into()))?;

    let table = WoeTable {
        schemes: schemes
            .iter()
            .filter(|s| selection.selected.contains(&s.variable))
            .cloned()
            .collect(),
    };
    let mut card = scale_to_points(&fit, &table, cfg.scaling)?;

    // model PDs on the training sample, for per-bin and population averages
    let selected_cols: Vec<Vec<f64>> = fit
        .names
        .iter()
        .map(|n| woe_ds.numeric_column(n))
        .collect::<Result<_>>()?;
    let pd: Vec<f64> = (0..train.n())
        .map(|i| {
            let x: Vec<f64> = selected_cols.iter().map(|c| c[i]).collect();
            fit.predict_proba(&x)
        })
        .collect();
    for var in &mut card.variables {
        let scheme = table.scheme(&var.name).expect("selected variables have schemes");
        let j = train.column_index(&var.name)?;
        let mut sums = vec![(0.0, 0usize); var.bins.len()];
        for (v, p) in train.column(j).zip(&pd) {
            if let Some(b) = scheme.locate(v) {
                sums[b].0 += p;
                sums[b].1 += 1;
            }
        }
        for (bin, (s, c)) in var.bins.iter_mut().zip(sums) {
            bin.average_pd = (c > 0).then(|| s / c as f64);
        }
    }
    card.population = Some(PopulationStats {
        pop_share: 1.0,
        default_rate: train.n_bad() as f64 / train.n() as f64,
        average_pd: Some(pd.iter().sum::<f64>() / pd.len() as f64),
    });
    let card = card.with_training_means(train.names(), train.rows())?;
    Ok(ScorecardBuild {
        schemes,
        selection,
        card,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnSpec, Value};

    #[test]
    fn small_build() {
        // x drives the default rate, z is noise
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..400u32 {
            let x = f64::from(i % 40);
            let z = f64::from((i * 17) % 23);
            rows.push(vec![Value::Num(x), Value::Num(z)]);
            y.push(u8::from((i * 7919) % 40 < i % 40));
        }
        let ds = Dataset::new(vec![ColumnSpec::numeric("x"), ColumnSpec::numeric("z")], rows, "y", y).unwrap();
        let b = build_scorecard(&ds, &ScorecardConfig::default()).unwrap();
        assert_eq!(b.selection.selected[0], "x");
        let xcard = &b.card.variables[0];
        // higher x is riskier, so points fall along the bins
        let pts: Vec<i64> = xcard.bins.iter().map(|b| b.points).collect();
        assert!(pts.windows(2).all(|w| w[1] <= w[0]), "{pts:?}");
    }
}

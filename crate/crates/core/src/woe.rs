//! Weight of evidence and information value.
//!
//! For a bin `x`, `f(x|1)` is its share among bads and `f(x|0)` its share
//! among goods; `WOE(x) = ln(f(x|1) / f(x|0))` and
//! `IV = sum_x (f(x|1) - f(x|0)) * WOE(x)`.
//!
//! A bin with zero bads or zero goods gets 0.5 added to both of its class
//! counts before the WOE is taken. The class shares themselves are never
//! adjusted, so they still sum to one per variable.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::binning::BinningScheme;
use crate::data::{ColumnKind, ColumnSpec, Dataset, Value};
use crate::error::{Error, Result};

pub const ZERO_CELL_ADJUSTMENT: f64 = 0.5;

/// WOE of one bin and whether the zero-cell guard fired.
pub fn woe(n_bad: u64, n_good: u64, total_bad: u64, total_good: u64) -> (f64, bool) {
    if total_bad == 0 || total_good == 0 {
        return (0.0, false);
    }
    let adjusted = n_bad == 0 || n_good == 0;
    let (b, g) = if adjusted {
        (
            n_bad as f64 + ZERO_CELL_ADJUSTMENT,
            n_good as f64 + ZERO_CELL_ADJUSTMENT,
        )
    } else {
        (n_bad as f64, n_good as f64)
    };
    (((b / total_bad as f64) / (g / total_good as f64)).ln(), adjusted)
}

/// `(f(x|1), f(x|0))` for one bin.
pub fn class_shares(n_bad: u64, n_good: u64, total_bad: u64, total_good: u64) -> (f64, f64) {
    let share = |n: u64, t: u64| if t == 0 { 0.0 } else { n as f64 / t as f64 };
    (share(n_bad, total_bad), share(n_good, total_good))
}

pub fn iv_contribution(n_bad: u64, n_good: u64, total_bad: u64, total_good: u64) -> f64 {
    let (f1, f0) = class_shares(n_bad, n_good, total_bad, total_good);
    (f1 - f0) * woe(n_bad, n_good, total_bad, total_good).0
}

/// IV of a scheme, recomputed from its bin counts.
pub fn information_value(scheme: &BinningScheme) -> f64 {
    let (tb, tg) = scheme.class_totals();
    scheme
        .bins
        .iter()
        .map(|b| iv_contribution(b.n_bad, b.n_good(), tb, tg))
        .sum()
}

/// IV of an already WOE-transformed column: rows are grouped by their WOE
/// value and each group's class shares weight that value.
pub fn information_value_of_column(woe_values: &[f64], y: &[u8]) -> f64 {
    let mut groups: BTreeMap<u64, (f64, u64, u64)> = BTreeMap::new();
    for (&w, &t) in woe_values.iter().zip(y) {
        let e = groups.entry(w.to_bits()).or_insert((w, 0, 0));
        if t == 1 {
            e.1 += 1;
        } else {
            e.2 += 1;
        }
    }
    let tb: u64 = groups.values().map(|g| g.1).sum();
    let tg: u64 = groups.values().map(|g| g.2).sum();
    groups
        .values()
        .map(|&(w, b, g)| {
            let (f1, f0) = class_shares(b, g, tb, tg);
            (f1 - f0) * w
        })
        .sum()
}

/// Training-time WOE assignments, reused to transform test data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WoeTable {
    pub schemes: Vec<BinningScheme>,
}

impl WoeTable {
    pub fn scheme(&self, variable: &str) -> Option<&BinningScheme> {
        self.schemes.iter().find(|s| s.variable == variable)
    }

    /// Replace each covered column by its WOE value.
    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        let mut out = ds.clone();
        for scheme in &self.schemes {
            let idx = ds.column_index(&scheme.variable)?;
            let values = ds
                .column(idx)
                .map(|v| {
                    let b = scheme.locate(v).ok_or_else(|| Error::UncoveredValue {
                        variable: scheme.variable.clone(),
                        value: v.to_string(),
                    })?;
                    Ok(Value::Num(scheme.bins[b].woe))
                })
                .collect::<Result<Vec<_>>>()?;
            let spec = ColumnSpec {
                name: scheme.variable.clone(),
                kind: ColumnKind::Numeric,
                special_codes: Vec::new(),
                monotone: Default::default(),
            };
            out = out.with_column(spec, values)?;
        }
        Ok(out)
    }
}

/// WOE-transform `ds` with the given schemes and return the table for reuse
/// on other samples.
pub fn woe_transform(ds: &Dataset, schemes: &[BinningScheme]) -> Result<(Dataset, WoeTable)> {
    let table = WoeTable {
        schemes: schemes.to_vec(),
    };
    let out = table.apply(ds)?;
    Ok((out, table))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn woe_of_doubled_share() {
        // f(x|1) = 0.2, f(x|0) = 0.1
        let (w, adj) = woe(2, 1, 10, 10);
        assert!((w - 2f64.ln()).abs() < 1e-15);
        assert!(!adj);
    }

    #[test]
    fn equal_shares_give_zero_woe() {
        assert_eq!(woe(3, 6, 30, 60).0, 0.0);
    }

    #[test]
    fn iv_two_bins() {
        // f(.|1) = (0.8, 0.2), f(.|0) = (0.2, 0.8)
        let iv = iv_contribution(8, 2, 10, 10) + iv_contribution(2, 8, 10, 10);
        let expected = 0.6 * 4f64.ln() + (-0.6) * (0.25f64).ln();
        assert!((iv - expected).abs() < 1e-12);
        assert!((iv - 1.663_553_233_343_869_6).abs() < 1e-9);
    }

    #[test]
    fn single_bin_iv_zero() {
        assert_eq!(iv_contribution(7, 9, 7, 9), 0.0);
    }

    #[test]
    fn zero_cell_guard() {
        let (w, adj) = woe(0, 4, 4, 4);
        assert!(adj);
        assert!((w - (0.5f64 / 4.0 / (4.5 / 4.0)).ln()).abs() < 1e-15);
    }

    #[test]
    fn column_iv_groups_by_value() {
        let iv = information_value_of_column(&[0.0, 0.0, 0.0, 0.0], &[1, 0, 1, 0]);
        assert_eq!(iv, 0.0);
    }
}

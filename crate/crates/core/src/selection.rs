//! Forward selection of WOE variables by marginal information value (MIV).
//!
//! For a candidate column, rows are grouped by their WOE value (one group per
//! bin). The observed WOE of a group is compared with the WOE implied by the
//! current model, obtained from the predicted bad and good mass inside the
//! group:
//!
//! `MIV = sum_bins (f(bin|1) - f(bin|0)) * (WOE_observed - WOE_implied)`
//!
//! Under the intercept-only model the implied WOE is zero in every bin, so
//! the first step ranks candidates by plain IV.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logistic::{fit_logistic, LogisticConfig, LogisticFit};
use crate::woe::class_shares;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MivStep {
    pub variable: String,
    pub miv: f64,
    /// Every candidate's MIV at this step, in name order.
    pub candidates: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Selected variables in order of entry.
    pub selected: Vec<String>,
    pub trace: Vec<MivStep>,
    /// MIV of the best remaining candidate when selection stopped.
    pub stopping_miv: Option<f64>,
    pub fit: Option<LogisticFit>,
}

/// MIV of one WOE column against predicted probabilities `p`.
pub fn marginal_information_value(woe_column: &[f64], y: &[u8], p: &[f64]) -> f64 {
    // woe bits -> (woe, bads, goods, predicted bad mass, predicted good mass)
    let mut groups: BTreeMap<u64, (f64, u64, u64, f64, f64)> = BTreeMap::new();
    let (mut tb, mut tg, mut eb, mut eg) = (0u64, 0u64, 0.0f64, 0.0f64);
    for ((&w, &t), &pi) in woe_column.iter().zip(y).zip(p) {
        let e = groups.entry(w.to_bits()).or_insert((w, 0, 0, 0.0, 0.0));
        if t == 1 {
            e.1 += 1;
            tb += 1;
        } else {
            e.2 += 1;
            tg += 1;
        }
        e.3 += pi;
        e.4 += 1.0 - pi;
        eb += pi;
        eg += 1.0 - pi;
    }
    groups
        .values()
        .map(|&(w, b, g, pb, pg)| {
            let (f1, f0) = class_shares(b, g, tb, tg);
            let implied = ((pb / eb) / (pg / eg)).ln();
            (f1 - f0) * (w - implied)
        })
        .sum()
}

/// Greedy forward selection: add the candidate with the highest MIV against
/// the current model until the best MIV drops below `min_miv`. Ties go to the
/// name that sorts first.
pub fn forward_select_miv(
    candidates: &[(String, Vec<f64>)],
    y: &[u8],
    min_miv: f64,
    cfg: &LogisticConfig,
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("no candidate variables".into()));
    }
    let n = y.len();
    let ybar = y.iter().map(|&v| f64::from(v)).sum::<f64>() / n as f64;
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| candidates[a].0.cmp(&candidates[b].0));

    let mut p = vec![ybar; n];
    let mut selected: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    let mut fit = None;
    let mut stopping_miv = None;

    loop {
        let mut scores = Vec::new();
        let mut best: Option<(usize, f64)> = None;
        for &c in &order {
            if selected.contains(&c) {
                continue;
            }
            let miv = marginal_information_value(&candidates[c].1, y, &p);
            scores.push((candidates[c].0.clone(), miv));
            if best.map_or(true, |(_, m)| miv > m) {
                best = Some((c, miv));
            }
        }
        let Some((c, miv)) = best else { break };
        if miv.is_nan() || miv < min_miv {
            stopping_miv = Some(miv);
            break;
        }
        let mut trial = selected.clone();
        trial.push(c);
        let columns: Vec<Vec<f64>> = trial.iter().map(|&i| candidates[i].1.clone()).collect();
        let names: Vec<String> = trial.iter().map(|&i| candidates[i].0.clone()).collect();
        let f = match fit_logistic(&columns, &names, y, cfg) {
            Ok(f) => f,
            // a candidate collinear with the current model adds nothing
            Err(Error::Collinear(_)) => {
                order.retain(|&i| i != c);
                continue;
            }
            Err(e) => return Err(e),
        };
        p = (0..n)
            .map(|i| {
                let x: Vec<f64> = columns.iter().map(|col| col[i]).collect();
                f.predict_proba(&x)
            })
            .collect();
        selected = trial;
        trace.push(MivStep {
            variable: candidates[c].0.clone(),
            miv,
            candidates: scores,
        });
        fit = Some(f);
    }

    Ok(Selection {
        selected: selected.iter().map(|&i| candidates[i].0.clone()).collect(),
        trace,
        stopping_miv,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::woe::information_value_of_column;

    fn woe_col(groups: &[(f64, u64, u64)]) -> (Vec<f64>, Vec<u8>) {
        let mut w = Vec::new();
        let mut y = Vec::new();
        for &(v, bad, good) in groups {
            for _ in 0..bad {
                w.push(v);
                y.push(1);
            }
            for _ in 0..good {
                w.push(v);
                y.push(0);
            }
        }
        (w, y)
    }

    #[test]
    fn null_model_miv_equals_iv() {
        let (w, y) = woe_col(&[(0.8, 30, 10), (-0.4, 10, 30), (0.1, 20, 20)]);
        let ybar = y.iter().map(|&v| f64::from(v)).sum::<f64>() / y.len() as f64;
        let p = vec![ybar; y.len()];
        let miv = marginal_information_value(&w, &y, &p);
        assert!((miv - information_value_of_column(&w, &y)).abs() < 1e-12);
    }

    #[test]
    fn highest_iv_enters_first_and_duplicate_never_selected() {
        // strong: two bins with clear separation; weak: mild separation
        let strong_groups = [(30u64, 10u64), (10, 30)];
        let mut strong = Vec::new();
        let mut weak = Vec::new();
        let mut y = Vec::new();
        let (tb, tg) = (40.0, 40.0);
        for (k, &(bad, good)) in strong_groups.iter().enumerate() {
            let w = ((bad as f64 / tb) / (good as f64 / tg)).ln();
            for i in 0..(bad + good) {
                strong.push(w);
                y.push(u8::from(i < bad));
                // weak variable alternates, correlated only slightly with y
                let wk = if (i + k as u64) % 3 == 0 { 0.2 } else { -0.1 };
                weak.push(wk);
            }
        }
        let cands = vec![
            ("a_weak".to_string(), weak),
            ("b_strong".to_string(), strong.clone()),
            ("c_strong_copy".to_string(), strong),
        ];
        let sel = forward_select_miv(&cands, &y, 0.01, &LogisticConfig::default()).unwrap();
        assert_eq!(sel.selected[0], "b_strong");
        assert!(!sel.selected.contains(&"c_strong_copy".to_string()));
    }

    #[test]
    fn empty_candidates_rejected() {
        assert!(matches!(
            forward_select_miv(&[], &[0, 1], 0.01, &LogisticConfig::default()),
            Err(Error::EmptyInput(_))
        ));
    }
}

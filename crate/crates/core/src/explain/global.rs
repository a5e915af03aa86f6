//! Permutation importance and partial dependence.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean, substitute, Response};
use crate::data::{ColumnKind, Dataset, Row, Value};
use crate::error::{Error, Result};
use crate::metrics::Loss;
use crate::models::spline::quantile;
use crate::scorecard::Scorecard;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceConfig {
    pub repeats: usize,
    pub seed: u64,
    /// Columns to permute; all columns when `None`.
    #[serde(default)]
    pub variables: Option<Vec<String>>,
}

impl Default for ImportanceConfig {
    fn default() -> Self {
        ImportanceConfig {
            repeats: 5,
            seed: 42,
            variables: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub variable: String,
    /// Mean loss over the permuted copies.
    pub permuted_loss: f64,
    /// Mean of `permuted - baseline` over repeats; positive means the model
    /// relies on the variable.
    pub importance: f64,
    /// `baseline - permuted`, the same quantity with the opposite sign.
    pub importance_baseline_minus_permuted: f64,
    pub per_repeat: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub measure: String,
    pub baseline_loss: f64,
    pub repeats: usize,
    pub seed: u64,
    /// Sorted by importance, largest first; ties by name.
    pub entries: Vec<ImportanceEntry>,
}

impl ImportanceReport {
    pub fn rank_of(&self, variable: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.variable == variable)
    }

    pub fn top(&self, k: usize) -> Vec<String> {
        self.entries.iter().take(k).map(|e| e.variable.clone()).collect()
    }
}

/// Loss increase when each variable's column is shuffled. Each variable
/// draws its permutations from its own stream of the seeded generator, so
/// results do not depend on thread scheduling.
pub fn permutation_importance<R: Response + ?Sized>(
    model: &R,
    ds: &Dataset,
    measure: &dyn Loss,
    cfg: &ImportanceConfig,
) -> Result<ImportanceReport> {
    if cfg.repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be at least 1".into()));
    }
    let variables = match &cfg.variables {
        Some(v) => v.clone(),
        None => ds.names().to_vec(),
    };
    let cols = variables
        .iter()
        .map(|v| ds.column_index(v))
        .collect::<Result<Vec<_>>>()?;
    let baseline = measure.loss(&model.respond(ds.names(), ds.rows())?, ds.y())?;

    let mut entries = variables
        .par_iter()
        .zip(cols.par_iter())
        .enumerate()
        .map(|(k, (variable, &col))| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k as u64);
            let original: Vec<Value> = ds.column(col).cloned().collect();
            let mut losses = Vec::with_capacity(cfg.repeats);
            let mut diffs = Vec::with_capacity(cfg.repeats);
            for _ in 0..cfg.repeats {
                let mut perm = original.clone();
                perm.shuffle(&mut rng);
                let rows: Vec<Row> = ds
                    .rows()
                    .iter()
                    .zip(perm)
                    .map(|(r, v)| {
                        let mut r = r.clone();
                        r[col] = v;
                        r
                    })
                    .collect();
                let l = measure.loss(&model.respond(ds.names(), &rows)?, ds.y())?;
                losses.push(l);
                diffs.push(l - baseline);
            }
            let importance = mean(&diffs);
            Ok(ImportanceEntry {
                variable: variable.clone(),
                permuted_loss: mean(&losses),
                importance,
                importance_baseline_minus_permuted: -importance,
                per_repeat: losses,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| {
        b.importance
            .total_cmp(&a.importance)
            .then_with(|| a.variable.cmp(&b.variable))
    });
    Ok(ImportanceReport {
        measure: measure.name().to_string(),
        baseline_loss: baseline,
        repeats: cfg.repeats,
        seed: cfg.seed,
        entries,
    })
}

/// Scorecard importance as the spread of each variable's points, largest
/// first.
pub fn points_range_importance(card: &Scorecard) -> Vec<(String, i64)> {
    let mut out: Vec<(String, i64)> = card
        .variables
        .iter()
        .map(|v| (v.name.clone(), v.points_range()))
        .collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdConfig {
    /// Row cap for the averaging sample; `None` averages over every row.
    pub sample_cap: Option<usize>,
    pub seed: u64,
    pub grid_points: usize,
}

impl Default for PdConfig {
    fn default() -> Self {
        PdConfig {
            sample_cap: Some(1000),
            seed: 42,
            grid_points: 101,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdProfile {
    pub variable: String,
    pub scale: String,
    pub grid: Vec<Value>,
    pub values: Vec<f64>,
    pub n_rows: usize,
}

/// Equally spaced points between the 1st and 99th percentile of the
/// variable's regular values; the sorted levels for a categorical.
pub fn default_grid(ds: &Dataset, variable: &str, n_points: usize) -> Result<Vec<Value>> {
    let j = ds.column_index(variable)?;
    let spec = &ds.columns()[j];
    if spec.kind == ColumnKind::Categorical {
        let levels: BTreeSet<String> = ds.column(j).map(|v| v.to_string()).collect();
        return Ok(levels.into_iter().map(Value::Cat).collect());
    }
    let mut values: Vec<f64> = ds
        .column(j)
        .filter(|v| !spec.is_special(v))
        .filter_map(Value::as_f64)
        .collect();
    if values.is_empty() {
        return Err(Error::EmptyInput(format!("`{variable}` has no regular values")));
    }
    values.sort_by(f64::total_cmp);
    let (lo, hi) = (quantile(&values, 0.01), quantile(&values, 0.99));
    if n_points <= 1 || lo == hi {
        return Ok(vec![Value::Num(lo)]);
    }
    let step = (hi - lo) / (n_points - 1) as f64;
    Ok((0..n_points)
        .map(|i| {
            if i == n_points - 1 {
                Value::Num(hi)
            } else {
                Value::Num(lo + step * i as f64)
            }
        })
        .collect())
}

/// Mean response over the sample with `variable` set to each grid value.
pub fn pd_profile<R: Response + ?Sized>(
    model: &R,
    sample: &Dataset,
    variable: &str,
    grid: &[Value],
) -> Result<PdProfile> {
    if grid.is_empty() {
        return Err(Error::EmptyInput("empty grid".into()));
    }
    let col = sample.column_index(variable)?;
    let values = grid
        .par_iter()
        .map(|z| {
            let rows = substitute(sample.rows(), col, z);
            Ok(mean(&model.respond(sample.names(), &rows)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PdProfile {
        variable: variable.to_string(),
        scale: model.scale().to_string(),
        grid: grid.to_vec(),
        values,
        n_rows: sample.n(),
    })
}

/// Write profiles as `variable,z,value` rows.
pub fn write_profiles_csv<W: std::io::Write>(profiles: &[PdProfile], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["variable", "z", "value"])?;
    for p in profiles {
        for (z, v) in p.grid.iter().zip(&p.values) {
            w.write_record([p.variable.clone(), z.to_string(), v.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io("profile csv", e))?;
    Ok(())
}

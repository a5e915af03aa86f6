//! Ceteris paribus profiles and additive attributions of single predictions.
//!
//! Attributions use the reference-mean value function
//! `v(S) = mean_r f(r with the variables in S set to x's values)`.
//! Breakdown fixes variables one at a time and credits each with the change
//! in `v`; SHAP averages breakdowns over random orderings. Every ordering
//! telescopes from `v({}) = baseline` to `v(all) = f(x)`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean, record_to_row, substitute, Response};
use crate::data::{Dataset, Record, Row, Value};
use crate::error::{Error, Result};

pub const REMAINDER_LABEL: &str = "all other variables";

/// Most variables accepted by the exhaustive-ordering mode.
pub const MAX_EXHAUSTIVE: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpProfile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<String>,
    pub variable: String,
    pub scale: String,
    pub grid: Vec<Value>,
    pub responses: Vec<f64>,
    /// The observation's own value and response.
    pub anchor: (Value, f64),
}

/// Response of `x` with `variable` swept over `grid`.
pub fn cp_profile<R: Response + ?Sized>(model: &R, x: &Record, variable: &str, grid: &[Value]) -> Result<CpProfile> {
    if grid.is_empty() {
        return Err(Error::EmptyInput("empty grid".into()));
    }
    let names: Vec<String> = x.keys().cloned().collect();
    let row: Row = x.values().cloned().collect();
    let col = names
        .iter()
        .position(|n| n == variable)
        .ok_or_else(|| Error::UnknownColumn(variable.to_string()))?;
    let rows: Vec<Row> = grid
        .iter()
        .flat_map(|z| substitute(std::slice::from_ref(&row), col, z))
        .collect();
    let responses = model.respond(&names, &rows)?;
    let anchor = model.respond(&names, std::slice::from_ref(&row))?[0];
    Ok(CpProfile {
        observation: None,
        variable: variable.to_string(),
        scale: model.scale().to_string(),
        grid: grid.to_vec(),
        responses,
        anchor: (row[col].clone(), anchor),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakdownOrder {
    /// Fix the variable with the largest absolute step first, recomputed
    /// from the current partially fixed state.
    Greedy,
    Explicit(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub variable: String,
    pub value: Value,
    pub delta: f64,
    /// Standard deviation of the variable's step over the sampled paths.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spread: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<String>,
    /// `breakdown` or `shap`.
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_paths: Option<usize>,
    pub scale: String,
    /// Mean response over the reference sample.
    pub baseline: f64,
    pub prediction: f64,
    /// Breakdown: in the order variables were fixed. SHAP: by decreasing
    /// absolute contribution.
    pub contributions: Vec<Contribution>,
    /// Variable order of the (first) path.
    pub order: Vec<String>,
}

impl Attribution {
    /// `baseline + sum(delta) - prediction`.
    pub fn residual(&self) -> f64 {
        self.baseline + self.contributions.iter().map(|c| c.delta).sum::<f64>() - self.prediction
    }

    pub fn delta(&self, variable: &str) -> Option<f64> {
        self.contributions
            .iter()
            .find(|c| c.variable == variable)
            .map(|c| c.delta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Value>,
    pub delta: f64,
}

/// The first `k` contributions plus one segment holding the rest.
pub fn top_k(attr: &Attribution, k: usize) -> Vec<Segment> {
    let mut out: Vec<Segment> = attr
        .contributions
        .iter()
        .take(k)
        .map(|c| Segment {
            label: c.variable.clone(),
            value: Some(c.value.clone()),
            delta: c.delta,
        })
        .collect();
    out.push(Segment {
        label: REMAINDER_LABEL.to_string(),
        value: None,
        delta: attr.contributions.iter().skip(k).map(|c| c.delta).sum(),
    });
    out
}

/// Value function over coalitions for one observation.
struct Game<'a, R: ?Sized> {
    model: &'a R,
    names: &'a [String],
    reference: &'a [Row],
    x: Row,
    cols: Vec<usize>,
    fx: f64,
}

impl<'a, R: Response + ?Sized> Game<'a, R> {
    fn new(model: &'a R, x: &Record, reference: &'a Dataset, variables: &[String]) -> Result<Self> {
        if reference.n() == 0 {
            return Err(Error::EmptyInput("empty reference sample".into()));
        }
        let names = reference.names();
        let x = record_to_row(x, names)?;
        let cols = variables
            .iter()
            .map(|v| reference.column_index(v))
            .collect::<Result<Vec<_>>>()?;
        let fx = model.respond(names, std::slice::from_ref(&x))?[0];
        Ok(Game {
            model,
            names,
            reference: reference.rows(),
            x,
            cols,
            fx,
        })
    }

    /// `v(S)` with `fixed[k]` marking membership of variable `k`.
    fn value(&self, fixed: &[bool]) -> Result<f64> {
        if fixed.iter().all(|&f| f) {
            return Ok(self.fx);
        }
        let rows: Vec<Row> = self
            .reference
            .iter()
            .map(|r| {
                let mut r = r.clone();
                for (k, &c) in self.cols.iter().enumerate() {
                    if fixed[k] {
                        r[c] = self.x[c].clone();
                    }
                }
                r
            })
            .collect();
        Ok(mean(&self.model.respond(self.names, &rows)?))
    }

    /// Steps along one ordering of variable indices.
    fn path(&self, order: &[usize], baseline: f64) -> Result<Vec<f64>> {
        let mut fixed = vec![false; self.cols.len()];
        let mut current = baseline;
        let mut deltas = vec![0.0; self.cols.len()];
        for &k in order {
            fixed[k] = true;
            let v = self.value(&fixed)?;
            deltas[k] = v - current;
            current = v;
        }
        Ok(deltas)
    }
}

fn default_variables(reference: &Dataset, variables: Option<&[String]>) -> Vec<String> {
    match variables {
        Some(v) => v.to_vec(),
        None => reference.names().to_vec(),
    }
}

/// Sequential-conditioning attribution of `model(x)` against `reference`.
/// `variables` defaults to every reference column.
pub fn breakdown<R: Response + ?Sized>(
    model: &R,
    x: &Record,
    reference: &Dataset,
    order: &BreakdownOrder,
    variables: Option<&[String]>,
) -> Result<Attribution> {
    let variables = default_variables(reference, variables);
    let game = Game::new(model, x, reference, &variables)?;
    let p = variables.len();
    let baseline = game.value(&vec![false; p])?;

    let sequence: Vec<usize> = match order {
        BreakdownOrder::Explicit(names) => {
            if names.len() != p {
                return Err(Error::InvalidConfig(format!(
                    "explicit order lists {} of {p} variables",
                    names.len()
                )));
            }
            let seq = names
                .iter()
                .map(|n| {
                    variables
                        .iter()
                        .position(|v| v == n)
                        .ok_or_else(|| Error::UnknownColumn(n.clone()))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut check = seq.clone();
            check.sort_unstable();
            check.dedup();
            if check.len() != p {
                return Err(Error::InvalidConfig("explicit order repeats a variable".into()));
            }
            seq
        }
        BreakdownOrder::Greedy => {
            let mut fixed = vec![false; p];
            let mut current = baseline;
            let mut seq = Vec::with_capacity(p);
            for _ in 0..p {
                let remaining: Vec<usize> = (0..p).filter(|&k| !fixed[k]).collect();
                let values = remaining
                    .par_iter()
                    .map(|&k| {
                        let mut trial = fixed.clone();
                        trial[k] = true;
                        game.value(&trial)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut best = 0;
                for i in 1..remaining.len() {
                    if (values[i] - current).abs() > (values[best] - current).abs() {
                        best = i;
                    }
                }
                fixed[remaining[best]] = true;
                current = values[best];
                seq.push(remaining[best]);
            }
            seq
        }
    };

    let deltas = game.path(&sequence, baseline)?;
    let contributions = sequence
        .iter()
        .map(|&k| Contribution {
            variable: variables[k].clone(),
            value: game.x[game.cols[k]].clone(),
            delta: deltas[k],
            spread: None,
        })
        .collect();
    Ok(Attribution {
        observation: None,
        method: "breakdown".to_string(),
        n_paths: None,
        scale: model.scale().to_string(),
        baseline,
        prediction: game.fx,
        contributions,
        order: sequence.iter().map(|&k| variables[k].clone()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapConfig {
    pub n_paths: usize,
    pub seed: u64,
    /// Average over every ordering instead of sampling.
    #[serde(default)]
    pub exhaustive: bool,
}

impl Default for ShapConfig {
    fn default() -> Self {
        ShapConfig {
            n_paths: 25,
            seed: 42,
            exhaustive: false,
        }
    }
}

fn all_orderings(p: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for k in 0..used.len() {
            if !used[k] {
                used[k] = true;
                prefix.push(k);
                go(prefix, used, out);
                prefix.pop();
                used[k] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; p], &mut out);
    out
}

/// Breakdown contributions averaged over variable orderings.
pub fn shap_values<R: Response + ?Sized>(
    model: &R,
    x: &Record,
    reference: &Dataset,
    cfg: &ShapConfig,
    variables: Option<&[String]>,
) -> Result<Attribution> {
    let variables = default_variables(reference, variables);
    let p = variables.len();
    let orderings = if cfg.exhaustive {
        if p > MAX_EXHAUSTIVE {
            return Err(Error::InvalidConfig(format!(
                "exhaustive orderings need at most {MAX_EXHAUSTIVE} variables, got {p}"
            )));
        }
        all_orderings(p)
    } else {
        if cfg.n_paths == 0 {
            return Err(Error::InvalidConfig("n_paths must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        (0..cfg.n_paths)
            .map(|_| {
                let mut o: Vec<usize> = (0..p).collect();
                o.shuffle(&mut rng);
                o
            })
            .collect()
    };
    let game = Game::new(model, x, reference, &variables)?;
    let baseline = game.value(&vec![false; p])?;
    let paths = orderings
        .par_iter()
        .map(|o| game.path(o, baseline))
        .collect::<Result<Vec<_>>>()?;

    let m = paths.len() as f64;
    let mut contributions: Vec<Contribution> = (0..p)
        .map(|k| {
            let d: Vec<f64> = paths.iter().map(|path| path[k]).collect();
            let mu = mean(&d);
            let var = d.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / m;
            Contribution {
                variable: variables[k].clone(),
                value: game.x[game.cols[k]].clone(),
                delta: mu,
                spread: Some(var.sqrt()),
            }
        })
        .collect();
    contributions.sort_by(|a, b| {
        b.delta
            .abs()
            .total_cmp(&a.delta.abs())
            .then_with(|| a.variable.cmp(&b.variable))
    });
    Ok(Attribution {
        observation: None,
        method: "shap".to_string(),
        n_paths: Some(orderings.len()),
        scale: model.scale().to_string(),
        baseline,
        prediction: game.fx,
        contributions,
        order: orderings[0].iter().map(|&k| variables[k].clone()).collect(),
    })
}

//! Gradient boosting on the logistic loss with depth-limited regression
//! trees.
//!
//! Each tree is grown level by level on the current gradients `y - p` using
//! exact greedy variance-reduction splits; leaf values are one Newton step
//! `sum g / sum h` with `h = p (1 - p)`, shrunk by the learning rate.
//! Categorical columns are encoded by their training default rate, which
//! orders the levels by mean target.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{feature_indices, numeric_cell, PredictiveModel};
use crate::data::{ColumnKind, Dataset, Row, Value};
use crate::error::{Error, Result};
use crate::logistic::{logit, sigmoid};

/// Largest tree count accepted, the top of the tuning range used for the
/// boosted challengers.
pub const MAX_TREES: usize = 50_000;

/// Bound on a single leaf's Newton step before shrinkage; keeps nearly pure
/// leaves from producing unbounded values.
const LEAF_CAP: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmConfig {
    pub n_trees: usize,
    pub interaction_depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
    /// Fraction of rows drawn without replacement for each tree.
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbmConfig {
    fn default() -> Self {
        GbmConfig {
            n_trees: 100,
            interaction_depth: 3,
            learning_rate: 0.1,
            min_leaf: 10,
            subsample: 1.0,
            seed: 42,
        }
    }
}

impl GbmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.n_trees > MAX_TREES {
            return Err(Error::InvalidConfig(format!(
                "n_trees must be in [1, {MAX_TREES}], got {}",
                self.n_trees
            )));
        }
        if self.interaction_depth == 0 {
            return Err(Error::InvalidConfig("interaction_depth must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if self.min_leaf == 0 {
            return Err(Error::InvalidConfig("min_leaf must be at least 1".into()));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "subsample must be in (0, 1], got {}",
                self.subsample
            )));
        }
        Ok(())
    }

    /// Named configurations of the boosted challengers (all depth 3).
    /// `gbm_100` has 1000 trees despite its name.
    pub fn preset(name: &str) -> Option<GbmConfig> {
        let n_trees = match name {
            "gbm_100" => 1000,
            "gbm_5000" => 5000,
            "gbm_10000" => 10_000,
            "gbm_15000" => 15_000,
            "gbm_50000" => 50_000,
            _ => return None,
        };
        Some(GbmConfig {
            n_trees,
            interaction_depth: 3,
            ..GbmConfig::default()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureEncoder {
    Numeric,
    /// Level -> training default rate; unseen levels get `unseen`.
    Categorical {
        levels: BTreeMap<String, f64>,
        unseen: f64,
    },
}

impl FeatureEncoder {
    fn encode(&self, variable: &str, v: &Value) -> Result<f64> {
        match self {
            FeatureEncoder::Numeric => numeric_cell(variable, v),
            FeatureEncoder::Categorical { levels, unseen } => {
                Ok(levels.get(&v.to_string()).copied().unwrap_or(*unseen))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmModel {
    pub name: String,
    pub features: Vec<String>,
    pub encoders: Vec<FeatureEncoder>,
    pub config: GbmConfig,
    /// Initial log-odds of default.
    pub init: f64,
    pub trees: Vec<Node>,
    /// Mean training log loss after 0, 1, ..., n_trees trees.
    #[serde(default)]
    pub train_loss: Vec<f64>,
}

impl GbmModel {
    fn encode_rows(&self, names: &[String], rows: &[Row]) -> Result<Vec<Vec<f64>>> {
        let idx = feature_indices(&self.features, names)?;
        rows.iter()
            .map(|r| {
                idx.iter()
                    .zip(&self.encoders)
                    .zip(&self.features)
                    .map(|((&i, enc), name)| enc.encode(name, &r[i]))
                    .collect()
            })
            .collect()
    }

    /// Log-odds of default using the first `n_trees` trees.
    pub fn raw_scores(&self, names: &[String], rows: &[Row], n_trees: usize) -> Result<Vec<f64>> {
        let x = self.encode_rows(names, rows)?;
        Ok(x.iter()
            .map(|xi| {
                self.init
                    + self.config.learning_rate
                        * self.trees[..n_trees.min(self.trees.len())]
                            .iter()
                            .map(|t| t.eval(xi))
                            .sum::<f64>()
            })
            .collect())
    }
}

impl PredictiveModel for GbmModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn features(&self) -> Vec<String> {
        self.features.clone()
    }

    fn predict(&self, names: &[String], rows: &[Row]) -> Result<Vec<f64>> {
        Ok(self
            .raw_scores(names, rows, self.trees.len())?
            .into_iter()
            .map(sigmoid)
            .collect())
    }
}

fn log_loss(f: &[f64], y: &[f64]) -> f64 {
    // -[y f - ln(1 + e^f)]
    let total: f64 = f
        .iter()
        .zip(y)
        .map(|(&fi, &yi)| {
            let sp = if fi > 0.0 {
                fi + (-fi).exp().ln_1p()
            } else {
                fi.exp().ln_1p()
            };
            sp - yi * fi
        })
        .sum();
    total / f.len() as f64
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    /// Row indices sorted by each feature.
    sorted: &'a [Vec<usize>],
    min_leaf: usize,
    depth: usize,
}

#[derive(Clone, Copy)]
struct SplitChoice {
    gain: f64,
    feature: usize,
    threshold: f64,
}

enum Building {
    Leaf(Vec<usize>),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Building>,
        right: Box<Building>,
    },
}

impl Grower<'_> {
    /// Grow one tree over `rows` (a subset of all rows, flagged in
    /// `in_sample`) fitting gradients `g`.
    fn grow(&self, in_sample: &[bool], g: &[f64]) -> Building {
        let n = self.x.len();
        // node id per row for the current level; usize::MAX = not in sample
        let mut node_of: Vec<usize> = in_sample.iter().map(|&s| if s { 0 } else { usize::MAX }).collect();
        let mut members: Vec<Vec<usize>> = vec![(0..n).filter(|&i| in_sample[i]).collect()];
        // per node: Some((left child, right child)) once split
        let mut level_nodes: Vec<usize> = vec![0];
        let mut splits: Vec<Option<(usize, f64, usize, usize)>> = vec![None];

        for _ in 0..self.depth {
            let k = members.len();
            let mut best: Vec<Option<SplitChoice>> = vec![None; k];
            let active: Vec<bool> = (0..k)
                .map(|id| level_nodes.contains(&id) && members[id].len() >= 2 * self.min_leaf)
                .collect();
            if !active.iter().any(|&a| a) {
                break;
            }
            let totals: Vec<(f64, usize)> = members
                .iter()
                .map(|m| (m.iter().map(|&i| g[i]).sum(), m.len()))
                .collect();
            for (f, order) in self.sorted.iter().enumerate() {
                let mut left_sum = vec![0.0; k];
                let mut left_cnt = vec![0usize; k];
                let mut last = vec![f64::NAN; k];
                for &i in order {
                    let id = node_of[i];
                    if id == usize::MAX || !active[id] {
                        continue;
                    }
                    let v = self.x[i][f];
                    let (s, c) = totals[id];
                    let (ls, lc) = (left_sum[id], left_cnt[id]);
                    if lc >= self.min_leaf && c - lc >= self.min_leaf && v > last[id] {
                        let rs = s - ls;
                        let rc = c - lc;
                        let gain = ls * ls / lc as f64 + rs * rs / rc as f64 - s * s / c as f64;
                        let better = match best[id] {
                            None => gain > 0.0,
                            Some(b) => gain > b.gain + 1e-12 * b.gain.abs().max(1e-300),
                        };
                        if better {
                            best[id] = Some(SplitChoice {
                                gain,
                                feature: f,
                                threshold: last[id] + (v - last[id]) / 2.0,
                            });
                        }
                    }
                    left_sum[id] += g[i];
                    left_cnt[id] += 1;
                    last[id] = v;
                }
            }
            let mut next_level = Vec::new();
            for id in level_nodes.clone() {
                let Some(choice) = best[id] else { continue };
                let (l, r) = (members.len(), members.len() + 1);
                let (lm, rm): (Vec<usize>, Vec<usize>) = members[id]
                    .iter()
                    .partition(|&&i| self.x[i][choice.feature] <= choice.threshold);
                for &i in &lm {
                    node_of[i] = l;
                }
                for &i in &rm {
                    node_of[i] = r;
                }
                members.push(lm);
                members.push(rm);
                splits.push(None);
                splits.push(None);
                splits[id] = Some((choice.feature, choice.threshold, l, r));
                next_level.push(l);
                next_level.push(r);
            }
            if next_level.is_empty() {
                break;
            }
            level_nodes = next_level;
        }

        fn assemble(id: usize, splits: &[Option<(usize, f64, usize, usize)>], members: &mut [Vec<usize>]) -> Building {
            match splits[id] {
                None => Building::Leaf(std::mem::take(&mut members[id])),
                Some((feature, threshold, l, r)) => Building::Split {
                    feature,
                    threshold,
                    left: Box::new(assemble(l, splits, members)),
                    right: Box::new(assemble(r, splits, members)),
                },
            }
        }
        assemble(0, &splits, &mut members)
    }
}

fn finish(b: Building, g: &[f64], h: &[f64]) -> Node {
    match b {
        Building::Leaf(rows) => {
            let sg: f64 = rows.iter().map(|&i| g[i]).sum();
            let sh: f64 = rows.iter().map(|&i| h[i]).sum();
            let value = if sh > 0.0 {
                (sg / sh).clamp(-LEAF_CAP, LEAF_CAP)
            } else {
                0.0
            };
            Node::Leaf { value }
        }
        Building::Split {
            feature,
            threshold,
            left,
            right,
        } => Node::Split {
            feature,
            threshold,
            left: Box::new(finish(*left, g, h)),
            right: Box::new(finish(*right, g, h)),
        },
    }
}

/// Fit a boosted model on every column of `train`.
pub fn train_gbm(train: &Dataset, cfg: &GbmConfig) -> Result<GbmModel> {
    cfg.validate()?;
    if !train.has_both_classes() {
        return Err(Error::SingleClass);
    }
    let n = train.n();
    let y: Vec<f64> = train.y().iter().map(|&v| f64::from(v)).collect();
    let ybar = y.iter().sum::<f64>() / n as f64;

    let mut encoders = Vec::new();
    for (j, spec) in train.columns().iter().enumerate() {
        encoders.push(match spec.kind {
            ColumnKind::Numeric => FeatureEncoder::Numeric,
            ColumnKind::Categorical => {
                let mut acc: BTreeMap<String, (f64, f64)> = BTreeMap::new();
                for (v, &t) in train.column(j).zip(train.y()) {
                    let e = acc.entry(v.to_string()).or_insert((0.0, 0.0));
                    e.0 += f64::from(t);
                    e.1 += 1.0;
                }
                FeatureEncoder::Categorical {
                    levels: acc.into_iter().map(|(k, (b, c))| (k, b / c)).collect(),
                    unseen: ybar,
                }
            }
        });
    }
    let features: Vec<String> = train.names().to_vec();
    let x: Vec<Vec<f64>> = train
        .rows()
        .iter()
        .map(|r| {
            r.iter()
                .zip(&encoders)
                .zip(&features)
                .map(|((v, enc), name)| enc.encode(name, v))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let sorted: Vec<Vec<usize>> = (0..features.len())
        .map(|f| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
            idx
        })
        .collect();

    let grower = Grower {
        x: &x,
        sorted: &sorted,
        min_leaf: cfg.min_leaf,
        depth: cfg.interaction_depth,
    };
    let init = logit(ybar);
    let mut f = vec![init; n];
    let mut train_loss = vec![log_loss(&f, &y)];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_sub = ((cfg.subsample * n as f64).round() as usize).clamp(1, n);
    let mut trees = Vec::with_capacity(cfg.n_trees);
    for _ in 0..cfg.n_trees {
        let p: Vec<f64> = f.iter().map(|&v| sigmoid(v)).collect();
        let g: Vec<f64> = y.iter().zip(&p).map(|(yi, pi)| yi - pi).collect();
        let h: Vec<f64> = p.iter().map(|pi| pi * (1.0 - pi)).collect();
        let mut in_sample = vec![n_sub == n; n];
        if n_sub < n {
            for i in sample(&mut rng, n, n_sub) {
                in_sample[i] = true;
            }
        }
        let tree = finish(grower.grow(&in_sample, &g), &g, &h);
        for (fi, xi) in f.iter_mut().zip(&x) {
            *fi += cfg.learning_rate * tree.eval(xi);
        }
        train_loss.push(log_loss(&f, &y));
        trees.push(tree);
    }
    Ok(GbmModel {
        name: "gbm".to_string(),
        features,
        encoders,
        config: *cfg,
        init,
        trees,
        train_loss,
    })
}

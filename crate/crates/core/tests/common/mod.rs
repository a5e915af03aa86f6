//! Brute-force reference implementations and small fixtures shared by the
//! integration tests. Nothing here calls into the engine's numerics.

#![allow(dead_code, clippy::needless_range_loop)]

use creditlens_core::{ColumnSpec, Dataset, PredictiveModel, Result, Row, Value};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Dataset of numeric columns.
pub fn numeric_dataset(names: &[&str], columns: &[Vec<f64>], y: Vec<u8>) -> Dataset {
    let n = y.len();
    let rows: Vec<Row> = (0..n)
        .map(|i| columns.iter().map(|c| Value::Num(c[i])).collect())
        .collect();
    let specs = names.iter().map(|n| ColumnSpec::numeric(*n)).collect();
    Dataset::new(specs, rows, "y", y).unwrap()
}

/// Labels with both classes present.
pub fn random_labels(r: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<u8> {
    loop {
        let y: Vec<u8> = (0..n).map(|_| u8::from(r.random::<f64>() < p)).collect();
        if y.contains(&0) && y.contains(&1) {
            return y;
        }
    }
}

/// Fixture path inside the core crate.
pub fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

// ---------------------------------------------------------------- AUC

/// Share of (bad, good) pairs where the bad scores higher; ties count half.
pub fn auc_pairs(scores: &[f64], y: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for i in 0..scores.len() {
        if y[i] != 1 {
            continue;
        }
        for j in 0..scores.len() {
            if y[j] != 0 {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

// ---------------------------------------------------------------- WOE / IV

/// Per-label WOE and the total IV from raw counting. Labels are bin ids
/// `0..k`; a bin missing one class gets 0.5 added to both of its counts for
/// its WOE.
pub fn woe_iv_by_counting(labels: &[usize], y: &[u8], k: usize) -> (Vec<f64>, f64) {
    let mut bad = vec![0.0; k];
    let mut good = vec![0.0; k];
    for (&l, &t) in labels.iter().zip(y) {
        if t == 1 {
            bad[l] += 1.0;
        } else {
            good[l] += 1.0;
        }
    }
    let tb: f64 = bad.iter().sum();
    let tg: f64 = good.iter().sum();
    let mut woe = vec![0.0; k];
    let mut iv = 0.0;
    for j in 0..k {
        if bad[j] + good[j] == 0.0 {
            continue;
        }
        let (b, g) = if bad[j] == 0.0 || good[j] == 0.0 {
            (bad[j] + 0.5, good[j] + 0.5)
        } else {
            (bad[j], good[j])
        };
        woe[j] = ((b / tb) / (g / tg)).ln();
        iv += (bad[j] / tb - good[j] / tg) * woe[j];
    }
    (woe, iv)
}

/// Pearson chi-square of a 2x2 table from observed and expected cells.
pub fn chi_square_by_hand(table: [[f64; 2]; 2]) -> f64 {
    let n: f64 = table.iter().flatten().sum();
    let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    let mut stat = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let e = rows[i] * cols[j] / n;
            stat += (table[i][j] - e).powi(2) / e;
        }
    }
    stat
}

// ---------------------------------------------------------------- binning

/// IV of a numeric variable cut at `cuts` (bins `(c_i, c_i+1]`) with each
/// special code in its own bin, counted from scratch.
fn iv_of_cuts(x: &[f64], y: &[u8], special: &[f64], cuts: &[f64]) -> f64 {
    let mut sorted = cuts.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len() + 1 + special.len();
    let labels: Vec<usize> = x
        .iter()
        .map(|&v| match special.iter().position(|&s| s == v) {
            Some(s) => sorted.len() + 1 + s,
            None => sorted.iter().filter(|&&c| v > c).count(),
        })
        .collect();
    woe_iv_by_counting(&labels, y, k).1
}

/// Recursive splitting by exhaustive search: at every step all midpoints
/// inside the segment are tried, the whole-variable IV is recounted, the
/// first maximum wins, and the split is kept when it lifts IV by
/// `min_rel_gain`. Returns the sorted interior cuts.
pub fn exhaustive_binning(x: &[f64], y: &[u8], special: &[f64], min_rel_gain: f64, min_share: f64) -> Vec<f64> {
    let min_rows = ((min_share * x.len() as f64).ceil() as usize).max(1);
    let mut distinct: Vec<f64> = x.iter().copied().filter(|v| !special.contains(v)).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut cuts = Vec::new();
    let mut current = iv_of_cuts(x, y, special, &cuts);
    recurse(
        x,
        y,
        special,
        &distinct,
        (f64::NEG_INFINITY, f64::INFINITY),
        min_rows,
        min_rel_gain,
        &mut cuts,
        &mut current,
    );
    cuts.sort_by(f64::total_cmp);
    cuts
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    x: &[f64],
    y: &[u8],
    special: &[f64],
    distinct: &[f64],
    (lo, hi): (f64, f64),
    min_rows: usize,
    min_rel_gain: f64,
    cuts: &mut Vec<f64>,
    current: &mut f64,
) {
    let inside: Vec<f64> = distinct.iter().copied().filter(|&v| lo < v && v <= hi).collect();
    let mut best: Option<(f64, f64)> = None;
    for w in inside.windows(2) {
        let c = w[0] + (w[1] - w[0]) / 2.0;
        let left = x.iter().filter(|&&v| !special.contains(&v) && lo < v && v <= c).count();
        let right = x.iter().filter(|&&v| !special.contains(&v) && c < v && v <= hi).count();
        if left < min_rows || right < min_rows {
            continue;
        }
        let mut trial = cuts.clone();
        trial.push(c);
        let iv = iv_of_cuts(x, y, special, &trial);
        let better = match best {
            None => true,
            Some((_, b)) => iv > b + 1e-12 * b.abs().max(1.0),
        };
        if better {
            best = Some((c, iv));
        }
    }
    let Some((c, iv)) = best else { return };
    let accepted = if *current <= 0.0 {
        iv > 0.0
    } else {
        (iv - *current) / *current >= min_rel_gain
    };
    if !accepted {
        return;
    }
    *current = iv;
    cuts.push(c);
    recurse(x, y, special, distinct, (lo, c), min_rows, min_rel_gain, cuts, current);
    recurse(x, y, special, distinct, (c, hi), min_rows, min_rel_gain, cuts, current);
}

// ---------------------------------------------------------------- logistic

/// Solve `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Plain Newton-Raphson maximum likelihood; returns `[b0, b1, ..]`.
pub fn newton_logistic(columns: &[Vec<f64>], y: &[u8]) -> Vec<f64> {
    let n = y.len();
    let p = columns.len() + 1;
    let design = |i: usize, j: usize| if j == 0 { 1.0 } else { columns[j - 1][i] };
    let mut beta = vec![0.0; p];
    for _ in 0..200 {
        let mut grad = vec![0.0; p];
        let mut hess = vec![vec![0.0; p]; p];
        for i in 0..n {
            let eta: f64 = (0..p).map(|j| beta[j] * design(i, j)).sum();
            let mu = sigmoid(eta);
            let w = mu * (1.0 - mu);
            for j in 0..p {
                grad[j] += (f64::from(y[i]) - mu) * design(i, j);
                for k in 0..p {
                    hess[j][k] += w * design(i, j) * design(i, k);
                }
            }
        }
        let step = gauss_solve(hess, grad);
        for j in 0..p {
            beta[j] += step[j];
        }
        if step.iter().all(|s| s.abs() < 1e-14) {
            break;
        }
    }
    beta
}

// ---------------------------------------------------------------- Shapley

/// Shapley values of `v` over `p` players by the subset formula.
pub fn shapley(p: usize, v: impl Fn(&[bool]) -> f64) -> Vec<f64> {
    let fact = |k: usize| (1..=k).map(|i| i as f64).product::<f64>();
    let mut phi = vec![0.0; p];
    for mask in 0u32..(1 << p) {
        let set: Vec<bool> = (0..p).map(|k| mask & (1 << k) != 0).collect();
        let s = set.iter().filter(|&&b| b).count();
        let base = v(&set);
        for i in 0..p {
            if set[i] {
                continue;
            }
            let mut with = set.clone();
            with[i] = true;
            let w = fact(s) * fact(p - s - 1) / fact(p);
            phi[i] += w * (v(&with) - base);
        }
    }
    phi
}

/// `v(S)`: mean model output over `reference` with the columns in `S` set
/// to `x`, and exactly `f(x)` when every column is fixed.
pub fn coalition_value<M: PredictiveModel + ?Sized>(
    model: &M,
    names: &[String],
    x: &Row,
    reference: &[Row],
    cols: &[usize],
    fixed: &[bool],
) -> f64 {
    if fixed.iter().all(|&f| f) {
        return model.predict(names, std::slice::from_ref(x)).unwrap()[0];
    }
    let rows: Vec<Row> = reference
        .iter()
        .map(|r| {
            let mut r = r.clone();
            for (k, &c) in cols.iter().enumerate() {
                if fixed[k] {
                    r[c] = x[c].clone();
                }
            }
            r
        })
        .collect();
    let out = model.predict(names, &rows).unwrap();
    out.iter().sum::<f64>() / out.len() as f64
}

// ---------------------------------------------------------------- models

/// `sigmoid(b0 + sum b_j x_j + c * x_0 * x_1)`; additive on the logit scale
/// when `c` is zero.
#[derive(Debug, Clone)]
pub struct ToyLogit {
    pub features: Vec<String>,
    pub intercept: f64,
    pub beta: Vec<f64>,
    pub interaction: f64,
}

impl PredictiveModel for ToyLogit {
    fn name(&self) -> &str {
        "toy_logit"
    }

    fn features(&self) -> Vec<String> {
        self.features.clone()
    }

    fn predict(&self, names: &[String], rows: &[Row]) -> Result<Vec<f64>> {
        let idx = creditlens_core::models::feature_indices(&self.features, names)?;
        Ok(rows
            .iter()
            .map(|r| {
                let x: Vec<f64> = idx.iter().map(|&i| r[i].as_f64().unwrap()).collect();
                let mut eta = self.intercept + self.beta.iter().zip(&x).map(|(b, v)| b * v).sum::<f64>();
                if x.len() >= 2 {
                    eta += self.interaction * x[0] * x[1];
                }
                sigmoid(eta)
            })
            .collect())
    }
}

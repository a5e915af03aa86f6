//! Maximum-likelihood logistic regression by iteratively reweighted least
//! squares, with step halving so the log-likelihood never decreases.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    /// Convergence threshold on the max-norm of the score vector divided by
    /// the number of observations.
    pub tol: f64,
    pub max_iter: usize,
    /// Absolute bound on every coefficient; reaching it flags separation.
    pub coef_cap: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            tol: 1e-8,
            max_iter: 50,
            coef_cap: 15.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    /// Perfect or quasi-perfect separation; coefficients are capped and only
    /// meaningful as a warning.
    Separated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub names: Vec<String>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub status: FitStatus,
    pub iterations: usize,
    pub log_likelihood: f64,
    /// Log-likelihood after every accepted step, starting at the initial point.
    pub ll_trace: Vec<f64>,
    pub gradient_norm: f64,
}

impl LogisticFit {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.linear_predictor(x))
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.coefficients[i])
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Compensated (Neumaier) sum of the per-row terms; near the optimum the
/// steps compare log-likelihoods that differ in the last few digits.
fn log_likelihood(eta: &DVector<f64>, y: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for (&e, &t) in eta.iter().zip(y) {
        let term = t * e - softplus(e);
        let s = sum + term;
        comp += if sum.abs() >= term.abs() {
            (sum - s) + term
        } else {
            (term - s) + sum
        };
        sum = s;
    }
    sum + comp
}

fn check_columns(columns: &[Vec<f64>], names: &[String], n: usize) -> Result<()> {
    if columns.len() != names.len() {
        return Err(Error::Schema(format!(
            "{} columns but {} names",
            columns.len(),
            names.len()
        )));
    }
    for (c, name) in columns.iter().zip(names) {
        if c.len() != n {
            return Err(Error::Schema(format!(
                "column `{name}` has {} rows, expected {n}",
                c.len()
            )));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("column `{name}` has non-finite values")));
        }
        if c.iter().all(|&v| v == c[0]) {
            return Err(Error::Collinear(format!("column `{name}` is constant")));
        }
    }
    for i in 0..columns.len() {
        for j in i + 1..columns.len() {
            if columns[i] == columns[j] {
                return Err(Error::Collinear(format!(
                    "columns `{}` and `{}` are identical",
                    names[i], names[j]
                )));
            }
        }
    }
    Ok(())
}

/// Fit `P(y = 1) = sigmoid(b0 + sum_j b_j x_j)` with `columns[j]` holding
/// the values of `x_j`.
pub fn fit_logistic(columns: &[Vec<f64>], names: &[String], y: &[u8], cfg: &LogisticConfig) -> Result<LogisticFit> {
    let n = y.len();
    if n == 0 {
        return Err(Error::EmptyInput("no observations to fit".into()));
    }
    check_columns(columns, names, n)?;
    let p = columns.len() + 1;
    let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { columns[j - 1][i] });
    let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let ybar = yf.iter().sum::<f64>() / n as f64;
    if ybar == 0.0 || ybar == 1.0 {
        return Err(Error::Numeric("target has a single class".into()));
    }

    let mut beta = DVector::zeros(p);
    beta[0] = logit(ybar);
    let mut eta = &x * &beta;
    let mut ll = log_likelihood(&eta, &yf);
    let mut trace = vec![ll];
    let mut status = FitStatus::Converged;
    let mut iterations = 0;

    // mean score per observation, so the tolerance does not scale with n
    let gradient = |eta: &DVector<f64>| -> (DVector<f64>, DVector<f64>) {
        let mu = eta.map(sigmoid);
        let resid = DVector::from_iterator(n, yf.iter().zip(mu.iter()).map(|(t, m)| t - m));
        (x.tr_mul(&resid) / n as f64, mu)
    };

    let mut converged = false;
    loop {
        let (grad, mu) = gradient(&eta);
        if grad.amax() < cfg.tol {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iter {
            break;
        }
        iterations += 1;

        let w = mu.map(|m| m * (1.0 - m));
        let mut xw = x.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= w[i];
        }
        let hessian = x.tr_mul(&xw);
        let chol = hessian
            .cholesky()
            .ok_or_else(|| Error::Collinear("information matrix is not positive definite".into()))?;
        let delta = chol.solve(&grad) * n as f64;
        // Predicted gain below the resolution of the log-likelihood: no
        // step can be verified as an ascent any more.
        let gain = 0.5 * n as f64 * grad.dot(&delta);
        if gain <= 16.0 * f64::EPSILON * ll.abs().max(1.0) {
            converged = true;
            break;
        }

        // Largest step along `delta` that keeps every coefficient within the cap.
        let mut max_step = 1.0f64;
        for j in 0..p {
            let target = beta[j] + delta[j];
            if target.abs() > cfg.coef_cap {
                let bound = cfg.coef_cap.copysign(delta[j]);
                max_step = max_step.min((bound - beta[j]) / delta[j]);
            }
        }
        let capped = max_step < 1.0;

        let mut step = max_step.max(0.0);
        let mut accepted = None;
        for _ in 0..60 {
            let cand = &beta + &delta * step;
            let cand_eta = &x * &cand;
            let cand_ll = log_likelihood(&cand_eta, &yf);
            if cand_ll >= ll {
                accepted = Some((cand, cand_eta, cand_ll));
                break;
            }
            step *= 0.5;
        }
        let Some((b, e, l)) = accepted else {
            // no ascent possible along the Newton direction: numerically at
            // the optimum
            converged = true;
            break;
        };
        beta = b;
        eta = e;
        ll = l;
        trace.push(ll);
        if capped {
            status = FitStatus::Separated;
            converged = true;
            break;
        }
    }

    let (grad, mu) = gradient(&eta);
    if !converged {
        return Err(Error::NotConverged(cfg.max_iter));
    }
    if mu.iter().zip(&yf).all(|(m, t)| (m - t).abs() < 1e-6) {
        status = FitStatus::Separated;
    }
    Ok(LogisticFit {
        names: names.to_vec(),
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        status,
        iterations,
        log_likelihood: ll,
        ll_trace: trace,
        gradient_norm: grad.amax(),
    })
}

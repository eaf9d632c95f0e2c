//! L2-regularised logistic regression fit by iteratively reweighted least
//! squares. Backs the tunable classifier, the reference linear separator for
//! boundary distances, and univariate odds-ratio estimation.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg;

/// A fitted binary logistic model: intercept-first coefficients over the
/// input features, plus Wald standard errors and convergence diagnostics.
#[derive(Debug, Clone)]
pub struct LogisticFit {
    /// `beta[0]` is the intercept; `beta[1..]` the feature coefficients.
    pub beta: Vec<f64>,
    /// Wald standard errors, same layout as `beta`.
    pub se: Vec<f64>,
    pub converged: bool,
    /// Heuristic flag for (quasi-)separated data: the likelihood kept
    /// improving into unbounded coefficients.
    pub separation: bool,
    pub iterations: usize,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Coefficient magnitude beyond which a fit is treated as separated.
const SEPARATION_BETA: f64 = 30.0;

/// Fit `P(y=1|x) = sigmoid(b0 + b . x)` on feature rows (no intercept
/// column; it is added internally). `l2` penalises the non-intercept
/// coefficients; pass `0.0` for a plain maximum-likelihood fit.
pub fn fit_logistic(
    rows: &[Vec<f64>],
    y: &[bool],
    l2: f64,
    max_iter: usize,
    tol: f64,
) -> Result<LogisticFit> {
    if rows.is_empty() || rows.len() != y.len() {
        return Err(crate::Error::invalid(
            "logistic fit needs equally many rows and outcomes",
        ));
    }
    let d = rows[0].len() + 1; // + intercept
    let n = rows.len();
    let xrow = |i: usize, j: usize| -> f64 {
        if j == 0 {
            1.0
        } else {
            rows[i][j - 1]
        }
    };

    let mut beta = vec![0.0; d];
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        // Gradient and Hessian of the penalised log-likelihood.
        let mut grad = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        for i in 0..n {
            let mut z = 0.0;
            for j in 0..d {
                z += beta[j] * xrow(i, j);
            }
            let p = sigmoid(z);
            let w = (p * (1.0 - p)).max(1e-10);
            let r = if y[i] { 1.0 } else { 0.0 } - p;
            for j in 0..d {
                grad[j] += r * xrow(i, j);
                for l in j..d {
                    hess[j * d + l] += w * xrow(i, j) * xrow(i, l);
                }
            }
        }
        for j in 1..d {
            grad[j] -= l2 * beta[j];
            hess[j * d + j] += l2;
        }
        // Mirror the upper triangle and add a whisper of ridge for stability.
        for j in 0..d {
            hess[j * d + j] += 1e-10;
            for l in 0..j {
                hess[j * d + l] = hess[l * d + j];
            }
        }
        let step = linalg::solve_spd(&hess, d, &grad)?;
        let mut max_delta: f64 = 0.0;
        for j in 0..d {
            beta[j] += step[j];
            max_delta = max_delta.max(step[j].abs());
        }
        if max_delta < tol {
            converged = true;
            break;
        }
    }

    let separation = beta.iter().skip(1).any(|b| b.abs() > SEPARATION_BETA) || !converged;

    // Wald standard errors from the observed information at the solution.
    let mut hess = vec![0.0; d * d];
    for i in 0..n {
        let mut z = 0.0;
        for j in 0..d {
            z += beta[j] * xrow(i, j);
        }
        let p = sigmoid(z);
        let w = (p * (1.0 - p)).max(1e-10);
        for j in 0..d {
            for l in j..d {
                hess[j * d + l] += w * xrow(i, j) * xrow(i, l);
            }
        }
    }
    for j in 1..d {
        hess[j * d + j] += l2;
    }
    for j in 0..d {
        hess[j * d + j] += 1e-10;
        for l in 0..j {
            hess[j * d + l] = hess[l * d + j];
        }
    }
    let se = match linalg::invert_spd(&hess, d) {
        Ok(inv) => (0..d).map(|j| inv[j * d + j].max(0.0).sqrt()).collect(),
        Err(_) => vec![f64::NAN; d],
    };

    Ok(LogisticFit {
        beta,
        se,
        converged,
        separation,
        iterations,
    })
}

/// A linear decision function `w . x + b` in the scaled feature space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearModel {
    pub w: Vec<f64>,
    pub b: f64,
}

impl LinearModel {
    pub fn from_fit(fit: &LogisticFit) -> LinearModel {
        LinearModel {
            w: fit.beta[1..].to_vec(),
            b: fit.beta[0],
        }
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.b + self.w.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn prob(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision(x))
    }

    pub fn weight_norm(&self) -> f64 {
        self.w.iter().map(|w| w * w).sum::<f64>().sqrt()
    }
}

//! Gaussian naive Bayes over the scaled feature space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fitted Gaussian naive Bayes state: per-class priors, feature means and
/// smoothed variances in the scaled feature space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianNbBackend {
    pub priors: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub vars: Vec<Vec<f64>>,
}

impl GaussianNbBackend {
    /// Fit on scaled rows. `smoothing` is the fraction of the largest
    /// per-feature variance added to every class variance.
    pub fn fit(rows: &[Vec<f64>], labels: &[usize], n_classes: usize, smoothing: f64) -> Result<Self> {
        if rows.is_empty() || rows.len() != labels.len() {
            return Err(Error::invalid("naive Bayes needs matching rows and labels"));
        }
        let d = rows[0].len();
        let mut counts = vec![0usize; n_classes];
        let mut means = vec![vec![0.0; d]; n_classes];
        for (row, &c) in rows.iter().zip(labels) {
            counts[c] += 1;
            for j in 0..d {
                means[c][j] += row[j];
            }
        }
        for c in 0..n_classes {
            if counts[c] > 0 {
                let n = counts[c] as f64;
                means[c].iter_mut().for_each(|m| *m /= n);
            }
        }
        let mut vars = vec![vec![0.0; d]; n_classes];
        for (row, &c) in rows.iter().zip(labels) {
            for j in 0..d {
                let diff = row[j] - means[c][j];
                vars[c][j] += diff * diff;
            }
        }
        let mut max_var: f64 = 0.0;
        for c in 0..n_classes {
            if counts[c] > 0 {
                let n = counts[c] as f64;
                for j in 0..d {
                    vars[c][j] /= n;
                    max_var = max_var.max(vars[c][j]);
                }
            }
        }
        let floor = (smoothing * max_var).max(1e-9);
        for c in 0..n_classes {
            for j in 0..d {
                vars[c][j] += floor;
            }
        }
        let total: f64 = counts.iter().sum::<usize>() as f64;
        let priors = counts.iter().map(|&c| c as f64 / total).collect();
        Ok(GaussianNbBackend { priors, means, vars })
    }

    /// Posterior class probabilities for one scaled row.
    pub fn predict_proba(&self, scaled: &[f64]) -> Vec<f64> {
        let n_classes = self.priors.len();
        let mut logp = vec![f64::NEG_INFINITY; n_classes];
        for c in 0..n_classes {
            if self.priors[c] <= 0.0 {
                continue;
            }
            let mut ll = self.priors[c].ln();
            for j in 0..scaled.len() {
                let var = self.vars[c][j];
                let diff = scaled[j] - self.means[c][j];
                ll += -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + diff * diff / var);
            }
            logp[c] = ll;
        }
        // Log-sum-exp normalisation.
        let max = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = logp.iter().map(|&l| (l - max).exp()).collect();
        let sum: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= sum);
        probs
    }
}

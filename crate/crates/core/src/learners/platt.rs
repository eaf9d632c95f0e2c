//! Platt scaling: map raw classifier scores to calibrated probabilities via
//! a sigmoid whose parameters are fit by regularised maximum likelihood
//! (the regularisation being the classic smoothed target values).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fitted sigmoid `P(y=1|s) = 1 / (1 + exp(a*s + b))`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlattScaler {
    pub a: f64,
    pub b: f64,
}

impl PlattScaler {
    pub fn prob(&self, score: f64) -> f64 {
        let z = self.a * score + self.b;
        if z >= 0.0 {
            (-z).exp() / (1.0 + (-z).exp())
        } else {
            1.0 / (1.0 + z.exp())
        }
    }
}

/// Fit the scaler on scores and binary labels by Newton iteration on the
/// cross-entropy against smoothed targets `(n_pos+1)/(n_pos+2)` and
/// `1/(n_neg+2)`.
pub fn platt_scale(scores: &[f64], labels: &[bool]) -> Result<PlattScaler> {
    if scores.is_empty() || scores.len() != labels.len() {
        return Err(Error::invalid("platt scaling needs matching scores and labels"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return Err(Error::OneClassOutcome("platt scaling".into()));
    }
    let t_pos = (n_pos + 1.0) / (n_pos + 2.0);
    let t_neg = 1.0 / (n_neg + 2.0);
    let targets: Vec<f64> = labels.iter().map(|&l| if l { t_pos } else { t_neg }).collect();

    let mut a = 0.0;
    let mut b = ((n_neg + 1.0) / (n_pos + 1.0)).ln();
    for _ in 0..100 {
        // Gradient and Hessian of the NLL w.r.t. (a, b).
        let (mut ga, mut gb) = (0.0, 0.0);
        let (mut haa, mut hab, mut hbb) = (1e-12, 0.0, 1e-12);
        for (&s, &t) in scores.iter().zip(&targets) {
            let p = PlattScaler { a, b }.prob(s);
            // dNLL/dz with z = a*s + b is (t - p).
            let g = t - p;
            let w = (p * (1.0 - p)).max(1e-12);
            ga += g * s;
            gb += g;
            haa += w * s * s;
            hab += w * s;
            hbb += w;
        }
        let det = haa * hbb - hab * hab;
        if det.abs() < 1e-300 {
            break;
        }
        let da = (hbb * ga - hab * gb) / det;
        let db = (haa * gb - hab * ga) / det;
        a -= da;
        b -= db;
        if da.abs().max(db.abs()) < 1e-10 {
            break;
        }
    }
    Ok(PlattScaler { a, b })
}

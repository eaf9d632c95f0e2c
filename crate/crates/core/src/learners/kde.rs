//! Gaussian kernel density estimation, univariate and product-kernel
//! multivariate, plus per-class conditional density tables.

use serde::{Deserialize, Serialize};

use crate::data::{FeatureKind, LabelledDataset};
use crate::error::{Error, Result};

/// Numerical floor for bandwidths so degenerate samples stay usable.
pub const BANDWIDTH_FLOOR: f64 = 1e-6;

const LN_2PI: f64 = 1.8378770664093453; // ln(2*pi)

fn normal_pdf_std(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Silverman's rule-of-thumb bandwidth:
/// `0.9 * min(stdev, IQR / 1.34) * n^(-1/5)`, floored for degenerate data.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return BANDWIDTH_FLOOR;
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0);
    let sd = var.sqrt();

    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let quantile = |p: f64| -> f64 {
        let h = (nf - 1.0) * p;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    };
    let iqr = quantile(0.75) - quantile(0.25);

    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    (0.9 * spread * nf.powf(-0.2)).max(BANDWIDTH_FLOOR)
}

/// A fitted univariate Gaussian KDE.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Kde1d {
    values: Vec<f64>,
    bandwidth: f64,
}

impl Kde1d {
    /// Fit on sample values with Silverman's bandwidth.
    pub fn fit(values: &[f64]) -> Result<Self> {
        Self::fit_with_bandwidth(values, silverman_bandwidth(values))
    }

    pub fn fit_with_bandwidth(values: &[f64], bandwidth: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("cannot fit a density on zero samples"));
        }
        if bandwidth <= 0.0 || !bandwidth.is_finite() {
            return Err(Error::invalid(format!("bandwidth must be positive, got {bandwidth}")));
        }
        Ok(Kde1d {
            values: values.to_vec(),
            bandwidth,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Density at `x`: `1/(n h) * sum_i phi((x - v_i)/h)`.
    pub fn density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let sum: f64 = self
            .values
            .iter()
            .map(|&v| normal_pdf_std((x - v) / h))
            .sum();
        sum / (self.values.len() as f64 * h)
    }
}

/// Multivariate Gaussian product-kernel density around a query point.
///
/// The query itself always contributes one kernel term, and the averaging
/// denominator counts it: with `n` reference points the density is
///
/// ```text
/// p(x) = 1/(n+1) * [ sum_i Kh(points_i - x) + Kh(0) ]
/// ```
///
/// where `Kh` is the isotropic Gaussian kernel with width `h` per dimension.
/// For a single reference point located exactly at `x` this reduces to
/// `(2*pi)^(-N/2) / h^N`.
pub fn kde_density(points: &[Vec<f64>], x: &[f64], h: f64) -> Result<f64> {
    let hs = vec![h; x.len()];
    kde_density_diag(points, x, &hs)
}

/// [`kde_density`] with an individual bandwidth per dimension.
pub fn kde_density_diag(points: &[Vec<f64>], x: &[f64], hs: &[f64]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::invalid("density needs a non-empty reference subset"));
    }
    if hs.len() != x.len() {
        return Err(Error::invalid("one bandwidth per dimension required"));
    }
    if hs.iter().any(|&h| h <= 0.0 || !h.is_finite()) {
        return Err(Error::invalid("bandwidths must be positive and finite"));
    }
    let n_dim = x.len() as f64;
    let log_norm: f64 = -0.5 * n_dim * LN_2PI - hs.iter().map(|h| h.ln()).sum::<f64>();
    let kernel = |p: &[f64]| -> f64 {
        let q: f64 = p
            .iter()
            .zip(x)
            .zip(hs)
            .map(|((&pv, &xv), &h)| {
                let u = (pv - xv) / h;
                u * u
            })
            .sum();
        (log_norm - 0.5 * q).exp()
    };
    let mut sum = kernel(x); // self term, Kh(0)
    for p in points {
        if p.len() != x.len() {
            return Err(Error::invalid("reference point dimension mismatch"));
        }
        sum += kernel(p);
    }
    Ok(sum / (points.len() as f64 + 1.0))
}

/// Per-class, per-feature conditional densities fitted on a training set:
/// univariate Gaussian KDEs for continuous/ordinal features, category
/// frequencies for nominal ones. Backs the evidence-conflict score and
/// class log-likelihoods.
#[derive(Debug, Clone)]
pub struct ClassDensityModel {
    kinds: Vec<FeatureKind>,
    /// `[class][feature]` KDE for numeric features.
    kdes: Vec<Vec<Option<Kde1d>>>,
    /// `[class][feature]` category counts for nominal features.
    cat_counts: Vec<Vec<Vec<usize>>>,
    class_sizes: Vec<usize>,
    n_categories: Vec<usize>,
}

/// A conditional density value plus bookkeeping flags.
#[derive(Debug, Clone, Copy)]
pub struct DensityValue {
    pub value: f64,
    /// The raw value was exactly zero (empty category or deep underflow).
    pub zero: bool,
}

impl ClassDensityModel {
    /// Fit on the given rows of `ds` (typically a training fold).
    pub fn fit(ds: &LabelledDataset, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset {
                detail: " (density model needs training rows)".into(),
            });
        }
        let n_feat = ds.n_features();
        let n_classes = ds.n_classes();
        let kinds: Vec<FeatureKind> = ds.schema.features.iter().map(|f| f.kind).collect();
        let n_categories: Vec<usize> = (0..n_feat).map(|j| ds.categories(j).len()).collect();

        let mut kdes: Vec<Vec<Option<Kde1d>>> = vec![Vec::new(); n_classes];
        let mut cat_counts: Vec<Vec<Vec<usize>>> = vec![Vec::new(); n_classes];
        let mut class_sizes = vec![0usize; n_classes];
        for &i in indices {
            class_sizes[ds.label(i)] += 1;
        }

        for c in 0..n_classes {
            let members: Vec<usize> = indices.iter().copied().filter(|&i| ds.label(i) == c).collect();
            for j in 0..n_feat {
                match kinds[j] {
                    FeatureKind::Nominal => {
                        let mut counts = vec![0usize; n_categories[j].max(1)];
                        for &i in &members {
                            counts[ds.row(i)[j] as usize] += 1;
                        }
                        cat_counts[c].push(counts);
                        kdes[c].push(None);
                    }
                    _ => {
                        let vals: Vec<f64> = members.iter().map(|&i| ds.row(i)[j]).collect();
                        let kde = if vals.is_empty() { None } else { Some(Kde1d::fit(&vals)?) };
                        kdes[c].push(kde);
                        cat_counts[c].push(Vec::new());
                    }
                }
            }
        }
        Ok(ClassDensityModel {
            kinds,
            kdes,
            cat_counts,
            class_sizes,
            n_categories,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.class_sizes.len()
    }

    pub fn class_size(&self, c: usize) -> usize {
        self.class_sizes[c]
    }

    /// Raw conditional density/frequency of feature `j` taking value `v`
    /// under class `c`. Frequencies are unsmoothed; a class without members
    /// yields zero.
    pub fn density(&self, c: usize, j: usize, v: f64) -> DensityValue {
        match self.kinds[j] {
            FeatureKind::Nominal => {
                let total = self.class_sizes[c];
                if total == 0 {
                    return DensityValue { value: 0.0, zero: true };
                }
                let counts = &self.cat_counts[c][j];
                let code = v as usize;
                let count = counts.get(code).copied().unwrap_or(0);
                DensityValue {
                    value: count as f64 / total as f64,
                    zero: count == 0,
                }
            }
            _ => match &self.kdes[c][j] {
                Some(kde) => {
                    let d = kde.density(v);
                    DensityValue {
                        value: d,
                        zero: d <= 0.0,
                    }
                }
                None => DensityValue { value: 0.0, zero: true },
            },
        }
    }

    /// Log-likelihood of a full row under class `c`, summed over features in
    /// log space. Zero-probability categories fall back to a Laplace floor
    /// (`alpha = 1`), and vanished continuous densities to a hard floor;
    /// either sets the `floored` flag.
    pub fn log_likelihood(&self, row: &[f64], c: usize) -> (f64, bool) {
        let mut total = 0.0;
        let mut floored = false;
        for j in 0..self.kinds.len() {
            let p = match self.kinds[j] {
                FeatureKind::Nominal => {
                    let size = self.class_sizes[c];
                    let k = self.n_categories[j].max(1);
                    let counts = &self.cat_counts[c][j];
                    let count = counts.get(row[j] as usize).copied().unwrap_or(0);
                    if count == 0 || size == 0 {
                        floored = true;
                        1.0 / (size as f64 + k as f64)
                    } else {
                        count as f64 / size as f64
                    }
                }
                _ => {
                    let d = self.density(c, j, row[j]).value;
                    if d < 1e-300 {
                        floored = true;
                        1e-300
                    } else {
                        d
                    }
                }
            };
            total += p.ln();
        }
        (total, floored)
    }
}

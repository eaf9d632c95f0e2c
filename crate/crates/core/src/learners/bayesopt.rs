//! Sequential model-based optimisation: a Gaussian-process surrogate with a
//! Matérn-5/2 kernel and expected improvement, after a short random warm-up.
//! Used for classifier hyper-parameter search and estimator weight tuning.

use rand::Rng;

use crate::error::Result;
use crate::linalg;
use crate::seed::Seed;

/// One dimension of a search space.
#[derive(Debug, Clone)]
pub enum ParamDomain {
    Real { lo: f64, hi: f64, log: bool },
    Int { lo: i64, hi: i64 },
}

/// A named box of parameters to search over.
#[derive(Debug, Clone)]
pub struct SearchSpace {
    pub dims: Vec<(String, ParamDomain)>,
}

impl SearchSpace {
    pub fn new(dims: Vec<(&str, ParamDomain)>) -> Self {
        SearchSpace {
            dims: dims.into_iter().map(|(n, d)| (n.to_string(), d)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    /// Decode a unit-cube point into concrete parameter values.
    pub fn decode(&self, unit: &[f64]) -> Vec<ParamValue> {
        self.dims
            .iter()
            .zip(unit)
            .map(|((_, dom), &u)| {
                let u = u.clamp(0.0, 1.0);
                match dom {
                    ParamDomain::Real { lo, hi, log } => {
                        let v = if *log {
                            (lo.ln() + u * (hi.ln() - lo.ln())).exp()
                        } else {
                            lo + u * (hi - lo)
                        };
                        ParamValue::Real(v)
                    }
                    ParamDomain::Int { lo, hi } => {
                        let span = (hi - lo + 1) as f64;
                        let v = lo + (u * span).floor() as i64;
                        ParamValue::Int((v).min(*hi).max(*lo))
                    }
                }
            })
            .collect()
    }
}

/// A concrete parameter setting.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Real(f64),
    Int(i64),
}

impl ParamValue {
    pub fn as_f64(&self) -> f64 {
        match self {
            ParamValue::Real(v) => *v,
            ParamValue::Int(v) => *v as f64,
        }
    }

    pub fn as_usize(&self) -> usize {
        match self {
            ParamValue::Real(v) => *v as usize,
            ParamValue::Int(v) => *v as usize,
        }
    }
}

/// Result of an optimisation run.
#[derive(Debug, Clone)]
pub struct Optimum {
    pub params: Vec<ParamValue>,
    pub score: f64,
    pub evaluations: usize,
}

const WARMUP: usize = 10;
const NOISE: f64 = 1e-6;
const XI: f64 = 0.01;

/// Maximise `objective` over the space with `budget` total evaluations.
///
/// The first `min(10, budget)` points are random; afterwards each point is
/// chosen by maximising expected improvement under a GP surrogate over a
/// seeded candidate set. A budget of 1 evaluates a single random sample and
/// returns it without fitting a surrogate. Deterministic given the seed.
pub fn maximize<F>(space: &SearchSpace, budget: usize, seed: Seed, mut objective: F) -> Result<Optimum>
where
    F: FnMut(&[ParamValue]) -> Result<f64>,
{
    if budget == 0 {
        return Err(crate::Error::invalid("optimisation budget must be at least 1"));
    }
    if space.is_empty() {
        let score = objective(&[])?;
        return Ok(Optimum {
            params: Vec::new(),
            score,
            evaluations: 1,
        });
    }
    let d = space.len();
    let mut rng = seed.rng();
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(budget);
    let mut ys: Vec<f64> = Vec::with_capacity(budget);
    let warmup = WARMUP.min(budget);

    for step in 0..budget {
        let unit = if step < warmup {
            (0..d).map(|_| rng.gen::<f64>()).collect::<Vec<f64>>()
        } else {
            propose(&xs, &ys, d, &mut rng)
        };
        let params = space.decode(&unit);
        let y = objective(&params)?;
        xs.push(unit);
        ys.push(y.max(f64::MIN / 4.0)); // keep NaN/-inf out of the surrogate
        if !y.is_finite() {
            *ys.last_mut().unwrap() = -1e12;
        }
    }

    let mut best = 0;
    for i in 1..ys.len() {
        if ys[i] > ys[best] {
            best = i;
        }
    }
    Ok(Optimum {
        params: space.decode(&xs[best]),
        score: ys[best],
        evaluations: budget,
    })
}

fn matern52(r: f64, ell: f64) -> f64 {
    let s = 5.0f64.sqrt() * r / ell;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Pick the next unit-cube point by expected improvement under a GP fit to
/// the observations so far. Falls back to random sampling when the GP
/// cannot be fit (degenerate observations).
fn propose(xs: &[Vec<f64>], ys: &[f64], d: usize, rng: &mut impl Rng) -> Vec<f64> {
    let n = xs.len();
    let fallback = |rng: &mut dyn FnMut() -> f64| (0..d).map(|_| rng()).collect::<Vec<f64>>();

    // Normalise observations.
    let mean = ys.iter().sum::<f64>() / n as f64;
    let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n as f64;
    if var <= 0.0 || !var.is_finite() {
        return fallback(&mut || rng.gen());
    }
    let sd = var.sqrt();
    let yn: Vec<f64> = ys.iter().map(|y| (y - mean) / sd).collect();

    // Length scale: median pairwise distance, floored.
    let mut dists = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            dists.push(dist(&xs[i], &xs[j]));
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let ell = dists
        .get(dists.len() / 2)
        .copied()
        .unwrap_or(0.5)
        .max(0.05);

    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            k[i * n + j] = matern52(dist(&xs[i], &xs[j]), ell);
        }
        k[i * n + i] += NOISE;
    }
    let chol = match linalg::cholesky(&k, n) {
        Ok(c) => c,
        Err(_) => return fallback(&mut || rng.gen()),
    };
    let alpha = linalg::cholesky_solve(&chol, n, &yn);
    let y_best = yn.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    // Candidate pool: fresh uniform samples plus perturbations of the best
    // observed point.
    let best_idx = (0..n).fold(0, |b, i| if yn[i] > yn[b] { i } else { b });
    let mut candidates: Vec<Vec<f64>> = Vec::with_capacity(200);
    for _ in 0..160 {
        candidates.push((0..d).map(|_| rng.gen::<f64>()).collect());
    }
    for _ in 0..40 {
        let c: Vec<f64> = xs[best_idx]
            .iter()
            .map(|&v| {
                let jitter: f64 = rng.gen::<f64>() * 0.2 - 0.1;
                (v + jitter).clamp(0.0, 1.0)
            })
            .collect();
        candidates.push(c);
    }

    let mut best_cand: Option<(f64, usize)> = None;
    for (ci, cand) in candidates.iter().enumerate() {
        // Skip near-duplicates of evaluated points.
        if xs.iter().any(|x| dist(x, cand) < 1e-9) {
            continue;
        }
        let kstar: Vec<f64> = (0..n).map(|i| matern52(dist(&xs[i], cand), ell)).collect();
        let mu: f64 = kstar.iter().zip(&alpha).map(|(a, b)| a * b).sum();
        let v = linalg::cholesky_solve(&chol, n, &kstar);
        let var = (1.0 + NOISE - kstar.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>()).max(1e-12);
        let sigma = var.sqrt();
        let delta = mu - y_best - XI;
        let z = delta / sigma;
        let ei = delta * crate::evalstats::normal_cdf(z) + sigma * normal_pdf(z);
        match best_cand {
            Some((b, _)) if b >= ei => {}
            _ => best_cand = Some((ei, ci)),
        }
    }
    match best_cand {
        Some((_, ci)) => candidates.swap_remove(ci),
        None => fallback(&mut || rng.gen()),
    }
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

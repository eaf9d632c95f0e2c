//! Statistical evaluation of uncertainty scores against observed
//! misclassification: univariate logistic odds ratios, rank-based AUROC,
//! step-wise AUPRC, Spearman correlation matrices, abstention curves, and
//! an instance filter that spots likely label noise (low class likelihood
//! combined with a minimal minority disjunct or a hostile neighbourhood).

use serde::{Deserialize, Serialize};

use crate::data::{zscore, FeatureSpace, LabelledDataset};
use crate::error::{Error, Result};
use crate::learners::kde::ClassDensityModel;
use crate::learners::knn::NeighbourGraph;
use crate::learners::logistic::fit_logistic;
use crate::learners::tree::{DecisionTree, TreeParams};

/// Cap applied to odds ratios (and their interval ends) when the fit
/// separates perfectly or the estimate is otherwise unstable.
pub const OR_CAP: f64 = 1e3;
/// Lower counterpart of [`OR_CAP`].
pub const OR_FLOOR: f64 = 1e-3;

/// Standard normal cumulative distribution function (absolute error
/// below 1e-6).
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Complementary error function (Chebyshev-fitted; relative error < 1.2e-7).
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398
                                    + t * (1.48851587
                                        + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// Univariate logistic association between a score and a binary flag.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OddsRatioResult {
    /// Odds ratio per standard deviation of the score.
    pub or: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    /// Set when the estimate was capped (perfect separation or a
    /// degenerate score column).
    pub clamped: bool,
}

/// Fit `flags ~ zscore(x)` by maximum likelihood and report the odds
/// ratio with a Wald 95% interval. Perfectly separating scores produce a
/// capped ratio with `clamped` set rather than an error.
pub fn univariate_or(x: &[f64], flags: &[bool]) -> Result<OddsRatioResult> {
    if x.len() != flags.len() || x.is_empty() {
        return Err(Error::invalid("odds ratio needs matching nonempty vectors"));
    }
    if flags.iter().all(|&f| f) || flags.iter().all(|&f| !f) {
        return Err(Error::OneClassOutcome(
            "odds ratio needs both flag values present".to_string(),
        ));
    }
    let z = zscore(x);
    let rows: Vec<Vec<f64>> = z.values.iter().map(|&v| vec![v]).collect();
    let fit = fit_logistic(&rows, flags, 0.0, 100, 1e-8)?;
    let beta = fit.beta[1];
    let se = fit.se[1];
    let mut or = beta.exp();
    let (mut ci_low, mut ci_high, p_value) = if se.is_finite() && se > 0.0 {
        let delta = 1.96 * se;
        let p = 2.0 * (1.0 - normal_cdf((beta / se).abs()));
        ((beta - delta).exp(), (beta + delta).exp(), p.clamp(0.0, 1.0))
    } else {
        (0.0, f64::INFINITY, 1.0)
    };
    let mut clamped = fit.separation || z.degenerate;
    for v in [&mut or, &mut ci_low, &mut ci_high] {
        let capped = v.clamp(OR_FLOOR, OR_CAP);
        if capped != *v || !v.is_finite() {
            *v = if v.is_finite() { capped } else { OR_CAP };
            clamped = true;
        }
    }
    ci_low = ci_low.min(or);
    ci_high = ci_high.max(or);
    Ok(OddsRatioResult {
        or,
        ci_low,
        ci_high,
        p_value,
        clamped,
    })
}

/// Rank-based (Mann–Whitney) AUROC with midrank tie handling.
pub fn auroc(scores: &[f64], flags: &[bool]) -> Result<f64> {
    if scores.len() != flags.len() || scores.is_empty() {
        return Err(Error::invalid("auroc needs matching nonempty vectors"));
    }
    let n_pos = flags.iter().filter(|&&f| f).count();
    let n_neg = flags.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::OneClassOutcome(
            "auroc needs both flag values present".to_string(),
        ));
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(flags)
        .filter(|(_, &f)| f)
        .map(|(&r, _)| r)
        .sum();
    let u = rank_sum - n_pos as f64 * (n_pos as f64 + 1.0) / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Midranks (1-based; ties share the average of their positions).
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mid;
        }
        i = j + 1;
    }
    ranks
}

/// Area under the precision-recall curve and its lift over chance.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AuprcResult {
    pub auprc: f64,
    /// Fraction of positive flags; the random-scorer baseline.
    pub prevalence: f64,
    /// `auprc - prevalence`.
    pub improvement: f64,
}

/// Step-wise (interpolation-free) area under the precision-recall curve.
/// Tied scores are absorbed as a single threshold so the result does not
/// depend on input order.
pub fn auprc(scores: &[f64], flags: &[bool]) -> Result<AuprcResult> {
    if scores.len() != flags.len() || scores.is_empty() {
        return Err(Error::invalid("auprc needs matching nonempty vectors"));
    }
    let n_pos = flags.iter().filter(|&&f| f).count();
    if n_pos == 0 {
        return Err(Error::OneClassOutcome("auprc needs at least one positive".to_string()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut area = 0.0;
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let tp_before = tp;
        for &idx in &order[i..=j] {
            if flags[idx] {
                tp += 1;
            }
            seen += 1;
        }
        let precision = tp as f64 / seen as f64;
        let recall_step = (tp - tp_before) as f64 / n_pos as f64;
        area += precision * recall_step;
        i = j + 1;
    }
    let prevalence = n_pos as f64 / flags.len() as f64;
    Ok(AuprcResult {
        auprc: area,
        prevalence,
        improvement: area - prevalence,
    })
}

/// Spearman rank correlation via midranks. A constant input yields
/// `(0.0, true)` rather than NaN.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<(f64, bool)> {
    if a.len() != b.len() || a.len() < 3 {
        return Err(Error::invalid("spearman needs matching vectors of length >= 3"));
    }
    let ra = midranks(a);
    let rb = midranks(b);
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for i in 0..a.len() {
        let da = ra[i] - mean;
        let db = rb[i] - mean;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if var_a <= 0.0 || var_b <= 0.0 {
        return Ok((0.0, true));
    }
    Ok((cov / (var_a * var_b).sqrt(), false))
}

/// Pairwise Spearman correlations between named columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpearmanMatrix {
    pub names: Vec<String>,
    /// Symmetric with unit diagonal; entries involving a constant column
    /// are zero.
    pub rho: Vec<Vec<f64>>,
    /// Per-column flag: true when the column was constant.
    pub degenerate: Vec<bool>,
}

pub fn spearman_matrix(names: &[&str], columns: &[Vec<f64>]) -> Result<SpearmanMatrix> {
    if names.len() != columns.len() || columns.is_empty() {
        return Err(Error::invalid("spearman matrix needs one name per column"));
    }
    let p = columns.len();
    let mut rho = vec![vec![0.0; p]; p];
    let mut degenerate = vec![false; p];
    for i in 0..p {
        rho[i][i] = 1.0;
        for j in (i + 1)..p {
            let (r, flat) = spearman(&columns[i], &columns[j])?;
            rho[i][j] = r;
            rho[j][i] = r;
            if flat {
                let (_, ci) = spearman(&columns[i], &columns[i]).unwrap_or((0.0, true));
                let (_, cj) = spearman(&columns[j], &columns[j]).unwrap_or((0.0, true));
                degenerate[i] |= ci;
                degenerate[j] |= cj;
            }
        }
    }
    Ok(SpearmanMatrix {
        names: names.iter().map(|s| s.to_string()).collect(),
        rho,
        degenerate,
    })
}

/// Selective-prediction sweep: how the misclassification rate among the
/// retained instances changes as the retention threshold moves through
/// percentiles of the uncertainty distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AbstentionCurve {
    /// Percentile levels, 5 through 95 in steps of 5.
    pub thresholds: Vec<f64>,
    /// Uncertainty value at each percentile.
    pub cutoffs: Vec<f64>,
    /// Misclassified percentage among retained instances.
    pub misclassified_pct: Vec<f64>,
    /// Percentage of instances retained.
    pub retained_pct: Vec<f64>,
}

impl AbstentionCurve {
    /// CSV rendering: `threshold,misclassified_pct,retained_pct`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,misclassified_pct,retained_pct\n");
        for i in 0..self.thresholds.len() {
            out.push_str(&format!(
                "{},{:.6},{:.6}\n",
                self.thresholds[i], self.misclassified_pct[i], self.retained_pct[i]
            ));
        }
        out
    }
}

/// Linear-interpolated percentile of an unsorted sample.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

/// Sweep retention thresholds from the 5th to the 95th percentile of the
/// uncertainty scores, retaining instances at or below each cutoff.
pub fn abstention_curve(uncertainty: &[f64], flags: &[bool]) -> Result<AbstentionCurve> {
    if uncertainty.len() != flags.len() || uncertainty.is_empty() {
        return Err(Error::invalid("abstention curve needs matching nonempty vectors"));
    }
    let mut thresholds = Vec::new();
    let mut cutoffs = Vec::new();
    let mut misclassified_pct = Vec::new();
    let mut retained_pct = Vec::new();
    let n = uncertainty.len() as f64;
    for level in (5..=95).step_by(5) {
        let cutoff = percentile(uncertainty, level as f64);
        let mut kept = 0usize;
        let mut wrong = 0usize;
        for (&u, &f) in uncertainty.iter().zip(flags) {
            if u <= cutoff {
                kept += 1;
                if f {
                    wrong += 1;
                }
            }
        }
        thresholds.push(level as f64);
        cutoffs.push(cutoff);
        misclassified_pct.push(if kept > 0 {
            100.0 * wrong as f64 / kept as f64
        } else {
            0.0
        });
        retained_pct.push(100.0 * kept as f64 / n);
    }
    Ok(AbstentionCurve {
        thresholds,
        cutoffs,
        misclassified_pct,
        retained_pct,
    })
}

/// Log class likelihood of a row under independent per-feature
/// class-conditional densities fitted to `train`; the flag reports
/// whether any zero-frequency category needed its additive floor.
pub fn class_likelihood(train: &LabelledDataset, row: &[f64], class: usize) -> Result<(f64, bool)> {
    let all: Vec<usize> = (0..train.n_instances()).collect();
    let model = ClassDensityModel::fit(train, &all)?;
    Ok(model.log_likelihood(row, class))
}

/// Per-instance verdict of the label-noise filter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsmVerdict {
    /// Same-class fraction of the instance's covering disjunct.
    pub dcp: f64,
    /// Log-likelihood margin of the assigned class over the best rival.
    pub cld: f64,
    /// Normalised disjunct size (0 = minimal disjunct).
    pub ds: f64,
    /// Fraction of the k nearest neighbours with a different label.
    pub kdn: f64,
    pub is_ism: bool,
}

/// Flag instances that look mislabelled: the assigned class is less
/// likely than a rival (`cld < 0`) and the instance either sits alone in
/// a minority disjunct (`ds == 0`, `dcp < 0.5`) or in a neighbourhood
/// dominated by other classes (`kdn > 0.8`). All measures are computed
/// leave-one-out against the full dataset.
pub fn ism_flags(ds: &LabelledDataset, k: usize) -> Result<Vec<IsmVerdict>> {
    let m = ds.n_instances();
    if m < 2 {
        return Err(Error::invalid("label-noise filter needs at least two instances"));
    }
    let all: Vec<usize> = (0..m).collect();
    let space = FeatureSpace::fit(ds, &all)?;
    let scaled = space.matrix(ds, &all);
    let graph = NeighbourGraph::build(&scaled, k.min(m - 1));
    let tree = DecisionTree::grow(
        ds,
        &all,
        TreeParams {
            max_depth: None,
            min_leaf: 1,
        },
    )?;
    let max_leaf = tree.max_leaf_size();
    let density = ClassDensityModel::fit(ds, &all)?;
    let n_classes = ds.n_classes();
    let verdicts = crate::par::map_range(m, |i| {
        let label = ds.label(i);
        let neighbours = &graph.lists[i];
        let kdn = if neighbours.is_empty() {
            0.0
        } else {
            neighbours.iter().filter(|&&j| ds.label(j) != label).count() as f64
                / neighbours.len() as f64
        };
        let members = tree.leaf_members(tree.leaf_for(ds.row(i)));
        let size = members.len();
        let ds_value = if max_leaf > 1 {
            (size.saturating_sub(1)) as f64 / (max_leaf - 1) as f64
        } else {
            0.0
        };
        let dcp = if size > 0 {
            members.iter().filter(|&&j| ds.label(j) == label).count() as f64 / size as f64
        } else {
            0.0
        };
        let (own, _) = density.log_likelihood(ds.row(i), label);
        let mut best_rival = f64::NEG_INFINITY;
        for c in 0..n_classes {
            if c != label {
                let (ll, _) = density.log_likelihood(ds.row(i), c);
                best_rival = best_rival.max(ll);
            }
        }
        let cld = own - best_rival;
        let is_ism = cld < 0.0 && ((ds_value == 0.0 && dcp < 0.5) || kdn > 0.8);
        IsmVerdict {
            dcp,
            cld,
            ds: ds_value,
            kdn,
            is_ism,
        }
    });
    Ok(verdicts)
}

/// Orient a confidence margin (`|p - 0.5|`, higher = more certain) so
/// that higher values mean more likely misclassified, making it
/// comparable with an uncertainty score.
pub fn orient_confidence(margins: &[f64]) -> Vec<f64> {
    margins.iter().map(|&m| 0.5 - m).collect()
}

/// Evaluation of one scoring method against misclassification flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodEval {
    pub name: String,
    pub odds_ratio: OddsRatioResult,
    pub auroc: f64,
    pub auprc: AuprcResult,
}

impl MethodEval {
    pub fn compute(name: &str, scores: &[f64], flags: &[bool]) -> Result<MethodEval> {
        Ok(MethodEval {
            name: name.to_string(),
            odds_ratio: univariate_or(scores, flags)?,
            auroc: auroc(scores, flags)?,
            auprc: auprc(scores, flags)?,
        })
    }
}

/// Full evaluation report: the estimator's scores, optionally a baseline
/// for comparison, meta-feature correlations, and the abstention sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub version: u32,
    pub methods: Vec<MethodEval>,
    pub spearman: Option<SpearmanMatrix>,
    pub abstention: AbstentionCurve,
}

impl EvaluationReport {
    /// Human-readable fixed-width table.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<24} {:>10} {:>18} {:>8} {:>8} {:>8}\n",
            "method", "OR", "95% CI", "p", "AUROC", "AUPRC"
        ));
        for m in &self.methods {
            let ci = format!("[{:.3}, {:.3}]", m.odds_ratio.ci_low, m.odds_ratio.ci_high);
            out.push_str(&format!(
                "{:<24} {:>10.3} {:>18} {:>8.4} {:>8.4} {:>8.4}\n",
                m.name, m.odds_ratio.or, ci, m.odds_ratio.p_value, m.auroc, m.auprc.auprc
            ));
        }
        if let Some(sp) = &self.spearman {
            out.push_str("\nSpearman correlations:\n");
            out.push_str(&format!("{:<8}", ""));
            for n in &sp.names {
                out.push_str(&format!("{:>8}", n));
            }
            out.push('\n');
            for (i, row) in sp.rho.iter().enumerate() {
                out.push_str(&format!("{:<8}", sp.names[i]));
                for v in row {
                    out.push_str(&format!("{:>8.3}", v));
                }
                out.push('\n');
            }
        }
        out.push_str("\nAbstention (threshold pct: misclassified% / retained%):\n");
        for i in 0..self.abstention.thresholds.len() {
            out.push_str(&format!(
                "  {:>4}: {:>6.2} / {:>6.2}\n",
                self.abstention.thresholds[i],
                self.abstention.misclassified_pct[i],
                self.abstention.retained_pct[i]
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LabelledDataset;
    use crate::seed::Seed;
    use rand::Rng;

    #[test]
    fn normal_cdf_matches_tables() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-6);
        assert!((normal_cdf(1.96) - 0.975_002_1).abs() < 1e-6);
        assert!((normal_cdf(-1.0) - 0.158_655_3).abs() < 1e-6);
        assert!((normal_cdf(3.0) - 0.998_650_1).abs() < 1e-6);
    }

    #[test]
    fn auroc_frozen_example() {
        let scores = [0.1, 0.4, 0.35, 0.8];
        let flags = [false, false, true, true];
        assert!((auroc(&scores, &flags).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn auroc_extremes_and_ties() {
        let flags = [false, false, true, true];
        assert!((auroc(&[0.0, 0.1, 0.5, 0.9], &flags).unwrap() - 1.0).abs() < 1e-12);
        assert!((auroc(&[0.3, 0.3, 0.3, 0.3], &flags).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn auroc_matches_pair_counting_oracle() {
        let mut rng = Seed(11).rng();
        for _ in 0..50 {
            let n = 3 + (rng.gen::<u64>() % 40) as usize;
            let scores: Vec<f64> = (0..n).map(|_| (rng.gen::<f64>() * 8.0).round() / 8.0).collect();
            let flags: Vec<bool> = (0..n).map(|_| rng.gen::<bool>()).collect();
            if flags.iter().all(|&f| f) || flags.iter().all(|&f| !f) {
                continue;
            }
            let mut wins = 0.0;
            let mut pairs = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if flags[i] && !flags[j] {
                        pairs += 1.0;
                        if scores[i] > scores[j] {
                            wins += 1.0;
                        } else if scores[i] == scores[j] {
                            wins += 0.5;
                        }
                    }
                }
            }
            let got = auroc(&scores, &flags).unwrap();
            assert!((got - wins / pairs).abs() < 1e-9, "auroc {got} vs {}", wins / pairs);
        }
    }

    #[test]
    fn auroc_flips_under_negation_without_ties() {
        let scores = [0.11, 0.42, 0.35, 0.83, 0.27];
        let flags = [false, true, false, true, true];
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let sum = auroc(&scores, &flags).unwrap() + auroc(&neg, &flags).unwrap();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn auprc_frozen_and_edge_cases() {
        // Positives at ranks 1 and 3: AP = 1*(1/2) + (2/3)*(1/2).
        let scores = [0.9, 0.8, 0.7, 0.6];
        let flags = [true, false, true, false];
        let r = auprc(&scores, &flags).unwrap();
        assert!((r.auprc - (0.5 + 1.0 / 3.0)).abs() < 1e-12);
        assert!((r.improvement - (r.auprc - 0.5)).abs() < 1e-12);
        // Perfect ranking.
        let r = auprc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert!((r.auprc - 1.0).abs() < 1e-12);
        // All tied scores collapse to one threshold: AP = prevalence.
        let r = auprc(&[0.5; 8], &[true, false, false, true, false, false, false, false]).unwrap();
        assert!((r.auprc - 0.25).abs() < 1e-12);
    }

    #[test]
    fn auprc_is_order_invariant_under_ties() {
        let scores = [0.5, 0.5, 0.9, 0.1];
        let a = auprc(&scores, &[true, false, true, false]).unwrap().auprc;
        let b = auprc(&[0.5, 0.5, 0.9, 0.1], &[false, true, true, false]).unwrap().auprc;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn rank_metrics_ignore_monotone_transforms() {
        let scores: [f64; 5] = [0.1, 0.7, 0.3, 0.9, 0.5];
        let flags = [false, true, false, true, true];
        let warped: Vec<f64> = scores.iter().map(|s| (4.0 * s).exp()).collect();
        assert!((auroc(&scores, &flags).unwrap() - auroc(&warped, &flags).unwrap()).abs() < 1e-12);
        assert!(
            (auprc(&scores, &flags).unwrap().auprc - auprc(&warped, &flags).unwrap().auprc).abs()
                < 1e-12
        );
    }

    #[test]
    fn spearman_basics() {
        let a: Vec<f64> = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let cubed: Vec<f64> = a.iter().map(|v| v.powi(3)).collect();
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((spearman(&a, &cubed).unwrap().0 - 1.0).abs() < 1e-12);
        assert!((spearman(&a, &neg).unwrap().0 + 1.0).abs() < 1e-12);
        let (r, flat) = spearman(&a, &[2.0; 5]).unwrap();
        assert_eq!(r, 0.0);
        assert!(flat);
    }

    #[test]
    fn spearman_matches_rank_pearson_oracle() {
        let mut rng = Seed(12).rng();
        for _ in 0..50 {
            let n = 3 + (rng.gen::<u64>() % 30) as usize;
            let a: Vec<f64> = (0..n).map(|_| (rng.gen::<f64>() * 6.0).round()).collect();
            let b: Vec<f64> = (0..n).map(|_| (rng.gen::<f64>() * 6.0).round()).collect();
            let ra = midranks(&a);
            let rb = midranks(&b);
            let mean_a = ra.iter().sum::<f64>() / n as f64;
            let mean_b = rb.iter().sum::<f64>() / n as f64;
            let mut cov = 0.0;
            let mut va = 0.0;
            let mut vb = 0.0;
            for i in 0..n {
                cov += (ra[i] - mean_a) * (rb[i] - mean_b);
                va += (ra[i] - mean_a).powi(2);
                vb += (rb[i] - mean_b).powi(2);
            }
            let (got, flat) = spearman(&a, &b).unwrap();
            if va <= 0.0 || vb <= 0.0 {
                assert!(flat);
            } else {
                assert!((got - cov / (va * vb).sqrt()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn spearman_matrix_shape_and_diagonal() {
        let cols = vec![
            vec![1.0, 2.0, 3.0, 4.0],
            vec![4.0, 3.0, 2.0, 1.0],
            vec![1.0, 1.0, 1.0, 1.0],
        ];
        let m = spearman_matrix(&["a", "b", "c"], &cols).unwrap();
        assert!((m.rho[0][0] - 1.0).abs() < 1e-12);
        assert!((m.rho[0][1] + 1.0).abs() < 1e-12);
        assert_eq!(m.rho[0][2], 0.0);
        assert!(m.degenerate[2]);
        assert!(!m.degenerate[0]);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m.rho[i][j], m.rho[j][i]);
            }
        }
    }

    #[test]
    fn odds_ratio_recovers_planted_effect() {
        // flags ~ Bernoulli(sigmoid(ln 2 * x)) with x standard normal.
        let mut rng = Seed(13).rng();
        let n = 2000;
        let beta = std::f64::consts::LN_2;
        let mut x = Vec::with_capacity(n);
        let mut flags = Vec::with_capacity(n);
        for _ in 0..n {
            let v: f64 = {
                // Box-Muller from two uniforms.
                let u1: f64 = rng.gen::<f64>().max(1e-12);
                let u2: f64 = rng.gen();
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            };
            let p = 1.0 / (1.0 + (-beta * v).exp());
            x.push(v);
            flags.push(rng.gen::<f64>() < p);
        }
        let r = univariate_or(&x, &flags).unwrap();
        assert!(!r.clamped);
        assert!((r.or - 2.0).abs() < 0.3, "or = {}", r.or);
        assert!(r.ci_low <= r.or && r.or <= r.ci_high);
        assert!(r.p_value < 0.01);
    }

    #[test]
    fn odds_ratio_null_keeps_one_in_interval() {
        let mut inside = 0;
        for seed in 0..10u64 {
            let mut rng = Seed(seed).rng();
            let x: Vec<f64> = (0..400).map(|_| rng.gen::<f64>()).collect();
            let flags: Vec<bool> = (0..400).map(|_| rng.gen::<bool>()).collect();
            let r = univariate_or(&x, &flags).unwrap();
            if r.ci_low <= 1.0 && 1.0 <= r.ci_high {
                inside += 1;
            }
        }
        assert!(inside >= 8, "1.0 inside CI for only {inside}/10 null draws");
    }

    #[test]
    fn odds_ratio_clamps_perfect_separation() {
        let x: Vec<f64> = (0..40).map(|i| if i < 20 { 0.0 } else { 1.0 }).collect();
        let flags: Vec<bool> = (0..40).map(|i| i >= 20).collect();
        let r = univariate_or(&x, &flags).unwrap();
        assert!(r.clamped);
        assert!(r.or <= OR_CAP && r.or >= OR_FLOOR);
        assert!(r.ci_low <= r.or && r.or <= r.ci_high);
    }

    #[test]
    fn odds_ratio_rejects_one_class() {
        let x = [0.1, 0.2, 0.3];
        assert!(matches!(
            univariate_or(&x, &[true, true, true]).unwrap_err(),
            Error::OneClassOutcome(_)
        ));
    }

    #[test]
    fn abstention_curve_shapes() {
        let mut rng = Seed(14).rng();
        let n = 500;
        let u: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let flags: Vec<bool> = u.iter().map(|&v| rng.gen::<f64>() < v).collect();
        let c = abstention_curve(&u, &flags).unwrap();
        assert_eq!(c.thresholds.len(), 19);
        for w in c.cutoffs.windows(2) {
            assert!(w[0] <= w[1]);
        }
        for w in c.retained_pct.windows(2) {
            assert!(w[0] <= w[1] + 1e-12);
        }
        let last = *c.retained_pct.last().unwrap();
        assert!((last - 95.0).abs() < 2.0, "retained at 95th pct = {last}");
        // Errors concentrate at high uncertainty, so early thresholds are cleaner.
        assert!(c.misclassified_pct[0] < *c.misclassified_pct.last().unwrap());
    }

    #[test]
    fn abstention_curve_vacuous_flags() {
        let u = vec![0.1, 0.2, 0.3, 0.4, 0.5];
        let flags = vec![false; 5];
        let c = abstention_curve(&u, &flags).unwrap();
        assert!(c.misclassified_pct.iter().all(|&p| p == 0.0));
        let csv = c.to_csv();
        assert!(csv.starts_with("threshold,misclassified_pct,retained_pct"));
        assert_eq!(csv.lines().count(), 20);
    }

    fn two_blob_ds(n_per: usize, seed: u64, flip: &[usize]) -> LabelledDataset {
        let mut rng = Seed(seed).rng();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..(2 * n_per) {
            let class = i / n_per;
            let cx = if class == 0 { 0.0 } else { 5.0 };
            rows.push(vec![
                cx + rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
            ]);
            let mut label = class;
            if flip.contains(&i) {
                label = 1 - label;
            }
            labels.push(if label == 0 { "a" } else { "b" });
        }
        let owned: Vec<&str> = labels.iter().copied().collect();
        LabelledDataset::from_numeric_rows("blobs", &["x", "y"], &rows, &owned).unwrap()
    }

    #[test]
    fn ism_flags_planted_mislabels() {
        // Instances 3 and 47 keep their blob position but the other label.
        let ds = two_blob_ds(40, 21, &[3, 47]);
        let verdicts = ism_flags(&ds, 5).unwrap();
        assert!(verdicts[3].is_ism, "flipped instance 3 not flagged: {:?}", verdicts[3]);
        assert!(verdicts[47].is_ism, "flipped instance 47 not flagged");
        let false_pos = verdicts
            .iter()
            .enumerate()
            .filter(|(i, v)| v.is_ism && *i != 3 && *i != 47)
            .count();
        assert!(false_pos <= 2, "{false_pos} clean instances flagged");
        // Flipped instances sit deep in the other blob: hostile neighbourhood,
        // negative likelihood margin.
        assert!(verdicts[3].kdn > 0.8);
        assert!(verdicts[3].cld < 0.0);
    }

    #[test]
    fn ism_flags_invariant_under_label_renaming() {
        let ds = two_blob_ds(30, 22, &[2]);
        let renamed = {
            let mut rng = Seed(22).rng();
            let mut rows = Vec::new();
            let mut labels = Vec::new();
            for i in 0..60 {
                let class = i / 30;
                let cx = if class == 0 { 0.0 } else { 5.0 };
                rows.push(vec![cx + rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5]);
                let mut label = class;
                if i == 2 {
                    label = 1 - label;
                }
                // "zebra" sorts after "ant": the class codes swap.
                labels.push(if label == 0 { "zebra" } else { "ant" });
            }
            let owned: Vec<&str> = labels.iter().copied().collect();
            LabelledDataset::from_numeric_rows("blobs2", &["x", "y"], &rows, &owned).unwrap()
        };
        let a = ism_flags(&ds, 5).unwrap();
        let b = ism_flags(&renamed, 5).unwrap();
        let fa: Vec<bool> = a.iter().map(|v| v.is_ism).collect();
        let fb: Vec<bool> = b.iter().map(|v| v.is_ism).collect();
        assert_eq!(fa, fb);
    }

    #[test]
    fn ism_clean_centroid_instance_passes() {
        let ds = two_blob_ds(40, 23, &[]);
        let verdicts = ism_flags(&ds, 5).unwrap();
        let flagged = verdicts.iter().filter(|v| v.is_ism).count();
        assert!(flagged <= 2, "{flagged} of 80 clean instances flagged");
    }

    #[test]
    fn class_likelihood_prefers_own_mode() {
        let ds = two_blob_ds(40, 24, &[]);
        let (ll_a, _) = class_likelihood(&ds, &[0.0, 0.0], 0).unwrap();
        let (ll_b, _) = class_likelihood(&ds, &[0.0, 0.0], 1).unwrap();
        assert!(ll_a > ll_b);
    }

    #[test]
    fn orient_confidence_reverses_direction() {
        let margins = vec![0.5, 0.4, 0.1, 0.0];
        let oriented = orient_confidence(&margins);
        for (got, want) in oriented.iter().zip([0.0, 0.1, 0.4, 0.5]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn report_renders_all_sections() {
        let scores = [0.1, 0.8, 0.3, 0.9, 0.2, 0.7, 0.4, 0.6];
        let flags = [false, true, false, true, false, true, false, true];
        let report = EvaluationReport {
            version: crate::FORMAT_VERSION,
            methods: vec![MethodEval::compute("estimator", &scores, &flags).unwrap()],
            spearman: Some(
                spearman_matrix(
                    &["a", "b"],
                    &[scores.to_vec(), scores.iter().map(|s| s * 2.0).collect()],
                )
                .unwrap(),
            ),
            abstention: abstention_curve(&scores, &flags).unwrap(),
        };
        let table = report.render_table();
        assert!(table.contains("estimator"));
        assert!(table.contains("Spearman"));
        assert!(table.contains("Abstention"));
    }
}

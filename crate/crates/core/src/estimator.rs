//! Misclassification-uncertainty estimation by weighted fuzzy
//! clustering.
//!
//! Knowledge-base records are scaled elementwise by per-measure weights
//! and clustered with fuzzy c-means; each cluster carries the
//! misclassification rate of the records it claims. A new instance's
//! uncertainty is the membership-weighted average of those rates. The
//! weights and cluster count are tuned by Bayesian optimisation against
//! the product of odds ratio, ranking power and precision-recall lift on
//! held-out records, and [`nested_cv_run`] wires the whole system into
//! seeded nested cross-validation over a target dataset.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{make_stratified_folds, LabelledDataset};
use crate::error::{Error, Result};
use crate::evalstats::{auprc, auroc, orient_confidence, univariate_or};
use crate::knowledgebase::{KbRecord, KnowledgeBase, Provenance};
use crate::learners::bayesopt::{maximize, ParamDomain, ParamValue, SearchSpace};
use crate::learners::{train_tuned, ClassifierSpec};
use crate::metafeatures::{MetaConfig, MetaContext, MetaFeatureVector};
use crate::seed::Seed;

/// On-disk format version of serialized cluster models.
pub const ESTIMATOR_FORMAT_VERSION: u32 = 1;

/// A fitted weighted fuzzy c-means model with per-cluster
/// misclassification rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyClusterModel {
    pub version: u32,
    /// Cluster centers in the weight-scaled meta-feature space.
    pub centers: Vec<[f64; 7]>,
    pub fuzzifier: f64,
    /// Per-measure scale factors applied before clustering.
    pub weights: [f64; 7],
    /// Misclassification rate of the records each cluster claims under
    /// maximal-membership assignment.
    pub rates: Vec<f64>,
    pub n_clusters: usize,
    /// True when some cluster claimed no records and fell back to the
    /// global rate.
    pub empty_cluster_fallback: bool,
}

impl FuzzyClusterModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("model serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<FuzzyClusterModel> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: FuzzyClusterModel = serde_json::from_str(&text)
            .map_err(|e| Error::MalformedArtifact(format!("cluster model: {e}")))?;
        if model.version != ESTIMATOR_FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: model.version,
                expected: ESTIMATOR_FORMAT_VERSION,
            });
        }
        Ok(model)
    }
}

/// Per-cluster membership degrees: each in [0, 1], summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub values: Vec<f64>,
}

/// Tuning and fitting knobs of the estimation system.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// Inclusive cluster-count search range.
    pub n_clusters: (usize, usize),
    /// Inclusive per-measure weight search range.
    pub weight_range: (f64, f64),
    /// Evaluations of the clustering-parameter search.
    pub bo_budget: usize,
    pub fuzzifier: f64,
    /// Center-shift threshold ending the c-means iteration.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Independent c-means initialisations; best distortion wins.
    pub restarts: usize,
    /// Outer folds of the nested evaluation.
    pub outer_folds: usize,
    /// Folds of each classifier's internal tuning CV.
    pub inner_folds: usize,
    /// Hyper-parameter evaluations per classifier tuning.
    pub model_budget: usize,
    pub meta: MetaConfig,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            n_clusters: (2, 15),
            weight_range: (0.01, 1.0),
            bo_budget: 24,
            fuzzifier: 2.0,
            tolerance: 1e-5,
            max_iterations: 100,
            restarts: 5,
            outer_folds: 5,
            inner_folds: 5,
            model_budget: 16,
            meta: MetaConfig::default(),
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_clusters.0 < 1 || self.n_clusters.0 > self.n_clusters.1 {
            return Err(Error::invalid(format!(
                "cluster range {:?} is empty or starts below 1",
                self.n_clusters
            )));
        }
        if !(self.weight_range.0 > 0.0 && self.weight_range.0 <= self.weight_range.1) {
            return Err(Error::invalid(format!("weight range {:?} is empty or nonpositive", self.weight_range)));
        }
        if self.fuzzifier <= 1.0 {
            return Err(Error::invalid("fuzzifier must exceed 1"));
        }
        if self.tolerance <= 0.0 {
            return Err(Error::invalid("tolerance must be positive"));
        }
        if self.max_iterations == 0 || self.restarts == 0 || self.bo_budget == 0 || self.model_budget == 0 {
            return Err(Error::invalid("iteration, restart and budget counts must be at least 1"));
        }
        if self.outer_folds < 3 {
            return Err(Error::invalid("nested evaluation needs at least 3 outer folds"));
        }
        if self.inner_folds < 2 {
            return Err(Error::invalid("classifier tuning needs at least 2 folds"));
        }
        Ok(())
    }
}

/// Share of correct outcomes missing from a confusion count.
pub fn misclassification_rate(
    true_pos: usize,
    false_pos: usize,
    true_neg: usize,
    false_neg: usize,
) -> Result<f64> {
    let total = true_pos + false_pos + true_neg + false_neg;
    if total == 0 {
        return Err(Error::invalid("confusion counts are all zero"));
    }
    Ok(1.0 - (true_pos + true_neg) as f64 / total as f64)
}

// ---------------------------------------------------------------------------
// Fuzzy c-means.

fn weighted_point(meta: &MetaFeatureVector, weights: &[f64; 7]) -> [f64; 7] {
    let mut p = meta.as_array();
    for (v, w) in p.iter_mut().zip(weights) {
        *v *= w;
    }
    p
}

fn sq_dist7(a: &[f64; 7], b: &[f64; 7]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Membership degrees of a weighted-space point against a set of
/// centers. A point exactly on a center is fully that cluster's (lowest
/// index wins when several coincide).
fn memberships_of_point(point: &[f64; 7], centers: &[[f64; 7]], fuzzifier: f64) -> Vec<f64> {
    let d2: Vec<f64> = centers.iter().map(|c| sq_dist7(point, c)).collect();
    if let Some(hit) = d2.iter().position(|&d| d == 0.0) {
        let mut values = vec![0.0; centers.len()];
        values[hit] = 1.0;
        return values;
    }
    // u_i = 1 / Σ_k (d²_i / d²_k)^(1/(m−1)); the classical fuzzifier 2
    // needs no powers at all.
    let exact_two = (fuzzifier - 2.0).abs() < 1e-12;
    let exponent = 1.0 / (fuzzifier - 1.0);
    let values: Vec<f64> = d2
        .iter()
        .map(|&di| {
            let denom: f64 = d2
                .iter()
                .map(|&dk| {
                    let ratio = di / dk;
                    if exact_two {
                        ratio
                    } else {
                        ratio.powf(exponent)
                    }
                })
                .sum();
            1.0 / denom
        })
        .collect();
    values
}

/// Fuzzy membership of one meta-feature vector under a fitted model.
pub fn memberships(model: &FuzzyClusterModel, meta: &MetaFeatureVector) -> Membership {
    let point = weighted_point(meta, &model.weights);
    Membership {
        values: memberships_of_point(&point, &model.centers, model.fuzzifier),
    }
}

/// Membership-weighted average of the cluster rates.
pub fn defuzzify(membership: &Membership, rates: &[f64]) -> Result<f64> {
    if membership.values.len() != rates.len() {
        return Err(Error::invalid(format!(
            "{} membership values against {} rates",
            membership.values.len(),
            rates.len()
        )));
    }
    let total: f64 = membership.values.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("membership values sum to zero"));
    }
    Ok(membership.values.iter().zip(rates).map(|(&u, &r)| u * r).sum::<f64>() / total)
}

/// Uncertainty of one instance: defuzzified cluster rates under its
/// membership. Pure; safe to call concurrently.
pub fn estimate_uncertainty(model: &FuzzyClusterModel, meta: &MetaFeatureVector) -> Result<f64> {
    defuzzify(&memberships(model, meta), &model.rates)
}

/// A fitted model with fitting diagnostics.
#[derive(Debug, Clone)]
pub struct FcmFit {
    pub model: FuzzyClusterModel,
    /// Weighted fuzzy distortion of the winning restart.
    pub distortion: f64,
    pub iterations: usize,
    /// Distortion after each iteration of the winning restart.
    pub distortion_history: Vec<f64>,
}

struct FcmRun {
    centers: Vec<[f64; 7]>,
    distortion: f64,
    iterations: usize,
    history: Vec<f64>,
}

/// Seeded k-means++-style center selection: spread the initial centers
/// proportionally to squared distance from those already chosen.
fn seed_centers(points: &[[f64; 7]], k: usize, seed: Seed) -> Vec<[f64; 7]> {
    use rand::Rng;
    let mut rng = seed.rng();
    let mut centers = Vec::with_capacity(k);
    centers.push(points[rng.gen_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist7(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut draw = rng.gen::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if draw < w {
                    pick = i;
                    break;
                }
                draw -= w;
            }
            pick
        } else {
            // All remaining mass is zero (duplicate points): any index.
            rng.gen_range(0..points.len())
        };
        centers.push(points[next]);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist7(p, centers.last().unwrap()));
        }
    }
    centers
}

fn fcm_run(
    points: &[[f64; 7]],
    k: usize,
    fuzzifier: f64,
    tolerance: f64,
    max_iterations: usize,
    seed: Seed,
) -> FcmRun {
    let mut centers = seed_centers(points, k, seed);
    let mut history = Vec::new();
    let mut iterations = 0;
    let exact_two = (fuzzifier - 2.0).abs() < 1e-12;
    for _ in 0..max_iterations {
        iterations += 1;
        let u: Vec<Vec<f64>> = points
            .iter()
            .map(|p| memberships_of_point(p, &centers, fuzzifier))
            .collect();
        // Center update with u^m and the running distortion Σ u^m d².
        let mut next = vec![[0.0; 7]; k];
        let mut mass = vec![0.0; k];
        let mut distortion = 0.0;
        for (p, urow) in points.iter().zip(&u) {
            for (i, &ui) in urow.iter().enumerate() {
                let um = if exact_two { ui * ui } else { ui.powf(fuzzifier) };
                mass[i] += um;
                for d in 0..7 {
                    next[i][d] += um * p[d];
                }
                distortion += um * sq_dist7(p, &centers[i]);
            }
        }
        for i in 0..k {
            if mass[i] > 0.0 {
                for d in 0..7 {
                    next[i][d] /= mass[i];
                }
            } else {
                next[i] = centers[i];
            }
        }
        history.push(distortion);
        let shift = centers
            .iter()
            .zip(&next)
            .map(|(a, b)| sq_dist7(a, b).sqrt())
            .fold(0.0, f64::max);
        centers = next;
        if shift < tolerance {
            break;
        }
    }
    let distortion = *history.last().unwrap();
    FcmRun {
        centers,
        distortion,
        iterations,
        history,
    }
}

/// Fit the weighted fuzzy c-means model on a knowledge base.
///
/// Meta-feature vectors are scaled elementwise by `weights`, clustered
/// with several seeded initialisations (best distortion wins), and each
/// cluster is assigned the misclassification rate of the records whose
/// membership peaks there. A cluster claiming no records falls back to
/// the global rate, flagged on the model. `n_clusters` of 1 is the
/// degenerate global-rate model.
pub fn fcm_fit(
    kb: &KnowledgeBase,
    weights: &[f64; 7],
    n_clusters: usize,
    config: &EstimatorConfig,
    seed: Seed,
) -> Result<FcmFit> {
    if n_clusters == 0 {
        return Err(Error::invalid("at least one cluster required"));
    }
    if kb.len() < n_clusters {
        return Err(Error::invalid(format!(
            "{} records cannot support {} clusters",
            kb.len(),
            n_clusters
        )));
    }
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::invalid("at least one weight must be positive"));
    }
    if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
        return Err(Error::invalid("weights must be finite and nonnegative"));
    }

    let points: Vec<[f64; 7]> = kb
        .records
        .iter()
        .map(|r| weighted_point(&r.meta, weights))
        .collect();
    let runs = crate::par::map_range(config.restarts, |r| {
        fcm_run(
            &points,
            n_clusters,
            config.fuzzifier,
            config.tolerance,
            config.max_iterations,
            seed.derive("restart", r as u64),
        )
    });
    let best = runs
        .into_iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| {
            a.distortion
                .partial_cmp(&b.distortion)
                .unwrap()
                .then(i.cmp(j))
        })
        .map(|(_, run)| run)
        .expect("at least one restart");

    // Hard assignment by maximal membership; ties to the lower cluster.
    let mut correct = vec![0usize; n_clusters];
    let mut wrong = vec![0usize; n_clusters];
    for (p, record) in points.iter().zip(&kb.records) {
        let u = memberships_of_point(p, &best.centers, config.fuzzifier);
        let mut assigned = 0;
        for (i, &ui) in u.iter().enumerate() {
            if ui > u[assigned] {
                assigned = i;
            }
        }
        if record.misclassified {
            wrong[assigned] += 1;
        } else {
            correct[assigned] += 1;
        }
    }
    let global = kb.misclassification_rate();
    let mut empty_cluster_fallback = false;
    let rates: Vec<f64> = (0..n_clusters)
        .map(|i| {
            let total = correct[i] + wrong[i];
            if total == 0 {
                empty_cluster_fallback = true;
                global
            } else {
                wrong[i] as f64 / total as f64
            }
        })
        .collect();

    Ok(FcmFit {
        model: FuzzyClusterModel {
            version: ESTIMATOR_FORMAT_VERSION,
            centers: best.centers,
            fuzzifier: config.fuzzifier,
            weights: *weights,
            rates,
            n_clusters,
            empty_cluster_fallback,
        },
        distortion: best.distortion,
        iterations: best.iterations,
        distortion_history: best.history,
    })
}

// ---------------------------------------------------------------------------
// Parameter search.

/// The tuned clustering parameters for one training context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterChoice {
    pub weights: [f64; 7],
    pub n_clusters: usize,
    /// Search objective of the winning configuration.
    pub score: f64,
}

/// Product-of-associations fitness of uncertainty scores against flags.
fn fitness(uncertainty: &[f64], flags: &[bool]) -> Result<f64> {
    let or = univariate_or(uncertainty, flags)?;
    let roc = auroc(uncertainty, flags)?;
    let pr = auprc(uncertainty, flags)?;
    Ok(or.or * roc * pr.auprc)
}

/// Tune weights and cluster count over train/validation split pairs.
///
/// One search serves all splits: each candidate is fitted on every
/// split's training records and scored on its validation records, and
/// the mean fitness is maximised. Validation flags must contain both
/// outcomes in every split.
pub fn optimize_over_splits(
    splits: &[(&KnowledgeBase, &KnowledgeBase)],
    config: &EstimatorConfig,
    seed: Seed,
) -> Result<ClusterChoice> {
    config.validate()?;
    if splits.is_empty() {
        return Err(Error::invalid("at least one train/validation split required"));
    }
    for (train, val) in splits {
        if train.is_empty() || val.is_empty() {
            return Err(Error::EmptyDataset {
                detail: "empty split in clustering-parameter search".to_string(),
            });
        }
    }
    let mut dims: Vec<(&str, ParamDomain)> = MetaFeatureVector::NAMES
        .iter()
        .map(|name| {
            (*name, ParamDomain::Real {
                lo: config.weight_range.0,
                hi: config.weight_range.1,
                log: false,
            })
        })
        .collect();
    let max_clusters = config
        .n_clusters
        .1
        .min(splits.iter().map(|(t, _)| t.len()).min().unwrap());
    let min_clusters = config.n_clusters.0.min(max_clusters);
    dims.push(("clusters", ParamDomain::Int {
        lo: min_clusters as i64,
        hi: max_clusters as i64,
    }));
    let space = SearchSpace::new(dims);

    // One shared fitting seed keeps the objective a pure function of the
    // candidate parameters.
    let fit_seed = seed.derive("fit", 0);
    let objective = |params: &[ParamValue]| -> Result<f64> {
        let mut weights = [0.0; 7];
        for (w, p) in weights.iter_mut().zip(params) {
            *w = p.as_f64();
        }
        let k = params[7].as_usize();
        let scores = crate::par::try_map_range(splits.len(), |s| {
            let (train, val) = splits[s];
            let fit = fcm_fit(train, &weights, k, config, fit_seed.derive("split", s as u64))?;
            let uncertainty: Vec<f64> = val
                .records
                .iter()
                .map(|r| estimate_uncertainty(&fit.model, &r.meta))
                .collect::<Result<_>>()?;
            let flags: Vec<bool> = val.records.iter().map(|r| r.misclassified).collect();
            fitness(&uncertainty, &flags)
        })?;
        Ok(scores.iter().sum::<f64>() / scores.len() as f64)
    };

    let optimum = maximize(&space, config.bo_budget, seed.derive("search", 0), objective)?;
    let mut weights = [0.0; 7];
    for (w, p) in weights.iter_mut().zip(&optimum.params) {
        *w = p.as_f64();
    }
    Ok(ClusterChoice {
        weights,
        n_clusters: optimum.params[7].as_usize(),
        score: optimum.score,
    })
}

/// Tune weights and cluster count on a single train/validation pair.
pub fn optimize(
    kb_train: &KnowledgeBase,
    kb_val: &KnowledgeBase,
    config: &EstimatorConfig,
    seed: Seed,
) -> Result<ClusterChoice> {
    optimize_over_splits(&[(kb_train, kb_val)], config, seed)
}

/// Tune on a seeded stratified-by-flag split of `kb`, then refit on all
/// of it with the winning parameters.
pub fn train_estimator(
    kb: &KnowledgeBase,
    config: &EstimatorConfig,
    seed: Seed,
) -> Result<(FuzzyClusterModel, ClusterChoice)> {
    config.validate()?;
    let (train, val) = split_by_flag(kb, 0.2, seed.derive("holdout", 0))?;
    let choice = optimize(&train, &val, config, seed.derive("tune", 0))?;
    let fit = fcm_fit(kb, &choice.weights, choice.n_clusters, config, seed.derive("fit", 0))?;
    Ok((fit.model, choice))
}

/// Deterministic stratified holdout: about `val_share` of each outcome
/// group goes to validation.
fn split_by_flag(kb: &KnowledgeBase, val_share: f64, seed: Seed) -> Result<(KnowledgeBase, KnowledgeBase)> {
    use rand::seq::SliceRandom;
    let mut rng = seed.rng();
    let mut train = Vec::new();
    let mut val = Vec::new();
    for flag in [false, true] {
        let mut members: Vec<usize> = (0..kb.records.len())
            .filter(|&i| kb.records[i].misclassified == flag)
            .collect();
        if members.is_empty() {
            return Err(Error::OneClassOutcome(
                "knowledge base holds only one outcome; cannot tune on it".to_string(),
            ));
        }
        members.shuffle(&mut rng);
        let n_val = ((members.len() as f64 * val_share).round() as usize)
            .clamp(1, members.len().saturating_sub(1).max(1));
        for (pos, &i) in members.iter().enumerate() {
            if pos < n_val {
                val.push(i);
            } else {
                train.push(i);
            }
        }
    }
    train.sort_unstable();
    val.sort_unstable();
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptyDataset {
            detail: "knowledge base too small to hold out a validation split".to_string(),
        });
    }
    let pick = |idx: &[usize]| KnowledgeBase::new(idx.iter().map(|&i| kb.records[i].clone()).collect());
    Ok((pick(&train), pick(&val)))
}

// ---------------------------------------------------------------------------
// Nested cross-validation (the full training/evaluation loop).

/// Per-instance outputs of a nested run, aligned to dataset row order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedCvOutcome {
    /// Defuzzified uncertainty per instance.
    pub uncertainty: Vec<f64>,
    /// Whether the outer model misclassified the instance.
    pub misclassified: Vec<bool>,
    /// Probability-margin uncertainty of the same outer model, oriented
    /// so larger = less confident.
    pub baseline_uncertainty: Vec<f64>,
    /// Outer fold that held each instance out.
    pub fold_of: Vec<usize>,
    /// Winning clustering parameters per outer fold.
    pub choices: Vec<ClusterChoice>,
}

struct FoldOutput {
    indices: Vec<usize>,
    uncertainty: Vec<f64>,
    misclassified: Vec<bool>,
    baseline: Vec<f64>,
    choice: ClusterChoice,
}

/// Run the full nested evaluation of the estimation system on one
/// dataset.
///
/// Outer folds are held out in turn. Within the remaining folds, each
/// fold once acts as validation: a classifier tuned on the other folds
/// supplies its misclassification flags, and its complexity profiles are
/// computed against those folds. The clustering parameters maximising
/// mean validation fitness are then refitted on all inner records plus
/// the knowledge base, a classifier tuned on the full outer-train
/// partition labels the test fold, and the fitted estimator scores it.
pub fn nested_cv_run(
    ds: &LabelledDataset,
    kb: &KnowledgeBase,
    spec: &ClassifierSpec,
    config: &EstimatorConfig,
    seed: Seed,
) -> Result<NestedCvOutcome> {
    config.validate()?;
    let k = config.outer_folds;
    let plan = make_stratified_folds(ds, k, seed.derive("outer", 0))?;
    let folds: Vec<Result<FoldOutput>> = crate::par::map_range(k, |t| {
        process_outer_fold(ds, kb, spec, config, &plan, t, seed.derive("fold", t as u64)).map_err(
            |e| Error::FoldFailed {
                fold: t,
                source: Box::new(e),
            },
        )
    });

    let m = ds.n_instances();
    let mut outcome = NestedCvOutcome {
        uncertainty: vec![0.0; m],
        misclassified: vec![false; m],
        baseline_uncertainty: vec![0.0; m],
        fold_of: vec![0; m],
        choices: Vec::with_capacity(k),
    };
    for (t, fold) in folds.into_iter().enumerate() {
        let fold = fold?;
        for (pos, &i) in fold.indices.iter().enumerate() {
            outcome.uncertainty[i] = fold.uncertainty[pos];
            outcome.misclassified[i] = fold.misclassified[pos];
            outcome.baseline_uncertainty[i] = fold.baseline[pos];
            outcome.fold_of[i] = t;
        }
        outcome.choices.push(fold.choice);
    }
    Ok(outcome)
}

fn process_outer_fold(
    ds: &LabelledDataset,
    kb: &KnowledgeBase,
    spec: &ClassifierSpec,
    config: &EstimatorConfig,
    plan: &crate::data::FoldPlan,
    t: usize,
    seed: Seed,
) -> Result<FoldOutput> {
    let k = config.outer_folds;
    let inner_folds: Vec<usize> = (0..k).filter(|&j| j != t).collect();

    // Inner pass: per validation fold, flags from a tuned classifier and
    // complexity profiles against the remaining folds.
    let inner: Vec<Vec<KbRecord>> = crate::par::try_map_range(inner_folds.len(), |pos| {
        let j = inner_folds[pos];
        let train_idx = plan.train_indices_excluding(t, j);
        let sub = ds.subset(&train_idx, &format!("{}-o{t}-i{j}", ds.id))?;
        let model = train_tuned(
            spec,
            &sub,
            config.inner_folds,
            config.model_budget,
            seed.derive("inner-model", j as u64),
        )?;
        let ctx = MetaContext::fit(&sub, config.meta.clone(), seed.derive("inner-meta", j as u64))?;
        let val_idx = plan.fold_indices(j);
        let mut records = Vec::with_capacity(val_idx.len());
        for &i in &val_idx {
            let row = ds.row(i);
            let pred = model.predict(row);
            let (meta, _) = ctx.compute_all(row, Some(pred))?;
            records.push(KbRecord {
                meta,
                misclassified: pred != ds.label(i),
                provenance: Provenance::Real,
                dataset_id: ds.id.clone(),
                model_kind: spec.kind.name().to_string(),
                instance_index: i,
                fold: j,
            });
        }
        Ok(records)
    })?;

    // Clustering-parameter search: fold j validates a model fitted on
    // the other inner folds plus the knowledge base.
    let mut split_trains = Vec::with_capacity(inner.len());
    let mut split_vals = Vec::with_capacity(inner.len());
    for pos in 0..inner.len() {
        let mut records: Vec<KbRecord> = inner
            .iter()
            .enumerate()
            .filter(|(other, _)| *other != pos)
            .flat_map(|(_, batch)| batch.iter().cloned())
            .collect();
        records.extend(kb.records.iter().cloned());
        split_trains.push(KnowledgeBase::new(records));
        split_vals.push(KnowledgeBase::new(inner[pos].clone()));
    }
    let splits: Vec<(&KnowledgeBase, &KnowledgeBase)> =
        split_trains.iter().zip(&split_vals).collect();
    let choice = optimize_over_splits(&splits, config, seed.derive("cluster-bo", 0))?;

    // Refit on all inner records plus the knowledge base.
    let mut pooled: Vec<KbRecord> = inner.into_iter().flatten().collect();
    pooled.extend(kb.records.iter().cloned());
    let fit = fcm_fit(
        &KnowledgeBase::new(pooled),
        &choice.weights,
        choice.n_clusters,
        config,
        seed.derive("final-fcm", 0),
    )?;

    // Outer model and test-fold scoring.
    let outer_train = plan.train_indices(t);
    let sub = ds.subset(&outer_train, &format!("{}-o{t}", ds.id))?;
    let model = train_tuned(
        spec,
        &sub,
        config.inner_folds,
        config.model_budget,
        seed.derive("outer-model", 0),
    )?;
    let ctx = MetaContext::fit(&sub, config.meta.clone(), seed.derive("outer-meta", 0))?;
    let indices = plan.fold_indices(t);
    let mut uncertainty = Vec::with_capacity(indices.len());
    let mut misclassified = Vec::with_capacity(indices.len());
    let mut margins = Vec::with_capacity(indices.len());
    for &i in &indices {
        let row = ds.row(i);
        let pred = model.predict(row);
        let (meta, _) = ctx.compute_all(row, Some(pred))?;
        uncertainty.push(estimate_uncertainty(&fit.model, &meta)?);
        misclassified.push(pred != ds.label(i));
        margins.push(model.probability_uncertainty(row));
    }
    let baseline = orient_confidence(&margins);
    Ok(FoldOutput {
        indices,
        uncertainty,
        misclassified,
        baseline,
        choice,
    })
}

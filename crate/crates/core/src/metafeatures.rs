//! Seven per-instance complexity measures computed against a reference
//! (training) set:
//!
//! * `kdn` — label diversity of the k nearest neighbours.
//! * `ds` — normalised size of the unpruned-tree disjunct covering x.
//! * `dcd` — label diversity inside x's pruned-tree disjunct.
//! * `ol` — relative density outlierness over the kNN/reverse/shared
//!   neighbourhood.
//! * `clol` — how evenly that outlierness is spread across the classes.
//! * `ec` — density evidence conflicting with the predicted class,
//!   Fisher-weighted per feature.
//! * `hd` — normalised distance from a reference linear separator.
//!
//! A [`MetaContext`] fits every reusable piece (scaling, neighbour
//! graphs, trees, density tables, separators) once per training set and
//! then scores instances read-only, so batches parallelise cleanly. The
//! free functions build only what their single measure needs.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::{sq_dist, FeatureKind, FeatureSpace, LabelledDataset};
use crate::diversity::{diversity, diversity_of_labels, ClassCounts};
use crate::error::{Error, Result};
use crate::learners::kde::{kde_density_diag, silverman_bandwidth, ClassDensityModel};
use crate::learners::knn::{k_nearest, NeighbourGraph};
use crate::learners::logistic::{fit_logistic, LinearModel};
use crate::learners::tree::{grow_tree, DecisionTree};
use crate::seed::Seed;

/// Returned for the outlierness ratio when the density at x underflows
/// to zero.
pub const OL_SENTINEL: f64 = 1e6;

/// Fisher ratio reported for a feature with zero pooled within-class
/// variance but distinct class means.
pub const FISHER_CAP: f64 = 1e6;

/// Floor applied to normalised Fisher weights so every feature keeps a
/// positive weight.
pub const WEIGHT_FLOOR: f64 = 1e-9;

/// Tuning knobs of the measure suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MetaConfig {
    /// Neighbour count for `kdn` and the outlierness neighbourhoods.
    pub k: usize,
    /// Kernel width for the density estimates, applied to every scaled
    /// dimension; `None` selects Silverman's rule per dimension.
    pub bandwidth: Option<f64>,
    /// Ridge strength of the reference separator behind `hd`.
    pub separator_l2: f64,
    /// Internal validation folds for cost-complexity pruning.
    pub pruning_folds: usize,
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig {
            k: 5,
            bandwidth: None,
            separator_l2: 1e-2,
            pruning_folds: 3,
        }
    }
}

/// The seven scores. `ol` is nonnegative and unbounded above; the rest
/// lie in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaFeatureVector {
    pub kdn: f64,
    pub ds: f64,
    pub dcd: f64,
    pub ol: f64,
    pub clol: f64,
    pub ec: f64,
    pub hd: f64,
}

impl MetaFeatureVector {
    pub const NAMES: [&'static str; 7] = ["kdn", "ds", "dcd", "ol", "clol", "ec", "hd"];

    pub fn as_array(&self) -> [f64; 7] {
        [self.kdn, self.ds, self.dcd, self.ol, self.clol, self.ec, self.hd]
    }

    pub fn from_array(a: [f64; 7]) -> Self {
        MetaFeatureVector {
            kdn: a[0],
            ds: a[1],
            dcd: a[2],
            ol: a[3],
            clol: a[4],
            ec: a[5],
            hd: a[6],
        }
    }
}

/// Soft conditions encountered while scoring; none invalidates the
/// returned vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaFlags {
    /// Density at x underflowed; `ol` holds the sentinel value.
    pub ol_density_floor: bool,
    /// A class-restricted density underflowed during `clol`.
    pub clol_density_floor: bool,
    /// Some class had fewer than k+1 members, shrinking its neighbourhood.
    pub clol_k_reduced: bool,
    /// Both classes had zero density at some feature value in `ec`.
    pub ec_zero_density: bool,
    /// Every feature's Fisher ratio was zero; uniform weights used.
    pub degenerate_weights: bool,
}

/// The three neighbour sets behind the outlierness measures and their
/// deduplicated union (x itself never appears).
#[derive(Debug, Clone)]
pub struct Neighborhood {
    pub knn: Vec<usize>,
    pub rnn: Vec<usize>,
    pub snn: Vec<usize>,
    pub union: Vec<usize>,
}

/// Per-feature conflict entries against each contrasting class, plus the
/// Fisher-derived feature weights. Entries are unweighted and lie in
/// [-1, 1]; positive means the contrasting class is denser at x.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConflictMatrix {
    /// Class codes of the contrasting rows (every class except c_pred).
    pub classes: Vec<usize>,
    /// One row per contrasting class, one column per feature.
    pub entries: Vec<Vec<f64>>,
    /// Normalised Fisher weights, max 1.
    pub feature_weights: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Neighbourhood machinery shared by ol / clol.

/// kNN ∪ reverse-NN ∪ shared-NN of `x` within `scaled`. `exclude` drops
/// one row (pass the row's own index when x is a member of the set).
fn neighbourhood(
    scaled: &[Vec<f64>],
    graph: &NeighbourGraph,
    reverse: &[Vec<usize>],
    x: &[f64],
    k: usize,
    exclude: Option<usize>,
) -> Neighborhood {
    let knn = match exclude {
        Some(i) => graph.lists[i].clone(),
        None => k_nearest(scaled, x, k, None),
    };
    let mut rnn = Vec::new();
    for (j, row) in scaled.iter().enumerate() {
        if Some(j) == exclude {
            continue;
        }
        if sq_dist(row, x).sqrt() <= graph.kth_dist[j] {
            rnn.push(j);
        }
    }
    let mut snn_set = BTreeSet::new();
    for &n in &knn {
        for &z in &reverse[n] {
            if Some(z) != exclude {
                snn_set.insert(z);
            }
        }
    }
    let mut union: BTreeSet<usize> = knn.iter().copied().collect();
    union.extend(rnn.iter().copied());
    union.extend(snn_set.iter().copied());
    Neighborhood {
        knn,
        rnn,
        snn: snn_set.into_iter().collect(),
        union: union.into_iter().collect(),
    }
}

/// Inverted kNN lists: `reverse[n]` holds every row whose kNN list
/// contains `n`.
fn invert_lists(graph: &NeighbourGraph, n: usize) -> Vec<Vec<usize>> {
    let mut reverse = vec![Vec::new(); n];
    for (i, list) in graph.lists.iter().enumerate() {
        for &j in list {
            reverse[j].push(i);
        }
    }
    reverse
}

/// Kernel density at `x` over the neighbourhood members (the query
/// itself contributes a kernel term, so the result is always positive
/// unless it underflows).
fn density_at(
    scaled: &[Vec<f64>],
    members: &[usize],
    x: &[f64],
    bandwidths: &[f64],
) -> Result<f64> {
    let points: Vec<Vec<f64>> = members.iter().map(|&i| scaled[i].clone()).collect();
    kde_density_diag(&points, x, bandwidths)
}

/// Fitted per-point structures for one reference set (global or one
/// class's rows): neighbour graph, inverted lists, and each member's own
/// neighbourhood density.
struct DensityIndex {
    graph: NeighbourGraph,
    reverse: Vec<Vec<usize>>,
    point_density: Vec<f64>,
}

impl DensityIndex {
    fn build(scaled: &[Vec<f64>], k: usize, bandwidths: &[f64]) -> Result<DensityIndex> {
        let graph = NeighbourGraph::build(scaled, k);
        let reverse = invert_lists(&graph, scaled.len());
        let point_density = crate::par::try_map_range(scaled.len(), |i| {
            let nb = neighbourhood(scaled, &graph, &reverse, &scaled[i], k, Some(i));
            density_at(scaled, &nb.union, &scaled[i], bandwidths)
        })?;
        Ok(DensityIndex {
            graph,
            reverse,
            point_density,
        })
    }

    /// Outlierness of `x` against this reference set: mean neighbourhood
    /// density over the density at x.
    fn outlierness(
        &self,
        scaled: &[Vec<f64>],
        x: &[f64],
        k: usize,
        bandwidths: &[f64],
    ) -> Result<(f64, bool)> {
        let nb = neighbourhood(scaled, &self.graph, &self.reverse, x, k, None);
        let p_x = density_at(scaled, &nb.union, x, bandwidths)?;
        let sum: f64 = nb.union.iter().map(|&z| self.point_density[z]).sum();
        let ol = sum / (nb.union.len() as f64 * p_x);
        if p_x <= 0.0 || !ol.is_finite() {
            Ok((OL_SENTINEL, true))
        } else {
            Ok((ol, false))
        }
    }
}

/// Per-dimension bandwidths for a scaled matrix: a fixed override or
/// Silverman's rule per dimension.
fn bandwidths_for(scaled: &[Vec<f64>], dim: usize, override_h: Option<f64>) -> Vec<f64> {
    match override_h {
        Some(h) => vec![h; dim],
        None => (0..dim)
            .map(|d| {
                let column: Vec<f64> = scaled.iter().map(|row| row[d]).collect();
                silverman_bandwidth(&column)
            })
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// Fisher weights shared by ec.

/// Multiclass Fisher discriminant ratio of one already-encoded column:
/// between-class scatter over pooled within-class variance.
fn fisher_ratio_column(column: &[f64], labels: &[usize], n_classes: usize) -> f64 {
    let n = column.len() as f64;
    let grand = column.iter().sum::<f64>() / n;
    let mut between = 0.0;
    let mut within = 0.0;
    for c in 0..n_classes {
        let members: Vec<f64> = column
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == c)
            .map(|(&v, _)| v)
            .collect();
        if members.is_empty() {
            continue;
        }
        let nc = members.len() as f64;
        let mu = members.iter().sum::<f64>() / nc;
        let var = members.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / nc;
        between += nc * (mu - grand) * (mu - grand);
        within += nc * var;
    }
    if within <= 0.0 {
        if between > 0.0 {
            FISHER_CAP
        } else {
            0.0
        }
    } else {
        between / within
    }
}

/// Multiclass Fisher discriminant ratio of a raw feature. Nominal
/// features take the maximum ratio over their one-hot indicator columns;
/// a feature with zero within-class variance but separated means reports
/// the cap value.
pub fn fisher_ratio(train: &LabelledDataset, feature: usize) -> Result<f64> {
    if feature >= train.n_features() {
        return Err(Error::invalid(format!("feature index {feature} out of range")));
    }
    let labels = train.labels();
    let n_classes = train.n_classes();
    let kind = train.schema.features[feature].kind;
    let ratio = if kind == FeatureKind::Nominal {
        let n_cats = train.categories(feature).len();
        let mut best: f64 = 0.0;
        for code in 0..n_cats {
            let column: Vec<f64> = (0..train.n_instances())
                .map(|i| if train.row(i)[feature] as usize == code { 1.0 } else { 0.0 })
                .collect();
            best = best.max(fisher_ratio_column(&column, labels, n_classes));
        }
        best
    } else {
        let column: Vec<f64> = (0..train.n_instances()).map(|i| train.row(i)[feature]).collect();
        fisher_ratio_column(&column, labels, n_classes)
    };
    Ok(ratio)
}

/// Per-feature Fisher weights normalised so the largest is 1, floored at
/// [`WEIGHT_FLOOR`]. All-zero ratios degrade to uniform weights with the
/// flag set.
fn fisher_weights(train: &LabelledDataset) -> Result<(Vec<f64>, bool)> {
    let ratios: Vec<f64> = (0..train.n_features())
        .map(|j| fisher_ratio(train, j))
        .collect::<Result<_>>()?;
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return Ok((vec![1.0; ratios.len()], true));
    }
    let weights = ratios.iter().map(|r| (r / max).max(WEIGHT_FLOOR)).collect();
    Ok((weights, false))
}

// ---------------------------------------------------------------------------
// Separator machinery shared by hd.

struct SeparatorSet {
    models: Vec<LinearModel>,
    max_margin: f64,
}

impl SeparatorSet {
    /// One-vs-rest ridge-regularised logistic separators on the scaled
    /// space (a single separator for two classes), anchored by the
    /// largest training margin.
    fn fit(train: &LabelledDataset, space: &FeatureSpace, scaled: &[Vec<f64>], l2: f64) -> Result<SeparatorSet> {
        let _ = space;
        let n_classes = train.n_classes();
        let targets: Vec<usize> = if n_classes == 2 { vec![1] } else { (0..n_classes).collect() };
        let mut models = Vec::new();
        for c in targets {
            let y: Vec<bool> = train.labels().iter().map(|&l| l == c).collect();
            let fit = fit_logistic(scaled, &y, l2, 100, 1e-8)?;
            let model = LinearModel::from_fit(&fit);
            if model.weight_norm() < 1e-9 {
                return Err(Error::DegenerateSeparator(format!(
                    "zero weight vector for class {}",
                    train.class_name(c)
                )));
            }
            models.push(model);
        }
        let mut max_margin: f64 = 0.0;
        for row in scaled {
            max_margin = max_margin.max(Self::raw_margin(&models, row));
        }
        if max_margin <= 0.0 {
            return Err(Error::DegenerateSeparator(
                "all training instances lie on the separator".to_string(),
            ));
        }
        Ok(SeparatorSet { models, max_margin })
    }

    /// Minimum absolute geometric margin over the separators.
    fn raw_margin(models: &[LinearModel], scaled: &[f64]) -> f64 {
        models
            .iter()
            .map(|m| (m.decision(scaled) / m.weight_norm()).abs())
            .fold(f64::INFINITY, f64::min)
    }

    fn distance(&self, scaled: &[f64]) -> f64 {
        (Self::raw_margin(&self.models, scaled) / self.max_margin).clamp(0.0, 1.0)
    }
}

// ---------------------------------------------------------------------------
// The fitted context.

/// Everything reusable across instances for one training set. Fit once,
/// then score any number of instances read-only.
pub struct MetaContext {
    config: MetaConfig,
    labels: Vec<usize>,
    n_classes: usize,
    class_names: Vec<String>,
    space: FeatureSpace,
    scaled: Vec<Vec<f64>>,
    bandwidths: Vec<f64>,
    global: DensityIndex,
    class_scaled: Vec<Vec<Vec<f64>>>,
    class_k: Vec<usize>,
    class_indices: Vec<DensityIndex>,
    k_reduced: bool,
    unpruned: DecisionTree,
    max_disjunct: usize,
    pruned: DecisionTree,
    densities: ClassDensityModel,
    weights: Vec<f64>,
    weights_degenerate: bool,
    separators: SeparatorSet,
}

impl MetaContext {
    pub fn fit(train: &LabelledDataset, config: MetaConfig, seed: Seed) -> Result<MetaContext> {
        let m = train.n_instances();
        if config.k == 0 || config.k >= m {
            return Err(Error::invalid(format!(
                "neighbour count k={} must lie in 1..{} for {} training instances",
                config.k,
                m - 1,
                m
            )));
        }
        let all: Vec<usize> = (0..m).collect();
        let space = FeatureSpace::fit(train, &all)?;
        let scaled = space.matrix(train, &all);
        let bandwidths = bandwidths_for(&scaled, space.dim(), config.bandwidth);
        let global = DensityIndex::build(&scaled, config.k, &bandwidths)?;

        let n_classes = train.n_classes();
        let mut class_scaled = Vec::with_capacity(n_classes);
        let mut class_k = Vec::with_capacity(n_classes);
        let mut class_indices = Vec::with_capacity(n_classes);
        let mut k_reduced = false;
        for c in 0..n_classes {
            let members: Vec<Vec<f64>> = (0..m)
                .filter(|&i| train.label(i) == c)
                .map(|i| scaled[i].clone())
                .collect();
            if members.len() < 2 {
                return Err(Error::SingletonClass {
                    class: train.class_name(c).to_string(),
                });
            }
            let kc = config.k.min(members.len() - 1);
            if kc < config.k {
                k_reduced = true;
            }
            class_indices.push(DensityIndex::build(&members, kc, &bandwidths)?);
            class_scaled.push(members);
            class_k.push(kc);
        }

        let unpruned = grow_tree(train, false, seed.derive("unpruned", 0))?;
        let max_disjunct = unpruned.max_leaf_size();
        let pruned = DecisionTree::grow_pruned(
            train,
            &all,
            Default::default(),
            config.pruning_folds,
            seed.derive("pruned", 0),
        )?;
        let densities = ClassDensityModel::fit(train, &all)?;
        let (weights, weights_degenerate) = fisher_weights(train)?;
        let separators = SeparatorSet::fit(train, &space, &scaled, config.separator_l2)?;

        Ok(MetaContext {
            config,
            labels: train.labels().to_vec(),
            n_classes,
            class_names: train.class_names().to_vec(),
            space,
            scaled,
            bandwidths,
            global,
            class_scaled,
            class_k,
            class_indices,
            k_reduced,
            unpruned,
            max_disjunct,
            pruned,
            densities,
            weights,
            weights_degenerate,
            separators,
        })
    }

    pub fn config(&self) -> &MetaConfig {
        &self.config
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// The class with the highest log likelihood under the per-feature
    /// density tables — the stand-in prediction when no classifier's
    /// output is available for `ec`.
    pub fn surrogate_prediction(&self, row: &[f64]) -> usize {
        let mut best = 0;
        let mut best_ll = f64::NEG_INFINITY;
        for c in 0..self.n_classes {
            let (ll, _) = self.densities.log_likelihood(row, c);
            if ll > best_ll {
                best_ll = ll;
                best = c;
            }
        }
        best
    }

    /// Neighbourhood of a raw-feature instance in the global reference
    /// set (exposed for diagnostics and tests).
    pub fn neighbourhood_of(&self, row: &[f64]) -> Neighborhood {
        let x = self.space.transform(row);
        neighbourhood(
            &self.scaled,
            &self.global.graph,
            &self.global.reverse,
            &x,
            self.config.k,
            None,
        )
    }

    /// Unweighted conflict entries of `row` against every contrasting
    /// class, given the predicted class.
    pub fn conflict_matrix(&self, row: &[f64], c_pred: usize) -> Result<(ConflictMatrix, bool)> {
        if c_pred >= self.n_classes {
            return Err(Error::invalid(format!("predicted class {c_pred} out of range")));
        }
        let n_features = self.weights.len();
        let mut classes = Vec::new();
        let mut entries = Vec::new();
        let mut zero_flag = false;
        for r in 0..self.n_classes {
            if r == c_pred {
                continue;
            }
            let mut row_entries = Vec::with_capacity(n_features);
            for j in 0..n_features {
                let f_c = self.densities.density(c_pred, j, row[j]);
                let f_r = self.densities.density(r, j, row[j]);
                let ced = if f_c.zero && f_r.zero {
                    zero_flag = true;
                    0.0
                } else if f_r.value > f_c.value {
                    1.0 - f_c.value / f_r.value
                } else if f_c.value > f_r.value {
                    -(1.0 - f_r.value / f_c.value)
                } else {
                    0.0
                };
                row_entries.push(ced);
            }
            classes.push(r);
            entries.push(row_entries);
        }
        Ok((
            ConflictMatrix {
                classes,
                entries,
                feature_weights: self.weights.clone(),
            },
            zero_flag,
        ))
    }

    /// All seven measures for one instance. `c_pred` is the classifier's
    /// predicted class for `row`; without one, the surrogate density
    /// prediction is used.
    pub fn compute_all(
        &self,
        row: &[f64],
        c_pred: Option<usize>,
    ) -> Result<(MetaFeatureVector, MetaFlags)> {
        let mut flags = MetaFlags {
            clol_k_reduced: self.k_reduced,
            degenerate_weights: self.weights_degenerate,
            ..MetaFlags::default()
        };
        let x = self.space.transform(row);

        // kdn: class diversity of the k nearest reference rows.
        let knn = k_nearest(&self.scaled, &x, self.config.k, None);
        let knn_labels: Vec<usize> = knn.iter().map(|&i| self.labels[i]).collect();
        let kdn = diversity_of_labels(&knn_labels, self.n_classes)?;

        // ds / dcd from the covering disjuncts.
        let leaf = self.unpruned.leaf_for(row);
        let size = self.unpruned.leaf_members(leaf).len();
        let ds = if self.max_disjunct > 1 {
            (size.saturating_sub(1)) as f64 / (self.max_disjunct - 1) as f64
        } else {
            0.0
        };
        let pruned_leaf = self.pruned.leaf_for(row);
        let leaf_labels: Vec<usize> = self
            .pruned
            .leaf_members(pruned_leaf)
            .iter()
            .map(|&i| self.labels[i])
            .collect();
        let dcd = diversity_of_labels(&leaf_labels, self.n_classes)?;

        // ol against the full reference set.
        let (ol, floored) = self
            .global
            .outlierness(&self.scaled, &x, self.config.k, &self.bandwidths)?;
        flags.ol_density_floor = floored;

        // clol: spread of per-class outlierness.
        let mut shares = Vec::with_capacity(self.n_classes);
        for c in 0..self.n_classes {
            let (ol_c, fl) = self.class_indices[c].outlierness(
                &self.class_scaled[c],
                &x,
                self.class_k[c],
                &self.bandwidths,
            )?;
            flags.clol_density_floor |= fl;
            shares.push(ol_c);
        }
        let total: f64 = shares.iter().sum();
        let clol = if total > 0.0 {
            diversity(&ClassCounts::new(shares)?)
        } else {
            1.0
        };

        // ec: weighted positive conflict, maximised over rival classes.
        let pred = match c_pred {
            Some(c) => c,
            None => self.surrogate_prediction(row),
        };
        let (matrix, zero_flag) = self.conflict_matrix(row, pred)?;
        flags.ec_zero_density = zero_flag;
        let weight_sum: f64 = matrix.feature_weights.iter().sum();
        let mut ec: f64 = 0.0;
        for row_entries in &matrix.entries {
            let score: f64 = row_entries
                .iter()
                .zip(&matrix.feature_weights)
                .map(|(&ced, &w)| (w * ced).max(0.0))
                .sum();
            ec = ec.max(score / weight_sum);
        }

        // hd: distance from the reference separator.
        let hd = self.separators.distance(&x);

        Ok((
            MetaFeatureVector {
                kdn,
                ds,
                dcd,
                ol,
                clol,
                ec,
                hd,
            },
            flags,
        ))
    }

    /// Score a batch of raw rows in parallel. `preds[i]`, when given,
    /// supplies the predicted class for row i.
    pub fn compute_batch(
        &self,
        rows: &[Vec<f64>],
        preds: Option<&[usize]>,
    ) -> Result<Vec<(MetaFeatureVector, MetaFlags)>> {
        if let Some(p) = preds {
            if p.len() != rows.len() {
                return Err(Error::invalid("one prediction per row required"));
            }
        }
        crate::par::try_map_range(rows.len(), |i| {
            self.compute_all(&rows[i], preds.map(|p| p[i]))
        })
    }
}

// ---------------------------------------------------------------------------
// Single-measure entry points. Each builds only the machinery its measure
// needs, making the cheap ones usable on datasets the full context would
// reject (e.g. a singleton class only breaks the class-level measures).

/// Label diversity of the k nearest training instances to `x`.
pub fn kdn(x: &[f64], train: &LabelledDataset, k: usize) -> Result<f64> {
    let m = train.n_instances();
    if k == 0 || k > m {
        return Err(Error::invalid(format!(
            "neighbour count k={k} must lie in 1..={m}"
        )));
    }
    let all: Vec<usize> = (0..m).collect();
    let space = FeatureSpace::fit(train, &all)?;
    let scaled = space.matrix(train, &all);
    let knn = k_nearest(&scaled, &space.transform(x), k, None);
    let labels: Vec<usize> = knn.iter().map(|&i| train.label(i)).collect();
    diversity_of_labels(&labels, train.n_classes())
}

/// Normalised size of the unpruned-tree disjunct that covers `x`.
pub fn disjunct_size(x: &[f64], train: &LabelledDataset) -> Result<f64> {
    let tree = grow_tree(train, false, Seed(0))?;
    let max = tree.max_leaf_size();
    let size = tree.leaf_members(tree.leaf_for(x)).len();
    Ok(if max > 1 {
        (size.saturating_sub(1)) as f64 / (max - 1) as f64
    } else {
        0.0
    })
}

/// Label diversity inside the pruned-tree disjunct that covers `x`.
pub fn disjunct_class_diversity(x: &[f64], train: &LabelledDataset) -> Result<f64> {
    let tree = grow_tree(train, true, Seed(0))?;
    let labels: Vec<usize> = tree
        .leaf_members(tree.leaf_for(x))
        .iter()
        .map(|&i| train.label(i))
        .collect();
    diversity_of_labels(&labels, train.n_classes())
}

/// Relative density outlierness of `x` against the whole training set.
pub fn outlierness(
    x: &[f64],
    train: &LabelledDataset,
    k: usize,
    bandwidth: Option<f64>,
) -> Result<(f64, bool)> {
    let m = train.n_instances();
    if k == 0 || k >= m {
        return Err(Error::invalid(format!(
            "neighbour count k={k} must lie in 1..{m}"
        )));
    }
    let all: Vec<usize> = (0..m).collect();
    let space = FeatureSpace::fit(train, &all)?;
    let scaled = space.matrix(train, &all);
    let bandwidths = bandwidths_for(&scaled, space.dim(), bandwidth);
    let index = DensityIndex::build(&scaled, k, &bandwidths)?;
    index.outlierness(&scaled, &space.transform(x), k, &bandwidths)
}

/// Evenness of per-class outlierness: 1 when `x` is equally outlying to
/// every class, 0 when the outlierness concentrates on one class.
pub fn class_level_outlierness(
    x: &[f64],
    train: &LabelledDataset,
    k: usize,
    bandwidth: Option<f64>,
) -> Result<(f64, MetaFlags)> {
    let all: Vec<usize> = (0..train.n_instances()).collect();
    let space = FeatureSpace::fit(train, &all)?;
    let scaled = space.matrix(train, &all);
    let bandwidths = bandwidths_for(&scaled, space.dim(), bandwidth);
    let mut flags = MetaFlags::default();
    let mut shares = Vec::new();
    for c in 0..train.n_classes() {
        let members: Vec<Vec<f64>> = (0..train.n_instances())
            .filter(|&i| train.label(i) == c)
            .map(|i| scaled[i].clone())
            .collect();
        if members.len() < 2 {
            return Err(Error::SingletonClass {
                class: train.class_name(c).to_string(),
            });
        }
        let kc = k.min(members.len() - 1);
        flags.clol_k_reduced |= kc < k;
        let index = DensityIndex::build(&members, kc, &bandwidths)?;
        let (ol_c, fl) = index.outlierness(&members, &space.transform(x), kc, &bandwidths)?;
        flags.clol_density_floor |= fl;
        shares.push(ol_c);
    }
    let total: f64 = shares.iter().sum();
    let clol = if total > 0.0 {
        diversity(&ClassCounts::new(shares)?)
    } else {
        1.0
    };
    Ok((clol, flags))
}

/// Fisher-weighted conflict of the per-feature density evidence against
/// the predicted class, maximised over rival classes.
pub fn evidence_conflict(
    x: &[f64],
    train: &LabelledDataset,
    c_pred: usize,
) -> Result<(f64, bool)> {
    if c_pred >= train.n_classes() {
        return Err(Error::invalid(format!("predicted class {c_pred} out of range")));
    }
    let all: Vec<usize> = (0..train.n_instances()).collect();
    let densities = ClassDensityModel::fit(train, &all)?;
    let (weights, _) = fisher_weights(train)?;
    let weight_sum: f64 = weights.iter().sum();
    let mut zero_flag = false;
    let mut ec: f64 = 0.0;
    for r in 0..train.n_classes() {
        if r == c_pred {
            continue;
        }
        let mut score = 0.0;
        for (j, &w) in weights.iter().enumerate() {
            let f_c = densities.density(c_pred, j, x[j]);
            let f_r = densities.density(r, j, x[j]);
            let ced = if f_c.zero && f_r.zero {
                zero_flag = true;
                0.0
            } else if f_r.value > f_c.value {
                1.0 - f_c.value / f_r.value
            } else if f_c.value > f_r.value {
                -(1.0 - f_r.value / f_c.value)
            } else {
                0.0
            };
            score += (w * ced).max(0.0);
        }
        ec = ec.max(score / weight_sum);
    }
    Ok((ec, zero_flag))
}

/// Normalised distance of `x` from the reference linear separator, 1 at
/// the farthest training instance.
pub fn hyperplane_distance(x: &[f64], train: &LabelledDataset) -> Result<f64> {
    let all: Vec<usize> = (0..train.n_instances()).collect();
    let space = FeatureSpace::fit(train, &all)?;
    let scaled = space.matrix(train, &all);
    let separators = SeparatorSet::fit(train, &space, &scaled, MetaConfig::default().separator_l2)?;
    Ok(separators.distance(&space.transform(x)))
}

/// One-shot convenience: fit a context and score a single instance.
pub fn compute_all(
    x: &[f64],
    train: &LabelledDataset,
    config: MetaConfig,
    seed: Seed,
) -> Result<(MetaFeatureVector, MetaFlags)> {
    let ctx = MetaContext::fit(train, config, seed)?;
    ctx.compute_all(x, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Two Gaussian-ish blobs around (0,0) and (d,0).
    fn blobs(n_per: usize, separation: f64, seed: u64) -> LabelledDataset {
        let mut rng = Seed(seed).rng();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..(2 * n_per) {
            let class = i / n_per;
            let cx = class as f64 * separation;
            rows.push(vec![
                cx + rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
            ]);
            labels.push(if class == 0 { "a" } else { "b" });
        }
        let refs: Vec<&str> = labels.iter().copied().collect();
        LabelledDataset::from_numeric_rows("blobs", &["x", "y"], &rows, &refs).unwrap()
    }

    #[test]
    fn kdn_trivial_and_derived_values() {
        let ds = blobs(20, 10.0, 1);
        // Deep inside blob a: homogeneous neighbourhood.
        assert_eq!(kdn(&[0.0, 0.0], &ds, 5).unwrap(), 0.0);
        // Balanced neighbourhood via a hand-built set: 2 a's and 2 b's
        // nearest to the origin.
        let rows = vec![
            vec![0.1, 0.0],
            vec![-0.1, 0.0],
            vec![0.0, 0.1],
            vec![0.0, -0.1],
            vec![9.0, 9.0],
            vec![-9.0, 9.0],
        ];
        let labels = vec!["a", "a", "b", "b", "a", "b"];
        let hand = LabelledDataset::from_numeric_rows("hand", &["x", "y"], &rows, &labels).unwrap();
        assert!((kdn(&[0.0, 0.0], &hand, 4).unwrap() - 1.0).abs() < 1e-12);
        // Three a's and one b: the 1 - lrid/worst arithmetic.
        let rows = vec![
            vec![0.1, 0.0],
            vec![-0.1, 0.0],
            vec![0.0, 0.1],
            vec![0.0, -0.1],
            vec![9.0, 9.0],
        ];
        let labels = vec!["a", "a", "a", "b", "b"];
        let hand = LabelledDataset::from_numeric_rows("hand2", &["x", "y"], &rows, &labels).unwrap();
        let expected = diversity_of_labels(&[0, 0, 0, 1], 2).unwrap();
        assert!((kdn(&[0.0, 0.0], &hand, 4).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.8112781244591328).abs() < 1e-9);
    }

    #[test]
    fn kdn_rejects_oversized_k() {
        let ds = blobs(3, 10.0, 2);
        assert!(kdn(&[0.0, 0.0], &ds, 7).is_err());
        assert!(kdn(&[0.0, 0.0], &ds, 6).is_ok());
    }

    /// 1-D dataset whose unpruned tree has leaves of sizes 1, 3, 5.
    fn leaf_135_ds() -> LabelledDataset {
        let mut rows = vec![vec![0.0]];
        let mut labels = vec!["a"];
        for _ in 0..3 {
            rows.push(vec![1.0]);
            labels.push("b");
        }
        for _ in 0..5 {
            rows.push(vec![2.0]);
            labels.push("a");
        }
        LabelledDataset::from_numeric_rows("135", &["v"], &rows, &labels).unwrap()
    }

    #[test]
    fn disjunct_size_hand_oracle() {
        let ds = leaf_135_ds();
        assert!((disjunct_size(&[1.0], &ds).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(disjunct_size(&[0.0], &ds).unwrap(), 0.0);
        assert!((disjunct_size(&[2.0], &ds).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjunct_diversity_on_pruned_tree() {
        // Clean separation: pruned leaves stay pure.
        let ds = blobs(15, 10.0, 3);
        assert_eq!(disjunct_class_diversity(&[0.0, 0.0], &ds).unwrap(), 0.0);
        // One deep flip inside a large clean blob: pruning removes the
        // splits isolating it, leaving a mixed disjunct.
        let mut rows: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 * 0.1, 0.0]).collect();
        rows.push(vec![0.55, 0.0]);
        let mut labels = vec!["a"; 12];
        labels.push("b");
        // Anchor class b far away so it is a real class.
        rows.push(vec![50.0, 0.0]);
        rows.push(vec![50.1, 0.0]);
        labels.push("b");
        labels.push("b");
        let noisy = LabelledDataset::from_numeric_rows("noisy", &["x", "y"], &rows, &labels).unwrap();
        let dcd = disjunct_class_diversity(&[0.3, 0.0], &noisy).unwrap();
        let expected = diversity_of_labels(&[0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1], 2).unwrap();
        assert!(
            (dcd - expected).abs() < 1e-9,
            "dcd {dcd} vs expected {expected} (pruning should fold the flip back in)"
        );
    }

    #[test]
    fn outlierness_near_one_inside_uniform_cluster() {
        let mut rng = Seed(4).rng();
        let rows: Vec<Vec<f64>> = (0..120)
            .map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()])
            .collect();
        let labels: Vec<&str> = (0..120).map(|i| if i % 2 == 0 { "a" } else { "b" }).collect();
        let ds = LabelledDataset::from_numeric_rows("uniform", &["x", "y"], &rows, &labels).unwrap();
        let (ol, floored) = outlierness(&[0.5, 0.5], &ds, 5, None).unwrap();
        assert!(!floored);
        assert!((ol - 1.0).abs() < 0.25, "central ol = {ol}");
    }

    #[test]
    fn outlierness_grows_with_distance() {
        let ds = blobs(40, 0.0, 5);
        let (near, _) = outlierness(&[0.0, 0.0], &ds, 5, None).unwrap();
        let (far, _) = outlierness(&[4.0, 4.0], &ds, 5, None).unwrap();
        assert!(far > near, "far {far} <= near {near}");
        assert!(far > 1.0);
    }

    #[test]
    fn outlierness_is_translation_invariant() {
        let ds = blobs(30, 1.0, 6);
        let shifted_rows: Vec<Vec<f64>> = (0..ds.n_instances())
            .map(|i| vec![ds.row(i)[0] + 100.0, ds.row(i)[1] - 40.0])
            .collect();
        let labels: Vec<&str> = (0..ds.n_instances())
            .map(|i| if ds.label(i) == 0 { "a" } else { "b" })
            .collect();
        let shifted =
            LabelledDataset::from_numeric_rows("shifted", &["x", "y"], &shifted_rows, &labels)
                .unwrap();
        let (a, _) = outlierness(&[0.3, 0.2], &ds, 5, None).unwrap();
        let (b, _) = outlierness(&[100.3, -39.8], &shifted, 5, None).unwrap();
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn clol_balanced_between_identical_clusters() {
        // Two identical clusters; a point midway is equally outlying to both.
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..12 {
            let angle = i as f64;
            rows.push(vec![angle.cos() * 0.3, angle.sin() * 0.3]);
            labels.push("a");
            rows.push(vec![10.0 + angle.cos() * 0.3, angle.sin() * 0.3]);
            labels.push("b");
        }
        let refs: Vec<&str> = labels.iter().copied().collect();
        let ds = LabelledDataset::from_numeric_rows("twin", &["x", "y"], &rows, &refs).unwrap();
        let (clol, _) = class_level_outlierness(&[5.0, 0.0], &ds, 5, None).unwrap();
        assert!(clol > 0.99, "midpoint clol = {clol}");
        // Deep inside class a, outlierness concentrates on class b.
        let (inside, _) = class_level_outlierness(&[0.0, 0.0], &ds, 5, None).unwrap();
        assert!(inside < clol, "inside {inside} !< midpoint {clol}");
    }

    #[test]
    fn clol_rejects_singleton_class() {
        let rows = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let labels = vec!["a", "a", "a", "b"];
        let ds = LabelledDataset::from_numeric_rows("single", &["v"], &rows, &labels).unwrap();
        match class_level_outlierness(&[0.5], &ds, 2, None).unwrap_err() {
            Error::SingletonClass { class } => assert_eq!(class, "b"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn clol_reduces_k_for_small_classes() {
        let rows = vec![vec![0.0], vec![0.2], vec![5.0], vec![5.2], vec![5.4], vec![5.6]];
        let labels = vec!["a", "a", "b", "b", "b", "b"];
        let ds = LabelledDataset::from_numeric_rows("small", &["v"], &rows, &labels).unwrap();
        let (_, flags) = class_level_outlierness(&[2.0], &ds, 3, None).unwrap();
        assert!(flags.clol_k_reduced);
    }

    /// Single nominal feature; class a sees category u half the time,
    /// class b always.
    fn nominal_ec_ds() -> LabelledDataset {
        let schema = crate::data::DatasetSchema::new(
            vec![("colour".to_string(), FeatureKind::Nominal)],
            "class",
        );
        let text = "colour,class\nu,a\nv,a\nu,b\nu,b\n";
        crate::data::parse_dataset(text, &schema, crate::data::MissingPolicy::Reject, "ec").unwrap()
    }

    #[test]
    fn evidence_conflict_frequency_oracle() {
        let ds = nominal_ec_ds();
        // x = category u, predicted class a: f_a = 1/2, f_b = 1.
        let u_code = ds.categories(0).iter().position(|c| c == "u").unwrap() as f64;
        let (ec, flagged) = evidence_conflict(&[u_code], &ds, 0).unwrap();
        assert!(!flagged);
        assert!((ec - 0.5).abs() < 1e-12, "ec = {ec}");
        // Predicted class b instead: conflict is negative, floored to 0.
        let (ec_b, _) = evidence_conflict(&[u_code], &ds, 1).unwrap();
        assert_eq!(ec_b, 0.0);
    }

    #[test]
    fn evidence_conflict_zero_density_flag() {
        let schema = crate::data::DatasetSchema::new(
            vec![("colour".to_string(), FeatureKind::Nominal)],
            "class",
        );
        // Category w appears only under class t.
        let text = "colour,class\nu,a\nu,a\nv,b\nv,b\nw,t\nw,t\n";
        let ds =
            crate::data::parse_dataset(text, &schema, crate::data::MissingPolicy::Reject, "ec3")
                .unwrap();
        let w_code = ds.categories(0).iter().position(|c| c == "w").unwrap() as f64;
        // Predicted a; against rival b both densities at w are zero.
        let (ec, flagged) = evidence_conflict(&[w_code], &ds, 0).unwrap();
        assert!(flagged);
        // Against rival t the conflict is total.
        assert!((ec - 1.0).abs() < 1e-12);
    }

    #[test]
    fn evidence_conflict_low_inside_own_class() {
        let ds = blobs(40, 8.0, 7);
        let (ec, _) = evidence_conflict(&[0.0, 0.0], &ds, 0).unwrap();
        assert!(ec < 0.05, "deep-inside ec = {ec}");
    }

    #[test]
    fn hyperplane_distance_hand_oracle() {
        // Symmetric 1-D classes: boundary near 0, farthest point at 4.
        let rows = vec![
            vec![-4.0],
            vec![-2.0],
            vec![-1.0],
            vec![1.0],
            vec![2.0],
            vec![4.0],
        ];
        let labels = vec!["a", "a", "a", "b", "b", "b"];
        let ds = LabelledDataset::from_numeric_rows("line", &["v"], &rows, &labels).unwrap();
        let at_one = hyperplane_distance(&[1.0], &ds).unwrap();
        assert!((at_one - 0.25).abs() < 0.05, "hd(1) = {at_one}");
        let at_boundary = hyperplane_distance(&[0.0], &ds).unwrap();
        assert!(at_boundary < 0.05, "hd(0) = {at_boundary}");
        let at_extreme = hyperplane_distance(&[4.0], &ds).unwrap();
        assert!((at_extreme - 1.0).abs() < 1e-9, "hd(4) = {at_extreme}");
        // Beyond the training range the distance clamps at 1.
        assert_eq!(hyperplane_distance(&[9.0], &ds).unwrap(), 1.0);
    }

    #[test]
    fn hyperplane_distance_degenerate_errors() {
        let rows = vec![vec![1.0], vec![1.0], vec![1.0], vec![1.0]];
        let labels = vec!["a", "b", "a", "b"];
        let ds = LabelledDataset::from_numeric_rows("flat", &["v"], &rows, &labels).unwrap();
        assert!(matches!(
            hyperplane_distance(&[1.0], &ds).unwrap_err(),
            Error::DegenerateSeparator(_)
        ));
    }

    #[test]
    fn fisher_ratio_hand_oracles() {
        // Identical means: zero ratio.
        let rows = vec![vec![-1.0], vec![1.0], vec![-1.0], vec![1.0]];
        let labels = vec!["a", "a", "b", "b"];
        let ds = LabelledDataset::from_numeric_rows("f0", &["v"], &rows, &labels).unwrap();
        assert_eq!(fisher_ratio(&ds, 0).unwrap(), 0.0);
        // Means 0 and 2, population variances 1, equal sizes: ratio 1.
        let rows = vec![vec![-1.0], vec![1.0], vec![1.0], vec![3.0]];
        let labels = vec!["a", "a", "b", "b"];
        let ds = LabelledDataset::from_numeric_rows("f1", &["v"], &rows, &labels).unwrap();
        assert!((fisher_ratio(&ds, 0).unwrap() - 1.0).abs() < 1e-12);
        // Zero within-class variance with separated means: capped.
        let rows = vec![vec![0.0], vec![0.0], vec![2.0], vec![2.0]];
        let labels = vec!["a", "a", "b", "b"];
        let ds = LabelledDataset::from_numeric_rows("f2", &["v"], &rows, &labels).unwrap();
        assert_eq!(fisher_ratio(&ds, 0).unwrap(), FISHER_CAP);
    }

    #[test]
    fn context_matches_free_functions() {
        let ds = blobs(25, 2.0, 8);
        let ctx = MetaContext::fit(&ds, MetaConfig::default(), Seed(0)).unwrap();
        let x = [0.7, 0.1];
        let (v, _) = ctx.compute_all(&x, None).unwrap();
        assert!((v.kdn - kdn(&x, &ds, 5).unwrap()).abs() < 1e-12);
        assert!((v.ds - disjunct_size(&x, &ds).unwrap()).abs() < 1e-12);
        assert!((v.dcd - disjunct_class_diversity(&x, &ds).unwrap()).abs() < 1e-12);
        let (ol, _) = outlierness(&x, &ds, 5, None).unwrap();
        assert!((v.ol - ol).abs() < 1e-9);
        let (clol, _) = class_level_outlierness(&x, &ds, 5, None).unwrap();
        assert!((v.clol - clol).abs() < 1e-9);
        let pred = ctx.surrogate_prediction(&x);
        let (ec, _) = evidence_conflict(&x, &ds, pred).unwrap();
        assert!((v.ec - ec).abs() < 1e-12);
        assert!((v.hd - hyperplane_distance(&x, &ds).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ranges_hold_on_random_data(){
        let mut rng = Seed(9).rng();
        for trial in 0..5 {
            let ds = blobs(15 + trial * 3, rng.gen::<f64>() * 3.0, 100 + trial as u64);
            let ctx = MetaContext::fit(&ds, MetaConfig::default(), Seed(1)).unwrap();
            for _ in 0..8 {
                let x = [rng.gen::<f64>() * 4.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0];
                let (v, _) = ctx.compute_all(&x, None).unwrap();
                for (name, val) in MetaFeatureVector::NAMES.iter().zip(v.as_array()) {
                    assert!(val.is_finite(), "{name} not finite");
                    if *name != "ol" {
                        assert!((0.0..=1.0).contains(&val), "{name} = {val} out of range");
                    } else {
                        assert!(val >= 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn label_permutation_invariance() {
        let ds = blobs(20, 1.5, 10);
        // Rename so codes swap: "a"->"z" (code 1), "b"->"b" (code 0).
        let rows: Vec<Vec<f64>> = (0..ds.n_instances()).map(|i| ds.row(i).to_vec()).collect();
        let labels: Vec<&str> = (0..ds.n_instances())
            .map(|i| if ds.label(i) == 0 { "z" } else { "b" })
            .collect();
        let renamed = LabelledDataset::from_numeric_rows("renamed", &["x", "y"], &rows, &labels).unwrap();
        let ctx_a = MetaContext::fit(&ds, MetaConfig::default(), Seed(2)).unwrap();
        let ctx_b = MetaContext::fit(&renamed, MetaConfig::default(), Seed(2)).unwrap();
        for x in [[0.2, 0.0], [1.0, 0.3], [2.4, -0.2]] {
            let (va, _) = ctx_a.compute_all(&x, None).unwrap();
            let (vb, _) = ctx_b.compute_all(&x, None).unwrap();
            assert!((va.kdn - vb.kdn).abs() < 1e-12);
            assert!((va.dcd - vb.dcd).abs() < 1e-12);
            assert!((va.clol - vb.clol).abs() < 1e-9);
        }
    }

    #[test]
    fn overlap_band_has_higher_mean_kdn() {
        let ds = blobs(60, 1.0, 11);
        let ctx = MetaContext::fit(&ds, MetaConfig::default(), Seed(3)).unwrap();
        let mut inside = Vec::new();
        let mut outside = Vec::new();
        for i in 0..ds.n_instances() {
            let x = ds.row(i)[0];
            let (v, _) = ctx.compute_all(ds.row(i), None).unwrap();
            if (0.25..=0.75).contains(&x) {
                inside.push(v.kdn);
            } else if !(0.0..=1.0).contains(&x) {
                outside.push(v.kdn);
            }
        }
        assert!(!inside.is_empty() && !outside.is_empty());
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(
            mean(&inside) > mean(&outside),
            "overlap-band kdn {} !> exterior kdn {}",
            mean(&inside),
            mean(&outside)
        );
    }

    #[test]
    fn pure_cluster_instance_scores_low() {
        let ds = blobs(30, 12.0, 12);
        let ctx = MetaContext::fit(&ds, MetaConfig::default(), Seed(4)).unwrap();
        let (v, _) = ctx.compute_all(&[0.05, 0.05], None).unwrap();
        assert_eq!(v.kdn, 0.0);
        assert_eq!(v.dcd, 0.0);
        assert!(v.ec < 0.05);
    }

    #[test]
    fn neighbourhood_union_structure() {
        let ds = blobs(15, 2.0, 13);
        let ctx = MetaContext::fit(&ds, MetaConfig::default(), Seed(5)).unwrap();
        let nb = ctx.neighbourhood_of(&[0.5, 0.0]);
        assert_eq!(nb.knn.len(), 5);
        let mut expected: BTreeSet<usize> = nb.knn.iter().copied().collect();
        expected.extend(nb.rnn.iter().copied());
        expected.extend(nb.snn.iter().copied());
        assert_eq!(nb.union, expected.into_iter().collect::<Vec<_>>());
    }

    #[test]
    fn batch_matches_single_computation() {
        let ds = blobs(20, 2.0, 14);
        let ctx = MetaContext::fit(&ds, MetaConfig::default(), Seed(6)).unwrap();
        let rows = vec![vec![0.1, 0.1], vec![1.9, -0.2], vec![1.0, 0.4]];
        let batch = ctx.compute_batch(&rows, None).unwrap();
        for (row, (bv, bf)) in rows.iter().zip(&batch) {
            let (sv, sf) = ctx.compute_all(row, None).unwrap();
            assert_eq!(sv, *bv);
            assert_eq!(sf, *bf);
        }
    }
}

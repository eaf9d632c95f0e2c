//! A small zoo of tunable classifiers behind one interface: logistic
//! regression, Gaussian naive Bayes, k-nearest-neighbour and a decision
//! tree. Hyper-parameters are chosen by sequential model-based search
//! scored with balanced accuracy under internal stratified CV; the final
//! model is refit on all training rows.

pub mod bayesopt;
pub mod kde;
pub mod knn;
pub mod logistic;
pub mod nb;
pub mod platt;
pub mod tree;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{make_stratified_folds, FeatureSpace, LabelledDataset};
use crate::error::{Error, Result};
use crate::seed::Seed;
use crate::FORMAT_VERSION;
use bayesopt::{maximize, ParamDomain, ParamValue, SearchSpace};
use knn::KnnBackend;
use logistic::{fit_logistic, LinearModel};
use nb::GaussianNbBackend;
use tree::{DecisionTree, TreeParams};

/// The supported classifier families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    LogisticRegression,
    GaussianNb,
    KnnClassifier,
    DecisionTree,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 4] = [
        ClassifierKind::LogisticRegression,
        ClassifierKind::GaussianNb,
        ClassifierKind::KnnClassifier,
        ClassifierKind::DecisionTree,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::LogisticRegression => "logistic_regression",
            ClassifierKind::GaussianNb => "gaussian_nb",
            ClassifierKind::KnnClassifier => "knn_classifier",
            ClassifierKind::DecisionTree => "decision_tree",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic_regression" | "lr" => Ok(ClassifierKind::LogisticRegression),
            "gaussian_nb" | "nb" => Ok(ClassifierKind::GaussianNb),
            "knn_classifier" | "knn" => Ok(ClassifierKind::KnnClassifier),
            "decision_tree" | "tree" => Ok(ClassifierKind::DecisionTree),
            other => Err(Error::invalid(format!(
                "unknown classifier kind '{other}' (expected logistic_regression, gaussian_nb, knn_classifier or decision_tree)"
            ))),
        }
    }
}

/// A classifier family plus its hyper-parameter search space.
#[derive(Debug, Clone)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    pub space: SearchSpace,
}

impl ClassifierSpec {
    /// The default search space for a family: regularisation strength
    /// (0.01..100, log) for logistic regression, variance smoothing
    /// (0.01..1, log) for naive Bayes, neighbour count (2..11) for k-NN,
    /// and depth (2..12) with minimum leaf size (1..8) for the tree.
    pub fn new(kind: ClassifierKind) -> Self {
        let space = match kind {
            ClassifierKind::LogisticRegression => SearchSpace::new(vec![(
                "c",
                ParamDomain::Real {
                    lo: 0.01,
                    hi: 100.0,
                    log: true,
                },
            )]),
            ClassifierKind::GaussianNb => SearchSpace::new(vec![(
                "smoothing",
                ParamDomain::Real {
                    lo: 0.01,
                    hi: 1.0,
                    log: true,
                },
            )]),
            ClassifierKind::KnnClassifier => {
                SearchSpace::new(vec![("k", ParamDomain::Int { lo: 2, hi: 11 })])
            }
            ClassifierKind::DecisionTree => SearchSpace::new(vec![
                ("max_depth", ParamDomain::Int { lo: 2, hi: 12 }),
                ("min_leaf", ParamDomain::Int { lo: 1, hi: 8 }),
            ]),
        };
        ClassifierSpec { kind, space }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Backend {
    Logistic {
        space: FeatureSpace,
        /// One model for binary problems, one-vs-rest stack otherwise.
        models: Vec<LinearModel>,
    },
    Gnb {
        space: FeatureSpace,
        backend: GaussianNbBackend,
    },
    Knn {
        space: FeatureSpace,
        backend: KnnBackend,
    },
    Tree {
        tree: DecisionTree,
    },
}

/// A fitted classifier, serialisable as a versioned artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub version: u32,
    pub kind: ClassifierKind,
    /// Chosen hyper-parameters by name (integers stored as floats).
    pub hyperparameters: Vec<(String, f64)>,
    pub classes: Vec<String>,
    backend: Backend,
}

impl TrainedClassifier {
    /// Class probabilities for a raw (schema-encoded) row; sums to one.
    pub fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        let mut probs = match &self.backend {
            Backend::Logistic { space, models } => {
                let x = space.transform(row);
                if models.len() == 1 {
                    let p = models[0].prob(&x);
                    vec![1.0 - p, p]
                } else {
                    models.iter().map(|m| m.prob(&x)).collect()
                }
            }
            Backend::Gnb { space, backend } => backend.predict_proba(&space.transform(row)),
            Backend::Knn { space, backend } => backend.predict_proba(&space.transform(row)),
            Backend::Tree { tree } => {
                let counts = tree.predict_counts(row);
                let total: usize = counts.iter().sum();
                counts.iter().map(|&c| c as f64 / total.max(1) as f64).collect()
            }
        };
        let sum: f64 = probs.iter().sum();
        if sum > 0.0 {
            probs.iter_mut().for_each(|p| *p /= sum);
        } else {
            let n = probs.len() as f64;
            probs.iter_mut().for_each(|p| *p = 1.0 / n);
        }
        probs
    }

    /// Most probable class; ties break to the lower class code.
    pub fn predict(&self, row: &[f64]) -> usize {
        argmax(&self.predict_proba(row))
    }

    /// Confidence margin of the predicted class: `|p_top - 0.5|`. Small
    /// values mean the model was near-undecided.
    pub fn probability_uncertainty(&self, row: &[f64]) -> f64 {
        let probs = self.predict_proba(row);
        let top = probs.iter().cloned().fold(0.0, f64::max);
        (top - 0.5).abs()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::MalformedArtifact(format!("serialise classifier: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: TrainedClassifier = serde_json::from_str(&text)
            .map_err(|e| Error::MalformedArtifact(format!("classifier json: {e}")))?;
        if model.version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: model.version,
                expected: FORMAT_VERSION,
            });
        }
        Ok(model)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Fit a classifier with explicit hyper-parameters on all rows of `train`.
pub fn fit_with_params(
    kind: ClassifierKind,
    train: &LabelledDataset,
    params: &[ParamValue],
) -> Result<TrainedClassifier> {
    let all: Vec<usize> = (0..train.n_instances()).collect();
    let n_classes = train.n_classes();
    let mut hyper = Vec::new();
    let backend = match kind {
        ClassifierKind::LogisticRegression => {
            let c = params[0].as_f64();
            hyper.push(("c".to_string(), c));
            let space = FeatureSpace::fit(train, &all)?;
            let rows = space.matrix(train, &all);
            let l2 = 1.0 / c;
            let mut models = Vec::new();
            let targets: Vec<usize> = if n_classes == 2 { vec![1] } else { (0..n_classes).collect() };
            for c_pos in targets {
                let y: Vec<bool> = all.iter().map(|&i| train.label(i) == c_pos).collect();
                let fit = fit_logistic(&rows, &y, l2, 100, 1e-8)?;
                models.push(LinearModel::from_fit(&fit));
            }
            Backend::Logistic { space, models }
        }
        ClassifierKind::GaussianNb => {
            let smoothing = params[0].as_f64();
            hyper.push(("smoothing".to_string(), smoothing));
            let space = FeatureSpace::fit(train, &all)?;
            let rows = space.matrix(train, &all);
            let backend = GaussianNbBackend::fit(&rows, train.labels(), n_classes, smoothing)?;
            Backend::Gnb { space, backend }
        }
        ClassifierKind::KnnClassifier => {
            let k = params[0].as_usize();
            hyper.push(("k".to_string(), k as f64));
            let space = FeatureSpace::fit(train, &all)?;
            let rows = space.matrix(train, &all);
            Backend::Knn {
                space,
                backend: KnnBackend {
                    train: rows,
                    labels: train.labels().to_vec(),
                    k,
                    n_classes,
                },
            }
        }
        ClassifierKind::DecisionTree => {
            let max_depth = params[0].as_usize();
            let min_leaf = params[1].as_usize();
            hyper.push(("max_depth".to_string(), max_depth as f64));
            hyper.push(("min_leaf".to_string(), min_leaf as f64));
            let tree = DecisionTree::grow(
                train,
                &all,
                TreeParams {
                    max_depth: Some(max_depth),
                    min_leaf,
                },
            )?;
            Backend::Tree { tree }
        }
    };
    Ok(TrainedClassifier {
        version: FORMAT_VERSION,
        kind,
        hyperparameters: hyper,
        classes: train.class_names().to_vec(),
        backend,
    })
}

/// Mean per-class recall over the classes present in `y_true`.
pub fn balanced_accuracy(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<f64> {
    if y_true.is_empty() || y_true.len() != y_pred.len() {
        return Err(Error::invalid("balanced accuracy needs matching label vectors"));
    }
    let mut support = vec![0usize; n_classes];
    let mut hits = vec![0usize; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        support[t] += 1;
        if t == p {
            hits[t] += 1;
        }
    }
    let mut sum = 0.0;
    let mut present = 0usize;
    for c in 0..n_classes {
        if support[c] > 0 {
            sum += hits[c] as f64 / support[c] as f64;
            present += 1;
        }
    }
    Ok(sum / present.max(1) as f64)
}

/// Tune hyper-parameters with `budget` objective evaluations (each an
/// internal `folds`-fold stratified CV scored by mean balanced accuracy),
/// then refit the best setting on all of `train`.
pub fn train_tuned(
    spec: &ClassifierSpec,
    train: &LabelledDataset,
    folds: usize,
    budget: usize,
    seed: Seed,
) -> Result<TrainedClassifier> {
    let plan = make_stratified_folds(train, folds, seed.derive("cv-folds", 0))?;
    // Materialise fold subsets once; the objective reuses them.
    let mut splits = Vec::with_capacity(folds);
    for f in 0..folds {
        let train_idx = plan.train_indices(f);
        let val_idx = plan.fold_indices(f);
        let sub = train.subset(&train_idx, &format!("{}-cv{f}", train.id))?;
        splits.push((sub, val_idx));
    }
    let n_classes = train.n_classes();
    let objective = |params: &[ParamValue]| -> Result<f64> {
        let scores = crate::par::map_slice(&splits, |(sub, val_idx)| -> Result<f64> {
            let model = fit_with_params(spec.kind, sub, params)?;
            let y_true: Vec<usize> = val_idx.iter().map(|&i| train.label(i)).collect();
            let y_pred: Vec<usize> = val_idx.iter().map(|&i| model.predict(train.row(i))).collect();
            balanced_accuracy(&y_true, &y_pred, n_classes)
        });
        let mut total = 0.0;
        for s in scores {
            total += s?;
        }
        Ok(total / folds as f64)
    };
    let opt = maximize(&spec.space, budget, seed.derive("search", 0), objective)?;
    fit_with_params(spec.kind, train, &opt.params)
}

//! Instance-level complexity meta-heuristics and per-instance
//! misclassification-uncertainty estimation.
//!
//! The crate characterises every instance of a labelled tabular dataset with
//! seven interpretable meta-heuristics (neighbourhood disagreement, disjunct
//! size and class diversity, outlierness, per-class outlierness balance,
//! feature-level evidence conflict, and distance to the class boundary),
//! collects those scores together with observed misclassification flags into
//! a knowledge base, and fits a weighted fuzzy-clustering estimator on top of
//! it so that new instances can be scored with an expected misclassification
//! rate before a prediction is trusted.
//!
//! Supporting modules provide the data plumbing (schema-typed CSV ingestion,
//! stratified folds, deterministic seeding), a small zoo of tunable
//! classifiers, a synthetic-dataset generator driven by measured dataset
//! complexity, evaluation statistics (odds ratios, ranking metrics,
//! abstention curves), instance filtering for instances that should be
//! misclassified, and exact Shapley attributions for individual estimates.
//!
//! All stochastic entry points take an explicit [`Seed`]; identical inputs
//! and seeds produce identical results, with or without the `parallel`
//! feature.

pub mod data;
pub mod diversity;
pub mod error;
pub mod estimator;
pub mod evalstats;
pub mod explain;
pub mod knowledgebase;
pub mod learners;
pub mod linalg;
pub mod metafeatures;
pub mod par;
pub mod seed;
pub mod synthgen;

pub use error::{Error, Result};
pub use seed::Seed;

/// Version stamp written into every serialised artifact (models, knowledge
/// bases, reports). Readers refuse artifacts with a different version.
pub const FORMAT_VERSION: u32 = 1;

//! The meta-knowledge base: per-instance complexity vectors paired with
//! observed misclassification flags.
//!
//! [`build_kb`] runs every source dataset through seeded cross-validation
//! — complexity measures of each held-out instance are computed against
//! the training folds only, and a classifier tuned on those same folds
//! supplies the prediction behind the flag — so no record ever describes
//! an instance that influenced its own reference set. [`sample_kb`]
//! draws task-specific subsets: nearest-q% pools around an anchor
//! vector, then uniform selection.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::index::sample as sample_indices;
use serde::{Deserialize, Serialize};

use crate::data::make_stratified_folds;
use crate::data::LabelledDataset;
use crate::error::{Error, Result};
use crate::learners::{train_tuned, ClassifierSpec};
use crate::metafeatures::{MetaConfig, MetaContext, MetaFeatureVector};
use crate::seed::Seed;

/// On-disk format version of the JSON-lines knowledge base.
pub const KB_FORMAT_VERSION: u32 = 1;

/// Where a record's dataset came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Real,
    Synthetic,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Real => "real",
            Provenance::Synthetic => "synthetic",
        })
    }
}

/// One knowledge-base entry: the complexity profile of a single held-out
/// instance and whether its tuned classifier got it wrong.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbRecord {
    pub meta: MetaFeatureVector,
    pub misclassified: bool,
    pub provenance: Provenance,
    pub dataset_id: String,
    pub model_kind: String,
    /// Row index within the source dataset.
    pub instance_index: usize,
    /// Outer fold that held the instance out.
    pub fold: usize,
}

/// Per-column means and standard deviations plus the global flag rate;
/// always derived from the records it describes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbSummary {
    pub count: usize,
    pub misclassification_rate: f64,
    pub mean: [f64; 7],
    pub stdev: [f64; 7],
}

/// The record collection. The persisted form is JSON lines: a header
/// carrying the format version and summary, then one record per line.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    pub records: Vec<KbRecord>,
}

#[derive(Serialize, Deserialize)]
struct KbHeader {
    version: u32,
    #[serde(flatten)]
    summary: KbSummary,
}

impl KnowledgeBase {
    pub fn new(records: Vec<KbRecord>) -> Self {
        KnowledgeBase { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Fraction of records flagged as misclassified.
    pub fn misclassification_rate(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| r.misclassified).count() as f64 / self.records.len() as f64
    }

    /// Column statistics over the current records.
    pub fn summary(&self) -> KbSummary {
        let n = self.records.len();
        let mut mean = [0.0; 7];
        let mut stdev = [0.0; 7];
        if n > 0 {
            for r in &self.records {
                for (m, v) in mean.iter_mut().zip(r.meta.as_array()) {
                    *m += v;
                }
            }
            for m in mean.iter_mut() {
                *m /= n as f64;
            }
            for r in &self.records {
                for ((s, m), v) in stdev.iter_mut().zip(mean).zip(r.meta.as_array()) {
                    *s += (v - m) * (v - m);
                }
            }
            for s in stdev.iter_mut() {
                *s = (*s / n as f64).sqrt();
            }
        }
        KbSummary {
            count: n,
            misclassification_rate: self.misclassification_rate(),
            mean,
            stdev,
        }
    }

    /// Append another base's records (e.g. merging per-model builds).
    pub fn merge(&mut self, other: KnowledgeBase) {
        self.records.extend(other.records);
        self.sort_canonically();
    }

    fn sort_canonically(&mut self) {
        self.records.sort_by(|a, b| {
            a.dataset_id
                .cmp(&b.dataset_id)
                .then(a.instance_index.cmp(&b.instance_index))
                .then(a.model_kind.cmp(&b.model_kind))
        });
    }

    /// The serialized JSON-lines form: header line, then one record per
    /// line.
    pub fn to_jsonl(&self) -> String {
        let header = KbHeader {
            version: KB_FORMAT_VERSION,
            summary: self.summary(),
        };
        let mut out = serde_json::to_string(&header).expect("kb header serializes");
        out.push('\n');
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("kb record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<KnowledgeBase> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::MalformedArtifact("empty knowledge base file".to_string()))?
            .map_err(|e| Error::io(path, e))?;
        let header: KbHeader = serde_json::from_str(&header_line)
            .map_err(|e| Error::MalformedArtifact(format!("knowledge base header: {e}")))?;
        if header.version != KB_FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: header.version,
                expected: KB_FORMAT_VERSION,
            });
        }
        let mut records = Vec::with_capacity(header.summary.count);
        for line in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: KbRecord = serde_json::from_str(&line)
                .map_err(|e| Error::MalformedArtifact(format!("knowledge base record: {e}")))?;
            records.push(record);
        }
        if records.len() != header.summary.count {
            return Err(Error::MalformedArtifact(format!(
                "header claims {} records, file holds {}",
                header.summary.count,
                records.len()
            )));
        }
        Ok(KnowledgeBase { records })
    }
}

/// Which provenance classes a sampling pass admits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Realness {
    Real,
    Synthetic,
    Both,
}

impl Realness {
    fn admits(self, p: Provenance) -> bool {
        matches!(
            (self, p),
            (Realness::Both, _)
                | (Realness::Real, Provenance::Real)
                | (Realness::Synthetic, Provenance::Synthetic)
        )
    }
}

/// How [`sample_kb`] narrows a base: provenance filter, nearest-percent
/// pool, selection count.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SamplingPolicy {
    /// Records to select (upper bound).
    pub m: usize,
    /// Pool percentage: the nearest q% of filtered records by
    /// meta-feature distance to the anchor.
    pub q: f64,
    pub realness: Realness,
}

impl Default for SamplingPolicy {
    fn default() -> Self {
        SamplingPolicy {
            m: 2000,
            q: 100.0,
            realness: Realness::Both,
        }
    }
}

impl SamplingPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::invalid("sample size m must be at least 1"));
        }
        if !(self.q > 0.0 && self.q <= 100.0) {
            return Err(Error::invalid(format!("pool percentage q={} must lie in (0, 100]", self.q)));
        }
        Ok(())
    }
}

/// Flag positions where prediction and truth disagree.
pub fn label_misclassifications(preds: &[usize], truth: &[usize]) -> Result<Vec<bool>> {
    if preds.len() != truth.len() {
        return Err(Error::invalid(format!(
            "{} predictions against {} labels",
            preds.len(),
            truth.len()
        )));
    }
    Ok(preds.iter().zip(truth).map(|(p, t)| p != t).collect())
}

/// A dataset tagged with its provenance, ready for ingestion.
#[derive(Debug, Clone)]
pub struct KbSource {
    pub dataset: LabelledDataset,
    pub provenance: Provenance,
}

impl KbSource {
    pub fn real(dataset: LabelledDataset) -> Self {
        KbSource { dataset, provenance: Provenance::Real }
    }

    pub fn synthetic(dataset: LabelledDataset) -> Self {
        KbSource { dataset, provenance: Provenance::Synthetic }
    }
}

/// Knobs of the ingestion pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct KbBuildConfig {
    /// Outer folds holding instances out.
    pub folds: usize,
    /// Folds of the classifier's internal tuning CV.
    pub inner_folds: usize,
    /// Hyper-parameter evaluations per per-fold classifier.
    pub tuning_budget: usize,
    pub meta: MetaConfig,
}

impl Default for KbBuildConfig {
    fn default() -> Self {
        KbBuildConfig {
            folds: 5,
            inner_folds: 5,
            tuning_budget: 16,
            meta: MetaConfig::default(),
        }
    }
}

/// Datasets that could not be ingested, with the error text; successful
/// datasets are unaffected.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct KbBuildReport {
    pub failures: Vec<(String, String)>,
}

/// Build a knowledge base from tagged datasets.
///
/// Per dataset, a seeded stratified partition drives both passes: the
/// complexity context is fitted on the training folds, and a classifier
/// tuned on those folds predicts the held-out instances, whose
/// disagreement with the truth becomes the flag. Each instance of each
/// source contributes exactly one record. Failing datasets are skipped
/// and reported; the result errors only when nothing could be ingested.
pub fn build_kb(
    sources: &[KbSource],
    spec: &ClassifierSpec,
    config: &KbBuildConfig,
    seed: Seed,
) -> Result<(KnowledgeBase, KbBuildReport)> {
    let per_dataset: Vec<Result<Vec<KbRecord>>> = crate::par::map_slice(sources, |source| {
        ingest_dataset(source, spec, config, seed.derive(&source.dataset.id, 0))
    });

    let mut records = Vec::new();
    let mut report = KbBuildReport::default();
    for (source, outcome) in sources.iter().zip(per_dataset) {
        match outcome {
            Ok(batch) => records.extend(batch),
            Err(e) => report.failures.push((source.dataset.id.clone(), e.to_string())),
        }
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset {
            detail: format!(
                "no dataset could be ingested ({} failures)",
                report.failures.len()
            ),
        });
    }
    let mut kb = KnowledgeBase::new(records);
    kb.sort_canonically();
    Ok((kb, report))
}

fn ingest_dataset(
    source: &KbSource,
    spec: &ClassifierSpec,
    config: &KbBuildConfig,
    seed: Seed,
) -> Result<Vec<KbRecord>> {
    let ds = &source.dataset;
    let plan = make_stratified_folds(ds, config.folds, seed.derive("outer", 0))?;
    let per_fold: Vec<Result<Vec<KbRecord>>> = crate::par::map_range(config.folds, |f| {
        let train_idx = plan.train_indices(f);
        let val_idx = plan.fold_indices(f);
        let sub = ds.subset(&train_idx, &format!("{}-fold{f}", ds.id))?;
        let ctx = MetaContext::fit(&sub, config.meta.clone(), seed.derive("meta", f as u64))?;
        let model = train_tuned(
            spec,
            &sub,
            config.inner_folds,
            config.tuning_budget,
            seed.derive("model", f as u64),
        )?;
        let mut batch = Vec::with_capacity(val_idx.len());
        for &i in &val_idx {
            let row = ds.row(i);
            let pred = model.predict(row);
            let (meta, _) = ctx.compute_all(row, Some(pred))?;
            batch.push(KbRecord {
                meta,
                misclassified: pred != ds.label(i),
                provenance: source.provenance,
                dataset_id: ds.id.clone(),
                model_kind: spec.kind.name().to_string(),
                instance_index: i,
                fold: f,
            });
        }
        Ok(batch)
    });
    let mut records = Vec::with_capacity(ds.n_instances());
    for outcome in per_fold {
        records.extend(outcome?);
    }
    Ok(records)
}

/// Draw a task-specific subset: filter by provenance, rank by Euclidean
/// distance between column-standardised meta-features and the anchor,
/// keep the nearest ⌈q%⌉, then uniformly select up to m of them. The
/// result preserves the base's record order.
pub fn sample_kb(
    kb: &KnowledgeBase,
    anchor: &MetaFeatureVector,
    policy: &SamplingPolicy,
    seed: Seed,
) -> Result<KnowledgeBase> {
    policy.validate()?;
    let filtered: Vec<usize> = (0..kb.records.len())
        .filter(|&i| policy.realness.admits(kb.records[i].provenance))
        .collect();
    if filtered.is_empty() {
        return Err(Error::EmptyDataset {
            detail: "no knowledge-base records match the provenance filter".to_string(),
        });
    }

    // Column statistics of the filtered records; flat columns fall back
    // to unit scale so they simply stop contributing to distances.
    let view = KnowledgeBase::new(filtered.iter().map(|&i| kb.records[i].clone()).collect());
    let summary = view.summary();
    let scale: Vec<f64> = summary
        .stdev
        .iter()
        .map(|&s| if s > 0.0 { s } else { 1.0 })
        .collect();
    let anchor_z: Vec<f64> = anchor
        .as_array()
        .iter()
        .zip(&summary.mean)
        .zip(&scale)
        .map(|((v, m), s)| (v - m) / s)
        .collect();

    let mut ranked: Vec<(f64, usize)> = filtered
        .iter()
        .map(|&i| {
            let d: f64 = kb.records[i]
                .meta
                .as_array()
                .iter()
                .zip(&summary.mean)
                .zip(&scale)
                .zip(&anchor_z)
                .map(|(((v, m), s), a)| {
                    let z = (v - m) / s;
                    (z - a) * (z - a)
                })
                .sum();
            (d, i)
        })
        .collect();
    ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));

    let pool_size = ((policy.q / 100.0) * ranked.len() as f64).ceil() as usize;
    let pool = &ranked[..pool_size.clamp(1, ranked.len())];

    let take = policy.m.min(pool.len());
    let mut rng = seed.rng();
    let mut chosen: BTreeSet<usize> = sample_indices(&mut rng, pool.len(), take)
        .into_iter()
        .map(|p| pool[p].1)
        .collect();
    let records = (0..kb.records.len())
        .filter(|i| chosen.remove(i))
        .map(|i| kb.records[i].clone())
        .collect();
    Ok(KnowledgeBase::new(records))
}

//! The eight pipeline subcommands.
//!
//! Each command reads its upstream artifacts, runs one library stage,
//! and writes its outputs plus a manifest through [`ArtifactSet`]. All
//! randomness flows from the run seed through labelled derivations, so
//! a rerun with the same inputs and seed reproduces every byte.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use miscast::data::{
    load_dataset, make_stratified_folds, DatasetSchema, FeatureKind, LabelledDataset,
    MissingPolicy,
};
use miscast::estimator::{
    estimate_uncertainty, nested_cv_run, train_estimator, ClusterChoice, FuzzyClusterModel,
};
use miscast::evalstats::{abstention_curve, EvaluationReport, MethodEval};
use miscast::explain::{force_plot_data, narrate, shapley, ForcePlot};
use miscast::knowledgebase::{build_kb, sample_kb, KbSource, KnowledgeBase, SamplingPolicy};
use miscast::learners::{ClassifierKind, ClassifierSpec};
use miscast::metafeatures::{MetaContext, MetaFeatureVector};
use miscast::synthgen::{generate, generate_grid_shaped, ComplexityTarget, SyntheticDataset};
use miscast::{Error, Result};

use crate::artifact::ArtifactSet;
use crate::config::Resolved;

// ---------------------------------------------------------------------------
// Shared plumbing.

fn parse_kind(name: &str) -> Result<ClassifierKind> {
    match name {
        "logistic_regression" => Ok(ClassifierKind::LogisticRegression),
        "gaussian_nb" => Ok(ClassifierKind::GaussianNb),
        "knn_classifier" => Ok(ClassifierKind::KnnClassifier),
        "decision_tree" => Ok(ClassifierKind::DecisionTree),
        other => Err(Error::invalid(format!(
            "unknown classifier kind '{other}' (expected logistic_regression, gaussian_nb, \
             knn_classifier or decision_tree)"
        ))),
    }
}

/// Load a dataset, resolving its schema from (in order) an explicit
/// flag, a `<stem>.schema.json` sidecar, or the all-numeric-columns
/// convention with the last column as the class.
fn load_flex(
    path: &Path,
    explicit_schema: Option<&Path>,
    artifacts: &mut ArtifactSet,
) -> Result<LabelledDataset> {
    let sidecar = path.with_extension("schema.json");
    let schema = if let Some(schema_path) = explicit_schema {
        artifacts.record_input(schema_path)?;
        DatasetSchema::load(schema_path)?
    } else if sidecar.is_file() {
        artifacts.record_input(&sidecar)?;
        DatasetSchema::load(&sidecar)?
    } else {
        infer_schema(path)?
    };
    artifacts.record_input(path)?;
    load_dataset(path, &schema, MissingPolicy::Reject)
}

/// Header-only schema inference: every column numeric, last is the
/// class.
fn infer_schema(path: &Path) -> Result<DatasetSchema> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::invalid(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::invalid(format!("cannot read header of {}: {e}", path.display())))?
        .clone();
    if headers.len() < 2 {
        return Err(Error::invalid(format!(
            "{} needs at least one feature column and a class column",
            path.display()
        )));
    }
    let features = headers
        .iter()
        .take(headers.len() - 1)
        .map(|name| (name.to_string(), FeatureKind::Continuous))
        .collect();
    Ok(DatasetSchema::new(features, &headers[headers.len() - 1]))
}

fn dataset_to_csv(ds: &LabelledDataset) -> String {
    let mut out = String::new();
    for decl in &ds.schema.features {
        out.push_str(&decl.name);
        out.push(',');
    }
    out.push_str(&ds.schema.class_column);
    out.push('\n');
    for i in 0..ds.n_instances() {
        for (f, value) in ds.row(i).iter().enumerate() {
            let categories = ds.categories(f);
            if categories.is_empty() {
                out.push_str(&format!("{value}"));
            } else {
                out.push_str(&categories[*value as usize]);
            }
            out.push(',');
        }
        out.push_str(ds.class_name(ds.label(i)));
        out.push('\n');
    }
    out
}

const META_HEADER: &str = "instance,kdn,ds,dcd,ol,clol,ec,hd";

fn meta_csv(rows: &[(usize, MetaFeatureVector)]) -> String {
    let mut out = String::from(META_HEADER);
    out.push('\n');
    for (instance, meta) in rows {
        out.push_str(&format!("{instance}"));
        for value in meta.as_array() {
            out.push_str(&format!(",{value}"));
        }
        out.push('\n');
    }
    out
}

fn read_meta_csv(path: &Path) -> Result<Vec<(usize, MetaFeatureVector)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == META_HEADER => {}
        _ => {
            return Err(Error::MalformedArtifact(format!(
                "{} is not a meta-feature table (expected header '{META_HEADER}')",
                path.display()
            )))
        }
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::MalformedArtifact(format!(
                "{} line {}: expected 8 fields, found {}",
                path.display(),
                lineno + 2,
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| {
                Error::MalformedArtifact(format!(
                    "{} line {}: '{s}' is not a number",
                    path.display(),
                    lineno + 2
                ))
            })
        };
        let instance: usize = fields[0].parse().map_err(|_| {
            Error::MalformedArtifact(format!(
                "{} line {}: '{}' is not an instance index",
                path.display(),
                lineno + 2,
                fields[0]
            ))
        })?;
        let mut values = [0.0; 7];
        for (v, field) in values.iter_mut().zip(&fields[1..]) {
            *v = parse(field)?;
        }
        rows.push((instance, MetaFeatureVector::from_array(values)));
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset {
            detail: format!("{} holds no meta-feature rows", path.display()),
        });
    }
    Ok(rows)
}

fn to_json_pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    text.into_bytes()
}

fn record_config_input(resolved: &Resolved, artifacts: &mut ArtifactSet) -> Result<()> {
    if let Some(path) = &resolved.config_path {
        artifacts.record_input(path)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// metafeatures

/// Fold-aware per-instance complexity scores: each fold's instances are
/// profiled against a context fitted on the remaining folds.
pub fn metafeatures(
    resolved: &Resolved,
    data: &Path,
    schema: Option<&Path>,
    folds_flag: Option<usize>,
) -> Result<()> {
    let mut artifacts = ArtifactSet::new(&resolved.out_dir, "metafeatures", resolved.seed.0);
    record_config_input(resolved, &mut artifacts)?;
    let ds = load_flex(data, schema, &mut artifacts)?;
    let folds = folds_flag.unwrap_or_else(|| resolved.metafeature_folds());
    let rows = fold_aware_metafeatures(&ds, folds, resolved)?;
    artifacts.write_output("metafeatures.csv", meta_csv(&rows).as_bytes())?;
    artifacts.finish()
}

fn fold_aware_metafeatures(
    ds: &LabelledDataset,
    folds: usize,
    resolved: &Resolved,
) -> Result<Vec<(usize, MetaFeatureVector)>> {
    let seed = resolved.seed.derive("metafeatures", 0);
    let plan = make_stratified_folds(ds, folds, seed.derive("folds", 0))?;
    let mut rows = Vec::with_capacity(ds.n_instances());
    for f in 0..folds {
        let train = plan.train_indices(f);
        let sub = ds.subset(&train, &format!("{}-ref{f}", ds.id))?;
        let ctx = MetaContext::fit(&sub, resolved.meta(), seed.derive("context", f as u64))?;
        for i in plan.fold_indices(f) {
            let (meta, _) = ctx.compute_all(ds.row(i), None)?;
            rows.push((i, meta));
        }
    }
    rows.sort_by_key(|(i, _)| *i);
    Ok(rows)
}

// ---------------------------------------------------------------------------
// synth

#[derive(Debug, Serialize)]
struct SynthRecord {
    id: String,
    #[serde(flatten)]
    record: miscast::synthgen::GenerationRecord,
    rule_weights: [f64; 4],
}

fn synth_record(sd: &SyntheticDataset) -> SynthRecord {
    SynthRecord {
        id: sd.dataset.id.clone(),
        record: sd.record.clone(),
        rule_weights: sd.weights.as_array(),
    }
}

fn write_synthetic(sd: &SyntheticDataset, artifacts: &mut ArtifactSet) -> Result<()> {
    let csv_name = format!("{}.csv", sd.dataset.id);
    artifacts.write_output(&csv_name, dataset_to_csv(&sd.dataset).as_bytes())?;
    let schema_name = format!("{}.schema.json", sd.dataset.id);
    artifacts.write_output(&schema_name, &to_json_pretty(&sd.dataset.schema))?;
    Ok(())
}

/// Generate one complexity-targeted dataset, or the full fifteen-cell
/// grid.
#[allow(clippy::too_many_arguments)]
pub fn synth(
    resolved: &Resolved,
    grid: bool,
    f1: Option<f64>,
    n1: Option<f64>,
    instances: usize,
    features: usize,
    classes: usize,
) -> Result<()> {
    let mut artifacts = ArtifactSet::new(&resolved.out_dir, "synth", resolved.seed.0);
    record_config_input(resolved, &mut artifacts)?;
    let ga = resolved.ga();
    let seed = resolved.seed.derive("synth", 0);
    if grid {
        if f1.is_some() || n1.is_some() {
            return Err(Error::invalid("--grid and --f1/--n1 are mutually exclusive"));
        }
        let sets = generate_grid_shaped(instances, features, classes, &ga, seed)?;
        for sd in &sets {
            write_synthetic(sd, &mut artifacts)?;
        }
        let records: Vec<SynthRecord> = sets.iter().map(synth_record).collect();
        artifacts.write_output("grid.json", &to_json_pretty(&records))?;
    } else {
        let (Some(f1), Some(n1)) = (f1, n1) else {
            return Err(Error::invalid("pass either --grid or both --f1 and --n1"));
        };
        let target = ComplexityTarget {
            f1,
            n1,
            instances,
            features,
            classes,
        };
        let sd = generate(&target, &ga, seed)?;
        write_synthetic(&sd, &mut artifacts)?;
        let name = format!("{}.record.json", sd.dataset.id);
        artifacts.write_output(&name, &to_json_pretty(&synth_record(&sd)))?;
    }
    artifacts.finish()
}

// ---------------------------------------------------------------------------
// kb

#[derive(Debug, Serialize)]
struct KbReport {
    records: usize,
    misclassification_rate: f64,
    failures: Vec<(String, String)>,
}

/// Build the knowledge base from real and synthetic datasets.
pub fn kb(
    resolved: &Resolved,
    data: &[PathBuf],
    synthetic: &[PathBuf],
    model: &str,
) -> Result<()> {
    let mut artifacts = ArtifactSet::new(&resolved.out_dir, "kb", resolved.seed.0);
    record_config_input(resolved, &mut artifacts)?;
    let spec = ClassifierSpec::new(parse_kind(model)?);
    let mut sources = Vec::new();
    for path in data {
        sources.push(KbSource::real(load_flex(path, None, &mut artifacts)?));
    }
    for path in synthetic {
        sources.push(KbSource::synthetic(load_flex(path, None, &mut artifacts)?));
    }
    let (kb, report) = build_kb(
        &sources,
        &spec,
        &resolved.kb_build(),
        resolved.seed.derive("kb", 0),
    )?;
    artifacts.write_output("kb.jsonl", kb.to_jsonl().as_bytes())?;
    let report = KbReport {
        records: kb.len(),
        misclassification_rate: kb.misclassification_rate(),
        failures: report.failures,
    };
    artifacts.write_output("kb_report.json", &to_json_pretty(&report))?;
    artifacts.finish()
}

// ---------------------------------------------------------------------------
// train

#[derive(Debug, Serialize)]
struct TrainReport {
    choice: ClusterChoice,
    records_total: usize,
    records_used: usize,
    sampled: bool,
    empty_cluster_fallback: bool,
}

/// Tune and fit the estimator, optionally on a task-matched sample of
/// the knowledge base.
pub fn train(
    resolved: &Resolved,
    kb_path: &Path,
    anchor_meta: Option<&Path>,
    sample_m: Option<usize>,
    sample_q: Option<f64>,
) -> Result<()> {
    let mut artifacts = ArtifactSet::new(&resolved.out_dir, "train", resolved.seed.0);
    record_config_input(resolved, &mut artifacts)?;
    artifacts.record_input(kb_path)?;
    let full = KnowledgeBase::load(kb_path)?;
    let records_total = full.len();

    let (kb, sampled) = match anchor_meta {
        Some(meta_path) => {
            artifacts.record_input(meta_path)?;
            let rows = read_meta_csv(meta_path)?;
            let mut mean = [0.0; 7];
            for (_, meta) in &rows {
                for (m, v) in mean.iter_mut().zip(meta.as_array()) {
                    *m += v;
                }
            }
            for m in mean.iter_mut() {
                *m /= rows.len() as f64;
            }
            let mut policy = resolved.sampling().unwrap_or(SamplingPolicy {
                m: records_total,
                q: 50.0,
                realness: miscast::knowledgebase::Realness::Both,
            });
            if let Some(m) = sample_m {
                policy.m = m;
            }
            if let Some(q) = sample_q {
                policy.q = q;
            }
            let anchor = MetaFeatureVector::from_array(mean);
            let sample = sample_kb(&full, &anchor, &policy, resolved.seed.derive("sample", 0))?;
            (sample, true)
        }
        None => (full, false),
    };

    let (model, choice) = train_estimator(&kb, &resolved.estimator(), resolved.seed.derive("train", 0))?;
    artifacts.write_output("model.json", &to_json_pretty(&model))?;
    let report = TrainReport {
        choice,
        records_total,
        records_used: kb.len(),
        sampled,
        empty_cluster_fallback: model.empty_cluster_fallback,
    };
    artifacts.write_output("train_report.json", &to_json_pretty(&report))?;
    artifacts.finish()
}

// ---------------------------------------------------------------------------
// estimate

/// Score previously profiled instances with a fitted estimator.
pub fn estimate(resolved: &Resolved, model_path: &Path, meta_path: &Path) -> Result<()> {
    let mut artifacts = ArtifactSet::new(&resolved.out_dir, "estimate", resolved.seed.0);
    record_config_input(resolved, &mut artifacts)?;
    artifacts.record_input(model_path)?;
    let model = FuzzyClusterModel::load(model_path)?;
    artifacts.record_input(meta_path)?;
    let rows = read_meta_csv(meta_path)?;
    let mut out = String::from("instance,uncertainty\n");
    for (instance, meta) in &rows {
        let u = estimate_uncertainty(&model, meta)?;
        out.push_str(&format!("{instance},{u}\n"));
    }
    artifacts.write_output("estimates.csv", out.as_bytes())?;
    artifacts.finish()
}

// ---------------------------------------------------------------------------
// eval

/// Everything downstream commands need from one nested evaluation.
#[derive(Debug, Serialize, Deserialize)]
pub struct EvalDocument {
    pub version: u32,
    pub report: EvaluationReport,
    pub uncertainty: Vec<f64>,
    pub misclassified: Vec<bool>,
    pub baseline_uncertainty: Vec<f64>,
    pub fold_of: Vec<usize>,
    pub choices: Vec<ClusterChoice>,
}

/// Run the nested cross-validated evaluation of the estimator against
/// the probability-margin baseline on one dataset.
pub fn eval(
    resolved: &Resolved,
    data: &Path,
    schema: Option<&Path>,
    kb_path: &Path,
    model: &str,
) -> Result<()> {
    let mut artifacts = ArtifactSet::new(&resolved.out_dir, "eval", resolved.seed.0);
    record_config_input(resolved, &mut artifacts)?;
    let ds = load_flex(data, schema, &mut artifacts)?;
    artifacts.record_input(kb_path)?;
    let kb = KnowledgeBase::load(kb_path)?;
    let spec = ClassifierSpec::new(parse_kind(model)?);
    let outcome = nested_cv_run(
        &ds,
        &kb,
        &spec,
        &resolved.estimator(),
        resolved.seed.derive("eval", 0),
    )?;

    let methods = vec![
        MethodEval::compute(
            "estimated_uncertainty",
            &outcome.uncertainty,
            &outcome.misclassified,
        )?,
        MethodEval::compute(
            "probability_margin",
            &outcome.baseline_uncertainty,
            &outcome.misclassified,
        )?,
    ];
    let report = EvaluationReport {
        version: miscast::FORMAT_VERSION,
        methods,
        spearman: None,
        abstention: abstention_curve(&outcome.uncertainty, &outcome.misclassified)?,
    };
    let table = report.render_table();
    let doc = EvalDocument {
        version: miscast::FORMAT_VERSION,
        report,
        uncertainty: outcome.uncertainty,
        misclassified: outcome.misclassified,
        baseline_uncertainty: outcome.baseline_uncertainty,
        fold_of: outcome.fold_of,
        choices: outcome.choices,
    };
    artifacts.write_output("eval.json", &to_json_pretty(&doc))?;
    artifacts.write_output("eval.txt", table.as_bytes())?;
    print!("{table}");
    artifacts.finish()
}

// ---------------------------------------------------------------------------
// abstain

/// Abstention sweep over a finished evaluation.
pub fn abstain(resolved: &Resolved, eval_path: &Path) -> Result<()> {
    let mut artifacts = ArtifactSet::new(&resolved.out_dir, "abstain", resolved.seed.0);
    record_config_input(resolved, &mut artifacts)?;
    artifacts.record_input(eval_path)?;
    let doc = load_eval(eval_path)?;
    let curve = abstention_curve(&doc.uncertainty, &doc.misclassified)?;
    artifacts.write_output("abstention.csv", curve.to_csv().as_bytes())?;
    artifacts.finish()
}

fn load_eval(path: &Path) -> Result<EvalDocument> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: EvalDocument = serde_json::from_str(&text)
        .map_err(|e| Error::MalformedArtifact(format!("{}: {e}", path.display())))?;
    if doc.version != miscast::FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: doc.version,
            expected: miscast::FORMAT_VERSION,
        });
    }
    Ok(doc)
}

// ---------------------------------------------------------------------------
// explain

#[derive(Debug, Serialize)]
struct Explanation {
    instance: usize,
    attribution: miscast::explain::Attribution,
    force_plot: ForcePlot,
    narration: String,
}

/// Shapley attribution for one profiled instance against a fitted
/// estimator, with the knowledge base as background.
pub fn explain(
    resolved: &Resolved,
    model_path: &Path,
    kb_path: &Path,
    meta_path: &Path,
    index: usize,
) -> Result<()> {
    let mut artifacts = ArtifactSet::new(&resolved.out_dir, "explain", resolved.seed.0);
    record_config_input(resolved, &mut artifacts)?;
    artifacts.record_input(model_path)?;
    let model = FuzzyClusterModel::load(model_path)?;
    artifacts.record_input(kb_path)?;
    let background = KnowledgeBase::load(kb_path)?;
    artifacts.record_input(meta_path)?;
    let rows = read_meta_csv(meta_path)?;
    let meta = rows
        .iter()
        .find(|(i, _)| *i == index)
        .map(|(_, meta)| meta.clone())
        .ok_or_else(|| {
            Error::invalid(format!(
                "instance {index} not present in {}",
                meta_path.display()
            ))
        })?;
    let attribution = shapley(
        &model,
        &meta,
        &background,
        resolved.seed.derive("explain", index as u64),
    )?;
    let explanation = Explanation {
        instance: index,
        force_plot: force_plot_data(&attribution),
        narration: narrate(&attribution),
        attribution,
    };
    artifacts.write_output("explanation.json", &to_json_pretty(&explanation))?;
    println!("{}", explanation.narration);
    artifacts.finish()
}

//! Schema-typed tabular data: CSV ingestion, stratified folds, z-scoring and
//! the scaled feature space shared by all distance-based computations.
//!
//! Conventions, applied uniformly across the crate:
//!
//! * Features are declared `continuous`, `ordinal` or `nominal` by a JSON
//!   schema. Ordinals are ordered integers; nominals are category strings
//!   encoded to codes in lexicographic order.
//! * Distances are computed in a scaled space: continuous and ordinal
//!   features min-max scaled to `[0, 1]` with statistics fitted on the
//!   reference (training) rows only; nominal features one-hot encoded.
//! * Rows with missing cells (empty, `?` or `NA`) are rejected by default;
//!   median/mode imputation is available as an explicit opt-in.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::Seed;

/// Declared measurement level of a feature column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    Ordinal,
    Nominal,
}

impl FeatureKind {
    pub fn is_numeric(self) -> bool {
        !matches!(self, FeatureKind::Nominal)
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FeatureKind::Continuous => "continuous",
            FeatureKind::Ordinal => "ordinal",
            FeatureKind::Nominal => "nominal",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureDecl {
    pub name: String,
    pub kind: FeatureKind,
}

/// Column declaration for a dataset: typed features plus the class column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub features: Vec<FeatureDecl>,
    pub class_column: String,
}

impl DatasetSchema {
    /// Convenience constructor for generated/test data.
    pub fn new(features: Vec<(String, FeatureKind)>, class_column: &str) -> Self {
        DatasetSchema {
            features: features
                .into_iter()
                .map(|(name, kind)| FeatureDecl { name, kind })
                .collect(),
            class_column: class_column.to_string(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::invalid("schema declares no features"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for f in &self.features {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::SchemaMismatch {
                    column: f.name.clone(),
                    detail: "declared twice".into(),
                });
            }
        }
        if seen.contains(self.class_column.as_str()) {
            return Err(Error::SchemaMismatch {
                column: self.class_column.clone(),
                detail: "class column also declared as a feature".into(),
            });
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schema: DatasetSchema = serde_json::from_str(text)
            .map_err(|e| Error::MalformedArtifact(format!("schema json: {e}")))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// What to do with rows containing missing cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingPolicy {
    /// Drop the row (the count is recorded on the dataset).
    #[default]
    Reject,
    /// Impute column median (continuous/ordinal) or mode (nominal).
    Impute,
}

/// A fully ingested, schema-typed, labelled dataset.
///
/// Cell values are stored as `f64`: raw values for continuous features,
/// integer values for ordinals, and category codes for nominals (codes index
/// the per-column `categories` table, which is sorted lexicographically so
/// encodings do not depend on row order). Class labels are codes into the
/// sorted `class_names` universe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelledDataset {
    pub id: String,
    pub schema: DatasetSchema,
    values: Vec<f64>,
    labels: Vec<usize>,
    categories: Vec<Vec<String>>,
    class_names: Vec<String>,
    rejected_rows: usize,
}

impl LabelledDataset {
    /// Number of instances.
    pub fn n_instances(&self) -> usize {
        self.labels.len()
    }

    /// Number of declared features.
    pub fn n_features(&self) -> usize {
        self.schema.n_features()
    }

    /// Number of observed classes.
    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n_features();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_name(&self, code: usize) -> &str {
        &self.class_names[code]
    }

    /// Category table for a nominal feature (empty for numeric features).
    pub fn categories(&self, feature: usize) -> &[String] {
        &self.categories[feature]
    }

    /// Rows dropped during ingestion under [`MissingPolicy::Reject`].
    pub fn rejected_rows(&self) -> usize {
        self.rejected_rows
    }

    /// Per-class instance counts, indexed by class code.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Build a dataset from already-encoded rows. Class and category
    /// universes are carried over from the caller.
    pub fn from_encoded(
        id: &str,
        schema: DatasetSchema,
        values: Vec<f64>,
        labels: Vec<usize>,
        categories: Vec<Vec<String>>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        schema.validate()?;
        let n = schema.n_features();
        if labels.is_empty() {
            return Err(Error::EmptyDataset {
                detail: String::new(),
            });
        }
        if values.len() != labels.len() * n {
            return Err(Error::invalid(format!(
                "value buffer holds {} cells, want {} rows x {} features",
                values.len(),
                labels.len(),
                n
            )));
        }
        if class_names.len() < 2 {
            return Err(Error::SingleClass {
                class: class_names.first().cloned().unwrap_or_default(),
            });
        }
        let distinct: std::collections::BTreeSet<_> = labels.iter().copied().collect();
        if distinct.len() < 2 {
            let code = *distinct.iter().next().unwrap();
            return Err(Error::SingleClass {
                class: class_names[code].clone(),
            });
        }
        if categories.len() != n {
            return Err(Error::invalid("category table length != feature count"));
        }
        Ok(LabelledDataset {
            id: id.to_string(),
            schema,
            values,
            labels,
            categories,
            class_names,
            rejected_rows: 0,
        })
    }

    /// Build a small dataset from per-row numeric features and string labels
    /// (continuous features only; used by generators and tests).
    pub fn from_numeric_rows(
        id: &str,
        feature_names: &[&str],
        rows: &[Vec<f64>],
        labels: &[&str],
    ) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::invalid("rows and labels differ in length"));
        }
        let schema = DatasetSchema::new(
            feature_names
                .iter()
                .map(|n| (n.to_string(), FeatureKind::Continuous))
                .collect(),
            "class",
        );
        let mut class_names: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        class_names.sort();
        class_names.dedup();
        let coded: Vec<usize> = labels
            .iter()
            .map(|s| class_names.iter().position(|c| c == s).unwrap())
            .collect();
        let n = feature_names.len();
        let mut values = Vec::with_capacity(rows.len() * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::invalid("row length != feature count"));
            }
            values.extend_from_slice(r);
        }
        let categories = vec![Vec::new(); n];
        LabelledDataset::from_encoded(id, schema, values, coded, categories, class_names)
    }

    /// New dataset holding the given rows (class/category universes kept).
    pub fn subset(&self, indices: &[usize], id: &str) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset {
                detail: format!(" (subset of '{}')", self.id),
            });
        }
        let n = self.n_features();
        let mut values = Vec::with_capacity(indices.len() * n);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            values.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        let distinct: std::collections::BTreeSet<_> = labels.iter().copied().collect();
        if distinct.len() < 2 {
            let code = *distinct.iter().next().unwrap();
            return Err(Error::SingleClass {
                class: self.class_names[code].clone(),
            });
        }
        Ok(LabelledDataset {
            id: id.to_string(),
            schema: self.schema.clone(),
            values,
            labels,
            categories: self.categories.clone(),
            class_names: self.class_names.clone(),
            rejected_rows: 0,
        })
    }
}

const MISSING_MARKERS: [&str; 3] = ["", "?", "NA"];

fn is_missing(cell: &str) -> bool {
    MISSING_MARKERS.contains(&cell.trim())
}

/// Load a CSV file (UTF-8, comma-separated, header row, `.` decimal point)
/// under the given schema.
pub fn load_dataset(path: &Path, schema: &DatasetSchema, policy: MissingPolicy) -> Result<LabelledDataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    parse_dataset(&text, schema, policy, &id)
}

/// Parse CSV text under the given schema. See [`load_dataset`].
pub fn parse_dataset(
    text: &str,
    schema: &DatasetSchema,
    policy: MissingPolicy,
    id: &str,
) -> Result<LabelledDataset> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| Error::MalformedArtifact(format!("csv header: {e}")))?
        .clone();
    let header_names: Vec<&str> = headers.iter().map(|h| h.trim()).collect();

    // Every header column must be declared, and every declared column present.
    for name in &header_names {
        let declared =
            *name == schema.class_column || schema.features.iter().any(|f| f.name == *name);
        if !declared {
            return Err(Error::SchemaMismatch {
                column: name.to_string(),
                detail: "column not declared in schema".into(),
            });
        }
    }
    let mut feature_pos = Vec::with_capacity(schema.features.len());
    for decl in &schema.features {
        match header_names.iter().position(|h| *h == decl.name) {
            Some(p) => feature_pos.push(p),
            None => {
                return Err(Error::SchemaMismatch {
                    column: decl.name.clone(),
                    detail: "declared feature missing from csv header".into(),
                })
            }
        }
    }
    let class_pos = header_names
        .iter()
        .position(|h| *h == schema.class_column)
        .ok_or_else(|| Error::SchemaMismatch {
            column: schema.class_column.clone(),
            detail: "class column missing from csv header".into(),
        })?;

    // First pass: collect raw cells.
    let n = schema.n_features();
    let mut raw_rows: Vec<(Vec<String>, String)> = Vec::new();
    for (ridx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::MalformedArtifact(format!("csv row {ridx}: {e}")))?;
        if record.len() != header_names.len() {
            return Err(Error::MalformedArtifact(format!(
                "csv row {ridx}: {} cells, header has {}",
                record.len(),
                header_names.len()
            )));
        }
        let cells: Vec<String> = feature_pos
            .iter()
            .map(|&p| record.get(p).unwrap_or("").trim().to_string())
            .collect();
        let label = record.get(class_pos).unwrap_or("").trim().to_string();
        raw_rows.push((cells, label));
    }

    // Decide per row whether it is complete; labels may never be missing.
    let mut rejected = 0usize;
    let mut keep: Vec<bool> = Vec::with_capacity(raw_rows.len());
    for (cells, label) in &raw_rows {
        if is_missing(label) {
            keep.push(false);
            rejected += 1;
            continue;
        }
        let has_missing = cells.iter().any(|c| is_missing(c));
        match (has_missing, policy) {
            (true, MissingPolicy::Reject) => {
                keep.push(false);
                rejected += 1;
            }
            _ => keep.push(true),
        }
    }

    // Category tables from kept rows, sorted for stable codes.
    let mut categories: Vec<Vec<String>> = vec![Vec::new(); n];
    for (j, decl) in schema.features.iter().enumerate() {
        if decl.kind == FeatureKind::Nominal {
            let mut seen: Vec<String> = Vec::new();
            for ((cells, _), &k) in raw_rows.iter().zip(&keep) {
                if k && !is_missing(&cells[j]) && !seen.contains(&cells[j]) {
                    seen.push(cells[j].clone());
                }
            }
            seen.sort();
            categories[j] = seen;
        }
    }

    // Parse numeric cells; gather per-column statistics for imputation.
    let parse_cell = |ridx: usize, j: usize, cell: &str| -> Result<f64> {
        let decl = &schema.features[j];
        match decl.kind {
            FeatureKind::Continuous => cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                Error::ParseCell {
                    row: ridx,
                    column: decl.name.clone(),
                    value: cell.to_string(),
                    kind: "continuous".into(),
                }
            }),
            FeatureKind::Ordinal => cell.parse::<i64>().map(|v| v as f64).map_err(|_| Error::ParseCell {
                row: ridx,
                column: decl.name.clone(),
                value: cell.to_string(),
                kind: "ordinal".into(),
            }),
            FeatureKind::Nominal => categories[j]
                .iter()
                .position(|c| c == cell)
                .map(|p| p as f64)
                .ok_or_else(|| Error::ParseCell {
                    row: ridx,
                    column: decl.name.clone(),
                    value: cell.to_string(),
                    kind: "nominal".into(),
                }),
        }
    };

    let mut parsed: Vec<Vec<Option<f64>>> = Vec::new();
    let mut labels_raw: Vec<String> = Vec::new();
    for (ridx, ((cells, label), &k)) in raw_rows.iter().zip(&keep).enumerate() {
        if !k {
            continue;
        }
        let mut row = Vec::with_capacity(n);
        for j in 0..n {
            if is_missing(&cells[j]) {
                row.push(None); // only reachable under Impute
            } else {
                row.push(Some(parse_cell(ridx, j, &cells[j])?));
            }
        }
        parsed.push(row);
        labels_raw.push(label.clone());
    }

    if parsed.is_empty() {
        return Err(Error::EmptyDataset {
            detail: if rejected > 0 {
                format!(" ({rejected} rows rejected for missing cells)")
            } else {
                String::new()
            },
        });
    }

    // Imputation values per column.
    if policy == MissingPolicy::Impute {
        for j in 0..n {
            let fill = match schema.features[j].kind {
                FeatureKind::Nominal => {
                    // Mode; lexicographically smallest category wins ties,
                    // which is the lowest code.
                    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
                    for row in &parsed {
                        if let Some(v) = row[j] {
                            *counts.entry(v as i64).or_insert(0) += 1;
                        }
                    }
                    counts
                        .iter()
                        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                        .map(|(&code, _)| code as f64)
                }
                _ => {
                    let mut vals: Vec<f64> =
                        parsed.iter().filter_map(|row| row[j]).collect();
                    if vals.is_empty() {
                        None
                    } else {
                        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                        let mid = vals.len() / 2;
                        let median = if vals.len() % 2 == 0 {
                            (vals[mid - 1] + vals[mid]) / 2.0
                        } else {
                            vals[mid]
                        };
                        // Ordinal medians stay on the integer grid.
                        Some(if schema.features[j].kind == FeatureKind::Ordinal {
                            median.round()
                        } else {
                            median
                        })
                    }
                }
            };
            let fill = fill.ok_or_else(|| Error::SchemaMismatch {
                column: schema.features[j].name.clone(),
                detail: "column entirely missing; cannot impute".into(),
            })?;
            for row in &mut parsed {
                if row[j].is_none() {
                    row[j] = Some(fill);
                }
            }
        }
    }

    // Class universe, sorted.
    let mut class_names: Vec<String> = labels_raw.clone();
    class_names.sort();
    class_names.dedup();
    if class_names.len() < 2 {
        return Err(Error::SingleClass {
            class: class_names.first().cloned().unwrap_or_default(),
        });
    }
    let labels: Vec<usize> = labels_raw
        .iter()
        .map(|l| class_names.iter().position(|c| c == l).unwrap())
        .collect();

    let mut values = Vec::with_capacity(parsed.len() * n);
    for row in &parsed {
        for v in row {
            values.push(v.expect("missing cell survived imputation"));
        }
    }

    let mut ds = LabelledDataset::from_encoded(id, schema.clone(), values, labels, categories, class_names)?;
    ds.rejected_rows = rejected;
    Ok(ds)
}

/// Z-scored values plus a degeneracy flag.
#[derive(Debug, Clone)]
pub struct Zscored {
    pub values: Vec<f64>,
    /// Set when the input was constant (population stdev 0); the output is
    /// then all zeros.
    pub degenerate: bool,
    pub mean: f64,
    pub stdev: f64,
}

/// Standardise to mean 0 and population standard deviation 1.
pub fn zscore(values: &[f64]) -> Zscored {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let stdev = var.sqrt();
    if stdev <= 0.0 || !stdev.is_finite() {
        return Zscored {
            values: vec![0.0; values.len()],
            degenerate: true,
            mean,
            stdev: 0.0,
        };
    }
    Zscored {
        values: values.iter().map(|v| (v - mean) / stdev).collect(),
        degenerate: false,
        mean,
        stdev,
    }
}

/// A seeded assignment of instances to `k` cross-validation folds,
/// stratified by class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: Seed,
    /// `assignments[i]` is the fold of instance `i`.
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    /// Instances belonging to fold `f`, ascending.
    pub fn fold_indices(&self, f: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == f)
            .map(|(i, _)| i)
            .collect()
    }

    /// Instances outside fold `f`, ascending.
    pub fn train_indices(&self, f: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &a)| a != f)
            .map(|(i, _)| i)
            .collect()
    }

    /// Instances outside folds `f` and `g`, ascending.
    pub fn train_indices_excluding(&self, f: usize, g: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &a)| a != f && a != g)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Assign instances to `k` stratified folds.
///
/// Within each class the members are shuffled with the seed and dealt
/// round-robin, so per-fold class counts never deviate from the proportional
/// ideal by more than one instance. Every class must have at least `k`
/// members.
pub fn make_stratified_folds(ds: &LabelledDataset, k: usize, seed: Seed) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::invalid(format!("need k >= 2 folds, got {k}")));
    }
    let counts = ds.class_counts();
    for (c, &count) in counts.iter().enumerate() {
        if count < k {
            return Err(Error::ClassTooSmall {
                class: ds.class_name(c).to_string(),
                size: count,
                k,
            });
        }
    }
    let mut rng = seed.rng();
    let mut assignments = vec![0usize; ds.n_instances()];
    let mut offset = 0usize;
    for c in 0..ds.n_classes() {
        let mut members: Vec<usize> = (0..ds.n_instances()).filter(|&i| ds.label(i) == c).collect();
        members.shuffle(&mut rng);
        for (j, &i) in members.iter().enumerate() {
            assignments[i] = (j + offset) % k;
        }
        // Rotate the dealing start so total fold sizes stay balanced.
        offset = (offset + counts[c]) % k;
    }
    Ok(FoldPlan { k, seed, assignments })
}

/// Min-max + one-hot feature scaling fitted on reference rows.
///
/// Continuous and ordinal features map to `(v - min) / (max - min)` with the
/// reference minimum and maximum (constant columns map to 0); nominal
/// features expand to one indicator column per category. All neighbour,
/// density and margin computations operate in this space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSpace {
    kinds: Vec<FeatureKind>,
    mins: Vec<f64>,
    maxs: Vec<f64>,
    /// Expanded width per input feature (1 for numeric, #categories nominal).
    widths: Vec<usize>,
    dim: usize,
}

impl FeatureSpace {
    /// Fit scaling statistics on the given reference rows.
    pub fn fit(ds: &LabelledDataset, indices: &[usize]) -> Result<FeatureSpace> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset {
                detail: " (feature scaling needs reference rows)".into(),
            });
        }
        let n = ds.n_features();
        let mut mins = vec![f64::INFINITY; n];
        let mut maxs = vec![f64::NEG_INFINITY; n];
        for &i in indices {
            let row = ds.row(i);
            for j in 0..n {
                mins[j] = mins[j].min(row[j]);
                maxs[j] = maxs[j].max(row[j]);
            }
        }
        let mut kinds = Vec::with_capacity(n);
        let mut widths = Vec::with_capacity(n);
        let mut dim = 0usize;
        for (j, decl) in ds.schema.features.iter().enumerate() {
            kinds.push(decl.kind);
            let w = match decl.kind {
                FeatureKind::Nominal => ds.categories(j).len().max(1),
                _ => 1,
            };
            widths.push(w);
            dim += w;
        }
        Ok(FeatureSpace {
            kinds,
            mins,
            maxs,
            widths,
            dim,
        })
    }

    /// Dimension of the scaled space.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Scale one raw (encoded) row.
    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim);
        for (j, &kind) in self.kinds.iter().enumerate() {
            match kind {
                FeatureKind::Nominal => {
                    let code = row[j] as usize;
                    for c in 0..self.widths[j] {
                        out.push(if c == code { 1.0 } else { 0.0 });
                    }
                }
                _ => {
                    let span = self.maxs[j] - self.mins[j];
                    if span > 0.0 {
                        out.push((row[j] - self.mins[j]) / span);
                    } else {
                        out.push(0.0);
                    }
                }
            }
        }
        out
    }

    /// Scale a set of rows into a dense row-major matrix.
    pub fn matrix(&self, ds: &LabelledDataset, indices: &[usize]) -> Vec<Vec<f64>> {
        indices.iter().map(|&i| self.transform(ds.row(i))).collect()
    }
}

/// Squared Euclidean distance between equal-length slices.
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

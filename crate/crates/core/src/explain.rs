//! Attribution of an estimated uncertainty to the seven complexity
//! measures.
//!
//! The attribution is an exact Shapley decomposition: every one of the
//! 2⁷ measure coalitions is evaluated against a background sample of
//! knowledge-base records (coalition members keep the instance's
//! values, the rest are imputed from each background row in turn), so
//! the contributions reconstruct the estimate exactly — no sampling
//! noise. [`force_plot_data`] exports the decomposition for plotting
//! and [`narrate`] renders it as ordered natural-language sentences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{estimate_uncertainty, FuzzyClusterModel};
use crate::knowledgebase::KnowledgeBase;
use crate::metafeatures::MetaFeatureVector;
use crate::seed::Seed;

/// Largest background sample used by [`shapley`]; larger knowledge
/// bases are subsampled uniformly under the caller's seed.
pub const BACKGROUND_CAP: usize = 256;

/// Contributions smaller than this are treated as immaterial by the
/// rendering operations.
pub const CONTRIBUTION_FLOOR: f64 = 1e-4;

/// A Shapley decomposition of one uncertainty estimate.
///
/// `base_value + Σ contributions` reconstructs `fx` up to accumulated
/// rounding (within 1e-6).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    /// Mean estimated uncertainty over the background records.
    pub base_value: f64,
    /// Per-measure contribution, ordered as
    /// [`MetaFeatureVector::NAMES`].
    pub contributions: [f64; 7],
    /// Estimated uncertainty of the explained instance.
    pub fx: f64,
}

impl Attribution {
    /// Signed gap `fx − base_value − Σ contributions`; zero up to
    /// rounding for any exact decomposition.
    pub fn efficiency_residual(&self) -> f64 {
        self.fx - self.base_value - self.contributions.iter().sum::<f64>()
    }
}

/// One bar of a force plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceSegment {
    pub name: String,
    pub value: f64,
    pub direction: String,
}

/// Plot-ready rendering of an attribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcePlot {
    pub base_value: f64,
    pub fx: f64,
    /// Material contributions by descending magnitude.
    pub segments: Vec<ForceSegment>,
}

/// Exact Shapley contributions of the seven measures to the model's
/// estimate for `meta`.
///
/// The value of a coalition is the mean estimate over background
/// records with the coalition's measures overridden by the instance's
/// values. All 128 coalitions are enumerated, so the axioms hold up to
/// rounding: contributions sum to `fx − base_value`, measures the model
/// ignores get zero, and exchangeable measures with equal values get
/// equal shares. Backgrounds beyond [`BACKGROUND_CAP`] records are
/// subsampled under `seed`.
pub fn shapley(
    model: &FuzzyClusterModel,
    meta: &MetaFeatureVector,
    background: &KnowledgeBase,
    seed: Seed,
) -> Result<Attribution> {
    if background.is_empty() {
        return Err(Error::EmptyDataset {
            detail: "attribution needs a nonempty background sample".to_string(),
        });
    }
    let rows: Vec<[f64; 7]> = if background.len() > BACKGROUND_CAP {
        let picked = rand::seq::index::sample(&mut seed.rng(), background.len(), BACKGROUND_CAP);
        let mut indices: Vec<usize> = picked.into_iter().collect();
        indices.sort_unstable();
        indices
            .into_iter()
            .map(|i| background.records[i].meta.as_array())
            .collect()
    } else {
        background.records.iter().map(|r| r.meta.as_array()).collect()
    };
    let instance = meta.as_array();

    // Value of every coalition: mean estimate over the background with
    // coalition members taken from the instance.
    let values = crate::par::try_map_range(128usize, |mask| {
        let mut total = 0.0;
        for row in &rows {
            let mut composite = *row;
            for (d, v) in composite.iter_mut().enumerate() {
                if mask & (1 << d) != 0 {
                    *v = instance[d];
                }
            }
            total +=
                estimate_uncertainty(model, &MetaFeatureVector::from_array(composite))?;
        }
        Ok(total / rows.len() as f64)
    })?;

    // φ_d = Σ_S |S|!·(6−|S|)!/7! · (v(S ∪ {d}) − v(S)) over coalitions
    // S not containing d.
    let mut factorial = [1.0; 8];
    for i in 1..8 {
        factorial[i] = factorial[i - 1] * i as f64;
    }
    let mut contributions = [0.0; 7];
    for (d, phi) in contributions.iter_mut().enumerate() {
        let bit = 1usize << d;
        for mask in 0..128usize {
            if mask & bit != 0 {
                continue;
            }
            let s = mask.count_ones() as usize;
            let weight = factorial[s] * factorial[6 - s] / factorial[7];
            *phi += weight * (values[mask | bit] - values[mask]);
        }
    }
    Ok(Attribution {
        base_value: values[0],
        contributions,
        fx: values[127],
    })
}

/// Contributions by descending magnitude, ties broken by measure order.
fn ranked(attr: &Attribution) -> Vec<(usize, f64)> {
    let mut order: Vec<(usize, f64)> = attr
        .contributions
        .iter()
        .copied()
        .enumerate()
        .collect();
    order.sort_by(|a, b| b.1.abs().partial_cmp(&a.1.abs()).unwrap().then(a.0.cmp(&b.0)));
    order
}

/// Render an attribution as force-plot data: material contributions by
/// descending magnitude, each tagged with the direction it pushes the
/// uncertainty.
pub fn force_plot_data(attr: &Attribution) -> ForcePlot {
    let segments = ranked(attr)
        .into_iter()
        .filter(|(_, value)| value.abs() >= CONTRIBUTION_FLOOR)
        .map(|(d, value)| ForceSegment {
            name: MetaFeatureVector::NAMES[d].to_string(),
            value,
            direction: if value > 0.0 {
                "increases uncertainty".to_string()
            } else {
                "decreases uncertainty".to_string()
            },
        })
        .collect();
    ForcePlot {
        base_value: attr.base_value,
        fx: attr.fx,
        segments,
    }
}

/// What each measure captures, phrased for a factor sentence.
const CONCEPTS: [&str; 7] = [
    "diversity in the class outcomes of similar instances",
    "the breadth of the decision region covering the instance",
    "class diversity inside the instance's decision region",
    "the instance's outlierness within the dataset",
    "the instance's outlierness relative to its own class",
    "conflicting evidence between the class outcomes",
    "the instance's distance from the decision boundary",
];

/// Render an attribution as natural-language sentences, strongest
/// factor first.
pub fn narrate(attr: &Attribution) -> String {
    let mut lines = vec![format!(
        "Estimated uncertainty is {:.3}; the training-set mean is {:.3}.",
        attr.fx, attr.base_value
    )];
    let material: Vec<(usize, f64)> = ranked(attr)
        .into_iter()
        .filter(|(_, value)| value.abs() >= CONTRIBUTION_FLOOR)
        .collect();
    if material.is_empty() {
        lines.push("No factor materially changed the uncertainty.".to_string());
    } else {
        for (d, value) in material {
            let mut concept = CONCEPTS[d].to_string();
            if let Some(first) = concept.get_mut(0..1) {
                first.make_ascii_uppercase();
            }
            let verb = if value > 0.0 { "increased" } else { "lowered" };
            lines.push(format!(
                "{concept} ({}) {verb} the uncertainty by {:.3}.",
                MetaFeatureVector::NAMES[d],
                value.abs()
            ));
        }
    }
    lines.join("\n")
}

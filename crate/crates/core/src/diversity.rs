//! Class-diversity scoring via a likelihood-ratio statistic.
//!
//! Given class counts over a fixed universe of `C` classes, the statistic
//! compares the observed class proportions against the uniform distribution:
//!
//! ```text
//! lrid = -2 * sum_c m_c * ln(b_c / p_c),  b_c = 1/C,  p_c = m_c / M
//! ```
//!
//! with zero-count terms skipped (`0 * ln(..) == 0`). `lrid` is `0` for a
//! perfectly uniform split and largest (`2 M ln C`) when all mass sits in a
//! single class. The exported [`diversity`] score flips and normalises this
//! to `[0, 1]` so that **larger means more diverse**: `1` for a uniform
//! split, `0` for a single-class group.

use crate::error::{Error, Result};

/// Observed class counts over a fixed class universe.
///
/// Counts may be fractional: shares of a unit mass are as valid as raw
/// neighbour counts, and both give the same diversity because the statistic
/// is scale-free after normalisation.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCounts {
    counts: Vec<f64>,
}

impl ClassCounts {
    /// Counts per class, indexed by class code. The universe size is the
    /// slice length.
    pub fn new(counts: Vec<f64>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::invalid(format!(
                "class universe must hold at least 2 classes, got {}",
                counts.len()
            )));
        }
        if counts.iter().any(|&c| c < 0.0 || !c.is_finite()) {
            return Err(Error::invalid("class counts must be finite and non-negative"));
        }
        if counts.iter().sum::<f64>() <= 0.0 {
            return Err(Error::invalid("class counts must not all be zero"));
        }
        Ok(ClassCounts { counts })
    }

    /// Tally coded labels over a universe of `n_classes` classes.
    pub fn from_labels(labels: &[usize], n_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("cannot tally an empty label group"));
        }
        let mut counts = vec![0.0; n_classes];
        for &l in labels {
            if l >= n_classes {
                return Err(Error::invalid(format!(
                    "label code {l} outside universe of {n_classes}"
                )));
            }
            counts[l] += 1.0;
        }
        ClassCounts::new(counts)
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }
}

/// The raw likelihood-ratio statistic. `0` when counts are uniform across
/// the universe; `2 M ln C` when concentrated in one class.
pub fn lrid(counts: &ClassCounts) -> f64 {
    let m = counts.total();
    let c = counts.n_classes() as f64;
    let b = 1.0 / c;
    let mut acc = 0.0;
    for &mc in counts.counts() {
        if mc > 0.0 {
            let p = mc / m;
            acc += mc * (b / p).ln();
        }
    }
    -2.0 * acc
}

/// Normalised diversity in `[0, 1]`: `1` for a uniform class split, `0`
/// when one class holds everything.
pub fn diversity(counts: &ClassCounts) -> f64 {
    let worst = 2.0 * counts.total() * (counts.n_classes() as f64).ln();
    if worst <= 0.0 {
        return 0.0;
    }
    (1.0 - lrid(counts) / worst).clamp(0.0, 1.0)
}

/// Diversity of a group of coded labels over a fixed universe.
pub fn diversity_of_labels(labels: &[usize], n_classes: usize) -> Result<f64> {
    Ok(diversity(&ClassCounts::from_labels(labels, n_classes)?))
}

//! Prediction-set substrate: validated (score, label) pairs, the canonical
//! sort order, and the cumulative-difference curve that every downstream
//! metric consumes.
//!
//! All types are immutable after construction and the operations are pure
//! functions, so values can be shared freely across threads.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::KahanSum;

/// Validation and ordering errors for prediction data.
#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("score at index {index} is {value}, expected a finite value in [0, 1]")]
    OutOfRangeScore { index: usize, value: f64 },
    #[error("label at index {index} is {value}, expected 0 or 1")]
    InvalidLabel { index: usize, value: u8 },
    #[error("prediction set is empty")]
    Empty,
    #[error("operation requires a canonically sorted prediction set")]
    NotSorted,
}

/// Paired probability forecasts and binary outcomes.
///
/// Scores are finite values in `[0, 1]`, labels are `0` or `1`. The canonical
/// order — score ascending, then label ascending, then original index — makes
/// every cumulative metric a pure function of the multiset of pairs,
/// reproducible across runs and platforms regardless of input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    scores: Vec<f64>,
    labels: Vec<u8>,
    sorted: bool,
}

impl PredictionSet {
    /// Validates and wraps paired forecasts and outcomes, preserving input
    /// order.
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self, DataError> {
        if scores.len() != labels.len() {
            return Err(DataError::LengthMismatch {
                scores: scores.len(),
                labels: labels.len(),
            });
        }
        if scores.is_empty() {
            return Err(DataError::Empty);
        }
        let mut scores = scores;
        for (index, value) in scores.iter_mut().enumerate() {
            if !value.is_finite() || *value < 0.0 || *value > 1.0 {
                return Err(DataError::OutOfRangeScore {
                    index,
                    value: *value,
                });
            }
            // Normalize -0.0 so tie ordering never depends on the sign bit.
            if *value == 0.0 {
                *value = 0.0;
            }
        }
        for (index, &value) in labels.iter().enumerate() {
            if value > 1 {
                return Err(DataError::InvalidLabel { index, value });
            }
        }
        let sorted = is_canonical_order(&scores, &labels);
        Ok(Self {
            scores,
            labels,
            sorted,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Whether the pairs are in canonical order.
    pub fn is_canonical(&self) -> bool {
        self.sorted
    }

    /// Fraction of positive labels.
    pub fn label_mean(&self) -> f64 {
        let mut acc = KahanSum::new();
        for &y in &self.labels {
            acc.add(f64::from(y));
        }
        acc.value() / self.len() as f64
    }

    /// Mean forecast value.
    pub fn score_mean(&self) -> f64 {
        let mut acc = KahanSum::new();
        for &s in &self.scores {
            acc.add(s);
        }
        acc.value() / self.len() as f64
    }

    /// Returns a copy in canonical order: score ascending, ties broken by
    /// label ascending, then by original index. Idempotent, and a pure
    /// permutation of the pairs.
    pub fn canonical_sort(&self) -> PredictionSet {
        if self.sorted {
            return self.clone();
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_unstable_by(|&a, &b| {
            self.scores[a]
                .total_cmp(&self.scores[b])
                .then(self.labels[a].cmp(&self.labels[b]))
                .then(a.cmp(&b))
        });
        let scores = order.iter().map(|&i| self.scores[i]).collect();
        let labels = order.iter().map(|&i| self.labels[i]).collect();
        PredictionSet {
            scores,
            labels,
            sorted: true,
        }
    }

    /// Cumulative differences of the canonically sorted set: `C_0 = 0` and
    /// `C_k = (1/n) * sum_{j<=k} (y_j - s_j)`.
    ///
    /// Prefix sums use compensated summation so the curve stays accurate to
    /// roughly 1e-12 even at millions of observations.
    pub fn cumulative_curve(&self) -> Result<CumulativeCurve, DataError> {
        if !self.sorted {
            return Err(DataError::NotSorted);
        }
        let n = self.len() as f64;
        let mut values = Vec::with_capacity(self.len() + 1);
        values.push(0.0);
        let mut acc = KahanSum::new();
        for (&s, &y) in self.scores.iter().zip(&self.labels) {
            acc.add(f64::from(y) - s);
            values.push(acc.value() / n);
        }
        Ok(CumulativeCurve { values })
    }

    /// Selects the observations at `indices`, preserving the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<PredictionSet, DataError> {
        let scores: Vec<f64> = indices.iter().map(|&i| self.scores[i]).collect();
        let labels: Vec<u8> = indices.iter().map(|&i| self.labels[i]).collect();
        PredictionSet::new(scores, labels)
    }

    /// Replaces the scores (e.g. with calibrated ones), keeping labels and
    /// re-validating.
    pub fn with_scores(&self, scores: Vec<f64>) -> Result<PredictionSet, DataError> {
        PredictionSet::new(scores, self.labels.clone())
    }
}

fn is_canonical_order(scores: &[f64], labels: &[u8]) -> bool {
    scores.windows(2).zip(labels.windows(2)).all(|(s, l)| {
        s[0] < s[1] || (s[0] == s[1] && l[0] <= l[1])
    })
}

/// The cumulative-difference curve `C_0..C_n` of a sorted prediction set.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeCurve {
    values: Vec<f64>,
}

impl CumulativeCurve {
    /// All `n + 1` curve values, starting with `C_0 = 0`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of observations behind the curve.
    pub fn n(&self) -> usize {
        self.values.len() - 1
    }
}

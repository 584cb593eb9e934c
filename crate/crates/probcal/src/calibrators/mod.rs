//! Post-hoc probability calibrators.
//!
//! Each calibrator is fitted on a held-out calibration split and maps raw
//! scores in `[0, 1]` to calibrated probabilities in `[0, 1]`:
//!
//! | Kind       | Shape                               | Monotone |
//! |------------|-------------------------------------|----------|
//! | `Identity` | passthrough                         | yes      |
//! | `Platt`    | sigmoid of an affine transform      | for slope ≥ 0 |
//! | `Isotonic` | monotone step fit, interpolated     | yes      |
//! | `Spline`   | logistic fit on a natural cubic spline basis | no guarantee |
//!
//! Fitting is deterministic: the same calibration set always produces
//! bit-identical parameters. Fitted calibrators are immutable and safe to
//! share across threads.

mod isotonic;
mod platt;
mod spline;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::PredictionSet;
use crate::util::sigmoid;

/// Errors raised while fitting a calibrator.
#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("calibration labels contain a single class")]
    OneClassOnly,
    #[error("fit did not converge within {iterations} iterations")]
    NoConverge { iterations: usize },
    #[error("too few calibration points: need {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },
}

/// Which calibration family a [`Calibrator`] belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibratorKind {
    Identity,
    Platt,
    Isotonic,
    Spline,
}

/// Kind-specific fitted parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "parameters", rename_all = "snake_case")]
enum Params {
    Identity,
    Platt {
        slope: f64,
        intercept: f64,
    },
    Isotonic {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
    Spline {
        knots: Vec<f64>,
        coefficients: Vec<f64>,
        ridge_lambda: f64,
    },
}

/// A fitted map from raw score to calibrated probability.
///
/// Serializes to a JSON document `{kind, parameters, fitted_on_n,
/// library_version}`; the round trip is exact for every kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibrator {
    #[serde(flatten)]
    params: Params,
    fitted_on_n: usize,
    library_version: String,
}

impl Calibrator {
    fn wrap(params: Params, fitted_on_n: usize) -> Self {
        Self {
            params,
            fitted_on_n,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    /// The passthrough calibrator: `apply(s) == s` exactly.
    pub fn identity() -> Self {
        Self::wrap(Params::Identity, 0)
    }

    /// Fits a sigmoid `p(s) = 1 / (1 + exp(-(a s + b)))` by Newton descent
    /// on the Bernoulli likelihood against smoothed targets
    /// `(N+ + 1)/(N+ + 2)` and `1/(N- + 2)`.
    ///
    /// The slope may come out negative on adversarial data; the fit is kept
    /// as-is (callers can inspect [`Calibrator::platt_slope`]).
    pub fn fit_platt(cal_set: &PredictionSet) -> Result<Self, FitError> {
        let (slope, intercept) = platt::fit(cal_set)?;
        Ok(Self::wrap(Params::Platt { slope, intercept }, cal_set.len()))
    }

    /// Fits monotone non-decreasing values by pool-adjacent-violators over
    /// the canonically sorted scores. Duplicate scores are pooled first, so
    /// the fit is a function of score. Between breakpoints the calibrator
    /// interpolates linearly; outside the fitted range it clamps to the
    /// boundary values.
    pub fn fit_isotonic(cal_set: &PredictionSet) -> Self {
        let (breakpoints, values) = isotonic::fit(cal_set);
        Self::wrap(
            Params::Isotonic {
                breakpoints,
                values,
            },
            cal_set.len(),
        )
    }

    /// Logistic regression of labels on a natural cubic spline basis of the
    /// raw score, with knots at equally spaced empirical quantiles and a
    /// ridge penalty chosen by 5-fold log-loss on the calibration set.
    /// Output probabilities are clamped to `[1e-6, 1 - 1e-6]`.
    pub fn fit_spline(cal_set: &PredictionSet, num_knots: usize) -> Result<Self, FitError> {
        let fit = spline::fit(cal_set, num_knots)?;
        Ok(Self::wrap(
            Params::Spline {
                knots: fit.knots,
                coefficients: fit.coefficients,
                ridge_lambda: fit.ridge_lambda,
            },
            cal_set.len(),
        ))
    }

    pub fn kind(&self) -> CalibratorKind {
        match self.params {
            Params::Identity => CalibratorKind::Identity,
            Params::Platt { .. } => CalibratorKind::Platt,
            Params::Isotonic { .. } => CalibratorKind::Isotonic,
            Params::Spline { .. } => CalibratorKind::Spline,
        }
    }

    /// Number of observations the calibrator was fitted on.
    pub fn fitted_on_n(&self) -> usize {
        self.fitted_on_n
    }

    /// The fitted Platt slope, if this is a Platt calibrator.
    pub fn platt_slope(&self) -> Option<f64> {
        match self.params {
            Params::Platt { slope, .. } => Some(slope),
            _ => None,
        }
    }

    /// Maps one raw score to a calibrated probability.
    pub fn apply_one(&self, score: f64) -> f64 {
        match &self.params {
            Params::Identity => score,
            Params::Platt { slope, intercept } => sigmoid(slope * score + intercept),
            Params::Isotonic {
                breakpoints,
                values,
            } => isotonic::interpolate(breakpoints, values, score),
            Params::Spline {
                knots,
                coefficients,
                ..
            } => spline::predict(knots, coefficients, score),
        }
    }

    /// Maps raw scores elementwise, preserving length.
    pub fn apply(&self, scores: &[f64]) -> Vec<f64> {
        scores.iter().map(|&s| self.apply_one(s)).collect()
    }
}

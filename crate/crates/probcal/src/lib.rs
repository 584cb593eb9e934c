//! Calibration metrics, post-hoc calibrators, and guarded model selection
//! for binary probability forecasts.
//!
//! The library is organized around a small pipeline:
//!
//! - [`data`]: validated (score, label) pairs, the canonical sort order, and
//!   the cumulative-difference curve.
//! - [`metrics`]: cumulative calibration errors (ECCE-MAD, ECCE-R), binned
//!   calibration errors (ECE¹/ECE²) under configurable binning, and the
//!   Brier and logarithmic scoring rules.
//! - [`calibrators`]: identity, Platt, isotonic, and spline maps from raw
//!   score to calibrated probability, fitted on held-out data.
//! - [`selection`]: stratified cross-validation splits, per-candidate metric
//!   tables, and the guarded selector (best ECCE-R among candidates whose
//!   log-loss does not exceed the uncalibrated baseline).
//! - [`synth`]: seeded generators with known true conditional probabilities,
//!   used as oracles in the test suite and for demonstrations.
//! - [`io`]: the `score,label[,id]` CSV format shared with the CLI.
//!
//! The `probcal` binary exposes the same pipeline as subcommands; see the
//! guide under `book/` for worked chapters.

pub mod calibrators;
pub mod data;
pub mod io;
pub mod metrics;
pub mod selection;
pub mod synth;
mod util;

pub use calibrators::{Calibrator, CalibratorKind, FitError};
pub use data::{CumulativeCurve, DataError, PredictionSet};
pub use metrics::{BinningScheme, BinningSpec, MetricReport, Norm, Weighting};
pub use selection::{
    CandidateId, CandidateResult, SelectionConfig, SelectionError, SelectionOutcome, SplitPlan,
};
pub use synth::{Distortion, SynthSpec, TruthDist};

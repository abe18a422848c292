//! Workload generation, response-time measurement, outlier filtering,
//! curve fitting and the legacy/novel comparison models.

mod fit;
mod measure;
mod model;
mod output;
mod stats;
mod workload;

use serde::{Deserialize, Serialize};

pub use fit::{
    fit_invlog, fit_invlog_with, fit_linear, fit_poly2, FitFamily, FitModel, FitReport, Prediction,
};
pub use measure::{measure_rctp, measure_rpr, FailedRetrieval, RetrievalPlan, RprRun};
pub use model::{
    crossover, param_model, predict_rpr_novel, reference, rpr_grid, Crossover, GridPoint,
    ModelParams, ParamInputs, System,
};
pub use output::{
    gnuplot_script, read_samples_csv, write_grid_csv, write_json, write_op_counts_csv,
    write_samples_csv,
};
pub use stats::{
    binned_medians, iqr_filter, iqr_filter_stable, median, quantile, spearman, FilterOutcome,
};
pub use workload::generate_workload;

use crate::relay::RelayError;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("prediction refused at x = {x}: outside the fitted domain where the model decreases")]
    ExtrapolationRefused { x: f64 },
    #[error("lines are parallel; no crossover")]
    NoCrossover,
    #[error("inconsistent parameters: {0}")]
    InconsistentParams(String),
    #[error(transparent)]
    Relay(#[from] RelayError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleKind {
    /// Trie processing: inserts plus cycle close.
    Rctp,
    /// Proof retrieval.
    Rpr,
    /// Verifying a retrieved bundle.
    Verify,
}

/// One measured point. `hash_ops` is the hardware-independent cost of the
/// same operation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchSample {
    pub cycle: u64,
    pub x: f64,
    pub y_ms: f64,
    pub kind: SampleKind,
    #[serde(skip)]
    pub hash_ops: u64,
}

//! Statistical analyses backing the reports. Every function here is pure.

pub mod descriptive;
mod linalg;
pub mod pca;
pub mod spc;

pub use descriptive::{
    cross_tab, cross_tab_with_categories, frequency_table, frequency_table_with_categories,
    likert_profile, summary_stats, CrossTab, FrequencyTable, LikertProfile, SummaryStats,
};
pub use linalg::{eigen_sym, Matrix, SymEigen};
pub use pca::{covariance_matrix, pca, standardize, DataMatrix, PcaMode, PcaResult};
pub use spc::{
    control_constants, detect_violations, xbar_r_chart, ControlChartResult, ControlConstants,
    ControlLimits, SubgroupData, MAX_SUBGROUP_SIZE, MIN_SUBGROUP_SIZE,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("empty input")]
    EmptyInput,
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
    #[error("value {value:?} is not one of the declared categories")]
    UnknownCategory { value: String },
    #[error("likert value {value} at position {index} is outside 1..5")]
    LikertOutOfRange { index: usize, value: u8 },
    #[error("no subgroups")]
    NoSubgroups,
    #[error("subgroup {index} has {found} measurements, expected {expected}")]
    SubgroupSizeMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("subgroup size {0} is outside the supported range 2..=25")]
    UnsupportedSubgroupSize(usize),
    #[error("non-finite measurement in subgroup {subgroup} at position {position}")]
    NonFiniteMeasurement { subgroup: usize, position: usize },
    #[error("need at least {needed} observations, found {found}")]
    TooFewObservations { needed: usize, found: usize },
    #[error("data matrix has no variables")]
    NoVariables,
    #[error("row {row} has {found} values, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value at row {row}, column {column:?}")]
    NonFiniteCell { row: usize, column: String },
    #[error("column {0:?} is constant (standard deviation 0)")]
    ConstantColumn(String),
    #[error("total variance is zero")]
    ZeroVariance,
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric: |a[{i}][{j}] - a[{j}][{i}]| = {diff:e}")]
    NotSymmetric { i: usize, j: usize, diff: f64 },
    #[error("eigendecomposition did not converge within {0} sweeps")]
    NoConvergence(usize),
    #[error("matrix is not positive semidefinite (eigenvalue {0:e})")]
    NotPositiveSemidefinite(f64),
}

/// Mean computed as `x0 + mean(x - x0)`: exact for constant input and less
/// prone to cancellation than a plain running sum.
pub(crate) fn shifted_mean(values: &[f64]) -> f64 {
    let x0 = values[0];
    let n = values.len() as f64;
    x0 + values.iter().map(|v| v - x0).sum::<f64>() / n
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("underdetermined Jacobian: {rows} rows for {cols} parameters")]
    UnderdeterminedJacobian { rows: usize, cols: usize },

    #[error("D-infinity needs {combinations} minors, above the cap of {cap}; use the D2 norm instead")]
    EnumerationCapExceeded { combinations: u128, cap: u64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("model evaluation failure: {0}")]
    ModelEvaluation(String),

    #[error("initial point lies outside the model support")]
    InitOutsideSupport,

    #[error("chain failed to mix: no proposal accepted during {burn_in} burn-in steps (subset {subset})")]
    ChainFailedToMix { subset: usize, burn_in: usize },

    #[error("total weight degeneracy: {0}")]
    WeightDegeneracy(String),

    #[error("merge degeneracy in round {round} for pair ({left}, {right}): ESS left {ess_left:.3}, right {ess_right:.3}")]
    MergeDegeneracy {
        round: usize,
        left: usize,
        right: usize,
        ess_left: f64,
        ess_right: f64,
    },

    #[error("quantile below threshold regime: prob {prob} must exceed 1 - zeta = {floor}")]
    QuantileBelowThreshold { prob: f64, floor: f64 },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("experiment invalid: {failed} of {total} replications failed")]
    ExperimentInvalid { failed: usize, total: usize },

    #[error("subset {subset}: {inner}")]
    InSubset { subset: usize, inner: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the data or the Monte Carlo run rather
    /// than by a malformed request.
    pub fn is_statistical(&self) -> bool {
        match self {
            Error::ChainFailedToMix { .. }
            | Error::WeightDegeneracy(_)
            | Error::MergeDegeneracy { .. }
            | Error::ExperimentInvalid { .. }
            | Error::DegenerateSample(_)
            | Error::ModelEvaluation(_) => true,
            Error::InSubset { inner, .. } => inner.is_statistical(),
            _ => false,
        }
    }

    pub(crate) fn in_subset(self, subset: usize) -> Self {
        Error::InSubset {
            subset,
            inner: Box::new(self),
        }
    }
}

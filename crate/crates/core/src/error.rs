use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
///
/// Display strings lead with the variant name so scripts can match on them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("EmptyFile: {0} contains no data rows")]
    EmptyFile(PathBuf),

    #[error("MissingLabelColumn: column {0:?} not found in header")]
    MissingLabelColumn(String),

    #[error("RaggedRows: row {row} has {found} columns, header has {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("NonNumericFeature: row {row}, column {column}: {value:?} is not a finite number")]
    NonNumericFeature {
        row: usize,
        column: String,
        value: String,
    },

    #[error("InvalidDimensions: {0}")]
    InvalidDimensions(String),

    #[error("DimensionMismatch: expected length {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("ClassTooSmall: class {label:?} has {members} members, {folds} folds requested")]
    ClassTooSmall {
        label: String,
        members: usize,
        folds: usize,
    },

    #[error("SingleClassDataset: training requires at least two distinct classes")]
    SingleClassDataset,

    #[error("DegenerateDataset: no pair of samples has a positive distance")]
    DegenerateDataset,

    #[error("SingularPrior: prior metric is not strictly positive definite")]
    SingularPrior,

    #[error("PsdViolation: 1 + beta * z'Az = {0:e} is not positive")]
    PsdViolation(f64),

    #[error("NumericalBreakdown: {0}")]
    NumericalBreakdown(String),

    #[error("EmptyTrainingSet: k-NN needs at least one training sample")]
    EmptyTrainingSet,

    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),

    #[error("FormatError: {0}")]
    Format(String),

    #[error("IoError: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the optimizer itself, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NumericalBreakdown(_) | Error::PsdViolation(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

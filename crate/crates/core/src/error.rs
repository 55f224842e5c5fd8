use thiserror::Error;

use crate::assembly::RowKind;

#[derive(Debug, Error)]
pub enum Error {
    #[error("gradient singular at origin")]
    SingularGradient,

    #[error("no sign change on segment")]
    NoSignChange,

    #[error("degenerate normal")]
    DegenerateNormal,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point {0} is not inside the domain")]
    PointOutside(usize),

    #[error("empty system")]
    EmptySystem,

    #[error("zero row {row} ({kind:?} row for i={i}, j={j})")]
    ZeroRow {
        row: usize,
        kind: RowKind,
        i: usize,
        j: usize,
    },

    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("non-positive diagonal entry at {0}")]
    NonPositiveDiagonal(usize),

    #[error("divergence at iteration {0}")]
    Divergence(usize),

    #[error("at least two convergence entries are required")]
    TooFewEntries,

    #[error("errors must be strictly positive to fit a power law")]
    NonPositiveError,

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

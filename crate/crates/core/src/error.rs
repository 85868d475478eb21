use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Validation,
    Infeasible,
    Io,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Validation => 1,
            ErrorCategory::Infeasible => 2,
            ErrorCategory::Io => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Validation => "validation",
            ErrorCategory::Infeasible => "infeasible",
            ErrorCategory::Io => "io",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (asymmetry {asymmetry:e} exceeds tolerance {tolerance:e})")]
    NonSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("linear map is rank deficient; the image ellipsoid would be flat")]
    RankDeficient,

    #[error("direction has norm {norm}, expected a unit vector")]
    NotUnitNorm { norm: f64 },

    #[error("direction is the zero vector")]
    ZeroDirection,

    #[error("an ellipsoid sum needs at least one term")]
    EmptySum,

    #[error("invalid direction grid: {0}")]
    InvalidGrid(String),

    #[error("pair weights incomplete: expected {expected} entries, found {found}")]
    IncompleteWeights { expected: usize, found: usize },

    #[error("pair weight p[{i},{j}] = {value} is not strictly positive")]
    NonPositiveWeight { i: usize, j: usize, value: f64 },

    #[error(
        "regularizer infeasible (positive definite: {pd_ok}, support dominance: {support_ok}, min margin {min_margin:e})"
    )]
    InfeasibleRegularizer {
        pd_ok: bool,
        support_ok: bool,
        min_margin: f64,
    },

    #[error("regularizer does not annihilate the tangency direction (|Q0 l| = {residual:e} > {tolerance:e})")]
    KernelViolation { residual: f64, tolerance: f64 },

    #[error("base ellipsoid does not contain the sum (min margin {min_margin:e})")]
    InfeasibleBase { min_margin: f64 },

    #[error("every transformed input ellipsoid is degenerate")]
    AllDegenerate,

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("target step {k} outside [2, {max}]")]
    InvalidStep { k: usize, max: usize },

    #[error("operation requires a time-invariant system")]
    NotTimeInvariant,

    #[error("reach bound did not settle before step {k_max}")]
    NotSettled { k_max: usize },

    #[error("bad projection axes ({a}, {b}) for dimension {dim}")]
    BadAxes { a: usize, b: usize, dim: usize },

    #[error("nothing to plot")]
    EmptyPlot,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable identifier.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NotSquare { .. } => "NotSquare",
            Error::NonSymmetric { .. } => "NonSymmetric",
            Error::NotPositiveDefinite => "NotPositiveDefinite",
            Error::NonFinite => "NonFinite",
            Error::RankDeficient => "RankDeficient",
            Error::NotUnitNorm { .. } => "NotUnitNorm",
            Error::ZeroDirection => "ZeroDirection",
            Error::EmptySum => "EmptySum",
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::IncompleteWeights { .. } => "IncompleteWeights",
            Error::NonPositiveWeight { .. } => "NonPositiveWeight",
            Error::InfeasibleRegularizer { .. } => "InfeasibleRegularizer",
            Error::KernelViolation { .. } => "KernelViolation",
            Error::InfeasibleBase { .. } => "InfeasibleBase",
            Error::AllDegenerate => "AllDegenerate",
            Error::InvalidSystem(_) => "InvalidSystem",
            Error::InvalidStep { .. } => "InvalidStep",
            Error::NotTimeInvariant => "NotTimeInvariant",
            Error::NotSettled { .. } => "NotSettled",
            Error::BadAxes { .. } => "BadAxes",
            Error::EmptyPlot => "EmptyPlot",
            Error::Parse(_) => "ParseError",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Io(_) => "IoError",
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InfeasibleRegularizer { .. }
            | Error::KernelViolation { .. }
            | Error::InfeasibleBase { .. }
            | Error::NotSettled { .. } => ErrorCategory::Infeasible,
            Error::Io(_) => ErrorCategory::Io,
            _ => ErrorCategory::Validation,
        }
    }
}

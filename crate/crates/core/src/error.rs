use thiserror::Error;

/// Errors raised by the discretization, solver and simulation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("resolution must be at least 1 on every axis (axis {axis} has {count})")]
    NonPositiveResolution { axis: usize, count: usize },

    #[error("inverted bounds on axis {axis}: lower {lower} is not below upper {upper}")]
    InvertedBounds { axis: usize, lower: f64, upper: f64 },

    #[error("point {point:?} lies outside the domain box")]
    OutsideDomain { point: Vec<f64> },

    #[error("cell index {index} out of range (partition has {n_cells} cells)")]
    InvalidCell { index: usize, n_cells: usize },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The terminal measure cannot be reached on the discretized chain.
    #[error("transport problem is infeasible: {certificate}")]
    Infeasible { certificate: String },

    /// The solver terminated without a trustworthy answer.
    #[error("numerical failure in LP solve: {0}")]
    NumericalFailure(String),

    /// Mass reached a cell that carries no feedback law.
    #[error("undefined feedback law: step {step}, cell {cell} carries mass {mass:e}")]
    UndefinedLaw { step: usize, cell: usize, mass: f64 },

    #[error("malformed tensor file: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

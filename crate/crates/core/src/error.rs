use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vertex {vertex} is outside the box ({len} interior vertices)")]
    OutOfDomain { vertex: usize, len: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("malformed loop: {0}")]
    MalformedLoop(String),

    #[error("edge set {index} does not separate the source from the targets")]
    NotACutset { index: usize },

    #[error("cutsets {first} and {second} share an edge")]
    OverlappingCutsets { first: usize, second: usize },

    #[error("truncation residual {residual:e} is not below tolerance {tolerance:e}")]
    TruncationResidual { residual: f64, tolerance: f64 },

    #[error("memory budget exceeded: need {required} bytes, budget is {budget} bytes")]
    MemoryBudget { required: u64, budget: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed archive: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::OutOfDomain { .. } => "out_of_domain",
            Error::Precondition(_) => "precondition",
            Error::MalformedLoop(_) => "malformed_loop",
            Error::NotACutset { .. } => "not_a_cutset",
            Error::OverlappingCutsets { .. } => "overlapping_cutsets",
            Error::TruncationResidual { .. } => "truncation_residual",
            Error::MemoryBudget { .. } => "memory_budget",
            Error::Config(_) => "config",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    pub(crate) fn pre(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}

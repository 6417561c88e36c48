use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("scenario tree has {paths:e} paths, limit is {limit}")]
    TooManyPaths { paths: f64, limit: usize },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch { context: String, expected: usize, found: usize },

    #[error("invalid problem: {}", .0.join("; "))]
    InvalidProblem(Vec<String>),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),

    #[error(
        "subproblem infeasible at stage {stage}{}: relatively complete recourse violated",
        fmt_outcome(.outcome)
    )]
    Infeasible { stage: usize, outcome: Option<usize> },

    #[error("subproblem unbounded at stage {stage}{}", fmt_outcome(.outcome))]
    Unbounded { stage: usize, outcome: Option<usize> },

    #[error(
        "primal residual check failed at stage {stage}{}: relative residual {residual:e}",
        fmt_outcome(.outcome)
    )]
    ResidualCheck { stage: usize, outcome: Option<usize>, residual: f64 },

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("no cuts stored for stage {stage}; the policy is undefined there")]
    MissingCuts { stage: usize },

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn fmt_outcome(outcome: &Option<usize>) -> String {
    match outcome {
        Some(o) => format!(", outcome {o}"),
        None => String::new(),
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Malformed(e.to_string())
    }
}

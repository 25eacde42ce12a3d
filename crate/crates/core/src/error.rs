use crate::planner::StepFeasibilityReport;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A scenario file or config block failed validation.
    #[error("configuration error: {0}")]
    Config(String),

    /// An iterative method failed to converge or produced unusable values.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A moment-system step admits no feasible gain.
    #[error("step {step} infeasible: {reason}")]
    Infeasible {
        step: usize,
        reason: String,
        report: Option<Box<StepFeasibilityReport>>,
    },

    /// Wraps the failing pipeline stage around an underlying error.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 configuration, 3 infeasible plan,
    /// 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::Infeasible { .. } => 3,
            Error::Numerical(_) => 4,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

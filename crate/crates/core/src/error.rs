use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Case-file syntax or content problem. `line` is 1-based when known.
    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, message: String },

    #[error("invalid grid: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("branch {id} has zero series impedance")]
    SingularBranch { id: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("topology error: {0}")]
    Topology(String),

    #[error("power flow did not converge after {iterations} iterations (mismatch {mismatch:.3e} p.u.)")]
    Divergence { iterations: usize, mismatch: f64 },

    #[error("singular Jacobian at iteration {iteration}")]
    SingularJacobian { iteration: usize },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error(
        "OPF did not converge after {outer} outer iterations \
         (equality residual {eq_residual:.3e}, bound violation {ineq_violation:.3e}, cost {objective:.6})"
    )]
    OpfNonConvergence {
        outer: usize,
        eq_residual: f64,
        ineq_violation: f64,
        objective: f64,
    },

    #[error("mutation error: {0}")]
    Mutation(String),

    #[error("dataset generation failed: accepted {accepted} of {requested} after {drawn} draws")]
    GenerationFailure {
        requested: usize,
        accepted: usize,
        drawn: usize,
    },

    #[error("dataset format error: {0}")]
    Format(String),

    #[error("digest mismatch: manifest {expected}, content {actual}")]
    DigestMismatch { expected: String, actual: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model error: {0}")]
    Model(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: impl Into<Option<usize>>, message: impl Into<String>) -> Self {
        Error::Parse {
            line: line.into(),
            message: message.into(),
        }
    }

    /// True for failures of a numerical procedure (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. }
                | Error::SingularJacobian { .. }
                | Error::Topology(_)
                | Error::Infeasible(_)
                | Error::OpfNonConvergence { .. }
                | Error::GenerationFailure { .. }
        )
    }
}

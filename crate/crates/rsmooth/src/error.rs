use crate::solver::RunRecord;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the manifold, prox, operator, problem and solver layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("matrix is not on St({n},{r}): ||X^T X - I||_F = {residual:.3e}")]
    Infeasible { n: usize, r: usize, residual: f64 },

    #[error("matrix is not tangent at the base point: ||X^T V + V^T X||_F = {residual:.3e}")]
    NotTangent { residual: f64 },

    #[error("degenerate retraction step: {0}")]
    DegenerateStep(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("power iteration did not converge after {iterations} iterations (last estimate {last_estimate:.6e})")]
    PowerIterationDiverged {
        iterations: usize,
        last_estimate: f64,
    },

    #[error("linear operator is not surjective; the corrected point is undefined")]
    NotSurjective,

    #[error("stepsize configuration yields nonpositive sampling weight at k = {k} (gamma_k * ell_k = {gamma_ell:.3e} >= 2)")]
    StepsizeConfig { k: usize, gamma_ell: f64 },

    #[error("non-finite value encountered at iteration {iteration}; partial trace attached")]
    NumericFailure {
        iteration: usize,
        record: Box<RunRecord>,
    },

    #[error("integrity check failed for {path}: expected sha256 {expected}, got {got}")]
    Integrity {
        path: String,
        expected: String,
        got: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

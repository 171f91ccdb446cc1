use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum BdfError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("momentum {norm} outside the closed ball of radius {cutoff}")]
    Domain { norm: f64, cutoff: f64 },

    #[error("quadrature did not reach tolerance {tol:e} (estimated error {estimate:e})")]
    Quadrature { tol: f64, estimate: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("lattice mismatch: densities live on different difference lattices")]
    LatticeMismatch,

    #[error("state is not admissible: {0}")]
    NotAdmissible(String),

    #[error("no sign change of h(v) - 2 on [{lo}, {hi}]")]
    Bracket { lo: f64, hi: f64 },

    #[error("radial resolution insufficient: top eigenvalue moved by {relative_change:.3e} under refinement")]
    Resolution { relative_change: f64 },

    /// `history` holds the (step, commutator) residual pair of every iteration.
    #[error("self-consistent iteration did not converge after {iterations} iterations: {reason}")]
    NonConvergence { iterations: usize, reason: String, history: Vec<[f64; 2]> },

    #[error("time step failed at t = {t}: {reason}")]
    StepFailure { t: f64, reason: String },

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, BdfError>;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("horizon error: {0}")]
    Horizon(String),

    #[error("matrix at index {index} is singular (relative min singular value {ratio:e})")]
    Singular { index: i64, ratio: f64 },

    #[error("numerical range exceeded: {0}")]
    NumericalRange(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("system is not uniformly completely controllable up to window {k_max}")]
    NotControllable { k_max: usize },

    #[error("singular controllability Gramian on window starting at {k0} (min eigenvalue {min_eig:e})")]
    SingularGramian { k0: i64, min_eig: f64 },

    #[error("feedback synthesis failed on window [{k0}, {end}): {reason}")]
    Synthesis { k0: i64, end: i64, reason: String },

    #[error("closed loop is not a Lyapunov sequence (first failure at index {index:?})")]
    ClosedLoopNotLyapunov { index: Option<i64> },

    #[error("spectrum verification failed: estimated {estimated:?}, targets {targets:?}")]
    Verification {
        estimated: Vec<[f64; 2]>,
        targets: Vec<[f64; 2]>,
    },

    #[error("integration did not converge on [{t0}, {t1}] (difference {diff:e} at {substeps} substeps)")]
    Convergence {
        t0: f64,
        t1: f64,
        diff: f64,
        substeps: usize,
    },

    #[error("invalid input: {0}")]
    Input(String),
}

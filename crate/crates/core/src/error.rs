use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rotation vector norm {norm} outside the parameterization range [0, 2π)")]
    RotationRange { norm: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("constraint error: {0}")]
    Constraint(String),

    #[error("degenerate flow: chordwise velocity {0} too small")]
    DegenerateFlow(f64),

    #[error("{what} did not converge after {iterations} iterations (last residual {last:.3e})")]
    NonConvergence {
        what: String,
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },

    #[error("no flutter below {v_max} m/s")]
    NoFlutter { v_max: f64 },

    #[error("trim unreachable: required lift coefficient {cl:.3} exceeds 1.2")]
    TrimUnreachable { cl: f64 },

    #[error("time step failed at t = {t:.4} s after {halvings} step halvings: {reason}")]
    StepFailure {
        t: f64,
        halvings: usize,
        reason: String,
    },

    #[error("eigen-solver failure: {0}")]
    Eigen(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for errors caused by the user's configuration rather than by the
    /// analysis itself.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. })
    }
}

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDist(String),

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quadrature did not converge on [{lo}, {hi}]")]
    QuadratureDiverged { lo: f64, hi: f64 },

    #[error("root finding failed: {0}")]
    RootNotFound(String),

    #[error("no equilibrium: {0}")]
    NoEquilibrium(String),

    #[error("missing threshold for subset {mask:#x}, platform {platform}")]
    MissingThreshold { mask: u64, platform: usize },

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("{0}")]
    EmptyInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numerical failures (divergent quadrature, missing roots, no certified
    /// equilibrium) as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::QuadratureDiverged { .. } | Error::RootNotFound(_) | Error::NoEquilibrium(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

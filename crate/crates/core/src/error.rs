use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("did not converge: {0}")]
    NonConvergence(String),
    #[error("series truncation inadequate: {0}")]
    Truncation(String),
    #[error("coincident grid nodes {0} and {1}")]
    SingularPair(usize, usize),
    #[error("orders ({0}, {1}) do not have opposite parity")]
    Parity(usize, usize),
    #[error("state is not pure: |Q K - 1| = {0:e}")]
    Purity(f64),
    #[error("near-pure mode: nu - 1/2 = {0:e}")]
    NearPure(f64),
    #[error("quadrature failed: {0}")]
    Quadrature(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numerical failures map to exit status 2, everything else to 1.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence(_)
                | Error::Truncation(_)
                | Error::Quadrature(_)
                | Error::Overflow(_)
                | Error::NearPure(_)
                | Error::Purity(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

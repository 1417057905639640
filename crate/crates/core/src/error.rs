use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: n = {0} vs n = {1}")]
    Dimension(usize, usize),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("point outside the tabulated box")]
    OutOfDomain,
    #[error("degenerate ball: the integral of V over the ball vanishes")]
    DegenerateBall,
    #[error("rho is unbounded up to r_max = {r_max}")]
    UnboundedRho { r_max: f64 },
    #[error("tolerance not met: {0}")]
    Tolerance(String),
    #[error("boundary policy: {0}")]
    Boundary(String),
    #[error("divergent integral: {0}")]
    Divergence(String),
    #[error("under-resolved grid: {0}")]
    Resolution(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io(_) | Error::Json(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

use thiserror::Error;

/// Errors produced by the bound engine and the simulators.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violates a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// The residual-cluster MGF is infinite at the requested point.
    #[error("MGF singularity: lambda = {lambda} is not below lambda_s = {lambda_s}")]
    Singularity { lambda: f64, lambda_s: f64 },

    /// An iterative method failed or two independent routes disagree.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Vandermonde nodes are too close to solve for the constants reliably.
    #[error(
        "ill-conditioned Vandermonde system: min node separation {min_separation:e}, \
         Gautschi bound {gautschi_bound:e}"
    )]
    Conditioning {
        min_separation: f64,
        gautschi_bound: f64,
    },

    /// Not enough simulated data to form an estimate.
    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by numerical failure rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::Conditioning { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    /// The uplink cannot carry the task input with the allocated energy:
    /// the rate/time fixed point has no strictly positive root.
    #[error("link infeasible: slope {slope:.6e} <= 1")]
    LinkInfeasible { slope: f64 },

    #[error("replay memory not ready: {have} < {need}")]
    NotReady { have: usize, need: usize },

    #[error("state-action space too large to enumerate: X*Y = {size} > {limit}")]
    SizeGuard { size: u128, limit: u128 },

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("singular linear system")]
    Singular,

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<toml::ser::Error> for Error {
    fn from(e: toml::ser::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

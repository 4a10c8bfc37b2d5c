use thiserror::Error;

/// Errors raised across the planner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid CDF: {0}")]
    InvalidCdf(String),

    #[error("invalid workload: {0}")]
    InvalidWorkload(String),

    #[error("context bound of {context} tokens leaves no KV slot on {gpu}")]
    ContextTooLarge { gpu: String, context: u64 },

    #[error("GPU profile {0} has no power curve")]
    MissingPowerCurve(String),

    #[error("unknown GPU profile: {0}")]
    UnknownProfile(String),

    #[error("utilization {rho:.4} >= 1: queue is unstable")]
    Unstable { rho: f64 },

    #[error("conditional range ({lo}, {hi}] carries no probability mass")]
    EmptyRange { lo: f64, hi: f64 },

    #[error("routing failed: {0}")]
    Routing(String),

    #[error("invalid fleet: {0}")]
    InvalidFleet(String),

    #[error("request {id} with {tokens} tokens fits no pool")]
    Unroutable { id: u64, tokens: u64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown availability constant: {0}")]
    UnknownConstant(String),

    #[error("disaggregation not viable: {0}")]
    NotViable(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

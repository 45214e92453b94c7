use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{0} is not positive definite")]
    NotPositiveDefinite(&'static str),

    #[error("PSD repair of {name} clipped {clipped:.3e} (limit {limit:.3e}); assembly is inconsistent")]
    PsdRepair {
        name: &'static str,
        clipped: f64,
        limit: f64,
    },

    #[error("problem is infeasible: {0}")]
    Infeasible(String),

    #[error("no sign change on [{lo}, {hi}]: g(lo) = {g_lo:.6e}, g(hi) = {g_hi:.6e}")]
    NoSignChange {
        lo: f64,
        hi: f64,
        g_lo: f64,
        g_hi: f64,
    },

    #[error("zero receive filter for {0}")]
    ZeroFilter(&'static str),

    #[error("{0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    /// Hurst value sits exactly on a regime boundary where the limit theory does not apply.
    #[error("critical Hurst value H = {hurst} ({which}) is excluded")]
    CriticalHurst { hurst: f64, which: String },

    /// `(H, q)` falls outside the window required by an operation.
    #[error("H = {hurst} with q = {q} is outside the admissible window: H must lie in {window}")]
    Window { hurst: f64, q: u32, window: String },

    #[error("divergent integral: {0}")]
    Divergent(String),

    #[error("singular evaluation: {0}")]
    Singular(String),

    #[error(
        "circulant embedding has a negative eigenvalue {min_eigenvalue:e} below tolerance {tolerance:e}"
    )]
    Embedding { min_eigenvalue: f64, tolerance: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for errors caused by caller input rather than numerics or IO.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::CriticalHurst { .. }
                | Error::Window { .. }
                | Error::Divergent(_)
                | Error::Singular(_)
                | Error::Config(_)
        )
    }
}

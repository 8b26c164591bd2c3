use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the estimation pipeline. Messages carry the name of the
/// stage that produced them so CLI output can be traced back.
#[derive(Debug, Error)]
pub enum Error {
    #[error("data: cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("data: parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("data: dates are not consecutive quarters ({previous} followed by {next})")]
    Frequency { previous: String, next: String },

    #[error("data: {0}")]
    Sizing(String),

    #[error("data: degenerate data: {0}")]
    DegenerateData(String),

    #[error("priors: zero-variance series `{0}`")]
    ZeroVariance(String),

    #[error("var: {0}")]
    Singular(String),

    #[error("var: ill-conditioned matrix (condition number {0:e})")]
    Conditioning(f64),

    #[error("sampler: non-finite value in {term}: {value}")]
    Numeric { term: &'static str, value: f64 },

    #[error("sampler: posterior precision is not positive definite")]
    NotPositiveDefinite,

    #[error("sampler: invalid configuration: {0}")]
    SamplerConfig(String),

    #[error("labeling: chain is empty")]
    EmptyChain,

    #[error("labeling: {0}")]
    Constraint(String),

    #[error("analysis: {0}")]
    Analysis(String),

    #[error("chain store: {0}")]
    Store(String),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

use thiserror::Error;

/// Errors produced anywhere in the attack pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("invalid Gaussian model: {0}")]
    InvalidModel(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("degenerate weight normalization: |phi*_{index}| = {value:e} is not above {eps:e}")]
    DegenerateNormalization { index: usize, value: f64, eps: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sampler failed after {attempts} attempts: {reason}")]
    SamplerExhausted { attempts: usize, reason: String },

    #[error("vertex enumeration over {dim} coordinates exceeds the limit of {limit}")]
    VertexLimit { dim: usize, limit: usize },

    #[error("solution is not certified optimal ({0})")]
    Uncertified(String),

    #[error("data error at row {row}, column {column}: {reason}")]
    Data {
        row: usize,
        column: usize,
        reason: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag, used for the CLI's JSON error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NotPositiveDefinite(_) => "not_positive_definite",
            Error::Singular(_) => "singular",
            Error::InvalidModel(_) => "invalid_model",
            Error::InvalidPartition(_) => "invalid_partition",
            Error::InvalidRegion(_) => "invalid_region",
            Error::DegenerateNormalization { .. } => "degenerate_normalization",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::SamplerExhausted { .. } => "sampler_exhausted",
            Error::VertexLimit { .. } => "vertex_limit",
            Error::Uncertified(_) => "uncertified",
            Error::Data { .. } => "data",
            Error::Schema(_) => "schema",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: String,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value produced by {0}")]
    Numeric(String),

    #[error("data integrity: {0}")]
    DataIntegrity(String),

    #[error("degenerate scale: min {min} equals max {max}")]
    DegenerateScale { min: f64, max: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error("corrupted data: {0}")]
    Corruption(String),

    #[error("unsupported checkpoint version {0}")]
    Version(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Dimension {
            op: op.to_string(),
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    /// Prefix a stage name onto dimension and contract errors.
    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            Error::Dimension { lhs, rhs, op } => Error::Dimension {
                op: format!("{stage}/{op}"),
                lhs,
                rhs,
            },
            Error::Contract(msg) => Error::Contract(format!("{stage}: {msg}")),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

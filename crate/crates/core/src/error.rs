use thiserror::Error;

/// Errors produced anywhere in the crate.
///
/// Every variant names the module (or operation) that failed so that CLI
/// messages can be traced back without a backtrace.
#[derive(Debug, Error)]
pub enum GmcError {
    #[error("[{op}] dimension mismatch: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("[{module}] invalid parameter `{name}`: {detail}")]
    Parameter {
        module: &'static str,
        name: &'static str,
        detail: String,
    },

    #[error("[{module}] validation failed: {detail}")]
    Validation {
        module: &'static str,
        detail: String,
    },

    #[error("[{module}] numerical failure: {detail}")]
    Numerical {
        module: &'static str,
        detail: String,
    },

    /// Training hit a non-finite value; `losses` holds the total loss of
    /// every completed epoch.
    #[error("[srgcnn] training diverged at epoch {epoch}: {detail}")]
    Diverged {
        epoch: usize,
        detail: String,
        losses: Vec<f64>,
    },

    #[error("[data] parse error at row {row}, column `{column}`: {detail}")]
    Parse {
        row: usize,
        column: String,
        detail: String,
    },

    #[error("[data] schema error: {0}")]
    Schema(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GmcError>;

impl GmcError {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        GmcError::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn param(
        module: &'static str,
        name: &'static str,
        detail: impl Into<String>,
    ) -> Self {
        GmcError::Parameter {
            module,
            name,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(module: &'static str, detail: impl Into<String>) -> Self {
        GmcError::Validation {
            module,
            detail: detail.into(),
        }
    }

    pub(crate) fn numerical(module: &'static str, detail: impl Into<String>) -> Self {
        GmcError::Numerical {
            module,
            detail: detail.into(),
        }
    }
}

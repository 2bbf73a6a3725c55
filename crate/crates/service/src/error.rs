use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use prior_forge::Error as CoreError;
use serde_json::json;
use thiserror::Error;

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("session `{0}` not found")]
    SessionNotFound(String),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("invalid partition for covariate `{label}`: {source}")]
    InvalidPartition {
        label: String,
        #[source]
        source: CoreError,
    },
    #[error("covariate `{0}` is not part of the session design")]
    UnknownCovariate(String),
    #[error("invalid judgement for covariate `{label}`: {source}")]
    InvalidJudgement {
        label: String,
        #[source]
        source: CoreError,
    },
    #[error("session `{0}` has no fit")]
    NotFitted(String),
    #[error("a fit is already running for session `{0}`")]
    FitInProgress(String),
    #[error("optimisation failed: {0}")]
    OptimizerFailure(#[source] CoreError),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("storage error: {0}")]
    Storage(String),
}

impl ServiceError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::SessionNotFound(_) => "SessionNotFound",
            Self::UnknownModel(_) => "UnknownModel",
            Self::InvalidPartition { .. } => "InvalidPartition",
            Self::UnknownCovariate(_) => "UnknownCovariate",
            Self::InvalidJudgement { source, .. } => match source {
                CoreError::NonIncreasingThresholds => "NonIncreasingThresholds",
                CoreError::AllZeroChips => "AllZeroChips",
                _ => "InvalidJudgement",
            },
            Self::NotFitted(_) => "NotFitted",
            Self::FitInProgress(_) => "FitInProgress",
            Self::OptimizerFailure(_) => "OptimizerFailure",
            Self::BadRequest(_) => "BadRequest",
            Self::Storage(_) => "Storage",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            Self::SessionNotFound(_) => StatusCode::NOT_FOUND,
            Self::NotFitted(_) | Self::FitInProgress(_) => StatusCode::CONFLICT,
            Self::BadRequest(_) => StatusCode::BAD_REQUEST,
            Self::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        }
    }

    fn details(&self) -> serde_json::Value {
        match self {
            Self::InvalidPartition { label, source } => {
                let mut d = json!({ "covariate": label, "cause": core_kind(source) });
                if let CoreError::OverlappingBins { first, second } = source {
                    d["bins"] = json!([first, second]);
                }
                d
            }
            Self::InvalidJudgement { label, source } => json!({ "covariate": label, "cause": core_kind(source) }),
            Self::OptimizerFailure(source) => json!({ "cause": core_kind(source) }),
            _ => serde_json::Value::Null,
        }
    }
}

/// Variant name of a core error, for machine-readable diagnostics.
pub fn core_kind(e: &CoreError) -> String {
    let dbg = format!("{e:?}");
    dbg.split(|c: char| !c.is_alphanumeric()).next().unwrap_or_default().to_string()
}

impl From<std::io::Error> for ServiceError {
    fn from(e: std::io::Error) -> Self {
        Self::Storage(e.to_string())
    }
}

impl From<serde_json::Error> for ServiceError {
    fn from(e: serde_json::Error) -> Self {
        Self::Storage(e.to_string())
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.kind(), "message": self.to_string() });
        let details = self.details();
        if !details.is_null() {
            body["details"] = details;
        }
        (self.status(), Json(body)).into_response()
    }
}

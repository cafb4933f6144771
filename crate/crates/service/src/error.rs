//! Structured API errors: `{code, message, detail}` with stable codes.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use serde_json::{json, Value};
use simexplore_core::export::ExportError;
use simexplore_core::ingest::fetch::FetchError;
use simexplore_core::ingest::IngestError;
use simexplore_core::missingness::MissingError;
use simexplore_core::model::ModelError;
use simexplore_core::plotdata::PlotError;
use simexplore_core::query::QueryError;

#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub detail: Value,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            detail: Value::Null,
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    pub fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn unprocessable(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }

    pub fn session_not_found(id: &str) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "session_not_found",
            format!("no session `{id}`"),
        )
    }

    pub fn no_mapping() -> Self {
        Self::new(
            StatusCode::CONFLICT,
            "no_mapping",
            "the dataset has no variable mapping yet",
        )
    }

    pub fn too_large(limit: usize) -> Self {
        Self::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "payload_too_large",
            format!("payload exceeds the limit of {limit} bytes"),
        )
        .with_detail(json!({ "limit": limit }))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self)).into_response()
    }
}

impl From<IngestError> for ApiError {
    fn from(e: IngestError) -> Self {
        let message = e.to_string();
        match e {
            IngestError::TooLarge { limit } => Self::too_large(limit),
            IngestError::UnsupportedFormat(_) => Self::bad_request("unsupported_format", message),
            IngestError::RaggedRows {
                row,
                expected,
                found,
            } => Self::bad_request("parse_error", message)
                .with_detail(json!({ "row": row, "expected": expected, "found": found })),
            IngestError::DuplicateColumn(c) => {
                Self::bad_request("parse_error", message).with_detail(json!({ "column": c }))
            }
            _ => Self::bad_request("parse_error", message),
        }
    }
}

impl From<FetchError> for ApiError {
    fn from(e: FetchError) -> Self {
        let message = e.to_string();
        match e {
            FetchError::BadScheme(_) => Self::bad_request("invalid_url", message),
            FetchError::TooLarge { limit } => Self::too_large(limit),
            FetchError::BadStatus(status) => {
                Self::new(StatusCode::BAD_GATEWAY, "fetch_failed", message)
                    .with_detail(json!({ "status": status }))
            }
            FetchError::Network(_) => Self::new(StatusCode::BAD_GATEWAY, "fetch_failed", message),
        }
    }
}

impl From<ModelError> for ApiError {
    fn from(e: ModelError) -> Self {
        let message = e.to_string();
        match e {
            ModelError::UnknownColumn(c) => {
                Self::unprocessable("unknown_column", message).with_detail(json!({ "column": c }))
            }
            _ => Self::unprocessable("invalid_mapping", message),
        }
    }
}

impl From<MissingError> for ApiError {
    fn from(e: MissingError) -> Self {
        let message = e.to_string();
        match e {
            MissingError::UnknownColumn(c) => {
                Self::unprocessable("unknown_column", message).with_detail(json!({ "column": c }))
            }
            MissingError::NonNumericVariable(c) => {
                Self::unprocessable("non_numeric_variable", message)
                    .with_detail(json!({ "column": c }))
            }
        }
    }
}

impl From<PlotError> for ApiError {
    fn from(e: PlotError) -> Self {
        let message = e.to_string();
        match e {
            PlotError::UnknownKind(_) => {
                Self::new(StatusCode::NOT_FOUND, "unknown_plot_kind", message)
            }
            PlotError::Converter(_) => {
                Self::new(StatusCode::BAD_GATEWAY, "converter_failed", message)
            }
            _ => Self::unprocessable("invalid_plot", message),
        }
    }
}

impl From<ExportError> for ApiError {
    fn from(e: ExportError) -> Self {
        Self::unprocessable("invalid_export", e.to_string())
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        let message = e.to_string();
        match e {
            QueryError::UnknownDgm(d) => {
                Self::unprocessable("unknown_dgm", message).with_detail(json!({ "dgm": d }))
            }
            QueryError::Unavailable { measure, reason } => {
                Self::unprocessable("measure_unavailable", message)
                    .with_detail(json!({ "measure": measure, "reason": reason.to_string() }))
            }
            QueryError::Measure(_) => Self::unprocessable("invalid_measure", message),
            QueryError::Export(e) => e.into(),
            QueryError::Plot(e) => e.into(),
            QueryError::Missing(e) => e.into(),
            QueryError::InvalidParameter { name, value } => {
                Self::bad_request("invalid_parameter", message)
                    .with_detail(json!({ "name": name, "value": value }))
            }
        }
    }
}

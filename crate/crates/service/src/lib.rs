//! JSON API over loaded checkpoints.
//!
//! * `POST /api/v1/tag/{model}` with `{"text": "..."}`
//! * `POST /api/v1/classify/{model}` with `{"text": "..."}`
//! * `GET /api/v1/health`
//!
//! Errors use `{"error": {"code": "...", "message": "..."}}`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use sdpkit::infer::{load_model, ClassifiedText, InferError, LoadedModel, TaggedText, TextPrediction};
use sdpkit::pipeline::TaskKind;
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};

/// Longest accepted `text`, in bytes.
pub const MAX_TEXT_BYTES: usize = 64 * 1024;
/// Request bodies above this are refused before parsing.
const MAX_BODY_BYTES: usize = 2 * MAX_TEXT_BYTES;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("model `{name}`: {source}")]
    Load {
        name: String,
        #[source]
        source: InferError,
    },
    #[error("duplicate model name `{0}`")]
    DuplicateModel(String),
    #[error("invalid allow-origin `{0}`")]
    BadOrigin(String),
}

/// Named models shared read-only by all requests.
#[derive(Debug, Clone, Default)]
pub struct AppState {
    models: Arc<BTreeMap<String, Arc<LoadedModel>>>,
}

impl AppState {
    pub fn new(models: impl IntoIterator<Item = (String, LoadedModel)>) -> Result<Self, ServiceError> {
        let mut map = BTreeMap::new();
        for (name, model) in models {
            if map.insert(name.clone(), Arc::new(model)).is_some() {
                return Err(ServiceError::DuplicateModel(name));
            }
        }
        Ok(AppState { models: Arc::new(map) })
    }

    /// Loads each `(name, checkpoint dir)` pair.
    pub fn load(specs: &[(String, PathBuf)]) -> Result<Self, ServiceError> {
        let mut models = Vec::with_capacity(specs.len());
        for (name, dir) in specs {
            let model = load_model(dir).map_err(|source| ServiceError::Load {
                name: name.clone(),
                source,
            })?;
            models.push((name.clone(), model));
        }
        Self::new(models)
    }

    pub fn model_kinds(&self) -> BTreeMap<String, TaskKind> {
        self.models.iter().map(|(k, m)| (k.clone(), m.kind())).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ApiError,
}

fn error(status: StatusCode, code: &str, message: impl Into<String>) -> Response {
    let body = ErrorBody {
        error: ApiError {
            code: code.to_string(),
            message: message.into(),
        },
    };
    (status, Json(body)).into_response()
}

#[derive(Debug, Deserialize)]
struct TextRequest {
    text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TagResponse {
    pub model: String,
    #[serde(flatten)]
    pub result: TaggedText,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub model: String,
    #[serde(flatten)]
    pub result: ClassifiedText,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub models: BTreeMap<String, TaskKind>,
}

async fn health(State(state): State<AppState>) -> Json<HealthResponse> {
    Json(HealthResponse {
        status: "ok".into(),
        models: state.model_kinds(),
    })
}

/// Shared request validation and prediction for both endpoints.
fn predict(state: &AppState, name: &str, want: TaskKind, body: Result<Bytes, BytesRejection>) -> Result<TextPrediction, Response> {
    let body = body.map_err(|r| {
        if r.status() == StatusCode::PAYLOAD_TOO_LARGE {
            error(StatusCode::PAYLOAD_TOO_LARGE, "payload_too_large", format!("text exceeds {MAX_TEXT_BYTES} bytes"))
        } else {
            error(StatusCode::BAD_REQUEST, "bad_request", r.body_text())
        }
    })?;
    let model = state
        .models
        .get(name)
        .ok_or_else(|| error(StatusCode::NOT_FOUND, "unknown_model", format!("no model named `{name}`")))?;
    let req: TextRequest = serde_json::from_slice(&body)
        .map_err(|e| error(StatusCode::BAD_REQUEST, "bad_request", format!("expected {{\"text\": string}}: {e}")))?;
    if req.text.len() > MAX_TEXT_BYTES {
        return Err(error(
            StatusCode::PAYLOAD_TOO_LARGE,
            "payload_too_large",
            format!("text exceeds {MAX_TEXT_BYTES} bytes"),
        ));
    }
    if model.kind() != want {
        return Err(error(
            StatusCode::CONFLICT,
            "kind_mismatch",
            format!("model `{name}` is a {}, not a {want}", model.kind()),
        ));
    }
    model.predict_for_text(&req.text).map_err(|e| match e {
        InferError::EmptyInput => error(StatusCode::UNPROCESSABLE_ENTITY, "empty_text", "text has no tokens"),
        other => error(StatusCode::INTERNAL_SERVER_ERROR, "internal", other.to_string()),
    })
}

async fn tag(State(state): State<AppState>, Path(name): Path<String>, body: Result<Bytes, BytesRejection>) -> Response {
    match predict(&state, &name, TaskKind::Tagger, body) {
        Ok(TextPrediction::Tagged(result)) => Json(TagResponse { model: name, result }).into_response(),
        Ok(_) => error(StatusCode::INTERNAL_SERVER_ERROR, "internal", "unexpected prediction kind"),
        Err(r) => r,
    }
}

async fn classify(State(state): State<AppState>, Path(name): Path<String>, body: Result<Bytes, BytesRejection>) -> Response {
    match predict(&state, &name, TaskKind::Classifier, body) {
        Ok(TextPrediction::Classified(result)) => Json(ClassifyResponse { model: name, result }).into_response(),
        Ok(_) => error(StatusCode::INTERNAL_SERVER_ERROR, "internal", "unexpected prediction kind"),
        Err(r) => r,
    }
}

async fn not_found() -> Response {
    error(StatusCode::NOT_FOUND, "not_found", "no such route")
}

/// Builds the router. `allow_origin` of `*` allows any origin.
pub fn router(state: AppState, allow_origin: &str) -> Result<Router, ServiceError> {
    let origin = if allow_origin == "*" {
        AllowOrigin::any()
    } else {
        AllowOrigin::exact(HeaderValue::from_str(allow_origin).map_err(|_| ServiceError::BadOrigin(allow_origin.into()))?)
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([axum::http::Method::GET, axum::http::Method::POST])
        .allow_headers([axum::http::header::CONTENT_TYPE]);
    Ok(Router::new()
        .route("/api/v1/health", get(health))
        .route("/api/v1/tag/{model}", post(tag))
        .route("/api/v1/classify/{model}", post(classify))
        .fallback(not_found)
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .layer(cors)
        .with_state(state))
}

/// Serves until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

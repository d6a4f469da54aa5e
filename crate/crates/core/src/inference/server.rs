//! JSON-over-HTTP front end for a [`ModelRegistry`].
//!
//! | route            | body                                              |
//! |------------------|---------------------------------------------------|
//! | `GET /health`    | `{"status": "ok", "models": n, "requests": n}`    |
//! | `GET /models`    | `[{"checkpoint", "condition_spec", "input_size"}]` |
//! | `POST /generate` | `{"checkpoint", "mask_png_b64", "output_size"?}`  |
//!
//! `/generate` answers with `{"image_png_b64", "latency_ms", "checkpoint",
//! "condition_spec"}`. Errors are `{"error": message}`.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{GenerationRequest, ModelRegistry, DEFAULT_OUTPUT_SIZE};
use crate::dataio::{decode_mask_png, encode_frame_png, ConditionSpec};
use crate::error::{Error, Result};

/// Largest accepted output side length.
const MAX_OUTPUT_SIZE: usize = 2048;

/// Shared, read-only models plus the request counter.
#[derive(Debug, Default)]
pub struct AppState {
    pub registry: ModelRegistry,
    pub requests: AtomicU64,
}

impl AppState {
    pub fn new(registry: ModelRegistry) -> Arc<Self> {
        Arc::new(Self {
            registry,
            requests: AtomicU64::new(0),
        })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateBody {
    checkpoint: String,
    mask_png_b64: String,
    #[serde(default)]
    output_size: Option<usize>,
}

#[derive(Serialize)]
struct GenerateReply {
    image_png_b64: String,
    latency_ms: f64,
    checkpoint: String,
    condition_spec: ConditionSpec,
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::ModelNotLoaded(_) => StatusCode::NOT_FOUND,
            Error::CorruptLabel(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Error::InvalidRaster(_) | Error::InvalidDimensions(_) | Error::Io(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self(status, e.to_string())
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/models", get(models))
        .route("/generate", post(generate))
        .with_state(state)
}

async fn health(State(state): State<Arc<AppState>>) -> impl IntoResponse {
    Json(json!({
        "status": "ok",
        "models": state.registry.len(),
        "requests": state.requests.load(Ordering::Relaxed),
    }))
}

async fn models(State(state): State<Arc<AppState>>) -> impl IntoResponse {
    Json(state.registry.infos())
}

fn parse_request(body: &[u8]) -> std::result::Result<GenerationRequest, ApiError> {
    let body: GenerateBody =
        serde_json::from_slice(body).map_err(|e| ApiError(StatusCode::BAD_REQUEST, format!("malformed request: {e}")))?;
    let output_size = body.output_size.unwrap_or(DEFAULT_OUTPUT_SIZE);
    if output_size == 0 || output_size > MAX_OUTPUT_SIZE {
        return Err(ApiError(
            StatusCode::BAD_REQUEST,
            format!("output_size must be between 1 and {MAX_OUTPUT_SIZE}"),
        ));
    }
    let png = BASE64
        .decode(body.mask_png_b64.trim())
        .map_err(|e| ApiError(StatusCode::BAD_REQUEST, format!("mask_png_b64 is not base64: {e}")))?;
    let mask = decode_mask_png(&png)?;
    Ok(GenerationRequest {
        mask,
        output_size,
        checkpoint: body.checkpoint,
    })
}

async fn generate(State(state): State<Arc<AppState>>, body: Bytes) -> std::result::Result<Json<GenerateReply>, ApiError> {
    let start = Instant::now();
    state.requests.fetch_add(1, Ordering::Relaxed);
    let request = parse_request(&body)?;
    state.registry.get(&request.checkpoint)?;
    let worker = state.clone();
    let response = tokio::task::spawn_blocking(move || worker.registry.generate(&request))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let png = encode_frame_png(&response.image)?;
    let latency_ms = start.elapsed().as_secs_f64() * 1e3;
    log::info!("generated with {} in {latency_ms:.1} ms", response.checkpoint);
    Ok(Json(GenerateReply {
        image_png_b64: BASE64.encode(png),
        latency_ms,
        checkpoint: response.checkpoint,
        condition_spec: response.condition_spec,
    }))
}

/// Binds `host:port` and serves until the process ends.
pub async fn serve(host: &str, port: u16, registry: ModelRegistry) -> Result<()> {
    let listener = tokio::net::TcpListener::bind((host, port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(registry))).await?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use axum::body::Body;
    use axum::http::Request;
    use http_body_util::BodyExt;
    use tower::ServiceExt;

    use super::*;
    use crate::dataio::{decode_frame_png, encode_mask_png, ExperimentName, LabelMap};
    use crate::inference::tests::tiny_model;

    fn app() -> Router {
        router(AppState::new(
            ModelRegistry::new(vec![tiny_model("exp-a", ExperimentName::A), tiny_model("exp-e", ExperimentName::E)]).unwrap(),
        ))
    }

    async fn call(app: Router, req: Request<Body>) -> (StatusCode, serde_json::Value) {
        let res = app.oneshot(req).await.unwrap();
        let status = res.status();
        let bytes = res.into_body().collect().await.unwrap().to_bytes();
        (status, serde_json::from_slice(&bytes).unwrap())
    }

    fn post(body: serde_json::Value) -> Request<Body> {
        Request::post("/generate")
            .header("content-type", "application/json")
            .body(Body::from(body.to_string()))
            .unwrap()
    }

    fn mask_b64() -> String {
        let mask = LabelMap::new(4, 4, vec![0, 1, 1, 0, 0, 2, 2, 0, 0, 3, 3, 0, 0, 0, 0, 0]).unwrap();
        BASE64.encode(encode_mask_png(&mask).unwrap())
    }

    #[tokio::test]
    async fn lists_models() {
        let (status, body) = call(app(), Request::get("/models").body(Body::empty()).unwrap()).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(
            body,
            json!([
                {"checkpoint": "exp-a", "condition_spec": {"name": "a", "labels": [1]}, "input_size": 128},
                {"checkpoint": "exp-e", "condition_spec": {"name": "e", "labels": [1, 2, 3]}, "input_size": 128},
            ])
        );
    }

    #[tokio::test]
    async fn generates_a_png() {
        let (status, body) = call(app(), post(json!({"checkpoint": "exp-e", "mask_png_b64": mask_b64()}))).await;
        assert_eq!(status, StatusCode::OK);
        let png = BASE64.decode(body["image_png_b64"].as_str().unwrap()).unwrap();
        let frame = decode_frame_png(&png).unwrap();
        assert_eq!((frame.width(), frame.height()), (256, 256));
        assert!(body["latency_ms"].as_f64().unwrap() >= 0.0);
    }

    #[tokio::test]
    async fn unknown_checkpoint_is_404() {
        let (status, body) = call(app(), post(json!({"checkpoint": "nope", "mask_png_b64": mask_b64()}))).await;
        assert_eq!(status, StatusCode::NOT_FOUND);
        assert!(body["error"].as_str().unwrap().contains("nope"));
    }

    #[tokio::test]
    async fn bad_payloads_are_client_errors() {
        let (status, body) = call(app(), post(json!({"checkpoint": "exp-e", "mask_png_b64": "%%%"}))).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
        assert!(body["error"].is_string());
        let (status, _) = call(app(), post(json!({"checkpoint": "exp-e"}))).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
        let bad = BASE64.encode(encode_mask_png(&LabelMap::zeros(2, 2)).unwrap().iter().map(|_| 0u8).collect::<Vec<_>>());
        let (status, _) = call(app(), post(json!({"checkpoint": "exp-e", "mask_png_b64": bad}))).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
    }

    #[tokio::test]
    async fn health_counts_requests() {
        let state = AppState::new(ModelRegistry::new(vec![tiny_model("m", ExperimentName::C)]).unwrap());
        let app = router(state.clone());
        call(app.clone(), post(json!({"checkpoint": "x", "mask_png_b64": mask_b64()}))).await;
        let (status, body) = call(app, Request::get("/health").body(Body::empty()).unwrap()).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(body, json!({"status": "ok", "models": 1, "requests": 1}));
    }
}

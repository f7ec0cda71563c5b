//! HTTP API over the pipeline.
//!
//! * `POST /api/story`   multipart `image` + optional `aspects` ("where,what")
//! * `POST /api/predict?category=C`   multipart `image`
//! * `GET  /api/tree`
//! * `GET  /api/health`

use std::sync::{Arc, RwLock};

use axum::extract::{DefaultBodyLimit, Multipart, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use image::DynamicImage;
use serde::{Deserialize, Serialize};

use crate::ingest::decode_image;
use crate::pipeline::{Pipeline, PipelineError, PredictResponse, ServiceConfig};
use crate::taxonomy::{parse_aspects, Aspect, CaptionCategory};
use crate::tree::DecisionTreeSpec;

pub struct AppState {
    tree: DecisionTreeSpec,
    pipeline: RwLock<Option<Arc<Pipeline>>>,
    max_upload_bytes: usize,
}

impl AppState {
    /// State with no models loaded yet; story and predict answer 503.
    pub fn warming(tree: DecisionTreeSpec, max_upload_bytes: usize) -> Arc<Self> {
        Arc::new(AppState {
            tree,
            pipeline: RwLock::new(None),
            max_upload_bytes,
        })
    }

    pub fn ready(pipeline: Pipeline, max_upload_bytes: usize) -> Arc<Self> {
        let state = Self::warming(pipeline.tree().clone(), max_upload_bytes);
        state.install(pipeline);
        state
    }

    pub fn install(&self, pipeline: Pipeline) {
        *self.pipeline.write().expect("state lock") = Some(Arc::new(pipeline));
    }

    fn pipeline(&self) -> Option<Arc<Pipeline>> {
        self.pipeline.read().expect("state lock").clone()
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(ErrorBody {
                error: &self.message,
            }),
        )
            .into_response()
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    models_loaded: bool,
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    Json(Health {
        status: "ok",
        models_loaded: state.pipeline().is_some(),
    })
}

async fn tree(State(state): State<Arc<AppState>>) -> Json<DecisionTreeSpec> {
    Json(state.tree.clone())
}

struct Upload {
    image: Option<Vec<u8>>,
    aspects: Option<String>,
}

async fn read_upload(mut multipart: Multipart) -> Result<Upload, ApiError> {
    let mut upload = Upload {
        image: None,
        aspects: None,
    };
    let fail =
        |e: axum::extract::multipart::MultipartError| ApiError::new(e.status(), e.body_text());
    while let Some(field) = multipart.next_field().await.map_err(fail)? {
        match field.name() {
            Some("image") => upload.image = Some(field.bytes().await.map_err(fail)?.to_vec()),
            Some("aspects") => upload.aspects = Some(field.text().await.map_err(fail)?),
            _ => {
                field.bytes().await.map_err(fail)?;
            }
        }
    }
    Ok(upload)
}

fn decode(upload: &Upload) -> Result<DynamicImage, ApiError> {
    let bytes = upload.image.as_deref().ok_or_else(|| {
        ApiError::new(StatusCode::BAD_REQUEST, "missing multipart field \"image\"")
    })?;
    decode_image(bytes).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))
}

fn loaded(state: &AppState) -> Result<Arc<Pipeline>, ApiError> {
    state
        .pipeline()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "models are still loading"))
}

async fn story(
    State(state): State<Arc<AppState>>,
    multipart: Multipart,
) -> Result<Response, ApiError> {
    let upload = read_upload(multipart).await?;
    let aspects: Vec<Aspect> = match upload.aspects.as_deref() {
        None => Aspect::ALL.to_vec(),
        Some(list) => parse_aspects(list)
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?,
    };
    if aspects.is_empty() {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "select at least one aspect",
        ));
    }
    let pipeline = loaded(&state)?;
    let image = decode(&upload)?;
    let body = tokio::task::spawn_blocking(move || pipeline.story(&image, &aspects))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(body).into_response())
}

#[derive(Deserialize)]
struct PredictQuery {
    category: String,
}

async fn predict(
    State(state): State<Arc<AppState>>,
    Query(q): Query<PredictQuery>,
    multipart: Multipart,
) -> Result<Response, ApiError> {
    let category: CaptionCategory =
        q.category
            .parse()
            .map_err(|e: crate::taxonomy::TaxonomyError| {
                ApiError::new(StatusCode::BAD_REQUEST, e.to_string())
            })?;
    let upload = read_upload(multipart).await?;
    let pipeline = loaded(&state)?;
    let image = decode(&upload)?;
    let prediction = tokio::task::spawn_blocking(move || pipeline.predict(category, &image))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|e| match e {
            PipelineError::UnknownCategory(_) => {
                ApiError::new(StatusCode::BAD_REQUEST, e.to_string())
            }
            other => other.into(),
        })?;
    Ok(Json(PredictResponse::from(prediction)).into_response())
}

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.max_upload_bytes;
    Router::new()
        .route("/api/story", post(story))
        .route("/api/predict", post(predict))
        .route("/api/tree", get(tree))
        .route("/api/health", get(health))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Binds, starts answering immediately, and loads models in the background.
pub async fn serve(config: ServiceConfig) -> Result<(), PipelineError> {
    let (_, tree) = config.load_static()?;
    let state = AppState::warming(tree, config.max_upload_bytes);
    let listener = tokio::net::TcpListener::bind(&config.listen)
        .await
        .map_err(|e| PipelineError::Config(format!("bind {}: {e}", config.listen)))?;
    match listener.local_addr() {
        Ok(addr) => log::info!("listening on {addr}"),
        Err(_) => log::info!("listening on {}", config.listen),
    }
    let loader = state.clone();
    let load = tokio::task::spawn_blocking(move || -> Result<(), PipelineError> {
        let pipeline = config.build_pipeline()?;
        loader.install(pipeline);
        log::info!("models loaded");
        Ok(())
    });
    let server = tokio::spawn(async move { axum::serve(listener, router(state)).await });
    match load.await {
        Ok(Ok(())) => {}
        Ok(Err(e)) => return Err(e),
        Err(e) => return Err(PipelineError::Config(e.to_string())),
    }
    match server.await {
        Ok(r) => r.map_err(|e| PipelineError::Config(e.to_string())),
        Err(e) => Err(PipelineError::Config(e.to_string())),
    }
}

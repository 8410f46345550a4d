//! JSON-over-HTTP front end for [`SessionManager`].

use std::path::PathBuf;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use scenemask::RigidPlacement;

use crate::session::{ObjectSource, Overlay, ServiceError, SessionManager};

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: &'static str,
    detail: String,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::ResourceLimit(_) => StatusCode::TOO_MANY_REQUESTS,
            ServiceError::Bundle(_) => StatusCode::BAD_REQUEST,
            ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let body = ErrorBody {
            error: self.kind(),
            detail: self.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ServiceError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    pub bundle_path: PathBuf,
    /// PLY file on the server.
    #[serde(default)]
    pub object_path: Option<PathBuf>,
    /// Name of an object stored in the bundle.
    #[serde(default)]
    pub object_name: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExportRequest {
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobAccepted {
    pub job_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlacementResponse {
    pub revision: u64,
    pub placement: RigidPlacement,
}

#[derive(Debug, Deserialize)]
struct PreviewQuery {
    #[serde(default)]
    overlay: Overlay,
}

#[derive(Debug, Deserialize)]
struct SceneQuery {
    stride: Option<usize>,
    #[serde(default)]
    format: SceneFormat,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
enum SceneFormat {
    #[default]
    Json,
    Binary,
}

pub fn router(manager: SessionManager) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/placement", put(set_placement).get(get_placement))
        .route("/sessions/{id}/propagate", post(propagate))
        .route("/sessions/{id}/render", post(render))
        .route("/sessions/{id}/preview/{frame}", get(preview))
        .route("/sessions/{id}/scene/{frame}", get(scene))
        .route("/sessions/{id}/object", get(object))
        .route("/sessions/{id}/export", post(export))
        .route("/jobs/{id}", get(get_job))
        .with_state(manager)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    manager: SessionManager,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(manager)).with_graceful_shutdown(shutdown).await
}

/// Body parsing that reports malformed JSON as a validation error.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ServiceError::Validation(format!("request body: {e}")))
}

fn parse_optional<T: DeserializeOwned>(body: &Bytes) -> ApiResult<Option<T>> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(None);
    }
    parse_body::<Option<T>>(body)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
}

async fn create_session(State(m): State<SessionManager>, body: Bytes) -> ApiResult<Response> {
    let req: CreateSessionRequest = parse_body(&body)?;
    let source = match (req.object_path, req.object_name) {
        (Some(_), Some(_)) => {
            return Err(ServiceError::Validation("give object_path or object_name, not both".into()));
        }
        (Some(p), None) => ObjectSource::Path(p),
        (None, Some(n)) => ObjectSource::Bundled(n),
        (None, None) => ObjectSource::Default,
    };
    let view = blocking(move || m.create_session(&req.bundle_path, &source)).await?;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn get_session(State(m): State<SessionManager>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(m.get_session(&id)?).into_response())
}

async fn delete_session(State(m): State<SessionManager>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    m.delete_session(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn set_placement(State(m): State<SessionManager>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let placement: RigidPlacement = parse_body(&body)?;
    let revision = m.set_placement(&id, placement)?;
    let (placement, _) = m.get_placement(&id)?;
    Ok(Json(PlacementResponse { revision, placement }).into_response())
}

async fn get_placement(State(m): State<SessionManager>, Path(id): Path<String>) -> ApiResult<Response> {
    let (placement, revision) = m.get_placement(&id)?;
    Ok(Json(PlacementResponse { revision, placement }).into_response())
}

async fn propagate(State(m): State<SessionManager>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let job_id = m.run_propagation(&id, parse_optional(&body)?)?;
    Ok((StatusCode::ACCEPTED, Json(JobAccepted { job_id })).into_response())
}

async fn render(State(m): State<SessionManager>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let job_id = m.run_render(&id, parse_optional(&body)?)?;
    Ok((StatusCode::ACCEPTED, Json(JobAccepted { job_id })).into_response())
}

async fn get_job(State(m): State<SessionManager>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(m.get_job(&id)?).into_response())
}

fn revision_header(revision: u64) -> (header::HeaderName, HeaderValue) {
    (header::HeaderName::from_static("x-revision"), HeaderValue::from(revision))
}

async fn preview(
    State(m): State<SessionManager>,
    Path((id, frame)): Path<(String, usize)>,
    Query(q): Query<PreviewQuery>,
) -> ApiResult<Response> {
    let (png, revision) = blocking(move || m.preview(&id, frame, q.overlay)).await?;
    Ok(([(header::CONTENT_TYPE, HeaderValue::from_static("image/png")), revision_header(revision)], png).into_response())
}

async fn scene(
    State(m): State<SessionManager>,
    Path((id, frame)): Path<(String, usize)>,
    Query(q): Query<SceneQuery>,
) -> ApiResult<Response> {
    let cloud = blocking(move || m.scene(&id, frame, q.stride)).await?;
    Ok(match q.format {
        SceneFormat::Json => Json(cloud).into_response(),
        SceneFormat::Binary => (
            [
                (header::CONTENT_TYPE, HeaderValue::from_static("application/octet-stream")),
                (header::HeaderName::from_static("x-point-count"), HeaderValue::from(cloud.count)),
            ],
            cloud.to_binary(),
        )
            .into_response(),
    })
}

#[derive(Serialize)]
struct ObjectResponse {
    revision: u64,
    placement: RigidPlacement,
    points: Vec<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    colors: Option<Vec<[u8; 3]>>,
}

async fn object(State(m): State<SessionManager>, Path(id): Path<String>) -> ApiResult<Response> {
    let (cloud, placement, revision) = m.object(&id)?;
    Ok(Json(ObjectResponse {
        revision,
        placement,
        points: cloud.points.iter().map(|p| [p.x, p.y, p.z]).collect(),
        colors: cloud.colors.clone(),
    })
    .into_response())
}

async fn export(State(m): State<SessionManager>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let req: ExportRequest = parse_body(&body)?;
    let summary = blocking(move || m.export(&id, &req.out_dir)).await?;
    Ok(Json(summary).into_response())
}

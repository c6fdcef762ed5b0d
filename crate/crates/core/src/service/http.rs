//! JSON-over-HTTP front end of a [`Campaign`].

use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::Deserialize;
use serde_json::json;

use super::campaign::{Campaign, Submission};
use crate::error::Error;

#[derive(Clone)]
pub struct AppState {
    pub campaign: Arc<Campaign>,
    pub stimulus_root: PathBuf,
}

#[derive(Debug, Deserialize)]
struct OpenRequest {
    worker_id: String,
}

struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            Error::InvalidInput(_) => StatusCode::BAD_REQUEST,
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::Conflict(_) => StatusCode::CONFLICT,
            Error::Unavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            Error::Expired(_) => StatusCode::GONE,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status.is_server_error() {
            log::error!("{}", self.0);
        }
        (status, Json(json!({ "error": self.0.to_string() }))).into_response()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/assignments", post(open_assignment))
        .route("/assignments/{id}", get(show_assignment))
        .route("/assignments/{id}/next", get(next_question))
        .route("/assignments/{id}/responses", post(submit_response))
        .route("/export.csv", get(export))
        .route("/stimuli/{*path}", get(stimulus))
        .with_state(state)
}

async fn open_assignment(State(st): State<AppState>, Json(req): Json<OpenRequest>) -> Result<Response, ApiError> {
    let a = st.campaign.open_assignment(&req.worker_id, Utc::now())?;
    Ok((StatusCode::CREATED, Json(a)).into_response())
}

async fn show_assignment(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    Ok(Json(st.campaign.assignment(&id, Utc::now())?).into_response())
}

async fn next_question(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    Ok(match st.campaign.next_question(&id, Utc::now())? {
        Some(n) => Json(n).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

async fn submit_response(
    State(st): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(sub): Json<Submission>,
) -> Result<Response, ApiError> {
    // the log write is blocking
    let campaign = Arc::clone(&st.campaign);
    let ack = tokio::task::spawn_blocking(move || campaign.submit_response(&id, &sub, Utc::now()))
        .await
        .map_err(|e| Error::Io(std::io::Error::other(e)))??;
    Ok(Json(ack).into_response())
}

async fn export(State(st): State<AppState>) -> Result<Response, ApiError> {
    let body = st.campaign.export_csv()?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], body).into_response())
}

/// Store-relative path of a requested image, rejecting anything that could
/// leave the store or is not a PNG.
pub fn sanitize_stimulus_path(requested: &str) -> Option<PathBuf> {
    let path = Path::new(requested);
    if path.extension().and_then(|e| e.to_str()) != Some("png") {
        return None;
    }
    let mut clean = PathBuf::new();
    for c in path.components() {
        match c {
            Component::Normal(p) => clean.push(p),
            _ => return None,
        }
    }
    Some(clean)
}

async fn stimulus(State(st): State<AppState>, UrlPath(path): UrlPath<String>) -> Result<Response, ApiError> {
    let rel = sanitize_stimulus_path(&path).ok_or_else(|| Error::NotFound(format!("stimulus {path}")))?;
    match tokio::fs::read(st.stimulus_root.join(&rel)).await {
        Ok(bytes) => Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::NotFound(format!("stimulus {path}")).into()),
        Err(e) => Err(Error::Io(e).into()),
    }
}

/// Serve until ctrl-c.
pub async fn serve(addr: SocketAddr, state: AppState) -> crate::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{generate_design, DesignConfig};
    use crate::raster::RasterImage;
    use crate::service::campaign::CampaignConfig;
    use crate::stimulus::Protocol;
    use axum::body::Body;
    use axum::http::Request;
    use http_body_util::BodyExt;
    use tower::ServiceExt;

    fn app(root: &Path) -> Router {
        let design = generate_design(&DesignConfig::paper(), Protocol::Ptc).unwrap();
        let campaign = Campaign::new(design, CampaignConfig::for_protocol(Protocol::Ptc)).unwrap();
        router(AppState {
            campaign: Arc::new(campaign),
            stimulus_root: root.to_path_buf(),
        })
    }

    async fn call(app: &Router, method: &str, uri: &str, body: Option<serde_json::Value>) -> (StatusCode, Vec<u8>) {
        let mut req = Request::builder().method(method).uri(uri);
        let body = match body {
            Some(v) => {
                req = req.header(header::CONTENT_TYPE, "application/json");
                Body::from(v.to_string())
            }
            None => Body::empty(),
        };
        let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
        let status = resp.status();
        (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
    }

    #[test]
    fn path_sanitizing() {
        assert_eq!(sanitize_stimulus_path("a/b/2_plain.png"), Some(PathBuf::from("a/b/2_plain.png")));
        assert_eq!(sanitize_stimulus_path("../etc/passwd.png"), None);
        assert_eq!(sanitize_stimulus_path("/abs/x.png"), None);
        assert_eq!(sanitize_stimulus_path("a/x.txt"), None);
        assert_eq!(sanitize_stimulus_path("a/./x.png"), Some(PathBuf::from("a/x.png")));
    }

    #[tokio::test]
    async fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let app = app(dir.path());

        let (status, body) = call(&app, "POST", "/assignments", Some(json!({"worker_id": "w1"}))).await;
        assert_eq!(status, StatusCode::CREATED);
        let a: serde_json::Value = serde_json::from_slice(&body).unwrap();
        let id = a["assignment_id"].as_str().unwrap().to_string();
        let (status, _) = call(&app, "POST", "/assignments", Some(json!({"worker_id": "w1"}))).await;
        assert_eq!(status, StatusCode::CONFLICT);

        let (status, body) = call(&app, "GET", &format!("/assignments/{id}/next"), None).await;
        assert_eq!(status, StatusCode::OK);
        let next: serde_json::Value = serde_json::from_slice(&body).unwrap();
        let qid = next["question_id"].as_str().unwrap().to_string();
        assert_eq!(next["timing"]["min_toggles"], json!(1));

        let sub = json!({"question_id": qid, "answer": "left", "response_time_ms": 1500, "toggled_count": 0});
        let (status, _) = call(&app, "POST", &format!("/assignments/{id}/responses"), Some(sub)).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
        let sub = json!({"question_id": qid, "answer": "left", "response_time_ms": 1500, "toggled_count": 2});
        let (status, _) = call(&app, "POST", &format!("/assignments/{id}/responses"), Some(sub.clone())).await;
        assert_eq!(status, StatusCode::OK);
        let (status, _) = call(&app, "POST", &format!("/assignments/{id}/responses"), Some(sub)).await;
        assert_eq!(status, StatusCode::CONFLICT);

        let (status, body) = call(&app, "GET", "/export.csv", None).await;
        assert_eq!(status, StatusCode::OK);
        let csv = String::from_utf8(body).unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.lines().nth(1).unwrap().starts_with(&format!("{qid},w1,")));

        let (status, _) = call(&app, "GET", "/assignments/nope/next", None).await;
        assert_eq!(status, StatusCode::NOT_FOUND);
    }

    #[tokio::test]
    async fn serves_png_and_blocks_traversal() {
        let dir = tempfile::tempdir().unwrap();
        let img = RasterImage::filled(2, 2, [10, 20, 30]).unwrap();
        img.save_png(&dir.path().join("s/c/2_plain.png")).unwrap();
        let app = app(dir.path());
        let (status, body) = call(&app, "GET", "/stimuli/s/c/2_plain.png", None).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(&body[1..4], b"PNG");
        let (status, _) = call(&app, "GET", "/stimuli/s/c/4_plain.png", None).await;
        assert_eq!(status, StatusCode::NOT_FOUND);
        let (status, _) = call(&app, "GET", "/stimuli/s/%2E%2E/%2E%2E/x.png", None).await;
        assert_eq!(status, StatusCode::NOT_FOUND);
    }
}

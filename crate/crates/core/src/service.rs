//! Local HTTP service for exploring a transcription.
//!
//! All routes live under `/v1/`. Every response carries `x-partran-version`
//! and `x-metric-id` headers.
//!
//! | route                  | method | body / reply                                       |
//! |------------------------|--------|----------------------------------------------------|
//! | `/v1/state`            | GET    | space, current and best assignment, distances      |
//! | `/v1/render`           | POST   | `{"assignment":{..},"disable":[..]}` → PNG         |
//! | `/v1/params`           | POST   | `{"assignment":{..}}` → new current assignment     |
//! | `/v1/optimize`         | POST   | `{"iters":N}` → 202, or 409 while one is running  |
//! | `/v1/progress`         | GET    | trials done, budget, best so far                   |
//! | `/v1/image/best`       | GET    | PNG                                                |
//! | `/v1/image/reference`  | GET    | PNG                                                |
//!
//! `/v1/render` replies with the distance in `x-style-distance`. It merges the
//! posted overrides onto the best assignment and never changes state.

use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::params::{Assignment, ParamSpace, Violation};
use crate::session::{
    build_result, merged_assignment, open_transcriber, spec_from_result, Progress, SessionError, SessionSpec,
    TranscriptionResult, Transcriber, ARTIFACT_VERSION, BEST_IMAGE_FILE,
};
use crate::transforms::load_image;

pub const VERSION_HEADER: &str = "x-partran-version";
pub const METRIC_HEADER: &str = "x-metric-id";
pub const DISTANCE_HEADER: &str = "x-style-distance";

#[derive(Debug, Clone, Default, Serialize)]
struct OptimizeStatus {
    running: bool,
    #[serde(flatten)]
    progress: Progress,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Debug)]
struct Snapshot {
    result: Option<TranscriptionResult>,
    best_png: Option<Vec<u8>>,
}

struct Shared {
    spec: SessionSpec,
    metric_id: String,
    // rendering and baseline scoring; the optimizer opens its own engine
    renderer: Mutex<Transcriber>,
    reference_png: Vec<u8>,
    identity: Assignment,
    current: RwLock<Assignment>,
    snapshot: RwLock<Snapshot>,
    status: Mutex<OptimizeStatus>,
}

/// Handle to the service state; cheap to clone.
#[derive(Clone)]
pub struct ServiceState(Arc<Shared>);

impl ServiceState {
    /// A service over a fresh session, with no result yet.
    pub fn from_spec(spec: SessionSpec) -> Result<Self, SessionError> {
        Self::build(spec, None, None)
    }

    /// A service over a finished session directory.
    pub fn from_result_dir(dir: &Path) -> Result<Self, SessionError> {
        let (result, dir) = TranscriptionResult::load(dir)?;
        let spec = spec_from_result(&result, &dir)?;
        let best_path = dir.join(&result.best_image);
        let best_png = std::fs::read(&best_path)
            .map_err(|e| SessionError::Input(format!("{}: {e}", best_path.display())))?;
        Self::build(spec, Some(result), Some(best_png))
    }

    fn build(
        spec: SessionSpec,
        result: Option<TranscriptionResult>,
        best_png: Option<Vec<u8>>,
    ) -> Result<Self, SessionError> {
        let renderer = open_transcriber(&spec)?;
        let identity = renderer.space().identity_assignment()?;
        if let Some(r) = &result {
            if r.space != *renderer.space() {
                return Err(SessionError::Input(
                    "the result's parameter space differs from the engine's".into(),
                ));
            }
        }
        let reference_png = load_image(&spec.reference)?.to_png();
        let current = result.as_ref().map_or_else(|| identity.clone(), |r| r.best_assignment.clone());
        Ok(ServiceState(Arc::new(Shared {
            metric_id: renderer.metric().id().to_string(),
            spec,
            renderer: Mutex::new(renderer),
            reference_png,
            identity,
            current: RwLock::new(current),
            snapshot: RwLock::new(Snapshot { result, best_png }),
            status: Mutex::new(OptimizeStatus::default()),
        })))
    }

    pub fn metric_id(&self) -> &str {
        &self.0.metric_id
    }

    pub fn space(&self) -> ParamSpace {
        self.0.renderer.lock().unwrap().space().clone()
    }

    fn base_assignment(&self) -> Assignment {
        let snap = self.0.snapshot.read().unwrap();
        snap.result
            .as_ref()
            .map_or_else(|| self.0.identity.clone(), |r| r.best_assignment.clone())
    }
}

/// An error reply: status, category, message, and any violations.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    category: String,
    message: String,
    violations: Vec<Violation>,
}

impl ApiError {
    fn new(status: StatusCode, category: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            category: category.into(),
            message: message.into(),
            violations: Vec::new(),
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let category = e.category();
        let status = match (&e, e.exit_code()) {
            (SessionError::Invalid(_), _) => StatusCode::UNPROCESSABLE_ENTITY,
            (_, 2 | 3) => StatusCode::BAD_REQUEST,
            (_, 4) => StatusCode::BAD_GATEWAY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let violations = match &e {
            SessionError::Invalid(v) => v.clone(),
            _ => Vec::new(),
        };
        ApiError {
            status,
            category: category.into(),
            message: e.to_string(),
            violations,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.category, "message": self.message });
        if !self.violations.is_empty() {
            body["violations"] = json!(self.violations);
        }
        (self.status, Json(body)).into_response()
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, SessionError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn get_state(State(s): State<ServiceState>) -> Result<Json<serde_json::Value>, ApiError> {
    let current = s.0.current.read().unwrap().clone();
    let (best_assignment, best_objective, selected) = {
        let snap = s.0.snapshot.read().unwrap();
        match &snap.result {
            Some(r) => (
                Some(r.best_assignment.clone()),
                Some(r.best_objective),
                r.selected_candidate.clone(),
            ),
            None => (None, None, None),
        }
    };
    let s2 = s.clone();
    let a = current.clone();
    let (space, current_objective) = blocking(move || {
        let mut t = s2.0.renderer.lock().unwrap();
        let (_, v) = t.evaluate(&a)?;
        Ok((t.space().clone(), v))
    })
    .await?;
    Ok(Json(json!({
        "artifact_version": ARTIFACT_VERSION,
        "metric_id": s.0.metric_id,
        "space": space,
        "identity": s.0.identity,
        "current": current,
        "current_objective": current_objective,
        "best_assignment": best_assignment,
        "best_objective": best_objective,
        "selected_candidate": selected,
    })))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RenderBody {
    #[serde(default)]
    assignment: Assignment,
    #[serde(default)]
    disable: Vec<String>,
}

async fn render(State(s): State<ServiceState>, body: Option<Json<RenderBody>>) -> Result<Response, ApiError> {
    let body = body.map(|Json(b)| b).unwrap_or_default();
    let base = s.base_assignment();
    let (bytes, v) = blocking(move || {
        let mut t = s.0.renderer.lock().unwrap();
        let a = merged_assignment(t.space(), &base, &body.assignment, &body.disable)?;
        let (y, v) = t.evaluate(&a)?;
        Ok((y.to_png(), v))
    })
    .await?;
    let mut resp = png(bytes);
    resp.headers_mut().insert(
        DISTANCE_HEADER,
        HeaderValue::from_str(&format!("{v:?}")).expect("ascii"),
    );
    Ok(resp)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsBody {
    assignment: Assignment,
}

async fn params(State(s): State<ServiceState>, Json(body): Json<ParamsBody>) -> Result<Json<serde_json::Value>, ApiError> {
    let space = s.space();
    let mut current = s.0.current.write().unwrap();
    let merged = merged_assignment(&space, &current, &body.assignment, &[])?;
    *current = merged.clone();
    Ok(Json(json!({ "current": merged })))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizeBody {
    iters: usize,
    #[serde(default)]
    seed: Option<u64>,
}

async fn optimize(State(s): State<ServiceState>, Json(body): Json<OptimizeBody>) -> Result<Response, ApiError> {
    let mut spec = s.0.spec.clone();
    spec.study.budget = body.iters;
    if let Some(seed) = body.seed {
        spec.study.seed = seed;
    }
    spec.study.validate().map_err(SessionError::from)?;
    {
        let mut status = s.0.status.lock().unwrap();
        if status.running {
            return Err(ApiError::new(StatusCode::CONFLICT, "busy", "an optimization is already running"));
        }
        *status = OptimizeStatus {
            running: true,
            progress: Progress {
                trials_done: 0,
                budget: body.iters,
                best_objective: None,
            },
            error: None,
        };
    }
    let s2 = s.clone();
    tokio::task::spawn_blocking(move || {
        let outcome = open_transcriber(&spec).and_then(|mut t| {
            let run = t.run(&spec.study, |_, p| s2.0.status.lock().unwrap().progress = *p)?;
            Ok((build_result(&spec, &t, &run), run.best_image.to_png()))
        });
        let error = match outcome {
            Ok((result, best_png)) => {
                *s2.0.current.write().unwrap() = result.best_assignment.clone();
                *s2.0.snapshot.write().unwrap() = Snapshot {
                    result: Some(result),
                    best_png: Some(best_png),
                };
                None
            }
            Err(e) => Some(format!("error[{}]: {e}", e.category())),
        };
        let mut status = s2.0.status.lock().unwrap();
        status.running = false;
        status.error = error;
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "budget": body.iters, "seed": s.0.spec.study.seed }))).into_response())
}

async fn progress(State(s): State<ServiceState>) -> Json<serde_json::Value> {
    Json(json!(*s.0.status.lock().unwrap()))
}

async fn image_best(State(s): State<ServiceState>) -> Result<Response, ApiError> {
    let snap = s.0.snapshot.read().unwrap();
    match &snap.best_png {
        Some(b) => Ok(png(b.clone())),
        None => Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "no-result",
            format!("no {BEST_IMAGE_FILE} yet; run an optimization first"),
        )),
    }
}

async fn image_reference(State(s): State<ServiceState>) -> Response {
    png(s.0.reference_png.clone())
}

async fn stamp(State(s): State<ServiceState>, req: Request, next: Next) -> Response {
    let mut resp = next.run(req).await;
    let h = resp.headers_mut();
    h.insert(VERSION_HEADER, HeaderValue::from_static(ARTIFACT_VERSION));
    if let Ok(v) = HeaderValue::from_str(&s.0.metric_id) {
        h.insert(METRIC_HEADER, v);
    }
    resp
}

pub fn router(state: ServiceState) -> Router {
    Router::new()
        .route("/v1/state", get(get_state))
        .route("/v1/render", post(render))
        .route("/v1/params", post(params))
        .route("/v1/optimize", post(optimize))
        .route("/v1/progress", get(progress))
        .route("/v1/image/best", get(image_best))
        .route("/v1/image/reference", get(image_reference))
        .layer(middleware::from_fn_with_state(state.clone(), stamp))
        .with_state(state)
}

/// Serves until the process is stopped. Binds loopback unless `addr` says
/// otherwise.
pub async fn serve(state: ServiceState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

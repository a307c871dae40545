use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::response::Response;
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value as Json};
use tower::ServiceExt;

use partran::fixtures::{planted_assignment, scene};
use partran::metric::BUILTIN_METRIC_ID;
use partran::optimizer::StudyConfig;
use partran::service::{router, ServiceState, DISTANCE_HEADER, METRIC_HEADER, VERSION_HEADER};
use partran::session::{transcribe, InputSpec, SessionSpec, TranscriptionResult, BEST_IMAGE_FILE};
use partran::transforms::{apply_chain, builtin_space, load_image, save_image};

struct Served {
    dir: tempfile::TempDir,
    app: Router,
}

fn session(budget: usize) -> (tempfile::TempDir, SessionSpec) {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.png");
    let r = dir.path().join("r.png");
    save_image(&scene(21, 32, 32), &x).unwrap();
    save_image(&apply_chain(&scene(22, 32, 32), &planted_assignment(22)).unwrap(), &r).unwrap();
    let mut spec = SessionSpec::builtin(InputSpec::Single(x), r, dir.path().join("run"));
    spec.study = StudyConfig {
        budget,
        seed: 3,
        ..StudyConfig::default()
    };
    (dir, spec)
}

fn served_result() -> Served {
    let (dir, spec) = session(30);
    transcribe(&spec).unwrap();
    let state = ServiceState::from_result_dir(&dir.path().join("run")).unwrap();
    Served { dir, app: router(state) }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Json>) -> Response {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    app.clone().oneshot(req).await.unwrap()
}

async fn bytes(resp: Response) -> Vec<u8> {
    resp.into_body().collect().await.unwrap().to_bytes().to_vec()
}

async fn json_of(resp: Response) -> Json {
    serde_json::from_slice(&bytes(resp).await).unwrap()
}

fn result_of(s: &Served) -> TranscriptionResult {
    TranscriptionResult::load(&s.dir.path().join("run")).unwrap().0
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn state_reports_space_and_best() {
    let s = served_result();
    let result = result_of(&s);
    let resp = call(&s.app, "GET", "/v1/state", None).await;
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()[METRIC_HEADER], BUILTIN_METRIC_ID);
    assert_eq!(resp.headers()[VERSION_HEADER], env!("CARGO_PKG_VERSION"));
    let body = json_of(resp).await;
    assert_eq!(body["space"], json!(builtin_space()));
    assert_eq!(body["best_assignment"], json!(result.best_assignment));
    assert_eq!(body["current"], json!(result.best_assignment));
    assert_eq!(body["best_objective"].as_f64(), Some(result.best_objective));
    assert_eq!(body["current_objective"].as_f64(), Some(result.best_objective));
    assert_eq!(body["metric_id"], BUILTIN_METRIC_ID);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn render_is_pure_and_reproduces_best() {
    let s = served_result();
    let result = result_of(&s);
    let best_png = std::fs::read(s.dir.path().join("run").join(BEST_IMAGE_FILE)).unwrap();

    let r1 = call(&s.app, "POST", "/v1/render", Some(json!({}))).await;
    assert_eq!(r1.status(), StatusCode::OK);
    assert_eq!(r1.headers()["content-type"], "image/png");
    let d: f64 = r1.headers()[DISTANCE_HEADER].to_str().unwrap().parse().unwrap();
    assert_eq!(d, result.best_objective);
    assert_eq!(bytes(r1).await, best_png);

    let edit = json!({ "assignment": { "brightness": 0.3 } });
    let a = bytes(call(&s.app, "POST", "/v1/render", Some(edit.clone())).await).await;
    let b = bytes(call(&s.app, "POST", "/v1/render", Some(edit)).await).await;
    assert_eq!(a, b);
    assert_ne!(a, best_png);

    // rendering did not move the current assignment
    let state = json_of(call(&s.app, "GET", "/v1/state", None).await).await;
    assert_eq!(state["current"], json!(result.best_assignment));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn identity_render_is_the_input() {
    let s = served_result();
    let identity = builtin_space().identity_assignment().unwrap();
    let resp = call(&s.app, "POST", "/v1/render", Some(json!({ "assignment": identity }))).await;
    let input = load_image(&s.dir.path().join("x.png")).unwrap();
    assert_eq!(bytes(resp).await, input.to_png());

    let all: Vec<String> = builtin_space().specs().iter().map(|p| p.name.clone()).collect();
    let resp = call(&s.app, "POST", "/v1/render", Some(json!({ "disable": all }))).await;
    assert_eq!(bytes(resp).await, input.to_png());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn params_are_validated_by_the_shared_validator() {
    let s = served_result();
    let result = result_of(&s);
    let resp = call(&s.app, "POST", "/v1/params", Some(json!({ "assignment": { "contrast": 0.25 } }))).await;
    assert_eq!(resp.status(), StatusCode::OK);
    let body = json_of(resp).await;
    assert_eq!(body["current"]["contrast"], 0.25);

    let bad = json!({ "assignment": { "contrast": 2.0, "filter": "sepia-ish" } });
    let resp = call(&s.app, "POST", "/v1/params", Some(bad)).await;
    assert_eq!(resp.status(), StatusCode::UNPROCESSABLE_ENTITY);
    assert!(resp.headers().contains_key(VERSION_HEADER));
    let body = json_of(resp).await;
    let mut merged = result.best_assignment.clone();
    merged.set("contrast", partran::params::Value::Real(2.0));
    merged.set("filter", partran::params::Value::Choice("sepia-ish".into()));
    assert_eq!(body["violations"], json!(builtin_space().validate(&merged)));
    assert_eq!(body["error"], "invalid-assignment");

    let resp = call(&s.app, "POST", "/v1/params", Some(json!({ "assignment": { "nope": 1 } }))).await;
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);

    // the rejected edits left the accepted one in place
    let state = json_of(call(&s.app, "GET", "/v1/state", None).await).await;
    assert_eq!(state["current"]["contrast"], 0.25);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn optimize_runs_in_the_background() {
    let (dir, spec) = session(10);
    let app = router(ServiceState::from_spec(spec).unwrap());
    assert_eq!(call(&app, "GET", "/v1/image/best", None).await.status(), StatusCode::NOT_FOUND);
    let reference = bytes(call(&app, "GET", "/v1/image/reference", None).await).await;
    assert_eq!(reference, load_image(&dir.path().join("r.png")).unwrap().to_png());

    let resp = call(&app, "POST", "/v1/optimize", Some(json!({ "iters": 10 }))).await;
    assert_eq!(resp.status(), StatusCode::ACCEPTED);
    let mut last_done = 0;
    let progress = loop {
        let p = json_of(call(&app, "GET", "/v1/progress", None).await).await;
        let done = p["trials_done"].as_u64().unwrap();
        assert!(done >= last_done, "progress went backwards");
        last_done = done;
        if !p["running"].as_bool().unwrap() {
            break p;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    };
    assert_eq!(progress["trials_done"], 10);
    assert_eq!(progress["budget"], 10);
    assert!(progress.get("error").is_none(), "{progress}");

    let state = json_of(call(&app, "GET", "/v1/state", None).await).await;
    assert_eq!(state["best_objective"], progress["best_objective"]);
    assert_eq!(call(&app, "GET", "/v1/image/best", None).await.status(), StatusCode::OK);
    // nothing was written to disk
    assert!(!dir.path().join("run").exists());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn second_optimize_conflicts() {
    let (_dir, spec) = session(10);
    let app = router(ServiceState::from_spec(spec).unwrap());
    assert_eq!(
        call(&app, "POST", "/v1/optimize", Some(json!({ "iters": 400 }))).await.status(),
        StatusCode::ACCEPTED
    );
    assert_eq!(
        call(&app, "POST", "/v1/optimize", Some(json!({ "iters": 5 }))).await.status(),
        StatusCode::CONFLICT
    );
    assert_eq!(
        call(&app, "POST", "/v1/optimize", Some(json!({ "iters": 0 }))).await.status(),
        StatusCode::BAD_REQUEST
    );
    while json_of(call(&app, "GET", "/v1/progress", None).await).await["running"] == true {
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
}

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tlps_gateway::{router, AppState};
use tower::ServiceExt;

fn grid() -> Value {
    json!({
        "rows": ["..g", ".x.", "..."],
        "legend": {"g": "goal", "x": "pit"},
        "walls_char": "#",
        "agents": [{"start": [0, 1]}],
        "hazards": ["pit"],
    })
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map_or(Body::empty(), |b| Body::from(b.to_string()))).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

async fn create(app: &Router, formula: &str) -> (StatusCode, Value) {
    call(app, "POST", "/sessions", Some(json!({"grid": grid(), "formula": formula}))).await
}

#[tokio::test]
async fn create_returns_snapshot() {
    let app = router(AppState::default());
    let (status, snap) = create(&app, "F[0,4] goal & G r_safe").await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(snap["v0"], 1);
    assert_eq!(snap["value"], 1);
    assert_eq!(snap["state"], 3);
    assert_eq!(snap["positions"], json!([[0, 1]]));
    assert_eq!(snap["guarantee_applicable"], true);
    assert_eq!(snap["q_values"].as_array().unwrap().len(), 5);
    assert!(snap["warning"].is_null());
}

#[tokio::test]
async fn unsafe_proposal_is_replaced() {
    let app = router(AppState::default());
    let (_, snap) = create(&app, "F goal & G r_safe").await;
    let id = snap["session_id"].as_str().unwrap();
    assert_eq!(snap["guarantee_applicable"], false);
    let (status, r) = call(&app, "POST", &format!("/sessions/{id}/act"), Some(json!({"action": 1}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(r["verdict"]["intervened"], true);
    assert_eq!(r["verdict"]["q_nominal"], -1);
    assert_eq!(r["verdict"]["q_applied"], 1);
    assert_ne!(r["state"], 4);
    assert_eq!(r["satisfiable"], true);
    assert_eq!(r["failed"], false);

    let (_, r) = call(&app, "POST", &format!("/sessions/{id}/act"), Some(json!({"action": 2}))).await;
    assert_eq!(r["verdict"]["intervened"], false);
    let (status, snap) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(snap["step"], 2);
    assert_eq!(snap["log"].as_array().unwrap().len(), 2);
    assert_eq!(snap["log"][0]["proposed"], 1);
}

#[tokio::test]
async fn parse_errors_carry_offset() {
    let app = router(AppState::default());
    let (status, body) = create(&app, "F (goal &").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["offset"].is_number(), "{body}");
}

#[tokio::test]
async fn fragment_errors_carry_path() {
    let app = router(AppState::default());
    let (status, body) = create(&app, "(F goal) U goal").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["path"].is_string(), "{body}");
    assert!(body["reason"].is_string(), "{body}");
}

#[tokio::test]
async fn bad_inputs_are_rejected() {
    let app = router(AppState::default());
    let (status, _) = create(&app, "F coffee").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (_, snap) = create(&app, "G r_safe").await;
    let id = snap["session_id"].as_str().unwrap();
    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/act"), Some(json!({"action": 9}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn unsatisfiable_start_warns() {
    let app = router(AppState::default());
    let (status, snap) = create(&app, "G goal").await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(snap["v0"], -1);
    assert!(snap["warning"].is_string());
}

#[tokio::test]
async fn unknown_and_deleted_sessions() {
    let app = router(AppState::default());
    let (status, _) = call(&app, "GET", "/sessions/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (_, snap) = create(&app, "G r_safe").await;
    let id = snap["session_id"].as_str().unwrap();
    let (status, _) = call(&app, "DELETE", &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/act"), Some(json!({"action": 0}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

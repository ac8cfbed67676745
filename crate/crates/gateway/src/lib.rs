//! HTTP sessions around the specification filter: a client proposes actions, the
//! gateway applies [`filter_action`] and reports the verdict with Q values for every action.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tlps_core::filter::{filter_action, guarantee_applicable, FilterVerdict};
use tlps_core::formula::{prepare, PrepareError};
use tlps_core::policy::{ExecState, PolicyTree, Variant};
use tlps_core::system::{build_grid, GridSpec};
use tlps_core::Score;
use tower_http::cors::CorsLayer;

#[derive(Clone, Debug, Deserialize)]
pub struct CreateSession {
    pub grid: GridSpec,
    pub formula: String,
    #[serde(default)]
    pub variant: Variant,
    /// Joint state index; defaults to the grid's start cells.
    pub start: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct ActRequest {
    pub action: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub state: usize,
    pub proposed: usize,
    pub verdict: FilterVerdict,
}

#[derive(Clone, Debug, Serialize)]
pub struct Snapshot {
    pub session_id: String,
    pub grid: GridSpec,
    pub formula: String,
    pub solved_formula: String,
    pub variant: Variant,
    pub guarantee_applicable: bool,
    pub v0: Score,
    /// Optimal value of the history so far.
    pub value: Score,
    pub state: usize,
    pub positions: Vec<[usize; 2]>,
    pub step: usize,
    /// Q value of every action at the current history.
    pub q_values: Vec<Score>,
    pub warning: Option<String>,
    pub log: Vec<StepRecord>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ActResponse {
    pub verdict: FilterVerdict,
    pub state: usize,
    pub positions: Vec<[usize; 2]>,
    pub step: usize,
    pub value: Score,
    pub q_values: Vec<Score>,
    /// The history still admits a continuation with non-negative robustness.
    pub satisfiable: bool,
    /// Every action now has negative Q.
    pub failed: bool,
}

struct Session {
    id: String,
    grid: GridSpec,
    formula: String,
    policy: PolicyTree,
    es: ExecState,
    x: usize,
    v0: Score,
    warning: Option<String>,
    log: Vec<StepRecord>,
}

impl Session {
    fn q_values(&self) -> Vec<Score> {
        self.policy.q_all(&self.es, self.x)
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot {
            session_id: self.id.clone(),
            grid: self.grid.clone(),
            formula: self.formula.clone(),
            solved_formula: self.policy.root().formula.to_string(),
            variant: self.policy.variant,
            guarantee_applicable: guarantee_applicable(&self.policy.root().formula),
            v0: self.v0,
            value: self.policy.value(&self.es, self.x),
            state: self.x,
            positions: self.grid.positions(self.x),
            step: self.log.len(),
            q_values: self.q_values(),
            warning: self.warning.clone(),
            log: self.log.clone(),
        }
    }

    fn act(&mut self, a: usize) -> ActResponse {
        let (verdict, es) = filter_action(&self.policy, &self.es, self.x, a);
        self.log.push(StepRecord { step: self.log.len(), state: self.x, proposed: a, verdict: verdict.clone() });
        self.x = self.policy.ts().next(self.x, verdict.applied);
        self.es = es;
        let q_values = self.q_values();
        let value = self.policy.value(&self.es, self.x);
        ActResponse {
            verdict,
            state: self.x,
            positions: self.grid.positions(self.x),
            step: self.log.len(),
            value,
            failed: q_values.iter().all(|q| *q < Score::Fin(0)),
            q_values,
            satisfiable: value >= Score::Fin(0),
        }
    }
}

type Shared = Arc<tokio::sync::Mutex<Session>>;

#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<Mutex<HashMap<String, Shared>>>,
}

#[derive(Debug)]
pub enum ApiError {
    BadRequest(serde_json::Value),
    NotFound,
    Conflict,
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (code, body) = match self {
            ApiError::BadRequest(v) => (StatusCode::BAD_REQUEST, v),
            ApiError::NotFound => (StatusCode::NOT_FOUND, serde_json::json!({"error": "unknown session"})),
            ApiError::Conflict => {
                (StatusCode::CONFLICT, serde_json::json!({"error": "another request is in progress for this session"}))
            }
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, serde_json::json!({"error": m})),
        };
        (code, Json(body)).into_response()
    }
}

fn bad(msg: impl ToString) -> ApiError {
    ApiError::BadRequest(serde_json::json!({ "error": msg.to_string() }))
}

fn build_session(req: CreateSession) -> Result<Session, ApiError> {
    let ts = Arc::new(build_grid(&req.grid).map_err(bad)?);
    let f = prepare(&req.formula).map_err(|e| match e {
        PrepareError::Parse(p) => ApiError::BadRequest(serde_json::json!({
            "error": p.to_string(), "offset": p.offset,
        })),
        PrepareError::NotInS(n) => ApiError::BadRequest(serde_json::json!({
            "error": n.to_string(), "path": n.path.to_string(), "reason": n.reason,
        })),
    })?;
    let missing = ts.validate_for(&f);
    if !missing.is_empty() {
        return Err(bad(missing.join("; ")));
    }
    let x0 = req.start.unwrap_or_else(|| req.grid.start_state());
    if x0 >= ts.n {
        return Err(bad(format!("start state {x0} out of range")));
    }
    let policy = PolicyTree::build(ts, &f, req.variant).map_err(bad)?;
    let es = policy.init(x0);
    let v0 = policy.value(&es, x0);
    let warning = (v0 < Score::Fin(0)).then(|| format!("specification not satisfiable from the start (V = {v0})"));
    Ok(Session {
        id: uuid::Uuid::new_v4().to_string(),
        grid: req.grid,
        formula: req.formula,
        policy,
        es,
        x: x0,
        v0,
        warning,
        log: Vec::new(),
    })
}

async fn create(State(st): State<AppState>, Json(req): Json<CreateSession>) -> Result<impl IntoResponse, ApiError> {
    let session = tokio::task::spawn_blocking(move || build_session(req))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    let snap = session.snapshot();
    tracing::info!(id = %snap.session_id, v0 = %snap.v0, "session created");
    st.sessions.lock().unwrap().insert(snap.session_id.clone(), Arc::new(tokio::sync::Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(snap)))
}

fn lookup(st: &AppState, id: &str) -> Result<Shared, ApiError> {
    st.sessions.lock().unwrap().get(id).cloned().ok_or(ApiError::NotFound)
}

async fn act(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<ActRequest>,
) -> Result<Json<ActResponse>, ApiError> {
    let session = lookup(&st, &id)?;
    let mut s = session.try_lock().map_err(|_| ApiError::Conflict)?;
    if req.action >= s.policy.ts().m {
        return Err(bad(format!("action {} out of range", req.action)));
    }
    Ok(Json(s.act(req.action)))
}

async fn show(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<Snapshot>, ApiError> {
    let session = lookup(&st, &id)?;
    let s = session.try_lock().map_err(|_| ApiError::Conflict)?;
    Ok(Json(s.snapshot()))
}

async fn remove(State(st): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    st.sessions.lock().unwrap().remove(&id).map(|_| StatusCode::NO_CONTENT).ok_or(ApiError::NotFound)
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/:id", get(show).delete(remove))
        .route("/sessions/:id/act", post(act))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serves the API on `0.0.0.0:port` until the process stops.
pub async fn serve(port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    tracing::info!(port, "listening");
    axum::serve(listener, router(AppState::default())).await
}

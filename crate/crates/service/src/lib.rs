//! HTTP front end. Every run goes through the same `execute` call as the
//! command line, so a response's `result` equals the CLI's output file.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Semaphore;
use tower_http::cors::CorsLayer;

use torq_core::control::ControllerConfig;
use torq_core::evaluation::Candidate;
use torq_core::rules::Torq;
use torq_core::scenario::{
    canonical_json, execute, parse_json, parse_scenario, sha256_hex, ResultFile, RunDetails, RunMode, Scenario,
};
use torq_core::Error;

#[derive(Clone)]
pub struct AppState {
    pub scenario_dir: PathBuf,
    limiter: Arc<Semaphore>,
}

impl AppState {
    pub fn new(scenario_dir: PathBuf, max_concurrent: usize) -> Self {
        AppState {
            scenario_dir,
            limiter: Arc::new(Semaphore::new(max_concurrent.max(1))),
        }
    }
}

/// A scenario given inline or by the id returned from `POST /scenarios`.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    Stored { id: String },
    Inline(Box<Scenario>),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRequest {
    pub mode: RunMode,
    pub scenario: ScenarioRef,
    pub torq: Torq,
    #[serde(default)]
    pub config: Option<ControllerConfig>,
    #[serde(default)]
    pub candidate: Option<Candidate>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Diagnostics {
    /// Index of the accepted relaxation set (offline runs).
    pub iteration: Option<usize>,
    /// Times at which rejected relaxation sets became infeasible.
    pub infeasible_at_s: Vec<Option<f64>>,
    pub emergency_steps: usize,
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunResponse {
    /// `ok`, or `emergency` when an online run had to brake.
    pub status: &'static str,
    pub diagnostics: Diagnostics,
    pub result: ResultFile,
}

pub struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

pub fn status_of(e: &Error) -> StatusCode {
    match e {
        Error::Validation { .. } | Error::InvalidArgument(_) => StatusCode::BAD_REQUEST,
        Error::NoSolution | Error::Untrackable { .. } => StatusCode::UNPROCESSABLE_ENTITY,
        Error::SolverFailure(_) | Error::Singularity { .. } | Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.0.to_string() });
        if let Error::Validation { pointer, .. } = &self.0 {
            body["pointer"] = Value::String(pointer.clone());
        }
        (status_of(&self.0), Json(body)).into_response()
    }
}

fn under(prefix: &str, e: Error) -> Error {
    match e {
        Error::Validation { pointer, message } => Error::validation(format!("{prefix}{pointer}"), message),
        other => other,
    }
}

fn valid_id(id: &str) -> Result<(), Error> {
    if !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_hexdigit()) {
        Ok(())
    } else {
        Err(Error::validation("/id", "not a scenario id"))
    }
}

fn load_stored(state: &AppState, id: &str) -> Result<Scenario, Error> {
    valid_id(id)?;
    let path = state.scenario_dir.join(format!("{id}.json"));
    match std::fs::read_to_string(&path) {
        Ok(text) => parse_scenario(&text),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::validation("/id", format!("no scenario {id}"))),
        Err(e) => Err(Error::Io(e.to_string())),
    }
}

/// Parses and validates a run request; pointers refer to the request body.
pub fn prepare(state: &AppState, body: &str) -> Result<(RunMode, Scenario, Torq, ControllerConfig, Option<Candidate>), Error> {
    let req: RunRequest = parse_json(body)?;
    let scenario = match req.scenario {
        ScenarioRef::Inline(s) => {
            s.validate().map_err(|e| under("/scenario", e))?;
            *s
        }
        ScenarioRef::Stored { id } => load_stored(state, &id).map_err(|e| under("/scenario", e))?,
    };
    req.torq.validate().map_err(|e| under("/torq", e))?;
    let config = req.config.unwrap_or_default();
    config.validate().map_err(|e| under("/config", e))?;
    if let Some(c) = &req.candidate {
        c.validate().map_err(|e| under("/candidate", e))?;
    }
    if req.mode == RunMode::Evaluate && req.candidate.is_none() {
        return Err(Error::validation("/candidate", "required in evaluate mode"));
    }
    Ok((req.mode, scenario, req.torq, config, req.candidate))
}

fn diagnostics(r: &ResultFile, elapsed_ms: f64) -> Diagnostics {
    let (iteration, infeasible_at_s) = match &r.details {
        RunDetails::Offline {
            iteration, attempts, ..
        } => (
            Some(*iteration),
            attempts.iter().filter(|a| !a.feasible).map(|a| a.infeasible_at_s).collect(),
        ),
        _ => (None, Vec::new()),
    };
    Diagnostics {
        iteration,
        infeasible_at_s,
        emergency_steps: r.emergency_steps(),
        elapsed_ms,
    }
}

async fn run(State(state): State<AppState>, body: String) -> Result<Json<RunResponse>, ApiError> {
    let (mode, scenario, torq, config, candidate) = prepare(&state, &body)?;
    let _permit = state
        .limiter
        .clone()
        .acquire_owned()
        .await
        .map_err(|e| Error::Io(e.to_string()))?;
    let started = Instant::now();
    let result = tokio::task::spawn_blocking(move || execute(mode, &scenario, &torq, &config, candidate.as_ref()))
        .await
        .map_err(|e| Error::Io(format!("worker failed: {e}")))??;
    let elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(Json(RunResponse {
        status: if result.emergency_steps() > 0 { "emergency" } else { "ok" },
        diagnostics: diagnostics(&result, elapsed_ms),
        result,
    }))
}

#[derive(Serialize)]
struct StoredScenario {
    id: String,
    name: String,
}

async fn list_scenarios(State(state): State<AppState>) -> Result<Json<Vec<StoredScenario>>, ApiError> {
    let mut out = Vec::new();
    let entries = match std::fs::read_dir(&state.scenario_dir) {
        Ok(it) => it,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Json(out)),
        Err(e) => return Err(Error::Io(e.to_string()).into()),
    };
    for entry in entries {
        let path = entry.map_err(Error::from)?.path();
        let Some(id) = path
            .file_stem()
            .and_then(|s| s.to_str())
            .filter(|_| path.extension().is_some_and(|x| x == "json"))
        else {
            continue;
        };
        if valid_id(id).is_err() {
            continue;
        }
        if let Ok(s) = load_stored(&state, id) {
            out.push(StoredScenario {
                id: id.to_string(),
                name: s.name,
            });
        }
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(Json(out))
}

async fn store_scenario(State(state): State<AppState>, body: String) -> Result<(StatusCode, Json<Value>), ApiError> {
    let scenario = parse_scenario(&body)?;
    let id = sha256_hex(&scenario)?[..16].to_string();
    std::fs::create_dir_all(&state.scenario_dir).map_err(Error::from)?;
    let mut text = canonical_json(&scenario)?;
    text.push('\n');
    std::fs::write(state.scenario_dir.join(format!("{id}.json")), text).map_err(Error::from)?;
    Ok((StatusCode::CREATED, Json(json!({ "id": id }))))
}

async fn get_scenario(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    match load_stored(&state, &id) {
        Ok(s) => Json(s).into_response(),
        Err(Error::Validation { message, .. }) if message.starts_with("no scenario") => {
            (StatusCode::NOT_FOUND, Json(json!({ "error": message }))).into_response()
        }
        Err(e) => ApiError(e).into_response(),
    }
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION") }))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/run", post(run))
        .route("/scenarios", get(list_scenarios).post(store_scenario))
        .route("/scenarios/{id}", get(get_scenario))
        .route("/health", get(health))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

use std::path::PathBuf;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use torq_service::{router, AppState};

fn fixture(name: &str) -> Value {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name);
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

async fn call(state: &AppState, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(match body {
            Some(b) => Body::from(b.to_string()),
            None => Body::empty(),
        })
        .unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

fn state() -> (tempfile::TempDir, AppState) {
    let dir = tempfile::tempdir().unwrap();
    let st = AppState::new(dir.path().join("scenarios"), 4);
    (dir, st)
}

fn empty_road_request(mode: &str) -> Value {
    json!({
        "mode": mode,
        "scenario": fixture("straight_empty.json"),
        "torq": fixture("torq.json"),
        "config": fixture("config.json"),
    })
}

#[tokio::test]
async fn health_reports_ok() {
    let (_d, st) = state();
    let (status, body) = call(&st, "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
}

#[tokio::test]
async fn malformed_scenario_is_rejected_with_a_pointer() {
    let (_d, st) = state();
    let mut req = empty_road_request("offline");
    req["scenario"]["timing"]["step_s"] = json!(-0.1);
    let (status, body) = call(&st, "POST", "/run", Some(req)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["pointer"].as_str().unwrap().starts_with("/scenario"), "{body}");

    let mut req = empty_road_request("offline");
    req["torq"]["classes"] = json!("not a list");
    let (status, body) = call(&st, "POST", "/run", Some(req)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["pointer"], "/torq/classes");
}

#[tokio::test]
async fn evaluate_without_candidate_is_rejected() {
    let (_d, st) = state();
    let (status, body) = call(&st, "POST", "/run", Some(empty_road_request("evaluate"))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["pointer"], "/candidate");
}

#[tokio::test]
async fn untrackable_candidate_is_unprocessable() {
    let (_d, st) = state();
    let mut req = empty_road_request("evaluate");
    req["candidate"] = json!({ "points": [[0.0, 30.0], [10.0, 30.0], [20.0, 30.0], [30.0, 30.0]] });
    let (status, body) = call(&st, "POST", "/run", Some(req)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
}

#[tokio::test]
async fn offline_run_on_empty_road_is_clean() {
    let (_d, st) = state();
    let (status, body) = call(&st, "POST", "/run", Some(empty_road_request("offline"))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["status"], "ok");
    assert_eq!(body["diagnostics"]["iteration"], 1);
    assert_eq!(body["result"]["details"]["relaxed_rules"], json!([]));
    assert!(body["diagnostics"]["elapsed_ms"].as_f64().unwrap() >= 0.0);
}

#[tokio::test]
async fn stored_scenarios_round_trip() {
    let (_d, st) = state();
    let scenario = fixture("straight_empty.json");
    let (status, created) = call(&st, "POST", "/scenarios", Some(scenario.clone())).await;
    assert_eq!(status, StatusCode::CREATED);
    let id = created["id"].as_str().unwrap().to_string();

    let (status, listed) = call(&st, "GET", "/scenarios", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(listed, json!([{ "id": id, "name": scenario["name"] }]));

    let (status, fetched) = call(&st, "GET", &format!("/scenarios/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    let (_, again) = call(&st, "POST", "/scenarios", Some(fetched)).await;
    assert_eq!(again["id"], id.as_str());

    // a stored scenario can be run by id
    let mut req = empty_road_request("offline");
    req["scenario"] = json!({ "id": id });
    let (status, by_id) = call(&st, "POST", "/run", Some(req)).await;
    assert_eq!(status, StatusCode::OK);
    let (_, inline) = call(&st, "POST", "/run", Some(empty_road_request("offline"))).await;
    assert_eq!(by_id["result"], inline["result"]);

    let (status, _) = call(&st, "GET", "/scenarios/0123456789abcdef", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&st, "GET", "/scenarios/..%2Fsecret", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn invalid_stored_scenario_is_rejected() {
    let (_d, st) = state();
    let mut scenario = fixture("straight_empty.json");
    scenario["ego"]["lane_id"] = json!("missing");
    let (status, body) = call(&st, "POST", "/scenarios", Some(scenario)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["pointer"].is_string());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_identical_requests_agree() {
    let (_d, st) = state();
    let mut handles = Vec::new();
    for _ in 0..6 {
        let st = st.clone();
        handles.push(tokio::spawn(async move {
            call(&st, "POST", "/run", Some(empty_road_request("online"))).await
        }));
    }
    let mut results = Vec::new();
    for h in handles {
        let (status, body) = h.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        results.push(body["result"].clone());
    }
    assert!(results.windows(2).all(|w| w[0] == w[1]));
}

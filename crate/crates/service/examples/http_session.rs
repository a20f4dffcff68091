//! Drives the tutoring API in-process: lists exercises, opens a session and
//! replays a three-turn dialogue, then reads the learning-gain report.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use qfeedback::corpus::MemoryInteractionStore;
use qfeedback_service::config::AppConfig;
use qfeedback_service::server::{router, AppState, SessionRegistry};
use qfeedback_service::tutor::Tutor;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> anyhow::Result<(StatusCode, Value)> {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or(Body::empty(), |b| Body::from(b.to_string())))?;
    let resp = app.clone().oneshot(req).await?;
    let status = resp.status();
    let bytes = resp.into_body().collect().await?.to_bytes();
    Ok((status, serde_json::from_slice(&bytes)?))
}

fn text(v: &Value) -> &str {
    v.as_str().unwrap_or_default()
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let mut config = AppConfig::default();
    config.data.exercises = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/exercises.jsonl");
    let tutor = Tutor::with_store(&config, Arc::new(MemoryInteractionStore::new()))?;
    let app = router(AppState { tutor: Arc::new(tutor), sessions: Arc::new(SessionRegistry::in_memory()) });

    let (_, exercises) = call(&app, "GET", "/exercises", None).await?;
    println!("{} exercises", exercises.as_array().map_or(0, Vec::len));

    let (status, session) =
        call(&app, "POST", "/sessions", Some(json!({"exercise_id": "treatment-homogeneity"}))).await?;
    let id = session["session_id"].as_str().unwrap_or_default().to_string();
    println!("POST /sessions -> {status}\ntutor> {}", text(&session["transcript"][0]["text"]));

    for msg in ["Treatment A", "Less", "Treatment A, because it is less homogeneous than treatment B"] {
        let (_, reply) = call(&app, "POST", &format!("/sessions/{id}/messages"), Some(json!({ "text": msg }))).await?;
        println!("student> {msg}\ntutor> {}   [{}]", text(&reply["reply"]), text(&reply["phase"]));
    }

    let (_, report) = call(&app, "GET", "/reports/learning-gain", None).await?;
    println!("learning gain: {}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

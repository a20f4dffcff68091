use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use qfeedback::corpus::{InteractionStore, MemoryInteractionStore};
use qfeedback_service::config::AppConfig;
use qfeedback_service::server::{router, AppState, SessionRegistry};
use qfeedback_service::tutor::Tutor;
use serde_json::{json, Value};
use tower::ServiceExt;

const EXERCISE: &str = "treatment-homogeneity";

fn repo(path: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(path)
}

fn config() -> AppConfig {
    let mut c = AppConfig::default();
    c.data.exercises = repo("data/exercises.jsonl");
    c
}

fn app_with(config: &AppConfig, sessions: SessionRegistry) -> (Router, Arc<MemoryInteractionStore>) {
    let store = Arc::new(MemoryInteractionStore::new());
    let tutor = Tutor::with_store(config, store.clone()).unwrap();
    let app = router(AppState { tutor: Arc::new(tutor), sessions: Arc::new(sessions) });
    (app, store)
}

fn app() -> (Router, Arc<MemoryInteractionStore>) {
    app_with(&config(), SessionRegistry::in_memory())
}

async fn send(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or(Body::empty(), Body::from))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    send(app, method, uri, body.map(|b| b.to_string())).await
}

async fn open(app: &Router) -> String {
    let (status, session) = call(app, "POST", "/sessions", Some(json!({ "exercise_id": EXERCISE }))).await;
    assert_eq!(status, StatusCode::CREATED);
    session["session_id"].as_str().unwrap().to_string()
}

async fn say(app: &Router, id: &str, text: &str) -> (StatusCode, Value) {
    call(app, "POST", &format!("/sessions/{id}/messages"), Some(json!({ "text": text }))).await
}

struct Schema(Value);

impl Schema {
    fn load() -> Self {
        Schema(serde_json::from_str(&std::fs::read_to_string(repo("docs/api-schema.json")).unwrap()).unwrap())
    }

    fn check(&self, def: &str, instance: &Value) {
        let schema = json!({ "$ref": format!("#/$defs/{def}"), "$defs": self.0["$defs"] });
        let validator = jsonschema::validator_for(&schema).unwrap();
        let errors: Vec<String> = validator.iter_errors(instance).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{def} violates the schema: {errors:?}\n{instance:#}");
    }
}

#[tokio::test]
async fn lists_exercises() {
    let (app, _) = app();
    let (status, body) = call(&app, "GET", "/exercises", None).await;
    assert_eq!(status, StatusCode::OK);
    let list = body.as_array().unwrap();
    assert_eq!(list.len(), 20);
    assert!(list.iter().any(|e| e["id"] == EXERCISE));
    let schema = Schema::load();
    for e in list {
        schema.check("ExerciseSummary", e);
    }
}

#[tokio::test]
async fn replays_the_worked_dialogue() {
    let (app, store) = app();
    let schema = Schema::load();
    let id = open(&app).await;
    let (_, session) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    schema.check("SessionResource", &session);
    assert_eq!(session["state"]["phase"], "awaiting_answer");

    let (status, r1) = say(&app, &id, "Treatment A").await;
    assert_eq!(status, StatusCode::OK);
    schema.check("MessageReply", &r1);
    assert_eq!(
        r1["reply"],
        "\"Treatment A\" is correct! Try supplying a reason for it. Do we prefer less or more homogeneous results?"
    );
    assert_eq!(r1["phase"], "awaiting_subanswer");
    assert_eq!(r1["verdict"], false);
    assert_eq!(r1["feedback"]["category"], "missing_cause_correct_effect");

    let (_, r2) = say(&app, &id, "Less").await;
    assert_eq!(r2["reply"], "Ok, now try to answer the original exercise.");
    assert_eq!(r2["phase"], "awaiting_retry");
    assert_eq!(r2["verdict"], Value::Null);

    let (_, r3) = say(&app, &id, "Treatment A, because it is less homogeneous than treatment B").await;
    assert_eq!(r3["reply"], "That's correct!");
    assert_eq!(r3["phase"], "done");
    assert_eq!(r3["verdict"], true);
    assert_eq!(r3["attempt_count"], 2);

    let (status, err) = say(&app, &id, "one more").await;
    assert_eq!(status, StatusCode::CONFLICT);
    schema.check("ErrorBody", &err);

    let (_, session) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    schema.check("SessionResource", &session);
    assert_eq!(session["transcript"].as_array().unwrap().len(), 7);

    // the sub-answer is not an evaluated attempt
    let records = store.records().unwrap();
    let verdicts: Vec<bool> = records.iter().map(|r| r.checker_verdict).collect();
    assert_eq!(verdicts, [false, true]);

    let (status, report) = call(&app, "GET", "/reports/learning-gain?model=question_based", None).await;
    assert_eq!(status, StatusCode::OK);
    schema.check("LearningGainReport", &report[0]);
    assert_eq!(report[0]["gain_all_attempts"], 100.0);
    assert_eq!(report[0]["n"], 1);
}

#[tokio::test]
async fn mcq_choice_finishes_the_session() {
    let mut c = config();
    // the wrong effect shares most tokens with the reference; keep the checker strict
    c.feedback.tau_checker = 0.95;
    let (app, _) = app_with(&c, SessionRegistry::in_memory());
    let id = open(&app).await;
    let (_, r1) = say(&app, &id, "Treatment B, because results with higher variance are less homogeneous").await;
    Schema::load().check("MessageReply", &r1);
    assert_eq!(r1["phase"], "awaiting_mcq");
    assert_eq!(r1["feedback"]["mcq_options"], json!(["Yes, I agree", "No, I disagree"]));

    let (_, r2) = say(&app, &id, "maybe").await;
    assert_eq!(r2["phase"], "awaiting_mcq");
    let path = format!("/sessions/{id}/messages");
    let (_, r3) = call(&app, "POST", &path, Some(json!({ "mcq_choice": "Yes, I agree" }))).await;
    assert_eq!(r3["phase"], "done");
    assert_eq!(r3["reply"], "That's correct!");
}

#[tokio::test]
async fn rejects_bad_requests() {
    let (app, _) = app();
    let (status, _) = call(&app, "POST", "/sessions", Some(json!({ "exercise_id": "nope" }))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "GET", "/sessions/missing", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = say(&app, "missing", "hi").await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, _) = send(&app, "POST", "/sessions", Some("{not json".into())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, "POST", "/sessions", Some(json!({ "exercise": EXERCISE }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let id = open(&app).await;
    let path = format!("/sessions/{id}/messages");
    for body in [json!({}), json!({ "text": "a", "mcq_choice": "b" }), json!({ "txt": "a" })] {
        let (status, err) = call(&app, "POST", &path, Some(body.clone())).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
        assert!(err["error"].is_string());
    }
    let (status, _) = say(&app, &id, "   ").await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (_, session) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(session["state"]["attempt_count"], 0);

    let (status, _) = call(&app, "GET", "/reports/learning-gain?model=telepathic", None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, body) = call(&app, "GET", "/reports/learning-gain?model=minimal", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!([]));
}

#[tokio::test]
async fn persistent_sessions_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let c = config();
    let (app, _) = app_with(&c, SessionRegistry::persistent(dir.path()).unwrap());
    let id = open(&app).await;
    say(&app, &id, "Treatment A").await;

    let (restarted, _) = app_with(&c, SessionRegistry::persistent(dir.path()).unwrap());
    let (status, session) = call(&restarted, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(session["state"]["phase"], "awaiting_subanswer");
    let (_, reply) = say(&restarted, &id, "Less").await;
    assert_eq!(reply["phase"], "awaiting_retry");
}

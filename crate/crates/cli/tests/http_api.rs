use std::path::Path;
use std::sync::Arc;

use adversa_cli::http::router;
use adversa_core::adversary::{adversary_input_dim, QNetDims};
use adversa_core::gateway::{
    read_episodes, save_adversary, save_learner, AdversaryMeta, SessionConfig, SessionManager,
};
use adversa_core::learner::LearnerDims;
use adversa_core::tasks::FEATURE_DIM;
use adversa_core::{DqnConfig, LearnerConfig, LearnerParams, Objective, QNetParams, Rng, TaskKind, TaskSpec};
use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn write_checkpoints(dir: &Path) {
    let task = TaskSpec::default_for(TaskKind::Bandit);
    let learner =
        LearnerParams::init(LearnerDims { input_dim: FEATURE_DIM, hidden_dim: 4, action_dim: 2 }, &mut Rng::new(3));
    let digest = save_learner(&dir.join("learner.json"), &learner, &task, &LearnerConfig::default(), None).unwrap();
    let qnet = QNetParams::init(
        QNetDims { input_dim: adversary_input_dim(&task, 4), hidden: vec![8], actions: 4 },
        &mut Rng::new(4),
    );
    let meta = AdversaryMeta {
        task,
        objective: Objective::Target,
        training: DqnConfig::default(),
        learner_digest: digest,
        curve: vec![],
    };
    save_adversary(&dir.join("adversary.json"), &qnet, &meta).unwrap();
}

fn app(dir: &Path) -> Router {
    write_checkpoints(dir);
    router(Arc::new(SessionManager::new(SessionConfig {
        checkpoint_dir: Some(dir.to_path_buf()),
        default_learner: Some(dir.join("learner.json")),
        default_adversary: Some(dir.join("adversary.json")),
        log_dir: Some(dir.join("logs")),
        allow_mismatch: false,
    })))
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn call_json(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, body).await;
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

#[tokio::test]
async fn health() {
    let dir = tempfile::tempdir().unwrap();
    let (status, body) = call(&app(dir.path()), Method::GET, "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, b"ok");
}

#[tokio::test]
async fn full_bandit_session_with_trained_adversary() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, created) =
        call_json(&app, Method::POST, "/sessions", Some(json!({"task": "bandit", "seed": 9}))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(created["trial"], 1);
    assert_eq!(created["context"]["choices"], json!(["X", "Y"]));
    let id = created["id"].as_str().unwrap().to_string();

    let mut last = Value::Null;
    for t in 1..=100 {
        let (status, resp) = call_json(
            &app,
            Method::POST,
            &format!("/sessions/{id}/action"),
            Some(json!({"action": t % 2, "trial": t})),
        )
        .await;
        assert_eq!(status, StatusCode::OK, "trial {t}: {resp}");
        assert_eq!(resp["trial"], t);
        assert_eq!(resp["done"], t == 100);
        last = resp;
    }
    assert_eq!(last["summary"]["task"], "bandit");

    let (status, _) =
        call_json(&app, Method::POST, &format!("/sessions/{id}/action"), Some(json!({"action": 0}))).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (status, view) = call_json(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(view["history"].as_array().unwrap().len(), 100);

    let (status, log) = call(&app, Method::GET, &format!("/sessions/{id}/log"), None).await;
    assert_eq!(status, StatusCode::OK);
    let episodes = read_episodes(&log[..]).unwrap();
    assert_eq!(episodes[0].len(), 100);
    let allocated: [usize; 2] = episodes[0].records.iter().fold([0, 0], |mut acc, r| {
        if let adversa_core::AdversaryMove::Allocation(al) = r.adversary {
            acc[0] += al[0] as usize;
            acc[1] += al[1] as usize;
        }
        acc
    });
    assert_eq!(allocated, [25, 25]);
    assert!(dir.path().join("logs").join(format!("{id}.ndjson")).is_file());

    let (status, _) = call(&app, Method::DELETE, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, _) = call(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn trust_session_with_random_trustee() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, created) =
        call_json(&app, Method::POST, "/sessions", Some(json!({"task": "trust", "adversary": "random"}))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(created["context"]["endowment"], 20);
    let id = created["id"].as_str().unwrap().to_string();
    let (status, err) =
        call_json(&app, Method::POST, &format!("/sessions/{id}/action"), Some(json!({"action": 21}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(err["error"].as_str().unwrap().contains("0..=20"));
    for _ in 0..10 {
        let (status, _) =
            call_json(&app, Method::POST, &format!("/sessions/{id}/action"), Some(json!({"action": 10}))).await;
        assert_eq!(status, StatusCode::OK);
    }
    let (_, view) = call_json(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(view["status"], "done");
}

#[tokio::test]
async fn repeated_request_is_idempotent_and_stale_trial_conflicts() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (_, created) = call_json(&app, Method::POST, "/sessions", Some(json!({"task": "bandit"}))).await;
    let uri = format!("/sessions/{}/action", created["id"].as_str().unwrap());
    let (s1, r1) = call_json(&app, Method::POST, &uri, Some(json!({"action": 1, "trial": 1}))).await;
    let (s2, r2) = call_json(&app, Method::POST, &uri, Some(json!({"action": 1, "trial": 1}))).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(r1, r2);
    let (s3, _) = call_json(&app, Method::POST, &uri, Some(json!({"action": 0, "trial": 5}))).await;
    assert_eq!(s3, StatusCode::CONFLICT);
}

#[tokio::test]
async fn bad_requests_map_to_client_errors() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, _) = call_json(&app, Method::POST, "/sessions", Some(json!({"task": "poker"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) =
        call_json(&app, Method::POST, "/sessions", Some(json!({"task": "bandit", "adversary": "../adversary.json"})))
            .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) =
        call_json(&app, Method::POST, "/sessions", Some(json!({"task": "bandit", "adversary": "missing.json"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) =
        call_json(&app, Method::POST, "/sessions", Some(json!({"task": "trust", "adversary": "adversary.json"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call_json(&app, Method::POST, "/sessions/nope/action", Some(json!({"action": 0}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (_, created) = call_json(&app, Method::POST, "/sessions", Some(json!({"task": "bandit"}))).await;
    let uri = format!("/sessions/{}/action", created["id"].as_str().unwrap());
    let (status, _) = call_json(&app, Method::POST, &uri, Some(json!({"action": 2}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call_json(&app, Method::POST, &uri, Some(json!({"choice": 0}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call_json(&app, Method::DELETE, "/sessions/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

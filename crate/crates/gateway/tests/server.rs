use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use futures_util::StreamExt;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::Message;
use tower::ServiceExt;

use mrlfd::sim::TaskName;
use mrlfd::trace::{script_demo, validate, DemoTrace};
use mrlfd_gateway::config::Config;
use mrlfd_gateway::server::{router, AppState};

fn app() -> axum::Router {
    let mut cfg = Config::default();
    cfg.server.tick_ms = 0;
    router(Arc::new(AppState::new(cfg).unwrap()))
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

fn demo(task: TaskName) -> DemoTrace {
    script_demo(task, 0, &Default::default()).unwrap()
}

async fn authored_session(app: &axum::Router, task: TaskName, frames: usize) -> u64 {
    let (code, v) = call(app, "POST", "/sessions", Some(json!({"task": task, "seed": 3}))).await;
    assert_eq!(code, StatusCode::CREATED);
    let id = v["id"].as_u64().unwrap();
    for f in demo(task).frames.iter().take(frames) {
        let (code, _) = call(app, "POST", &format!("/sessions/{id}/frames"), Some(serde_json::to_value(f).unwrap())).await;
        assert_eq!(code, StatusCode::CREATED);
    }
    id
}

#[tokio::test]
async fn authoring_lifecycle_produces_a_valid_trace() {
    let app = app();
    let id = authored_session(&app, TaskName::LeaderFollower, 100).await;
    let (code, v) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(v["mode"], "authoring");
    assert_eq!(v["frames"], 100);

    let (code, v) = call(&app, "POST", &format!("/sessions/{id}/finalize"), None).await;
    assert_eq!(code, StatusCode::OK);
    let trace: DemoTrace = serde_json::from_value(v).unwrap();
    assert_eq!(trace.len(), 100);
    assert!(validate(&trace).is_empty());

    let (_, v) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(v["mode"], "playback");
    let f = &demo(TaskName::LeaderFollower).frames[100];
    let (code, _) = call(&app, "POST", &format!("/sessions/{id}/frames"), Some(serde_json::to_value(f).unwrap())).await;
    assert_eq!(code, StatusCode::CONFLICT);

    let (code, _) = call(&app, "DELETE", &format!("/sessions/{id}"), None).await;
    assert_eq!(code, StatusCode::NO_CONTENT);
    let (code, _) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(code, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn out_of_order_frames_are_rejected() {
    let app = app();
    let id = authored_session(&app, TaskName::IntruderAttack, 3).await;
    let frames = demo(TaskName::IntruderAttack).frames;
    for bad in [&frames[2], &frames[5]] {
        let (code, v) = call(&app, "POST", &format!("/sessions/{id}/frames"), Some(serde_json::to_value(bad).unwrap())).await;
        assert_eq!(code, StatusCode::CONFLICT, "{v}");
    }
    let (_, v) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(v["frames"], 3);
}

#[tokio::test]
async fn invalid_trace_cannot_be_finalized() {
    let app = app();
    let id = authored_session(&app, TaskName::IntruderAttack, 1).await;
    let (code, v) = call(&app, "POST", &format!("/sessions/{id}/finalize"), None).await;
    assert_eq!(code, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(!v["violations"].as_array().unwrap().is_empty());
    let (_, v) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(v["mode"], "authoring");
}

#[tokio::test]
async fn wrong_mode_and_unknown_session_errors() {
    let app = app();
    let id = authored_session(&app, TaskName::LeaderFollower, 10).await;
    for path in ["execute", "infer", "train", "playback"] {
        let (code, _) = call(&app, "POST", &format!("/sessions/{id}/{path}"), None).await;
        assert_eq!(code, StatusCode::CONFLICT, "{path}");
    }
    let (code, _) = call(&app, "POST", "/sessions/999/finalize", None).await;
    assert_eq!(code, StatusCode::NOT_FOUND);
    let (code, _) = call(&app, "POST", "/sessions", Some(json!({"task": "juggling"}))).await;
    assert_eq!(code, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn training_needs_a_learned_skill_in_the_policy() {
    let app = app();
    let n = demo(TaskName::LeaderFollower).len();
    let id = authored_session(&app, TaskName::LeaderFollower, n).await;
    call(&app, "POST", &format!("/sessions/{id}/finalize"), None).await;
    let (code, policy) = call(&app, "POST", &format!("/sessions/{id}/infer"), None).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(policy["task_name"], "leader_follower");
    let (code, _) = call(&app, "POST", &format!("/sessions/{id}/train"), None).await;
    assert_eq!(code, StatusCode::CONFLICT);
}

#[tokio::test]
async fn execution_of_untrained_learned_skill_conflicts() {
    let app = app();
    let n = demo(TaskName::ObjectTransport).len();
    let id = authored_session(&app, TaskName::ObjectTransport, n).await;
    call(&app, "POST", &format!("/sessions/{id}/finalize"), None).await;
    let (code, _) = call(&app, "POST", &format!("/sessions/{id}/infer"), None).await;
    assert_eq!(code, StatusCode::OK);
    let (code, v) = call(&app, "POST", &format!("/sessions/{id}/execute"), None).await;
    assert_eq!(code, StatusCode::CONFLICT);
    assert!(v["error"].as_str().unwrap().contains("not trained"));
}

async fn next_json<S>(ws: &mut S) -> Option<Value>
where
    S: StreamExt<Item = Result<Message, tokio_tungstenite::tungstenite::Error>> + Unpin,
{
    loop {
        match tokio::time::timeout(Duration::from_secs(60), ws.next()).await.ok()?? {
            Ok(Message::Text(t)) => return Some(serde_json::from_str(&t).unwrap()),
            Ok(Message::Close(_)) | Err(_) => return None,
            Ok(_) => continue,
        }
    }
}

async fn live_server() -> (axum::Router, String) {
    let mut cfg = Config::default();
    cfg.server.tick_ms = 1;
    let app = router(Arc::new(AppState::new(cfg).unwrap()));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let served = app.clone();
    tokio::spawn(async move {
        axum::serve(listener, served).await.unwrap();
    });
    (app, addr.to_string())
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn execution_streams_monotone_snapshots_until_termination() {
    let (app, addr) = live_server().await;
    let n = demo(TaskName::LeaderFollower).len();
    let id = authored_session(&app, TaskName::LeaderFollower, n).await;
    assert_eq!(call(&app, "POST", &format!("/sessions/{id}/finalize"), None).await.0, StatusCode::OK);
    assert_eq!(call(&app, "POST", &format!("/sessions/{id}/infer"), None).await.0, StatusCode::OK);

    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/sessions/{id}/stream")).await.unwrap();
    let hello = next_json(&mut ws).await.unwrap();
    assert_eq!(hello["type"], "hello");
    assert_eq!(call(&app, "POST", &format!("/sessions/{id}/execute"), None).await.0, StatusCode::ACCEPTED);
    assert_eq!(call(&app, "POST", &format!("/sessions/{id}/execute"), None).await.0, StatusCode::CONFLICT);

    let mut times = Vec::new();
    let mut steps = Vec::new();
    let finished = loop {
        let ev = next_json(&mut ws).await.expect("stream ended early");
        match ev["type"].as_str().unwrap() {
            "snapshot" => {
                times.push(ev["time"].as_f64().unwrap());
                steps.push(ev["step"].as_u64().unwrap());
                assert!(ev["world"]["robots"].as_array().is_some());
            }
            "finished" => break ev,
            other => panic!("unexpected event {other}: {ev}"),
        }
    };
    assert_eq!(finished["job"], "execution");
    assert_eq!(finished["result"]["success"], true);
    // one snapshot per simulator step, in order
    assert!(!steps.is_empty());
    assert_eq!(steps, (1..=steps.len() as u64).collect::<Vec<_>>());
    assert!(times.windows(2).all(|w| w[1] > w[0]));
    assert_eq!(finished["result"]["steps_used"].as_u64().unwrap(), steps.len() as u64);

    // a replay continues the same clock, then deletion ends the stream
    assert_eq!(call(&app, "POST", &format!("/sessions/{id}/playback"), None).await.0, StatusCode::ACCEPTED);
    let first = next_json(&mut ws).await.unwrap();
    assert_eq!(first["source"], "playback");
    assert!(first["time"].as_f64().unwrap() > *times.last().unwrap());
    assert_eq!(call(&app, "DELETE", &format!("/sessions/{id}"), None).await.0, StatusCode::NO_CONTENT);
    let mut after_terminated = 0;
    let mut terminated = false;
    while let Some(ev) = next_json(&mut ws).await {
        if terminated {
            after_terminated += 1;
        }
        if ev["type"] == "terminated" {
            terminated = true;
        }
    }
    assert!(terminated);
    assert_eq!(after_terminated, 0);
    let _ = ws.close(None).await;
}

//! Session-oriented HTTP + WebSocket service.
//!
//! A session starts in `authoring`: frames are appended in index order and
//! `finalize` turns them into a validated trace (`playback`). Inference,
//! training, execution and replay then run against that trace; training and
//! execution are background jobs, one per session, whose progress is pushed
//! to every `/stream` subscriber as JSON text messages.

use std::collections::BTreeMap;
use std::ops::ControlFlow;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::broadcast;

use mrlfd::exec::execute_policy;
use mrlfd::inference::{DecisionTree, TaskPolicy};
use mrlfd::learn::{train_skill_observed, ClassifierModel, MetricRow, SacModel, SkillContext};
use mrlfd::sim::{make_scenario, Arena, Scenario, TaskName, WorldState, DEFAULT_DT};
use mrlfd::trace::{validate, DemoTrace, Frame};

use crate::config::Config;
use crate::pipeline::{self, SkillSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Authoring,
    Playback,
    Training,
    Executing,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Snapshot { source: &'static str, time: f64, step: usize, entry: Option<usize>, world: WorldState },
    Metric { row: MetricRow },
    Finished { job: &'static str, result: Value },
    Failed { job: &'static str, error: String },
    Terminated,
}

struct Session {
    mode: Mode,
    scenario: Option<Scenario>,
    frames: Vec<Frame>,
    trace: Option<DemoTrace>,
    policy: Option<TaskPolicy>,
    skill: Option<Arc<SacModel>>,
    /// Background job name while one runs.
    job: Option<&'static str>,
    last_result: Option<Value>,
    events: broadcast::Sender<Event>,
    alive: Arc<AtomicBool>,
    /// Snapshots emitted so far; stamps stream time.
    clock: Arc<AtomicU64>,
}

impl Session {
    fn status(&self, id: u64) -> Value {
        json!({
            "id": id,
            "mode": self.mode,
            "task": self.scenario.as_ref().map(|s| s.task),
            "frames": self.frames.len(),
            "finalized": self.trace.is_some(),
            "has_policy": self.policy.is_some(),
            "has_skill": self.skill.is_some(),
            "job": self.job,
            "last_result": self.last_result,
        })
    }
}

pub struct AppState {
    cfg: Config,
    tree: DecisionTree,
    classifier: Mutex<Option<Arc<ClassifierModel>>>,
    sessions: Mutex<BTreeMap<u64, Arc<Mutex<Session>>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(cfg: Config) -> Result<Self, pipeline::PipelineError> {
        let tree = pipeline::build_tree(&cfg)?;
        Ok(Self {
            cfg,
            tree,
            classifier: Mutex::new(None),
            sessions: Mutex::new(BTreeMap::new()),
            next_id: AtomicU64::new(1),
        })
    }

    /// Preloads the goal classifier instead of training it on first use.
    pub fn with_classifier(self, c: ClassifierModel) -> Self {
        *self.classifier.lock().expect("classifier lock") = Some(Arc::new(c));
        self
    }

    fn session(&self, id: u64) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions.lock().expect("sessions lock").get(&id).cloned().ok_or(ApiError::NotFound(id))
    }

    fn classifier(&self) -> Result<Arc<ClassifierModel>, pipeline::PipelineError> {
        let mut slot = self.classifier.lock().expect("classifier lock");
        if let Some(c) = &*slot {
            return Ok(c.clone());
        }
        let c = Arc::new(pipeline::classifier(&self.cfg, self.cfg.seed)?);
        *slot = Some(c.clone());
        Ok(c)
    }
}

#[derive(Debug)]
pub enum ApiError {
    NotFound(u64),
    Conflict(String),
    BadRequest(String),
    Invalid(Value),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (code, body) = match self {
            ApiError::NotFound(id) => (StatusCode::NOT_FOUND, json!({"error": format!("no session {id}")})),
            ApiError::Conflict(m) => (StatusCode::CONFLICT, json!({"error": m})),
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, json!({"error": m})),
            ApiError::Invalid(v) => (StatusCode::UNPROCESSABLE_ENTITY, json!({"error": "invalid trace", "violations": v})),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, json!({"error": m})),
        };
        (code, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn body<T: for<'de> Deserialize<'de> + Default>(b: &Bytes) -> ApiResult<T> {
    if b.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(b).map_err(|e| ApiError::BadRequest(e.to_string()))
}

fn idle(s: &Session) -> ApiResult<()> {
    match s.job {
        Some(j) => Err(ApiError::Conflict(format!("session is busy with {j}"))),
        None => Ok(()),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(session_status).delete(delete_session))
        .route("/sessions/{id}/scenario", put(set_scenario))
        .route("/sessions/{id}/frames", post(append_frame).get(list_frames))
        .route("/sessions/{id}/finalize", post(finalize))
        .route("/sessions/{id}/infer", post(infer))
        .route("/sessions/{id}/train", post(train))
        .route("/sessions/{id}/execute", post(execute))
        .route("/sessions/{id}/playback", post(playback))
        .route("/sessions/{id}/stream", get(stream))
        .with_state(state)
}

pub async fn serve(cfg: Config) -> std::io::Result<()> {
    let bind = cfg.server.bind.clone();
    let state = AppState::new(cfg).map_err(|e| std::io::Error::other(e.to_string()))?;
    let listener = tokio::net::TcpListener::bind(&bind).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state))).await
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioRequest {
    task: Option<TaskName>,
    seed: Option<u64>,
}

fn scenario_for(state: &AppState, r: &ScenarioRequest) -> ApiResult<Option<Scenario>> {
    let Some(task) = r.task else { return Ok(None) };
    make_scenario(task, r.seed.unwrap_or(state.cfg.seed), &state.cfg.scenario)
        .map(Some)
        .map_err(|e| ApiError::BadRequest(e.to_string()))
}

async fn create_session(State(state): State<Arc<AppState>>, b: Bytes) -> ApiResult<impl IntoResponse> {
    let req: ScenarioRequest = body(&b)?;
    let scenario = scenario_for(&state, &req)?;
    let id = state.next_id.fetch_add(1, Ordering::SeqCst);
    let (events, _) = broadcast::channel(1024);
    let s = Session {
        mode: Mode::Authoring,
        scenario,
        frames: Vec::new(),
        trace: None,
        policy: None,
        skill: None,
        job: None,
        last_result: None,
        events,
        alive: Arc::new(AtomicBool::new(true)),
        clock: Arc::new(AtomicU64::new(0)),
    };
    let status = s.status(id);
    state.sessions.lock().expect("sessions lock").insert(id, Arc::new(Mutex::new(s)));
    Ok((StatusCode::CREATED, Json(status)))
}

async fn list_sessions(State(state): State<Arc<AppState>>) -> Json<Value> {
    let all = state.sessions.lock().expect("sessions lock").clone();
    Json(Value::Array(all.iter().map(|(id, s)| s.lock().expect("session lock").status(*id)).collect()))
}

async fn session_status(State(state): State<Arc<AppState>>, Path(id): Path<u64>) -> ApiResult<Json<Value>> {
    let s = state.session(id)?;
    let s = s.lock().expect("session lock");
    Ok(Json(s.status(id)))
}

async fn delete_session(State(state): State<Arc<AppState>>, Path(id): Path<u64>) -> ApiResult<StatusCode> {
    let s = state.sessions.lock().expect("sessions lock").remove(&id).ok_or(ApiError::NotFound(id))?;
    let s = s.lock().expect("session lock");
    s.alive.store(false, Ordering::SeqCst);
    let _ = s.events.send(Event::Terminated);
    Ok(StatusCode::NO_CONTENT)
}

async fn set_scenario(State(state): State<Arc<AppState>>, Path(id): Path<u64>, b: Bytes) -> ApiResult<Json<Value>> {
    let req: ScenarioRequest = body(&b)?;
    if req.task.is_none() {
        return Err(ApiError::BadRequest("task is required".into()));
    }
    let scenario = scenario_for(&state, &req)?;
    let s = state.session(id)?;
    let mut s = s.lock().expect("session lock");
    if s.mode != Mode::Authoring || !s.frames.is_empty() {
        return Err(ApiError::Conflict("scenario can only change before the first frame".into()));
    }
    s.scenario = scenario;
    Ok(Json(json!({"world": s.scenario.as_ref().map(|sc| &sc.world)})))
}

async fn append_frame(State(state): State<Arc<AppState>>, Path(id): Path<u64>, b: Bytes) -> ApiResult<impl IntoResponse> {
    let frame: Frame = serde_json::from_slice(&b).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let s = state.session(id)?;
    let mut s = s.lock().expect("session lock");
    if s.mode != Mode::Authoring {
        return Err(ApiError::Conflict(format!("frames can only be added while authoring, mode is {:?}", s.mode)));
    }
    let expected = s.frames.len();
    if frame.index != expected {
        return Err(ApiError::Conflict(format!("out-of-order frame: expected index {expected}, got {}", frame.index)));
    }
    if let Some(prev) = s.frames.last() {
        if !(frame.t > prev.t) {
            return Err(ApiError::Conflict(format!("frame time {} does not advance past {}", frame.t, prev.t)));
        }
    }
    s.frames.push(frame);
    Ok((StatusCode::CREATED, Json(json!({"frames": s.frames.len()}))))
}

async fn list_frames(State(state): State<Arc<AppState>>, Path(id): Path<u64>) -> ApiResult<Json<Vec<Frame>>> {
    let s = state.session(id)?;
    let s = s.lock().expect("session lock");
    Ok(Json(s.frames.clone()))
}

async fn finalize(State(state): State<Arc<AppState>>, Path(id): Path<u64>) -> ApiResult<Json<DemoTrace>> {
    let s = state.session(id)?;
    let mut s = s.lock().expect("session lock");
    if s.mode != Mode::Authoring {
        return Err(ApiError::Conflict("session is already finalized".into()));
    }
    let task_name = s.scenario.as_ref().map(|sc| sc.task.as_str().to_string()).unwrap_or_else(|| "authored".into());
    let trace = DemoTrace { task_name, dt: DEFAULT_DT, frames: s.frames.clone() };
    let v = validate(&trace);
    if !v.is_empty() {
        return Err(ApiError::Invalid(serde_json::to_value(&v).expect("violations serialize")));
    }
    s.trace = Some(trace.clone());
    s.mode = Mode::Playback;
    Ok(Json(trace))
}

async fn infer(State(state): State<Arc<AppState>>, Path(id): Path<u64>) -> ApiResult<Json<TaskPolicy>> {
    let s = state.session(id)?;
    let mut s = s.lock().expect("session lock");
    idle(&s)?;
    let trace = s.trace.clone().ok_or_else(|| ApiError::Conflict("finalize the demonstration first".into()))?;
    let policy = pipeline::infer(&trace, &state.tree, &state.cfg).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    s.policy = Some(policy.clone());
    Ok(Json(policy))
}

/// Marks the session busy and returns what a background job needs.
fn start_job(
    s: &mut Session,
    job: &'static str,
    mode: Mode,
) -> (broadcast::Sender<Event>, Arc<AtomicBool>, Arc<AtomicU64>, Mode) {
    let prev = s.mode;
    s.job = Some(job);
    s.mode = mode;
    (s.events.clone(), s.alive.clone(), s.clock.clone(), prev)
}

fn finish_job(session: &Mutex<Session>, prev: Mode, job: &'static str, result: Result<Value, String>) {
    let mut s = session.lock().expect("session lock");
    s.job = None;
    s.mode = prev;
    let ev = match result {
        Ok(v) => {
            s.last_result = Some(v.clone());
            Event::Finished { job, result: v }
        }
        Err(e) => {
            s.last_result = Some(json!({"error": e}));
            Event::Failed { job, error: e }
        }
    };
    if s.alive.load(Ordering::SeqCst) {
        let _ = s.events.send(ev);
    }
}

/// Sends snapshots stamped with a session-wide monotone clock.
struct Snapshotter {
    events: broadcast::Sender<Event>,
    alive: Arc<AtomicBool>,
    clock: Arc<AtomicU64>,
    tick: Duration,
    source: &'static str,
}

impl Snapshotter {
    fn emit(&self, step: usize, entry: Option<usize>, world: &WorldState) {
        if !self.alive.load(Ordering::SeqCst) {
            return;
        }
        let n = self.clock.fetch_add(1, Ordering::SeqCst) + 1;
        let _ = self.events.send(Event::Snapshot {
            source: self.source,
            time: n as f64 * DEFAULT_DT,
            step,
            entry,
            world: world.clone(),
        });
        if !self.tick.is_zero() {
            std::thread::sleep(self.tick);
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainRequest {
    budget: Option<usize>,
    seed: Option<u64>,
}

async fn train(State(state): State<Arc<AppState>>, Path(id): Path<u64>, b: Bytes) -> ApiResult<impl IntoResponse> {
    let req: TrainRequest = body(&b)?;
    let session = state.session(id)?;
    let (ctx, events, alive, _clock, prev) = {
        let mut s = session.lock().expect("session lock");
        idle(&s)?;
        let policy = s.policy.as_ref().ok_or_else(|| ApiError::Conflict("infer a policy first".into()))?;
        let ctx = policy
            .entries
            .iter()
            .find_map(SkillContext::from_entry)
            .ok_or_else(|| ApiError::Conflict("policy has no learned skill to train".into()))?;
        let (e, a, c, p) = start_job(&mut s, "training", Mode::Training);
        (ctx, e, a, c, p)
    };
    let mut tc = state.cfg.train;
    tc.budget = req.budget.unwrap_or(tc.budget);
    tc.seed = req.seed.unwrap_or(state.cfg.seed);
    let st = state.clone();
    let sess = session.clone();
    tokio::task::spawn_blocking(move || {
        let result = st.classifier().map_err(|e| e.to_string()).and_then(|clf| {
            train_skill_observed(&ctx, &clf, &tc, |row| {
                if !alive.load(Ordering::SeqCst) {
                    return ControlFlow::Break(());
                }
                let _ = events.send(Event::Metric { row: row.clone() });
                ControlFlow::Continue(())
            })
            .map_err(|e| e.to_string())
        });
        let result = result.map(|rep| {
            let summary = json!({
                "skill_id": ctx.skill_id,
                "best_sr": rep.best_sr,
                "best_step": rep.best_step,
                "env_steps": rep.env_steps,
                "converged": rep.converged,
            });
            sess.lock().expect("session lock").skill = Some(Arc::new(rep.model));
            summary
        });
        finish_job(&sess, prev, "training", result);
    });
    Ok((StatusCode::ACCEPTED, Json(json!({"job": "training"}))))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExecuteRequest {
    seed: Option<u64>,
    /// Use the hand-written pushing controller for learned skills.
    #[serde(default)]
    scripted_push: bool,
}

async fn execute(State(state): State<Arc<AppState>>, Path(id): Path<u64>, b: Bytes) -> ApiResult<impl IntoResponse> {
    let req: ExecuteRequest = body(&b)?;
    let session = state.session(id)?;
    let (policy, scenario, registry, snap, prev) = {
        let mut s = session.lock().expect("session lock");
        idle(&s)?;
        let policy = s.policy.clone().ok_or_else(|| ApiError::Conflict("no policy to execute".into()))?;
        let task = match &s.scenario {
            Some(sc) => sc.task,
            None => pipeline::task_of(&policy).map_err(|e| ApiError::Conflict(e.to_string()))?,
        };
        let seed = req.seed.or(s.scenario.as_ref().map(|sc| sc.seed)).unwrap_or(state.cfg.seed);
        let scenario =
            make_scenario(task, seed, &state.cfg.scenario).map_err(|e| ApiError::BadRequest(e.to_string()))?;
        let source = match (&s.skill, req.scripted_push) {
            (_, true) => SkillSource::Scripted,
            (Some(m), false) => SkillSource::Learned(m.clone()),
            (None, false) => SkillSource::None,
        };
        let registry = pipeline::registry(&policy, &source);
        if let Some(missing) = policy.learned_skills().into_iter().find(|id| registry.get(id).is_none()) {
            return Err(ApiError::Conflict(format!("learned skill `{missing}` is not trained")));
        }
        let (events, alive, clock, prev) = start_job(&mut s, "execution", Mode::Executing);
        let tick = Duration::from_millis(state.cfg.server.tick_ms);
        (policy, scenario, registry, Snapshotter { events, alive, clock, tick, source: "execution" }, prev)
    };
    let cfg = state.cfg.exec.clone();
    let sess = session.clone();
    tokio::task::spawn_blocking(move || {
        let mut step = 0usize;
        let mut obs = |w: &WorldState, entry: Option<usize>| {
            step += 1;
            snap.emit(step, entry, w);
        };
        let result = execute_policy(&scenario, &policy, &registry, &cfg, Some(&mut obs))
            .map(|(_, outcome)| serde_json::to_value(outcome).expect("outcome serializes"))
            .map_err(|e| e.to_string());
        finish_job(&sess, prev, "execution", result);
    });
    Ok((StatusCode::ACCEPTED, Json(json!({"job": "execution"}))))
}

async fn playback(State(state): State<Arc<AppState>>, Path(id): Path<u64>) -> ApiResult<impl IntoResponse> {
    let session = state.session(id)?;
    let (trace, arena, snap, prev) = {
        let mut s = session.lock().expect("session lock");
        idle(&s)?;
        let trace = s.trace.clone().ok_or_else(|| ApiError::Conflict("finalize the demonstration first".into()))?;
        let arena = s.scenario.as_ref().map(|sc| sc.world.arena).unwrap_or_default();
        let (events, alive, clock, prev) = start_job(&mut s, "playback", Mode::Playback);
        let tick = Duration::from_millis(state.cfg.server.tick_ms);
        (trace, arena, Snapshotter { events, alive, clock, tick, source: "playback" }, prev)
    };
    let sess = session.clone();
    tokio::task::spawn_blocking(move || {
        replay(&trace, arena, &snap);
        finish_job(&sess, prev, "playback", Ok(json!({"frames": trace.len()})));
    });
    Ok((StatusCode::ACCEPTED, Json(json!({"job": "playback"}))))
}

fn replay(trace: &DemoTrace, arena: Arena, snap: &Snapshotter) {
    for (i, f) in trace.frames.iter().enumerate() {
        snap.emit(i, None, &f.to_world(arena));
    }
}

async fn stream(
    State(state): State<Arc<AppState>>,
    Path(id): Path<u64>,
    ws: WebSocketUpgrade,
) -> ApiResult<Response> {
    let (rx, hello) = {
        let s = state.session(id)?;
        let s = s.lock().expect("session lock");
        (s.events.subscribe(), json!({"type": "hello", "session": s.status(id)}))
    };
    Ok(ws.on_upgrade(move |socket| pump(socket, rx, hello)))
}

async fn pump(mut socket: WebSocket, mut rx: broadcast::Receiver<Event>, hello: Value) {
    if socket.send(Message::Text(hello.to_string().into())).await.is_err() {
        return;
    }
    loop {
        tokio::select! {
            ev = rx.recv() => match ev {
                Ok(ev) => {
                    let done = matches!(ev, Event::Terminated);
                    let text = serde_json::to_string(&ev).expect("event serializes");
                    if socket.send(Message::Text(text.into())).await.is_err() || done {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => break,
            },
            msg = socket.recv() => match msg {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
        }
    }
    let _ = socket.send(Message::Close(None)).await;
}

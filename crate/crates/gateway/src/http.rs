//! HTTP service. Every response is an [`Envelope`]; core calls run on the
//! blocking pool.

use std::collections::VecDeque;
use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use stagewise_core::agent::Decision;
use stagewise_core::domain::{EventDraft, Stage};
use stagewise_core::session::{LogRecord, SessionState, SharedSession};
use tokio::sync::watch;

use crate::app::App;
use crate::error::GatewayError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
}

/// Response wrapper: exactly one of `payload` and `error` is present.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub request_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ApiError>,
}

#[derive(Clone)]
struct Http {
    app: Arc<App>,
    shutdown: watch::Receiver<bool>,
}

fn request_id() -> String {
    uuid::Uuid::new_v4().to_string()
}

fn ok<T: Serialize>(status: StatusCode, payload: T) -> Response {
    let env = Envelope { request_id: request_id(), payload: Some(payload), error: None };
    (status, Json(env)).into_response()
}

fn fail(e: &GatewayError) -> Response {
    let status = StatusCode::from_u16(e.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    if status.is_server_error() {
        tracing::error!(error = %e, "request failed");
    }
    let env: Envelope<()> = Envelope {
        request_id: request_id(),
        payload: None,
        error: Some(ApiError { code: e.code().into(), message: e.to_string() }),
    };
    (status, Json(env)).into_response()
}

/// Runs `f` on the blocking pool and wraps its result.
async fn run<T, F>(status: StatusCode, f: F) -> Response
where
    T: Serialize + Send + 'static,
    F: FnOnce() -> Result<T, GatewayError> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(Ok(v)) => ok(status, v),
        Ok(Err(e)) => fail(&e),
        Err(e) => fail(&GatewayError::Internal(e.to_string())),
    }
}

fn body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, GatewayError> {
    serde_json::from_slice(bytes).map_err(|e| GatewayError::BadRequest(format!("invalid body: {e}")))
}

fn stage(s: &str) -> Result<Stage, GatewayError> {
    s.parse().map_err(GatewayError::BadRequest)
}

pub fn router(app: Arc<App>, shutdown: watch::Receiver<bool>) -> Router {
    Router::new()
        .route("/sessions", post(open_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/stage/{stage}", get(get_stage))
        .route("/sessions/{id}/feedback", post(feedback))
        .route("/sessions/{id}/retry", post(retry))
        .route("/sessions/{id}/records", get(records))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/proposals", get(proposals))
        .route("/sessions/{id}/proposals/{pid}/confirm", post(confirm))
        .route("/sessions/{id}/prompt", get(prompt))
        .route("/profiles/{user}/learn", post(learn))
        .route("/store/templates", get(list_templates).post(package))
        .route("/store/templates/{tid}", get(get_template))
        .route("/store/templates/{tid}/apply", post(apply))
        .route("/store/templates/{tid}/purchase", post(purchase))
        .route("/store/match", get(match_templates))
        .route("/store/grants", post(grant))
        .route("/store/balances", get(balances))
        .route("/compile", post(compile))
        .fallback(|| async { fail(&GatewayError::NotFound("no such endpoint".into())) })
        .with_state(Http { app, shutdown })
}

/// Serves until ctrl-c. `on_bound` receives the bound address (useful
/// with port 0).
pub async fn serve(app: Arc<App>, addr: SocketAddr, on_bound: impl FnOnce(SocketAddr)) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    on_bound(listener.local_addr()?);
    let (tx, rx) = watch::channel(false);
    let shutdown = async move {
        let _ = tokio::signal::ctrl_c().await;
        tracing::info!("shutting down");
        // Ends open event streams so the server can drain.
        let _ = tx.send(true);
    };
    axum::serve(listener, router(app, rx)).with_graceful_shutdown(shutdown).await
}

#[derive(Deserialize)]
struct OpenRequest {
    query: String,
    #[serde(default = "anonymous")]
    user_id: String,
    #[serde(default)]
    session_id: Option<String>,
}

fn anonymous() -> String {
    "anonymous".into()
}

async fn open_session(State(h): State<Http>, b: Bytes) -> Response {
    run(StatusCode::CREATED, move || {
        let req: OpenRequest = body(&b)?;
        let shared = h.app.open_session(&req.query, &req.user_id, req.session_id)?;
        Ok(SessionState::clone(&*shared.state()))
    })
    .await
}

async fn list_sessions(State(h): State<Http>) -> Response {
    run(StatusCode::OK, move || h.app.layout().session_ids().map_err(|e| GatewayError::Internal(e.to_string()))).await
}

async fn get_session(State(h): State<Http>, Path(id): Path<String>) -> Response {
    run(StatusCode::OK, move || Ok(SessionState::clone(&*h.app.state(&id)?))).await
}

#[derive(Serialize)]
struct StageOutput {
    stage: Stage,
    status: stagewise_core::session::StageStatus,
    log_offset: u64,
    output: serde_json::Value,
}

async fn get_stage(State(h): State<Http>, Path((id, s)): Path<(String, String)>) -> Response {
    run(StatusCode::OK, move || {
        let stage = stage(&s)?;
        let st = h.app.state(&id)?;
        Ok(StageOutput { stage, status: st.status(stage), log_offset: st.log_offset, output: st.stage_json(stage) })
    })
    .await
}

async fn feedback(State(h): State<Http>, Path(id): Path<String>, b: Bytes) -> Response {
    run(StatusCode::CREATED, move || h.app.submit(&id, body::<EventDraft>(&b)?)).await
}

async fn retry(State(h): State<Http>, Path(id): Path<String>) -> Response {
    run(StatusCode::OK, move || h.app.retry(&id)).await
}

#[derive(Deserialize)]
struct After {
    #[serde(default)]
    after: usize,
}

#[derive(Serialize)]
struct Records {
    records: Vec<LogRecord>,
    /// Value of `after` for the next poll.
    next: usize,
}

async fn records(State(h): State<Http>, Path(id): Path<String>, Query(q): Query<After>) -> Response {
    run(StatusCode::OK, move || {
        let records = h.app.records_after(&id, q.after)?;
        let next = q.after + records.len();
        Ok(Records { records, next })
    })
    .await
}

fn sse_event(index: usize, rec: &LogRecord) -> Event {
    Event::default()
        .id(index.to_string())
        .event(rec.kind())
        .data(serde_json::to_string(rec).expect("records serialize"))
}

/// One server-sent event per log record, from `after` (or the record after
/// `Last-Event-ID`) on, then live as the log grows.
async fn events(State(h): State<Http>, Path(id): Path<String>, Query(q): Query<After>, headers: HeaderMap) -> Response {
    let app = h.app.clone();
    let shared: Arc<SharedSession> = match tokio::task::spawn_blocking(move || app.session(&id)).await {
        Ok(Ok(s)) => s,
        Ok(Err(e)) => return fail(&e),
        Err(e) => return fail(&GatewayError::Internal(e.to_string())),
    };
    let resume =
        headers.get("last-event-id").and_then(|v| v.to_str().ok()).and_then(|v| v.parse::<usize>().ok()).map(|i| i + 1);
    let cursor = resume.unwrap_or(q.after);
    let changes = h.app.subscribe(&shared);
    let init = (shared, changes, h.shutdown.clone(), cursor, VecDeque::new());
    let stream = futures::stream::unfold(init, |(shared, mut changes, mut shutdown, mut cursor, mut buf)| async move {
        loop {
            if let Some(ev) = buf.pop_front() {
                return Some((Ok::<Event, Infallible>(ev), (shared, changes, shutdown, cursor, buf)));
            }
            if *shutdown.borrow() {
                return None;
            }
            let fresh = shared.records_after(cursor);
            if !fresh.is_empty() {
                buf.extend(fresh.iter().enumerate().map(|(k, r)| sse_event(cursor + k, r)));
                cursor += fresh.len();
                continue;
            }
            tokio::select! {
                r = changes.changed() => if r.is_err() { return None },
                _ = shutdown.changed() => return None,
            }
        }
    });
    Sse::new(stream).keep_alive(KeepAlive::default()).into_response()
}

#[derive(Deserialize)]
struct ProposalQuery {
    stage: String,
    #[serde(default)]
    llm: bool,
}

async fn proposals(State(h): State<Http>, Path(id): Path<String>, Query(q): Query<ProposalQuery>) -> Response {
    run(StatusCode::OK, move || h.app.proposals(&id, stage(&q.stage)?, q.llm)).await
}

#[derive(Deserialize)]
struct ConfirmRequest {
    decision: Decision,
}

async fn confirm(State(h): State<Http>, Path((id, pid)): Path<(String, String)>, b: Bytes) -> Response {
    run(StatusCode::OK, move || {
        let req: ConfirmRequest = body(&b)?;
        h.app.confirm(&id, &pid, req.decision)
    })
    .await
}

#[derive(Deserialize)]
struct StageQuery {
    stage: String,
}

#[derive(Serialize)]
struct Prompt {
    prompt: String,
}

async fn prompt(State(h): State<Http>, Path(id): Path<String>, Query(q): Query<StageQuery>) -> Response {
    run(StatusCode::OK, move || Ok(Prompt { prompt: h.app.prompt(&id, stage(&q.stage)?)? })).await
}

async fn learn(State(h): State<Http>, Path(user): Path<String>) -> Response {
    run(StatusCode::OK, move || h.app.learn(&user)).await
}

#[derive(Deserialize)]
struct PackageRequest {
    session_id: String,
    title: String,
    #[serde(default)]
    price_credits: u64,
    #[serde(default)]
    publish: bool,
}

async fn package(State(h): State<Http>, b: Bytes) -> Response {
    run(StatusCode::CREATED, move || {
        let req: PackageRequest = body(&b)?;
        h.app.package(&req.session_id, &req.title, req.price_credits, req.publish)
    })
    .await
}

async fn list_templates(State(h): State<Http>) -> Response {
    run(StatusCode::OK, move || Ok(h.app.templates())).await
}

#[derive(Deserialize)]
struct Viewer {
    viewer: Option<String>,
}

async fn get_template(State(h): State<Http>, Path(tid): Path<String>, Query(v): Query<Viewer>) -> Response {
    run(StatusCode::OK, move || h.app.template(&tid, v.viewer.as_deref())).await
}

#[derive(Deserialize)]
struct MatchQuery {
    query: String,
}

#[derive(Serialize)]
struct Match {
    score: f64,
    template: stagewise_core::store::DebugTemplate,
}

async fn match_templates(State(h): State<Http>, Query(q): Query<MatchQuery>) -> Response {
    run(StatusCode::OK, move || {
        Ok(h.app
            .match_query(&q.query)
            .into_iter()
            .map(|(score, template)| Match { score, template })
            .collect::<Vec<_>>())
    })
    .await
}

#[derive(Deserialize)]
struct ApplyRequest {
    session_id: String,
    #[serde(default = "anonymous")]
    user_id: String,
}

async fn apply(State(h): State<Http>, Path(tid): Path<String>, b: Bytes) -> Response {
    run(StatusCode::OK, move || {
        let req: ApplyRequest = body(&b)?;
        h.app.apply(&tid, &req.session_id, &req.user_id)
    })
    .await
}

#[derive(Deserialize)]
struct UserRequest {
    user_id: String,
}

async fn purchase(State(h): State<Http>, Path(tid): Path<String>, b: Bytes) -> Response {
    run(StatusCode::CREATED, move || h.app.purchase(&tid, &body::<UserRequest>(&b)?.user_id)).await
}

#[derive(Deserialize)]
struct GrantRequest {
    user_id: String,
    credits: u64,
}

async fn grant(State(h): State<Http>, b: Bytes) -> Response {
    run(StatusCode::CREATED, move || {
        let req: GrantRequest = body(&b)?;
        h.app.grant(&req.user_id, req.credits)
    })
    .await
}

async fn balances(State(h): State<Http>) -> Response {
    run(StatusCode::OK, move || Ok(h.app.balances())).await
}

#[derive(Deserialize)]
struct CompileRequest {
    from: NaiveDate,
    to: NaiveDate,
}

async fn compile(State(h): State<Http>, b: Bytes) -> Response {
    run(StatusCode::CREATED, move || {
        let req: CompileRequest = body(&b)?;
        h.app.compile(req.from, req.to, None, None)
    })
    .await
}

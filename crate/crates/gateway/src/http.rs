use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use serde::Deserialize;
use serde_json::{json, Value};
use stormleg_core::provenance::{LedgerFilter, ProvenanceError, TraceId};
use tower_http::services::ServeDir;

use crate::session::{ExecutionEvent, Session};
use crate::{Gateway, GatewayError, SubmitRequest};

impl IntoResponse for GatewayError {
    fn into_response(self) -> Response {
        let (status, code) = match &self {
            GatewayError::UnknownSession(_) => (StatusCode::NOT_FOUND, "not_found"),
            GatewayError::IllegalTransition { .. } => (StatusCode::CONFLICT, "illegal_transition"),
            GatewayError::NotReady(_) => (StatusCode::CONFLICT, "not_ready"),
            GatewayError::RevisionCap(_) => (StatusCode::CONFLICT, "revision_cap_exceeded"),
            GatewayError::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request"),
        };
        error(status, code, &self.to_string())
    }
}

fn error(status: StatusCode, code: &str, message: &str) -> Response {
    (status, Json(json!({"error": code, "message": message}))).into_response()
}

fn trace_error(e: ProvenanceError) -> Response {
    match e {
        ProvenanceError::UnknownTrace(id) => error(StatusCode::NOT_FOUND, "not_found", &format!("unknown trace {id}")),
        other => error(StatusCode::INTERNAL_SERVER_ERROR, "ledger", &other.to_string()),
    }
}

type AppState = Arc<Gateway>;

/// All endpoints, the optional token check and the optional console bundle.
pub fn router(gateway: Arc<Gateway>) -> Router {
    let api = Router::new()
        .route("/sessions", post(submit).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/plan", get(get_plan))
        .route("/sessions/{id}/approve", post(approve))
        .route("/sessions/{id}/revise", post(revise))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/result", get(get_result))
        .route("/traces", get(list_traces))
        .route("/traces/{id}", get(get_trace))
        .route("/traces/{id}/export", get(export_trace))
        .route("/health", get(|| async { Json(json!({"status": "ok"})) }))
        .route_layer(middleware::from_fn_with_state(gateway.clone(), require_token))
        .with_state(gateway.clone());
    match &gateway.config().ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Binds and serves until the process stops.
pub async fn serve(gateway: Arc<Gateway>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("gateway listening on {}", listener.local_addr()?);
    axum::serve(listener, router(gateway)).await
}

#[derive(Deserialize)]
struct TokenQuery {
    token: Option<String>,
}

/// Accepts `Authorization: Bearer <token>`, or `?token=` for event-stream clients
/// that cannot set headers.
async fn require_token(State(gw): State<AppState>, Query(q): Query<TokenQuery>, req: Request, next: Next) -> Response {
    let Some(expected) = &gw.config().token else {
        return next.run(req).await;
    };
    let bearer = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if bearer == Some(expected.as_str()) || q.token.as_deref() == Some(expected.as_str()) {
        next.run(req).await
    } else {
        error(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong token")
    }
}

async fn submit(State(gw): State<AppState>, Json(req): Json<SubmitRequest>) -> Result<Response, GatewayError> {
    let s = gw.submit(req)?;
    Ok((StatusCode::CREATED, Json(s.view())).into_response())
}

async fn list_sessions(State(gw): State<AppState>) -> Json<Value> {
    Json(json!({"sessions": gw.sessions()}))
}

async fn get_session(State(gw): State<AppState>, Path(id): Path<String>) -> Result<Response, GatewayError> {
    Ok(Json(gw.session(&id)?.view()).into_response())
}

async fn get_plan(State(gw): State<AppState>, Path(id): Path<String>) -> Result<Response, GatewayError> {
    let planned = gw.plan(&id)?;
    let s = gw.session(&id)?;
    let view = s.view();
    Ok(Json(json!({
        "session_id": id,
        "state": view.state,
        "revision_count": view.revision_count,
        "plan": planned.plan,
        "leg": planned.leg,
        "node_count": planned.leg.node_count(),
        "proposed": planned.proposed,
    }))
    .into_response())
}

async fn approve(State(gw): State<AppState>, Path(id): Path<String>) -> Result<Response, GatewayError> {
    Ok((StatusCode::ACCEPTED, Json(gw.approve(&id)?)).into_response())
}

#[derive(Deserialize)]
struct ReviseBody {
    feedback: String,
}

async fn revise(State(gw): State<AppState>, Path(id): Path<String>, Json(body): Json<ReviseBody>) -> Result<Response, GatewayError> {
    Ok((StatusCode::ACCEPTED, Json(gw.revise(&id, &body.feedback)?)).into_response())
}

async fn get_result(State(gw): State<AppState>, Path(id): Path<String>) -> Result<Response, GatewayError> {
    let s = gw.session(&id)?;
    match s.result() {
        Some(r) => Ok(Json(r).into_response()),
        None => Err(GatewayError::NotReady(format!("session is {}", s.state()))),
    }
}

#[derive(Deserialize)]
struct EventsQuery {
    /// Same meaning as the `Last-Event-ID` header.
    after: Option<u64>,
}

async fn events(
    State(gw): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> Result<Response, GatewayError> {
    let s = gw.session(&id)?;
    let last = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<u64>().ok())
        .or(q.after);
    let from = last.map(|l| l as usize + 1).unwrap_or(0);
    Ok(Sse::new(event_stream(s, from)).keep_alive(KeepAlive::new().interval(Duration::from_secs(15))).into_response())
}

fn frame(ev: &ExecutionEvent) -> Event {
    Event::default()
        .event(ev.kind.as_str())
        .id(ev.seq.to_string())
        .data(serde_json::to_string(ev).expect("event serializes"))
}

/// Replays from `from`, then follows live events; ends once the session is
/// final and everything has been sent.
fn event_stream(session: Arc<Session>, from: usize) -> impl Stream<Item = Result<Event, Infallible>> {
    let rx = session.subscribe();
    stream::unfold((session, from, rx), |(s, cursor, mut rx)| async move {
        loop {
            let (next, terminal) = {
                let inner = s.lock();
                (inner.events.get(cursor).cloned(), inner.state.is_terminal())
            };
            if let Some(ev) = next {
                return Some((Ok(frame(&ev)), (s, cursor + 1, rx)));
            }
            if terminal || rx.changed().await.is_err() {
                return None;
            }
        }
    })
}

async fn list_traces(State(gw): State<AppState>) -> Json<Value> {
    let ids: Vec<String> = gw.ledger().trace_ids().into_iter().map(|t| t.0).collect();
    Json(json!({"traces": ids}))
}

async fn get_trace(State(gw): State<AppState>, Path(id): Path<String>, Query(filter): Query<LedgerFilter>) -> Response {
    let trace = TraceId(id);
    let ledger = gw.ledger();
    let found = ledger
        .query(&trace, &filter)
        .and_then(|records| Ok((records, ledger.nodes(&trace)?, ledger.query_text(&trace)?)));
    match found {
        Ok((records, nodes, query_text)) => Json(json!({
            "trace_id": trace,
            "query_text": query_text,
            "records": records,
            "nodes": nodes,
        }))
        .into_response(),
        Err(e) => trace_error(e),
    }
}

async fn export_trace(State(gw): State<AppState>, Path(id): Path<String>) -> Response {
    match gw.ledger().export_trace(&TraceId(id)) {
        Ok(doc) => ([(header::CONTENT_TYPE, "application/x-ndjson")], doc).into_response(),
        Err(e) => trace_error(e),
    }
}

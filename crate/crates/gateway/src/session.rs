//! Run sessions: the sign-off state machine and each session's event log.

use std::fmt;
use std::sync::{Arc, Mutex, MutexGuard, Weak};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use stormleg_core::executor::{AblationVariant, EventKind, Observer, RunResult};
use stormleg_core::pipeline::{Pipeline, Planned};
use stormleg_core::tools::FaultPlan;
use tokio::sync::watch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Planning,
    AwaitingApproval,
    Executing,
    Done,
    Failed,
}

impl SessionState {
    pub fn as_str(&self) -> &'static str {
        match self {
            SessionState::Planning => "planning",
            SessionState::AwaitingApproval => "awaiting_approval",
            SessionState::Executing => "executing",
            SessionState::Done => "done",
            SessionState::Failed => "failed",
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, SessionState::Done | SessionState::Failed)
    }

    /// Whether the state machine allows `self -> next`.
    pub fn allows(&self, next: SessionState) -> bool {
        use SessionState::*;
        matches!(
            (self, next),
            (Planning, AwaitingApproval)
                | (Planning, Failed)
                | (AwaitingApproval, Planning)
                | (AwaitingApproval, Executing)
                | (Executing, Done)
                | (Executing, Failed)
        )
    }
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionEvent {
    pub session_id: String,
    pub seq: u64,
    pub kind: EventKind,
    pub payload: Value,
    pub at: DateTime<Utc>,
}

/// Serializable snapshot of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub state: SessionState,
    pub query_text: String,
    pub variant: AblationVariant,
    pub revision_count: usize,
    pub created_at: DateTime<Utc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_text: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub events: usize,
}

pub(crate) struct Inner {
    pub state: SessionState,
    pub planned: Option<Planned>,
    pub result: Option<RunResult>,
    pub revision_count: usize,
    pub error: Option<String>,
    pub events: Vec<ExecutionEvent>,
}

pub struct Session {
    pub id: String,
    pub query_text: String,
    pub variant: AblationVariant,
    pub fault: Option<FaultPlan>,
    pub created_at: DateTime<Utc>,
    pub(crate) pipeline: Pipeline,
    inner: Mutex<Inner>,
    /// Bumped on every mutation so streams wake up.
    changed: watch::Sender<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IllegalTransition {
    pub from: SessionState,
    pub to: SessionState,
}

impl Session {
    /// Builds the session and wires its event log into the pipeline's observer.
    pub fn new(
        query_text: String,
        variant: AblationVariant,
        fault: Option<FaultPlan>,
        build: impl FnOnce(Arc<dyn Observer>) -> Pipeline,
    ) -> Arc<Session> {
        Arc::new_cyclic(|weak: &Weak<Session>| {
            let observer: Arc<dyn Observer> = Arc::new(SessionObserver(weak.clone()));
            Session {
                id: uuid::Uuid::new_v4().to_string(),
                query_text,
                variant,
                fault,
                created_at: Utc::now(),
                pipeline: build(observer),
                inner: Mutex::new(Inner {
                    state: SessionState::Planning,
                    planned: None,
                    result: None,
                    revision_count: 0,
                    error: None,
                    events: Vec::new(),
                }),
                changed: watch::channel(0).0,
            }
        })
    }

    pub(crate) fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().expect("session state")
    }

    pub fn state(&self) -> SessionState {
        self.lock().state
    }

    pub fn planned(&self) -> Option<Planned> {
        self.lock().planned.clone()
    }

    pub fn result(&self) -> Option<RunResult> {
        self.lock().result.clone()
    }

    pub fn events(&self) -> Vec<ExecutionEvent> {
        self.lock().events.clone()
    }

    pub fn subscribe(&self) -> watch::Receiver<u64> {
        self.changed.subscribe()
    }

    pub(crate) fn touch(&self) {
        self.changed.send_modify(|v| *v += 1);
    }

    /// Applies `f` under the lock, then wakes subscribers.
    pub(crate) fn update<R>(&self, f: impl FnOnce(&mut Inner, &mut EventSink<'_>) -> R) -> R {
        let out = {
            let mut inner = self.lock();
            let mut pending = Vec::new();
            let out = f(&mut inner, &mut EventSink(&mut pending));
            for (kind, payload) in pending {
                push_event(&self.id, &mut inner, kind, payload);
            }
            out
        };
        self.touch();
        out
    }

    /// Moves to `to` if the state machine allows it.
    pub(crate) fn transition(inner: &mut Inner, to: SessionState) -> Result<(), IllegalTransition> {
        if !inner.state.allows(to) {
            return Err(IllegalTransition { from: inner.state, to });
        }
        inner.state = to;
        Ok(())
    }

    pub fn view(&self) -> SessionView {
        let inner = self.lock();
        SessionView {
            session_id: self.id.clone(),
            state: inner.state,
            query_text: self.query_text.clone(),
            variant: self.variant,
            revision_count: inner.revision_count,
            created_at: self.created_at,
            trace_id: inner.result.as_ref().map(|r| r.trace_id.0.clone()),
            final_text: inner.result.as_ref().map(|r| r.final_text.clone()),
            error: inner.error.clone(),
            events: inner.events.len(),
        }
    }
}

/// Events queued inside `Session::update`, appended in order before the lock drops.
pub(crate) struct EventSink<'a>(&'a mut Vec<(EventKind, Value)>);

impl EventSink<'_> {
    pub fn push(&mut self, kind: EventKind, payload: Value) {
        self.0.push((kind, payload));
    }
}

fn push_event(session_id: &str, inner: &mut Inner, kind: EventKind, payload: Value) {
    let seq = inner.events.len() as u64;
    inner.events.push(ExecutionEvent {
        session_id: session_id.to_string(),
        seq,
        kind,
        payload,
        at: Utc::now(),
    });
}

struct SessionObserver(Weak<Session>);

impl Observer for SessionObserver {
    fn event(&self, kind: EventKind, payload: Value) {
        if let Some(session) = self.0.upgrade() {
            session.update(|_, sink| sink.push(kind, payload));
        }
    }
}

/// Payload of a `plan_proposed` event.
pub(crate) fn plan_payload(planned: &Planned, revision_count: usize) -> Value {
    json!({
        "revision_count": revision_count,
        "topology": planned.plan.topology,
        "plan": planned.plan,
        "leg": planned.leg,
        "node_count": planned.leg.node_count(),
        "rewrite_log": planned.proposed.as_ref().map(|p| p.rewrite_log.clone()).unwrap_or_default(),
    })
}

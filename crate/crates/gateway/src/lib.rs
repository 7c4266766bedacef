//! HTTP facade over the runtime: submit a query, review and revise the
//! proposed graph, approve it, and follow execution as server-sent events.

mod backends;
mod http;
mod session;

use std::collections::HashMap;
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use serde_json::json;
use stormleg_core::architect::DEFAULT_REVISION_CAP;
use stormleg_core::executor::{AblationVariant, EventKind, ExecConfig};
use stormleg_core::features::PatternTable;
use stormleg_core::pipeline::{Pipeline, Planned};
use stormleg_core::provenance::Ledger;
use stormleg_core::registry::Registry;
use stormleg_core::tools::FaultPlan;
use thiserror::Error;

pub use backends::{BackendProvider, Backends, LiveProvider, ScriptedProvider};
pub use http::{router, serve};
pub use session::{ExecutionEvent, Session, SessionState, SessionView};

use session::plan_payload;

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    /// Shared bearer token; `None` leaves the API open.
    pub token: Option<String>,
    pub revision_cap: usize,
    /// Static console bundle served at `/`.
    pub ui_dir: Option<PathBuf>,
    /// Finished sessions are appended here as JSON lines.
    pub session_log: Option<PathBuf>,
    pub exec: ExecConfig,
    pub patterns: PatternTable,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            token: None,
            revision_cap: DEFAULT_REVISION_CAP,
            ui_dir: None,
            session_log: None,
            exec: ExecConfig::default(),
            patterns: PatternTable::default(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GatewayError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("illegal transition from {from} to {to}")]
    IllegalTransition { from: SessionState, to: SessionState },
    #[error("{0}")]
    NotReady(String),
    #[error("revision cap of {0} reached")]
    RevisionCap(usize),
    #[error("{0}")]
    BadRequest(String),
}

/// Body of `POST /sessions`.
#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct SubmitRequest {
    pub query: String,
    #[serde(default)]
    pub variant: Option<AblationVariant>,
    /// Specialist whose tools all fail.
    #[serde(default)]
    pub fault: Option<String>,
    /// Scripted scenario name, for the scripted provider.
    #[serde(default)]
    pub scenario: Option<String>,
}

pub struct Gateway {
    registry: Arc<Registry>,
    ledger: Arc<Ledger>,
    provider: Arc<dyn BackendProvider>,
    config: GatewayConfig,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
}

impl Gateway {
    pub fn new(
        registry: Arc<Registry>,
        ledger: Arc<Ledger>,
        provider: Arc<dyn BackendProvider>,
        config: GatewayConfig,
    ) -> Arc<Self> {
        Arc::new(Self { registry, ledger, provider, config, sessions: RwLock::new(HashMap::new()) })
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn ledger(&self) -> &Arc<Ledger> {
        &self.ledger
    }

    pub fn session(&self, id: &str) -> Result<Arc<Session>, GatewayError> {
        self.sessions
            .read()
            .expect("session table")
            .get(id)
            .cloned()
            .ok_or_else(|| GatewayError::UnknownSession(id.to_string()))
    }

    pub fn sessions(&self) -> Vec<SessionView> {
        let mut out: Vec<SessionView> = self.sessions.read().expect("session table").values().map(|s| s.view()).collect();
        out.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.session_id.cmp(&b.session_id)));
        out
    }

    /// Opens a session and starts planning in the background.
    pub fn submit(self: &Arc<Self>, req: SubmitRequest) -> Result<Arc<Session>, GatewayError> {
        if req.query.trim().is_empty() {
            return Err(GatewayError::BadRequest("query is empty".into()));
        }
        if let Some(agent) = &req.fault {
            if self.registry.get(agent).is_none_or(|a| !a.is_specialist()) {
                return Err(GatewayError::BadRequest(format!("fault target {agent} is not a registered specialist")));
            }
        }
        let variant = req.variant.unwrap_or(AblationVariant::Full);
        let (model, tools) = self
            .provider
            .backends(&req.query, req.scenario.as_deref(), variant)
            .map_err(GatewayError::BadRequest)?;
        let session = Session::new(req.query.clone(), variant, req.fault.clone().map(FaultPlan::outage), |observer| {
            Pipeline::new(self.registry.clone(), model, tools, self.ledger.clone())
                .with_exec_config(self.config.exec.clone())
                .with_patterns(self.config.patterns.clone())
                .with_revision_cap(self.config.revision_cap)
                .with_observer(observer)
        });
        self.sessions.write().expect("session table").insert(session.id.clone(), session.clone());

        let me = self.clone();
        let s = session.clone();
        tokio::spawn(async move {
            let outcome = s.pipeline.plan(&s.query_text, s.variant).await;
            s.update(|inner, sink| match outcome {
                Ok(planned) => {
                    sink.push(EventKind::PlanProposed, plan_payload(&planned, 0));
                    inner.planned = Some(planned);
                    Session::transition(inner, SessionState::AwaitingApproval).expect("planning to awaiting_approval");
                }
                Err(e) => {
                    sink.push(EventKind::Failed, json!({"stage": "planning", "error": e.to_string()}));
                    inner.error = Some(e.to_string());
                    Session::transition(inner, SessionState::Failed).expect("planning to failed");
                }
            });
            me.log_if_finished(&s);
        });
        Ok(session)
    }

    pub fn plan(&self, id: &str) -> Result<Planned, GatewayError> {
        let s = self.session(id)?;
        let inner = s.lock();
        match (&inner.planned, inner.state) {
            (_, SessionState::Planning) => Err(GatewayError::NotReady("plan is still being drafted".into())),
            (Some(p), _) => Ok(p.clone()),
            (None, _) => Err(GatewayError::NotReady(
                inner.error.clone().unwrap_or_else(|| "no plan was proposed".into()),
            )),
        }
    }

    /// Signs off the proposed plan and starts execution.
    pub fn approve(self: &Arc<Self>, id: &str) -> Result<SessionView, GatewayError> {
        let s = self.session(id)?;
        let planned = s.update(|inner, sink| {
            Session::transition(inner, SessionState::Executing)
                .map_err(|e| GatewayError::IllegalTransition { from: e.from, to: e.to })?;
            let planned = inner.planned.clone().expect("awaiting approval implies a plan");
            sink.push(
                EventKind::Approved,
                json!({"revision_count": inner.revision_count, "node_count": planned.leg.node_count()}),
            );
            Ok::<_, GatewayError>(planned)
        })?;

        let me = self.clone();
        let task = s.clone();
        tokio::spawn(async move {
            let run = task.pipeline.execute(planned, &task.query_text, task.variant, task.fault.clone()).await;
            task.update(|inner, _| {
                let next = if run.result.is_failed() { SessionState::Failed } else { SessionState::Done };
                inner.error = run.result.failed.clone();
                inner.result = Some(run.result);
                Session::transition(inner, next).expect("executing to a final state");
            });
            me.log_if_finished(&task);
        });
        Ok(s.view())
    }

    /// Sends the proposed plan back to the architect with feedback.
    pub fn revise(self: &Arc<Self>, id: &str, feedback: &str) -> Result<SessionView, GatewayError> {
        if feedback.trim().is_empty() {
            return Err(GatewayError::BadRequest("feedback is empty".into()));
        }
        let cap = self.config.revision_cap;
        let s = self.session(id)?;
        let prior = s.update(|inner, _| {
            if inner.state != SessionState::AwaitingApproval {
                return Err(GatewayError::IllegalTransition { from: inner.state, to: SessionState::Planning });
            }
            if inner.revision_count >= cap {
                return Err(GatewayError::RevisionCap(cap));
            }
            let planned = inner.planned.clone().expect("awaiting approval implies a plan");
            let Some(proposed) = planned.proposed.clone() else {
                return Err(GatewayError::BadRequest("the static graph cannot be revised".into()));
            };
            Session::transition(inner, SessionState::Planning).expect("awaiting_approval to planning");
            Ok((planned, proposed))
        })?;

        let task = s.clone();
        let feedback = feedback.to_string();
        tokio::spawn(async move {
            let (prior_planned, prior) = prior;
            let outcome = task.pipeline.architect().revise(&task.query_text, &prior, &feedback).await;
            task.update(|inner, sink| {
                match outcome {
                    Ok(p) => {
                        let planned = Planned { plan: p.plan.clone(), leg: p.leg.clone(), proposed: Some(p) };
                        inner.revision_count += 1;
                        sink.push(EventKind::PlanProposed, plan_payload(&planned, inner.revision_count));
                        inner.planned = Some(planned);
                    }
                    Err(e) => {
                        // The prior plan stays on the table.
                        let mut payload = plan_payload(&prior_planned, inner.revision_count);
                        payload["revision_error"] = json!(e.to_string());
                        sink.push(EventKind::PlanProposed, payload);
                    }
                }
                Session::transition(inner, SessionState::AwaitingApproval).expect("planning to awaiting_approval");
            });
        });
        Ok(s.view())
    }

    fn log_if_finished(&self, s: &Session) {
        let Some(path) = &self.config.session_log else { return };
        if !s.state().is_terminal() {
            return;
        }
        let line = serde_json::to_string(&s.view()).expect("view serializes");
        let written = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .and_then(|mut f| writeln!(f, "{line}"));
        if let Err(e) = written {
            tracing::warn!("session log {}: {e}", path.display());
        }
    }
}

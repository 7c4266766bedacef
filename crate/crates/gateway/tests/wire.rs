//! Exercises every endpoint over real HTTP against scripted backends.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use reqwest::{Client, StatusCode};
use serde_json::{json, Value};
use stormleg_core::data::default_data_dir;
use stormleg_core::eval::{Corpus, ScenarioCatalog};
use stormleg_core::provenance::Ledger;
use stormleg_core::registry::Registry;
use stormleg_gateway::{router, Gateway, GatewayConfig, ScriptedProvider};

const S02: &str = "What category was Hurricane Michael when it made landfall in Florida in 2018?";

struct Server {
    base: String,
    http: Client,
    token: Option<String>,
    dir: tempfile::TempDir,
}

/// S02 plus a revision answer, written next to a copy of the demo list.
fn catalog(dir: &std::path::Path) -> ScenarioCatalog {
    let data = default_data_dir();
    let mut script: Value = serde_json::from_str(&std::fs::read_to_string(data.join("scenarios/S02.json")).unwrap()).unwrap();
    let first = script["exchanges"][0].clone();
    let mut revised = first.clone();
    revised["match"]["ordinal"] = json!(1);
    script["exchanges"].as_array_mut().unwrap().push(revised);
    let path = dir.join("s02_revisable.json");
    std::fs::write(&path, script.to_string()).unwrap();
    let demos = json!([{
        "name": "s02-revisable",
        "query": "Revisable: what category was Hurricane Michael when it made landfall in Florida in 2018?",
        "scenario_script": path.file_name().unwrap().to_str().unwrap(),
        "fixtures_ref": data.join("fixtures"),
    }]);
    let demos_path = dir.join("demos.json");
    std::fs::write(&demos_path, demos.to_string()).unwrap();
    ScenarioCatalog::new(&Corpus::builtin().unwrap(), Some(&demos_path)).unwrap()
}

async fn start(mut config: GatewayConfig) -> Server {
    let dir = tempfile::tempdir().unwrap();
    config.session_log = Some(dir.path().join("sessions.jsonl"));
    config.revision_cap = 1;
    let token = config.token.clone();
    let gw = Gateway::new(
        Arc::new(Registry::builtin()),
        Arc::new(Ledger::in_memory()),
        Arc::new(ScriptedProvider::new(catalog(dir.path()))),
        config,
    );
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr: SocketAddr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(gw)).await.unwrap() });
    Server { base: format!("http://{addr}"), http: Client::new(), token, dir }
}

impl Server {
    fn req(&self, method: reqwest::Method, path: &str) -> reqwest::RequestBuilder {
        let b = self.http.request(method, format!("{}{path}", self.base));
        match &self.token {
            Some(t) => b.bearer_auth(t),
            None => b,
        }
    }

    async fn post(&self, path: &str, body: Value) -> (StatusCode, Value) {
        let r = self.req(reqwest::Method::POST, path).json(&body).send().await.unwrap();
        let status = r.status();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    async fn get(&self, path: &str) -> (StatusCode, Value) {
        let r = self.req(reqwest::Method::GET, path).send().await.unwrap();
        let status = r.status();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    async fn submit(&self, body: Value) -> String {
        let (status, v) = self.post("/sessions", body).await;
        assert_eq!(status, StatusCode::CREATED, "{v}");
        v["session_id"].as_str().unwrap().to_string()
    }

    async fn wait_for(&self, id: &str, state: &str) -> Value {
        for _ in 0..500 {
            let (_, v) = self.get(&format!("/sessions/{id}")).await;
            if v["state"] == state {
                return v;
            }
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
        panic!("session {id} never reached {state}");
    }

    /// Reads the event stream to its end, optionally resuming after `last`.
    async fn frames(&self, id: &str, last: Option<u64>) -> Vec<(String, u64, Value)> {
        let mut b = self.req(reqwest::Method::GET, &format!("/sessions/{id}/events"));
        if let Some(l) = last {
            b = b.header("Last-Event-ID", l.to_string());
        }
        let r = b.send().await.unwrap();
        assert_eq!(r.headers()["content-type"], "text/event-stream");
        let text = tokio::time::timeout(Duration::from_secs(20), r.text()).await.expect("stream ends").unwrap();
        parse_sse(&text)
    }
}

fn parse_sse(text: &str) -> Vec<(String, u64, Value)> {
    text.split("\n\n")
        .filter_map(|block| {
            let (mut kind, mut id, mut data) = (None, None, None);
            for line in block.lines() {
                if let Some(v) = line.strip_prefix("event: ").or_else(|| line.strip_prefix("event:")) {
                    kind = Some(v.to_string());
                } else if let Some(v) = line.strip_prefix("id: ").or_else(|| line.strip_prefix("id:")) {
                    id = v.parse().ok();
                } else if let Some(v) = line.strip_prefix("data: ").or_else(|| line.strip_prefix("data:")) {
                    data = serde_json::from_str(v).ok();
                }
            }
            Some((kind?, id?, data?))
        })
        .collect()
}

#[tokio::test]
async fn submit_approve_and_stream_to_the_report() {
    let srv = start(GatewayConfig::default()).await;
    let id = srv.submit(json!({"query": S02})).await;
    srv.wait_for(&id, "awaiting_approval").await;

    let (status, plan) = srv.get(&format!("/sessions/{id}/plan")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(plan["plan"]["topology"], "linear");
    assert_eq!(plan["node_count"], 2);

    let (status, v) = srv.post(&format!("/sessions/{id}/approve"), json!({})).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{v}");

    let frames = srv.frames(&id, None).await;
    let kinds: Vec<&str> = frames.iter().map(|f| f.0.as_str()).collect();
    assert_eq!(kinds.first(), Some(&"plan_proposed"));
    assert_eq!(kinds[1], "approved");
    assert_eq!(kinds.last(), Some(&"reported"));
    assert!(kinds.contains(&"node_started") && kinds.contains(&"tool_call") && kinds.contains(&"node_finished"));
    let seqs: Vec<u64> = frames.iter().map(|f| f.1).collect();
    assert_eq!(seqs, (0..frames.len() as u64).collect::<Vec<_>>(), "gapless and ordered");
    for (kind, seq, data) in &frames {
        assert_eq!(data["kind"], kind.as_str());
        assert_eq!(data["seq"], *seq);
        assert_eq!(data["session_id"], id.as_str());
    }

    // Replays are identical, and Last-Event-ID resumes after the given seq.
    assert_eq!(srv.frames(&id, None).await, frames);
    assert_eq!(srv.frames(&id, Some(2)).await, frames[3..].to_vec());

    let view = srv.wait_for(&id, "done").await;
    assert!(view["final_text"].as_str().unwrap().contains("Category 5"));
    let (status, result) = srv.get(&format!("/sessions/{id}/result")).await;
    assert_eq!(status, StatusCode::OK);
    let trace = result["trace_id"].as_str().unwrap().to_string();
    assert_eq!(view["trace_id"], trace.as_str());

    let (status, t) = srv.get(&format!("/traces/{trace}")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(t["query_text"], S02);
    assert_eq!(t["records"].as_array().unwrap().len(), result["dispatches"].as_u64().unwrap() as usize);
    let (_, filtered) = srv.get(&format!("/traces/{trace}?tool=nhc_get_best_track&outcome=ok")).await;
    assert_eq!(filtered["records"].as_array().unwrap().len(), 1);
    let (_, errors) = srv.get(&format!("/traces/{trace}?outcome=error")).await;
    assert!(errors["records"].as_array().unwrap().is_empty());

    let export = srv.req(reqwest::Method::GET, &format!("/traces/{trace}/export")).send().await.unwrap();
    assert_eq!(export.status(), StatusCode::OK);
    let doc = export.text().await.unwrap();
    let header: Value = serde_json::from_str(doc.lines().next().unwrap()).unwrap();
    assert_eq!(header["trace_id"], trace.as_str());

    let (_, traces) = srv.get("/traces").await;
    assert!(traces["traces"].as_array().unwrap().iter().any(|t| t == trace.as_str()));
    let (_, sessions) = srv.get("/sessions").await;
    assert_eq!(sessions["sessions"].as_array().unwrap().len(), 1);
    // The log line is written just after the final transition.
    let log_path = srv.dir.path().join("sessions.jsonl");
    for _ in 0..100 {
        if log_path.exists() {
            break;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    let log = std::fs::read_to_string(log_path).unwrap();
    assert_eq!(log.lines().count(), 1);
    assert!(log.contains("\"state\":\"done\""));
}

#[tokio::test]
async fn state_machine_rejects_illegal_calls() {
    let srv = start(GatewayConfig::default()).await;
    let id = srv.submit(json!({"query": S02})).await;
    srv.wait_for(&id, "awaiting_approval").await;
    let (status, _) = srv.post(&format!("/sessions/{id}/approve"), json!({})).await;
    assert_eq!(status, StatusCode::ACCEPTED);

    let (status, v) = srv.post(&format!("/sessions/{id}/approve"), json!({})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["error"], "illegal_transition");
    let (status, v) = srv.post(&format!("/sessions/{id}/revise"), json!({"feedback": "add usgs"})).await;
    assert_eq!(status, StatusCode::CONFLICT, "{v}");

    for path in ["/sessions/nope", "/sessions/nope/plan", "/sessions/nope/events", "/traces/nope", "/traces/nope/export"] {
        let (status, _) = srv.get(path).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{path}");
    }
    let (status, _) = srv.post("/sessions/nope/approve", json!({})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = srv.post("/sessions", json!({"query": "an unscripted question"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = srv.post("/sessions", json!({"query": S02, "fault": "graph_architect"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    // Every approved session carries its approve event before any node starts.
    srv.wait_for(&id, "done").await;
    let frames = srv.frames(&id, None).await;
    let approved = frames.iter().position(|f| f.0 == "approved").unwrap();
    let started = frames.iter().position(|f| f.0 == "node_started").unwrap();
    assert!(approved < started);
}

#[tokio::test]
async fn revise_reproposes_until_the_cap() {
    let srv = start(GatewayConfig::default()).await;
    let id = srv.submit(json!({"query": "ignored", "scenario": "S02-REVISABLE"})).await;
    srv.wait_for(&id, "awaiting_approval").await;

    let (status, v) = srv.post(&format!("/sessions/{id}/revise"), json!({"feedback": "   "})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{v}");
    let (status, v) = srv.post(&format!("/sessions/{id}/revise"), json!({"feedback": "keep it to nhc"})).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{v}");
    let view = srv.wait_for(&id, "awaiting_approval").await;
    assert_eq!(view["revision_count"], 1);

    let (status, v) = srv.post(&format!("/sessions/{id}/revise"), json!({"feedback": "again"})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["error"], "revision_cap_exceeded");

    srv.post(&format!("/sessions/{id}/approve"), json!({})).await;
    srv.wait_for(&id, "done").await;
    let kinds: Vec<String> = srv.frames(&id, None).await.into_iter().map(|f| f.0).collect();
    assert_eq!(&kinds[..3], ["plan_proposed", "plan_proposed", "approved"]);
}

#[tokio::test]
async fn fault_runs_finish_with_a_partial_answer() {
    let srv = start(GatewayConfig::default()).await;
    let query = Corpus::builtin().unwrap().get("M01").unwrap().query.clone();
    let id = srv.submit(json!({"query": query, "fault": "usgs"})).await;
    srv.wait_for(&id, "awaiting_approval").await;
    srv.post(&format!("/sessions/{id}/approve"), json!({})).await;
    let frames = srv.frames(&id, None).await;
    assert_eq!(frames.last().unwrap().0, "reported");
    let view = srv.wait_for(&id, "done").await;
    let trace = view["trace_id"].as_str().unwrap();
    let (_, errors) = srv.get(&format!("/traces/{trace}?outcome=error")).await;
    assert!(!errors["records"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn token_guards_every_route() {
    let srv = start(GatewayConfig { token: Some("s3cret".into()), ..GatewayConfig::default() }).await;
    let anon = srv.http.get(format!("{}/sessions", srv.base)).send().await.unwrap();
    assert_eq!(anon.status(), StatusCode::UNAUTHORIZED);
    let wrong = srv.http.get(format!("{}/health", srv.base)).bearer_auth("nope").send().await.unwrap();
    assert_eq!(wrong.status(), StatusCode::UNAUTHORIZED);
    let (status, _) = srv.get("/health").await;
    assert_eq!(status, StatusCode::OK);
    let id = srv.submit(json!({"query": S02})).await;
    let via_query = srv.http.get(format!("{}/sessions/{id}?token=s3cret", srv.base)).send().await.unwrap();
    assert_eq!(via_query.status(), StatusCode::OK);
}

#[tokio::test]
async fn console_bundle_is_served_when_configured() {
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<html>console</html>").unwrap();
    let srv = start(GatewayConfig { ui_dir: Some(PathBuf::from(ui.path())), ..GatewayConfig::default() }).await;
    let page = srv.http.get(format!("{}/index.html", srv.base)).send().await.unwrap();
    assert_eq!(page.status(), StatusCode::OK);
    assert!(page.text().await.unwrap().contains("console"));
    let (status, _) = srv.get("/health").await;
    assert_eq!(status, StatusCode::OK);
}

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use phish_core::decision::CascadeConfig;
use phish_core::message::load_corpus;
use phish_core::ontology::OntologyConfig;
use phish_core::pipeline::{Analyzer, Retriever};
use phish_core::retrieval::{build_index, AnnParams, EmbeddingProvider, HashingEmbedder, IndexItem};
use phish_core::rules::{FixtureResolver, RuleConfig};
use phish_service::{router, AppState, ServiceConfig, StoreOptions};
use serde_json::Value;
use tower::ServiceExt;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub const NAIVE: &str = "From: \"Patient Portal\" <security@mypatient-portal.tk>\r\n\
Subject: URGENT: Verify your patient account\r\n\
\r\n\
Dear patient, your portal access will be suspended. Visit http://198.45.123.67/portal-verify \
and log in with your password to keep access.\r\n";

pub fn resolver() -> Arc<FixtureResolver> {
    let mut text = std::fs::read_to_string(fixtures().join("rules/dns.jsonl")).unwrap();
    text.push_str(&std::fs::read_to_string(fixtures().join("eval/dns.jsonl")).unwrap());
    Arc::new(FixtureResolver::from_jsonl(&text).unwrap())
}

pub fn retriever(provider: Arc<dyn EmbeddingProvider>) -> Retriever {
    let items: Vec<IndexItem> = load_corpus(fixtures().join("index/corpus.jsonl"))
        .unwrap()
        .into_iter()
        .map(|m| IndexItem { id: m.id.clone(), text: m.content_text(), label: m.ground_truth })
        .collect();
    let index = build_index(&items, provider.as_ref(), AnnParams::default(), false).unwrap();
    Retriever::new(Arc::new(index), provider)
}

pub fn analyzer(with_retrieval: bool) -> Analyzer {
    let a = Analyzer::new(RuleConfig::default(), OntologyConfig::default(), CascadeConfig::default())
        .unwrap()
        .with_resolver(resolver());
    if with_retrieval {
        a.with_retriever(retriever(Arc::new(HashingEmbedder::default())))
    } else {
        a
    }
}

pub fn config(dir: &Path) -> ServiceConfig {
    let mut cfg = ServiceConfig::new(dir);
    cfg.store = StoreOptions { snapshot_every: 0, fsync: false };
    cfg
}

pub fn app(analyzer: Analyzer, cfg: &ServiceConfig) -> (Router, AppState) {
    let state = AppState::open(analyzer, cfg).unwrap();
    (router(state.clone(), None), state)
}

pub async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
    (status, value)
}

pub fn post_raw(body: impl Into<Body>) -> Request<Body> {
    Request::post("/api/analyze").header("content-type", "message/rfc822").body(body.into()).unwrap()
}

pub fn post_json(v: &Value) -> Request<Body> {
    Request::post("/api/analyze").header("content-type", "application/json").body(Body::from(v.to_string())).unwrap()
}

pub fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

pub fn decision(id: &str, decision: &str, reviewer: &str) -> Request<Body> {
    let body = serde_json::json!({ "decision": decision, "reviewer": reviewer });
    Request::post(format!("/api/queue/{id}/decision"))
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

/// Scores 3 with no DNS data: urgency plus a credential request.
pub fn review_item(i: usize) -> Value {
    serde_json::json!({
        "id": format!("q{i}"),
        "from": format!("ops@unlisted{i}.com"),
        "subject": "Urgent maintenance",
        "body": "Reply with your password before the window closes.",
    })
}

pub fn benign_item(i: usize) -> Value {
    serde_json::json!({
        "id": format!("b{i}"),
        "from": format!("colleague@unlisted{i}.com"),
        "subject": "Team lunch",
        "body": "The sprint review moved to Thursday.",
    })
}

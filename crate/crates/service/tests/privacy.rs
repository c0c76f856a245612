mod common;

use std::sync::{Arc, Mutex};

use axum::http::StatusCode;
use common::*;
use phish_core::message::CorpusRecord;
use phish_core::redaction::scan_exposure;
use phish_core::retrieval::{EmbeddingProvider, HashingEmbedder, RetrievalError};
use phish_core::textgen::{Generation, TextGenError, TextGenProvider};
use serde_json::Value;

#[derive(Default)]
struct Outbox(Mutex<Vec<String>>);

struct RecordingEmbedder {
    inner: HashingEmbedder,
    outbox: Arc<Outbox>,
}

impl EmbeddingProvider for RecordingEmbedder {
    fn id(&self) -> &str {
        self.inner.id()
    }
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }
    fn embed_raw(&self, text: &str) -> Result<Vec<f64>, RetrievalError> {
        self.outbox.0.lock().unwrap().push(text.to_string());
        self.inner.embed_raw(text)
    }
}

struct RecordingTextGen {
    outbox: Arc<Outbox>,
}

impl TextGenProvider for RecordingTextGen {
    fn id(&self) -> &str {
        "recording"
    }
    fn generate(&self, prompt: &str, _max_tokens: u32) -> Result<Generation, TextGenError> {
        self.outbox.0.lock().unwrap().push(prompt.to_string());
        Ok(Generation {
            text: "[CONTENT] Asks the reader to act on an account.".into(),
            prompt_tokens: None,
            completion_tokens: None,
        })
    }
}

/// Every string value in a JSON document except content digests.
fn strings<'a>(v: &'a Value, key: &str, out: &mut Vec<&'a str>) {
    match v {
        Value::String(s) if key != "digest" => out.push(s),
        Value::Array(xs) => xs.iter().for_each(|x| strings(x, key, out)),
        Value::Object(m) => m.iter().for_each(|(k, x)| strings(x, k, out)),
        _ => {}
    }
}

fn exposed(text: &str) -> Vec<String> {
    let mut hits = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let v: Value = serde_json::from_str(line).unwrap();
        let mut out = Vec::new();
        strings(&v, "", &mut out);
        hits.extend(out.into_iter().filter(|s| scan_exposure(s).exposure).map(str::to_string));
    }
    hits
}

#[tokio::test]
async fn two_hundred_analyses_leave_no_exposed_pii() {
    let outbox = Arc::new(Outbox::default());
    let embedder = Arc::new(RecordingEmbedder { inner: HashingEmbedder::default(), outbox: outbox.clone() });
    let analyzer = analyzer(false)
        .with_retriever(retriever(embedder))
        .with_explainer(Arc::new(RecordingTextGen { outbox: outbox.clone() }));
    outbox.0.lock().unwrap().clear();

    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.store.snapshot_every = 50;
    let (app, state) = app(analyzer, &cfg);

    let corpus = std::fs::read_to_string(fixtures().join("eval/corpus.jsonl")).unwrap();
    let items: Vec<CorpusRecord> = corpus.lines().take(200).map(|l| serde_json::from_str(l).unwrap()).collect();
    let with_pii = items.iter().filter(|r| scan_exposure(&r.body).exposure).count();
    assert!(with_pii >= 50, "fixture should carry PII, found {with_pii}");
    for item in &items {
        let (status, _) = send(&app, post_json(&serde_json::to_value(item).unwrap())).await;
        assert_eq!(status, StatusCode::OK);
    }
    for rec in state.store.pending().iter().take(10) {
        assert_eq!(send(&app, decision(&rec.id, "mark_benign", "jordan.lee@example.org")).await.0, StatusCode::OK);
    }
    assert_eq!(state.store.len(), 200);

    let payloads = outbox.0.lock().unwrap().clone();
    assert!(payloads.len() >= 400, "embedding and explanation payloads recorded: {}", payloads.len());
    let leaked: Vec<&String> = payloads.iter().filter(|p| scan_exposure(p).exposure).collect();
    assert!(leaked.is_empty(), "outbound payload exposure: {leaked:?}");

    for file in ["events.jsonl", "audit.jsonl"] {
        let text = std::fs::read_to_string(dir.path().join(file)).unwrap();
        let hits = exposed(&text);
        assert!(hits.is_empty(), "{file}: {hits:?}");
    }
    let snap = std::fs::read_to_string(dir.path().join("snapshot.json")).unwrap();
    assert!(exposed(&snap).is_empty());
}

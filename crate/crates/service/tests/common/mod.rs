//! Fixture loading and controller construction shared by the service tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use prospectus_core::evidence::BaselineBackend;
use prospectus_core::{DeciderConfig, Document, TargetType};
use prospectus_service::commands::parse_documents;
use prospectus_service::{Controller, DocumentStore, MemoryStore, PredictResponse};

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn corpus_path() -> PathBuf {
    fixtures_dir().join("corpus.jsonl")
}

/// The committed corpus with its gold annotations.
pub fn committed_corpus() -> Vec<Document> {
    let raw = std::fs::read_to_string(corpus_path()).expect("committed corpus present");
    parse_documents(&raw).expect("committed corpus parses")
}

/// A fixture as a raw document, ready for predict.
pub fn raw(doc: &Document) -> Document {
    let mut d = doc.clone();
    d.annotations.clear();
    d
}

pub fn golden_path(id: &str) -> PathBuf {
    fixtures_dir().join("golden").join(format!("{id}.json"))
}

/// Golden file rendering of a response: pretty JSON with zeroed timings.
pub fn golden_text(resp: &PredictResponse) -> String {
    let mut s = serde_json::to_string_pretty(&resp.clone().without_timings()).unwrap();
    s.push('\n');
    s
}

pub fn controller_with(store: Arc<dyn DocumentStore>) -> Controller {
    Controller::new(store, Arc::new(BaselineBackend::default()), DeciderConfig::default())
}

pub fn memory_controller() -> Controller {
    controller_with(Arc::new(MemoryStore::new()))
}

/// `doc` without its currency evidence.
pub fn without_currency(doc: &Document) -> Document {
    let mut d = doc.clone();
    d.annotations.retain(|a| a.target != TargetType::Currency);
    d
}

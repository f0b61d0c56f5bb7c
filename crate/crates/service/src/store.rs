//! Document persistence as an append-only event log per document.
//!
//! The current state of a document is never written directly; it is the
//! fold of its events ([`replay`]). Feedback records are appended and never
//! rewritten, so the log doubles as the audit trail.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use prospectus_core::decider::Verdict;
use prospectus_core::doc_model::annotation_violations;
use prospectus_core::{Annotation, Document};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackAction {
    Confirmed,
    Edited,
    Added,
    Deleted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationFeedback {
    pub annotation_id: String,
    pub action: FeedbackAction,
}

/// A reviewer's verdict on the annotations of one document.
///
/// `annotations` holds the resulting version of every confirmed, edited or
/// added annotation; deleted ids must not appear in it. Annotations in the
/// set without an explicit action count as edits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub document_id: String,
    pub reviewer_id: String,
    #[serde(default)]
    pub actions: Vec<AnnotationFeedback>,
    #[serde(default)]
    pub annotations: Vec<Annotation>,
    /// Set by the service on receipt when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<DateTime<Utc>>,
}

impl FeedbackRecord {
    /// Problems that make the record unusable for a document of `text_len` chars.
    pub fn violations(&self, text_len: usize) -> Vec<String> {
        let mut out = Vec::new();
        let mut in_set = BTreeMap::new();
        for (i, a) in self.annotations.iter().enumerate() {
            match &a.id {
                None => out.push(format!("annotation {i}: missing id")),
                Some(id) => {
                    if in_set.insert(id.as_str(), i).is_some() {
                        out.push(format!("annotation id {id:?} appears twice"));
                    }
                }
            }
            out.extend(annotation_violations(a, text_len).into_iter().map(|v| format!("annotation {i}: {v}")));
        }
        for f in &self.actions {
            let present = in_set.contains_key(f.annotation_id.as_str());
            match (f.action, present) {
                (FeedbackAction::Deleted, true) => {
                    out.push(format!("deleted annotation {:?} is still in the resulting set", f.annotation_id))
                }
                (FeedbackAction::Deleted, false) => {}
                (_, false) => out
                    .push(format!("{:?} annotation {:?} is missing from the resulting set", f.action, f.annotation_id)),
                (_, true) => {}
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum StoreEvent {
    /// A new or replaced document; its annotations become the current set.
    Ingested {
        document: Document,
    },
    /// Model output for the current text.
    Predicted {
        annotations: Vec<Annotation>,
        verdict: Verdict,
        model_version: String,
        config_version: String,
    },
    Feedback {
        record: FeedbackRecord,
    },
}

/// Materialized view of one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredDocument {
    /// The document with its current annotation set.
    pub document: Document,
    #[serde(default)]
    pub predicted: Vec<Annotation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_version: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_version: Option<String>,
    /// Set once a reviewer has confirmed or corrected the annotations.
    pub export_eligible: bool,
    pub feedback_count: usize,
}

fn apply_feedback(current: &mut Vec<Annotation>, record: &FeedbackRecord) {
    let mut by_id: BTreeMap<String, Annotation> = BTreeMap::new();
    let mut anonymous = Vec::new();
    for a in current.drain(..) {
        match a.id.clone() {
            Some(id) => {
                by_id.insert(id, a);
            }
            None => anonymous.push(a),
        }
    }
    for f in &record.actions {
        if f.action == FeedbackAction::Deleted {
            by_id.remove(&f.annotation_id);
        }
    }
    for a in &record.annotations {
        if let Some(id) = &a.id {
            by_id.insert(id.clone(), a.clone());
        }
    }
    current.extend(anonymous);
    current.extend(by_id.into_values());
    current.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()).then_with(|| a.id.cmp(&b.id)));
}

/// Folds a document's events into its current state. `None` until the
/// document has been ingested.
pub fn replay(events: &[StoreEvent]) -> Option<StoredDocument> {
    let mut state: Option<StoredDocument> = None;
    for event in events {
        match event {
            StoreEvent::Ingested { document } => {
                state = Some(StoredDocument {
                    document: document.clone(),
                    predicted: Vec::new(),
                    verdict: None,
                    model_version: None,
                    config_version: None,
                    export_eligible: false,
                    feedback_count: 0,
                });
            }
            StoreEvent::Predicted { annotations, verdict, model_version, config_version } => {
                if let Some(s) = state.as_mut() {
                    s.document.annotations = annotations.clone();
                    s.predicted = annotations.clone();
                    s.verdict = Some(verdict.clone());
                    s.model_version = Some(model_version.clone());
                    s.config_version = Some(config_version.clone());
                    s.export_eligible = false;
                }
            }
            StoreEvent::Feedback { record } => {
                if let Some(s) = state.as_mut() {
                    apply_feedback(&mut s.document.annotations, record);
                    s.export_eligible = true;
                    s.feedback_count += 1;
                }
            }
        }
    }
    state
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("document {0:?} not found")]
    NotFound(String),
    #[error("store I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt store record for {id:?}: {message}")]
    Corrupt { id: String, message: String },
}

/// Key-value document store holding one event log per document id.
pub trait DocumentStore: Send + Sync {
    /// Appends an event; writes to one document are serialized.
    fn append(&self, id: &str, event: StoreEvent) -> Result<(), StoreError>;

    /// The full event log of a document, oldest first; empty if unknown.
    fn events(&self, id: &str) -> Result<Vec<StoreEvent>, StoreError>;

    /// All document ids, sorted.
    fn ids(&self) -> Result<Vec<String>, StoreError>;

    fn get(&self, id: &str) -> Result<Option<StoredDocument>, StoreError> {
        Ok(replay(&self.events(id)?))
    }

    /// Appends a feedback event if the document exists.
    fn append_feedback(&self, record: FeedbackRecord) -> Result<StoredDocument, StoreError> {
        let id = record.document_id.clone();
        if self.get(&id)?.is_none() {
            return Err(StoreError::NotFound(id));
        }
        self.append(&id, StoreEvent::Feedback { record })?;
        self.get(&id)?.ok_or(StoreError::NotFound(id))
    }
}

#[derive(Default)]
pub struct MemoryStore {
    logs: Mutex<BTreeMap<String, Vec<StoreEvent>>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl DocumentStore for MemoryStore {
    fn append(&self, id: &str, event: StoreEvent) -> Result<(), StoreError> {
        self.logs.lock().expect("store lock").entry(id.to_string()).or_default().push(event);
        Ok(())
    }

    fn events(&self, id: &str) -> Result<Vec<StoreEvent>, StoreError> {
        Ok(self.logs.lock().expect("store lock").get(id).cloned().unwrap_or_default())
    }

    fn ids(&self) -> Result<Vec<String>, StoreError> {
        Ok(self.logs.lock().expect("store lock").keys().cloned().collect())
    }
}

/// One JSON-lines log file per document under `root/documents/`.
pub struct FileStore {
    dir: PathBuf,
    locks: Mutex<BTreeMap<String, Arc<Mutex<()>>>>,
}

/// File name for a document id: safe characters pass through, everything
/// else becomes `%XX` per UTF-8 byte.
fn file_name(id: &str) -> String {
    let mut out = String::new();
    for b in id.bytes() {
        if b.is_ascii_alphanumeric() || b == b'-' || b == b'_' {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out.push_str(".jsonl");
    out
}

fn id_from_file_name(name: &str) -> Option<String> {
    let stem = name.strip_suffix(".jsonl")?;
    let mut bytes = Vec::new();
    let mut iter = stem.bytes();
    while let Some(b) = iter.next() {
        if b == b'%' {
            let hex = [iter.next()?, iter.next()?];
            bytes.push(u8::from_str_radix(std::str::from_utf8(&hex).ok()?, 16).ok()?);
        } else {
            bytes.push(b);
        }
    }
    String::from_utf8(bytes).ok()
}

impl FileStore {
    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = root.as_ref().join("documents");
        fs::create_dir_all(&dir)?;
        Ok(FileStore { dir, locks: Mutex::new(BTreeMap::new()) })
    }

    fn lock_for(&self, id: &str) -> Arc<Mutex<()>> {
        self.locks.lock().expect("lock table").entry(id.to_string()).or_default().clone()
    }

    fn path(&self, id: &str) -> PathBuf {
        self.dir.join(file_name(id))
    }
}

impl DocumentStore for FileStore {
    fn append(&self, id: &str, event: StoreEvent) -> Result<(), StoreError> {
        let lock = self.lock_for(id);
        let _guard = lock.lock().expect("document lock");
        let mut line = serde_json::to_string(&event)
            .map_err(|e| StoreError::Corrupt { id: id.to_string(), message: e.to_string() })?;
        line.push('\n');
        let mut file = OpenOptions::new().create(true).append(true).open(self.path(id))?;
        file.write_all(line.as_bytes())?;
        file.sync_data()?;
        Ok(())
    }

    fn events(&self, id: &str) -> Result<Vec<StoreEvent>, StoreError> {
        let lock = self.lock_for(id);
        let _guard = lock.lock().expect("document lock");
        let file = match File::open(self.path(id)) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut events = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            events.push(
                serde_json::from_str(&line)
                    .map_err(|e| StoreError::Corrupt { id: id.to_string(), message: format!("line {}: {e}", n + 1) })?,
            );
        }
        Ok(events)
    }

    fn ids(&self) -> Result<Vec<String>, StoreError> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let name = entry?.file_name();
            if let Some(id) = name.to_str().and_then(id_from_file_name) {
                ids.push(id);
            }
        }
        ids.sort();
        Ok(ids)
    }
}

//! The controller mediating between evidence backend, decider and store.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use chrono::Utc;
use prospectus_core::bio::{build_training_examples, TrainingExample, DEFAULT_MAX_SEQ_LEN, DEFAULT_STRIDE};
use prospectus_core::decider::DeciderConfig;
use prospectus_core::doc_model::validate_document;
use prospectus_core::{decide_document, Annotation, Criterion, Document, EvidenceBackend, Span, Verdict};
use serde::{Deserialize, Serialize};

use crate::store::{DocumentStore, FeedbackRecord, StoreError, StoreEvent, StoredDocument};

/// Wall-clock durations in milliseconds; the only non-deterministic part of
/// a response.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub detect_ms: f64,
    pub decide_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub document_id: String,
    pub verdict: Verdict,
    pub annotations: Vec<Annotation>,
    pub explanations: BTreeMap<Criterion, String>,
    pub model_version: String,
    pub config_version: String,
    pub timings: Timings,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl PredictResponse {
    /// The response with timings zeroed, for comparisons across runs.
    pub fn without_timings(mut self) -> Self {
        self.timings = Timings::default();
        self
    }

    /// Fragments cited by any decision that fall outside `text_len` chars.
    pub fn fragment_violations(&self, text_len: usize) -> Vec<String> {
        let mut out = Vec::new();
        for d in &self.verdict.decisions {
            let cited = d.supporting_fragments.iter().chain(d.alternatives.iter().flat_map(|a| &a.fragments));
            for f in cited {
                if f.start >= f.end || f.end > text_len {
                    out.push(format!("{}: fragment {f} outside [0,{text_len})", d.criterion));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackAck {
    pub document_id: String,
    pub feedback_count: usize,
    pub export_eligible: bool,
    pub annotations: Vec<Annotation>,
    /// The verdict recomputed from the updated annotation set.
    pub verdict: Verdict,
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("invalid request: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("document {0:?} not found")]
    NotFound(String),
    #[error(transparent)]
    Store(StoreError),
}

impl From<StoreError> for ServiceError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(id) => ServiceError::NotFound(id),
            other => ServiceError::Store(other),
        }
    }
}

/// Training export plus the documents that could not be encoded.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Export {
    pub jsonl: String,
    pub skipped: Vec<(String, String)>,
}

pub struct Controller {
    pub store: Arc<dyn DocumentStore>,
    pub backend: Arc<dyn EvidenceBackend>,
    pub config: Arc<DeciderConfig>,
    pub model_version: String,
    pub max_seq_len: usize,
    pub stride: usize,
}

fn millis(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1000.0
}

/// Content-derived id, stable across identical predictions.
pub fn annotation_id(a: &Annotation) -> String {
    let spans: Vec<String> = a.fragments.iter().map(|f| format!("{}-{}", f.start, f.end)).collect();
    format!("{}@{}", a.target, spans.join("+"))
}

/// Gives every annotation without an id its content-derived one,
/// disambiguating repeats with a counter suffix.
pub fn assign_ids(annotations: &mut [Annotation]) {
    let mut taken: BTreeMap<String, usize> = BTreeMap::new();
    for a in annotations.iter() {
        if let Some(id) = &a.id {
            taken.insert(id.clone(), 1);
        }
    }
    for a in annotations.iter_mut().filter(|a| a.id.is_none()) {
        let base = annotation_id(a);
        let mut id = base.clone();
        while let Some(n) = taken.get_mut(&id).map(|n| {
            *n += 1;
            *n
        }) {
            id = format!("{base}#{n}");
        }
        taken.insert(id.clone(), 1);
        a.id = Some(id);
    }
}

fn explanations(verdict: &Verdict) -> BTreeMap<Criterion, String> {
    verdict.decisions.iter().map(|d| (d.criterion, d.explanation.clone())).collect()
}

fn check_fragments(fragments: &[Span], text_len: usize) -> bool {
    fragments.iter().all(|f| f.end <= text_len)
}

impl Controller {
    pub fn new(store: Arc<dyn DocumentStore>, backend: Arc<dyn EvidenceBackend>, config: DeciderConfig) -> Self {
        let model_version = backend.name().to_string();
        Controller {
            store,
            backend,
            config: Arc::new(config),
            model_version,
            max_seq_len: DEFAULT_MAX_SEQ_LEN,
            stride: DEFAULT_STRIDE,
        }
    }

    pub fn with_model_version(mut self, version: impl Into<String>) -> Self {
        self.model_version = version.into();
        self
    }

    fn validate(&self, doc: &Document) -> Result<(), ServiceError> {
        let violations = validate_document(doc);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(ServiceError::Invalid(violations))
        }
    }

    fn respond(
        &self,
        doc: &Document,
        annotations: Vec<Annotation>,
        warnings: Vec<String>,
        detect_ms: f64,
        start: Instant,
    ) -> PredictResponse {
        let t = Instant::now();
        let verdict = decide_document(&doc.text, &annotations, &doc.metadata, &self.config);
        let decide_ms = millis(t);
        debug_assert!(verdict.decisions.iter().all(|d| check_fragments(&d.supporting_fragments, doc.char_len())));
        PredictResponse {
            document_id: doc.id.clone(),
            explanations: explanations(&verdict),
            verdict,
            annotations,
            model_version: self.model_version.clone(),
            config_version: self.config.version.clone(),
            timings: Timings { detect_ms, decide_ms, total_ms: millis(start) },
            warnings,
        }
    }

    /// Runs evidence detection and the decider on a raw document and stores
    /// both. Submitted annotations are ignored.
    pub fn predict(&self, mut doc: Document) -> Result<PredictResponse, ServiceError> {
        let start = Instant::now();
        self.validate(&doc)?;
        let mut warnings = Vec::new();
        if !doc.annotations.is_empty() {
            warnings.push(format!("ignored {} submitted annotations", doc.annotations.len()));
            doc.annotations.clear();
        }

        let t = Instant::now();
        let detected = self.backend.detect_with_warnings(&doc);
        let detect_ms = millis(t);
        let response = match detected {
            Ok((mut annotations, backend_warnings)) => {
                warnings.extend(backend_warnings);
                assign_ids(&mut annotations);
                self.respond(&doc, annotations, warnings, detect_ms, start)
            }
            Err(e) => {
                warnings.push(format!("degraded: {e}"));
                let verdict = Verdict::all_review(&format!("evidence detection unavailable: {e}"));
                PredictResponse {
                    document_id: doc.id.clone(),
                    explanations: explanations(&verdict),
                    verdict,
                    annotations: Vec::new(),
                    model_version: self.model_version.clone(),
                    config_version: self.config.version.clone(),
                    timings: Timings { detect_ms, decide_ms: 0.0, total_ms: millis(start) },
                    warnings,
                }
            }
        };

        self.store.append(&doc.id, StoreEvent::Ingested { document: doc.clone() })?;
        self.store.append(
            &doc.id,
            StoreEvent::Predicted {
                annotations: response.annotations.clone(),
                verdict: response.verdict.clone(),
                model_version: response.model_version.clone(),
                config_version: response.config_version.clone(),
            },
        )?;
        Ok(response)
    }

    /// Decides on the submitted annotations only; touches neither backend
    /// nor store.
    pub fn decide(&self, doc: &Document) -> Result<PredictResponse, ServiceError> {
        let start = Instant::now();
        self.validate(doc)?;
        Ok(self.respond(doc, doc.annotations.clone(), Vec::new(), 0.0, start))
    }

    /// Stores a document as given, assigning ids to its annotations.
    pub fn ingest(&self, mut doc: Document) -> Result<StoredDocument, ServiceError> {
        self.validate(&doc)?;
        assign_ids(&mut doc.annotations);
        let id = doc.id.clone();
        self.store.append(&id, StoreEvent::Ingested { document: doc })?;
        self.get(&id)
    }

    pub fn get(&self, id: &str) -> Result<StoredDocument, ServiceError> {
        self.store.get(id)?.ok_or_else(|| ServiceError::NotFound(id.to_string()))
    }

    pub fn submit_feedback(&self, mut record: FeedbackRecord) -> Result<FeedbackAck, ServiceError> {
        let current = self.get(&record.document_id)?;
        let violations = record.violations(current.document.char_len());
        if !violations.is_empty() {
            return Err(ServiceError::Invalid(violations));
        }
        record.timestamp.get_or_insert_with(Utc::now);
        let updated = self.store.append_feedback(record)?;
        let doc = &updated.document;
        let verdict = decide_document(&doc.text, &doc.annotations, &doc.metadata, &self.config);
        Ok(FeedbackAck {
            document_id: doc.id.clone(),
            feedback_count: updated.feedback_count,
            export_eligible: updated.export_eligible,
            annotations: doc.annotations.clone(),
            verdict,
        })
    }

    /// Training examples of every export-eligible document, ordered by
    /// document id then window. Documents whose annotations cannot be
    /// encoded are reported in `skipped`.
    pub fn export_training(&self) -> Result<Export, ServiceError> {
        let mut export = Export::default();
        for id in self.store.ids()? {
            let Some(stored) = self.store.get(&id)? else { continue };
            if !stored.export_eligible {
                continue;
            }
            match build_training_examples(&stored.document, self.max_seq_len, self.stride) {
                Ok(examples) => {
                    for ex in examples {
                        export.jsonl.push_str(&training_line(&ex));
                        export.jsonl.push('\n');
                    }
                }
                Err(e) => export.skipped.push((id, e.to_string())),
            }
        }
        Ok(export)
    }
}

fn training_line(ex: &TrainingExample) -> String {
    serde_json::to_string(ex).expect("training example serializes")
}

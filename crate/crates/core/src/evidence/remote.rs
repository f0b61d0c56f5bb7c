//! Client for an external model server that returns BIO label grids.
//!
//! Wire protocol, one POST per (type, token window) to
//! `{endpoint}/predict/{model_id}`:
//!
//! ```text
//! request:  {"doc_id": "...", "type": "currency", "tokens": ["..."], "window": [start, end]}
//! response: {"scores": [[b, i, o], ...]}   // log-probabilities, one row per token
//! ```

use std::collections::BTreeMap;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::DetectError;
use crate::bio::{decode_runs, windows, DEFAULT_MAX_SEQ_LEN, DEFAULT_STRIDE};
use crate::decode::{constrained_viterbi, span_confidence, LabelGrid, TransitionMatrix};
use crate::doc_model::{Annotation, Document, Source, Span, TargetType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteModelConfig {
    pub endpoint: String,
    pub timeout_ms: u64,
    /// Model identifier per type; types without an entry are not queried.
    pub models: BTreeMap<TargetType, String>,
    #[serde(default = "default_max_seq_len")]
    pub max_seq_len: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_max_seq_len() -> usize {
    DEFAULT_MAX_SEQ_LEN
}

fn default_stride() -> usize {
    DEFAULT_STRIDE
}

impl RemoteModelConfig {
    /// One model per type, named after the type.
    pub fn new(endpoint: impl Into<String>) -> Self {
        RemoteModelConfig {
            endpoint: endpoint.into(),
            timeout_ms: 10_000,
            models: TargetType::ALL.iter().map(|t| (*t, t.as_str().to_string())).collect(),
            max_seq_len: DEFAULT_MAX_SEQ_LEN,
            stride: DEFAULT_STRIDE,
        }
    }

    pub fn validate(&self) -> Result<(), DetectError> {
        if self.timeout_ms == 0 {
            return Err(DetectError::Config("timeout must be > 0".into()));
        }
        if self.max_seq_len < 2 || self.stride == 0 || self.stride > self.max_seq_len {
            return Err(DetectError::Config(format!(
                "invalid window settings max_seq_len={} stride={}",
                self.max_seq_len, self.stride
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridRequest {
    pub doc_id: String,
    #[serde(rename = "type")]
    pub target: TargetType,
    pub tokens: Vec<String>,
    pub window: [usize; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridResponse {
    pub scores: Vec<[f64; 3]>,
}

/// Detects evidence by querying a model server per type and window, decoding
/// each grid with constrained Viterbi.
pub fn detect_remote(
    doc: &Document,
    cfg: &RemoteModelConfig,
    transitions: &TransitionMatrix,
) -> Result<Vec<Annotation>, DetectError> {
    cfg.validate()?;
    let agent = ureq::AgentBuilder::new().timeout(Duration::from_millis(cfg.timeout_ms)).build();

    let per_type: Vec<Result<Vec<Annotation>, DetectError>> = thread::scope(|scope| {
        let handles: Vec<_> = cfg
            .models
            .iter()
            .map(|(target, model)| {
                let agent = agent.clone();
                scope.spawn(move || detect_type(&agent, doc, cfg, *target, model, transitions))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(DetectError::Protocol("worker panicked".into()))))
            .collect()
    });

    let mut all = Vec::new();
    for r in per_type {
        all.extend(r?);
    }
    Ok(merge_duplicates(all))
}

fn detect_type(
    agent: &ureq::Agent,
    doc: &Document,
    cfg: &RemoteModelConfig,
    target: TargetType,
    model: &str,
    transitions: &TransitionMatrix,
) -> Result<Vec<Annotation>, DetectError> {
    let url = format!("{}/predict/{}", cfg.endpoint.trim_end_matches('/'), model);
    let mut out = Vec::new();
    for window in windows(doc.tokens.len(), cfg.max_seq_len, cfg.stride) {
        let toks = &doc.tokens[window.clone()];
        let request = GridRequest {
            doc_id: doc.id.clone(),
            target,
            tokens: toks.iter().map(|t| t.surface.clone()).collect(),
            window: [window.start, window.end],
        };
        let response: GridResponse = match agent.post(&url).send_json(&request) {
            Ok(resp) => {
                resp.into_json().map_err(|e| DetectError::Protocol(format!("{target}: unreadable response: {e}")))?
            }
            Err(ureq::Error::Status(code, _)) if code >= 500 => {
                return Err(DetectError::BackendUnavailable(format!("{url}: HTTP {code}")))
            }
            Err(ureq::Error::Status(code, _)) => return Err(DetectError::Protocol(format!("{url}: HTTP {code}"))),
            Err(ureq::Error::Transport(t)) => return Err(DetectError::BackendUnavailable(format!("{url}: {t}"))),
        };
        if response.scores.len() != toks.len() {
            return Err(DetectError::Protocol(format!(
                "{target}: grid has {} rows for a window of {} tokens",
                response.scores.len(),
                toks.len()
            )));
        }
        let grid =
            LabelGrid::new(target, response.scores).map_err(|e| DetectError::Protocol(format!("{target}: {e}")))?;
        let decoded = constrained_viterbi(&grid, transitions);
        for run in decode_runs(&decoded.tags) {
            let confidence = span_confidence(&grid, &decoded.tags, run.tokens.clone())
                .map_err(|e| DetectError::Protocol(format!("{target}: {e}")))?;
            let span = Span::new(toks[run.tokens.start].start, toks[run.tokens.end - 1].end);
            out.push(Annotation::single(target, span, Source::Model, confidence));
        }
    }
    Ok(out)
}

/// Sorts by (type, start, end) and collapses identical (type, fragments)
/// pairs, keeping the highest confidence. Partially overlapping spans from
/// adjacent windows are all kept.
pub fn merge_duplicates(mut anns: Vec<Annotation>) -> Vec<Annotation> {
    anns.sort_by(|a, b| {
        a.sort_key()
            .cmp(&b.sort_key())
            .then_with(|| a.fragments.cmp(&b.fragments))
            .then(b.confidence.total_cmp(&a.confidence))
    });
    anns.dedup_by(|later, earlier| later.target == earlier.target && later.fragments == earlier.fragments);
    anns
}

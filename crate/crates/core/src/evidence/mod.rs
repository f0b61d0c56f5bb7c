//! Evidence detection: locating criterion-relevant text passages.
//!
//! Two backends sit behind [`EvidenceBackend`]: a deterministic rule set
//! ([`baseline`]) and a client for an external neural model server
//! ([`remote`]).

pub mod baseline;
pub mod isin;
pub mod remote;

use std::fmt;

pub use baseline::{default_rules, GazetteerRule, Matcher, RuleSet, Validator};
pub use isin::{isin_check_digit, validate_isin};
pub use remote::{detect_remote, RemoteModelConfig};

use crate::decode::TransitionMatrix;
use crate::doc_model::{Annotation, Document};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DetectError {
    #[error("model backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("model backend protocol error: {0}")]
    Protocol(String),
    #[error("invalid backend configuration: {0}")]
    Config(String),
}

pub trait EvidenceBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Annotations sorted by (type, start, end).
    fn detect(&self, doc: &Document) -> Result<Vec<Annotation>, DetectError>;

    /// Like [`detect`](Self::detect), plus non-fatal problems worth surfacing to the caller.
    fn detect_with_warnings(&self, doc: &Document) -> Result<(Vec<Annotation>, Vec<String>), DetectError> {
        self.detect(doc).map(|a| (a, Vec::new()))
    }
}

/// Runs [`RuleSet::detect`].
pub struct BaselineBackend {
    rules: RuleSet,
}

impl BaselineBackend {
    pub fn new(rules: RuleSet) -> Self {
        BaselineBackend { rules }
    }
}

impl Default for BaselineBackend {
    fn default() -> Self {
        BaselineBackend::new(RuleSet::default_rules())
    }
}

impl EvidenceBackend for BaselineBackend {
    fn name(&self) -> &str {
        "baseline"
    }

    fn detect(&self, doc: &Document) -> Result<Vec<Annotation>, DetectError> {
        Ok(self.rules.detect(doc))
    }
}

pub struct RemoteBackend {
    pub config: RemoteModelConfig,
    pub transitions: TransitionMatrix,
}

impl EvidenceBackend for RemoteBackend {
    fn name(&self) -> &str {
        "remote"
    }

    fn detect(&self, doc: &Document) -> Result<Vec<Annotation>, DetectError> {
        detect_remote(doc, &self.config, &self.transitions)
    }
}

/// Union of a remote and a baseline backend. When the remote side is
/// unavailable, baseline results are returned alone with a warning.
pub struct CombinedBackend {
    pub remote: RemoteBackend,
    pub baseline: BaselineBackend,
}

impl EvidenceBackend for CombinedBackend {
    fn name(&self) -> &str {
        "both"
    }

    fn detect(&self, doc: &Document) -> Result<Vec<Annotation>, DetectError> {
        self.detect_with_warnings(doc).map(|(a, _)| a)
    }

    fn detect_with_warnings(&self, doc: &Document) -> Result<(Vec<Annotation>, Vec<String>), DetectError> {
        let mut anns = self.baseline.rules.detect(doc);
        let mut warnings = Vec::new();
        match self.remote.detect(doc) {
            Ok(remote) => anns.extend(remote),
            Err(e) => warnings.push(format!("remote backend skipped: {e}")),
        }
        Ok((remote::merge_duplicates(anns), warnings))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Baseline,
    Remote,
    Both,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Baseline => "baseline",
            BackendKind::Remote => "remote",
            BackendKind::Both => "both",
        })
    }
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(BackendKind::Baseline),
            "remote" => Ok(BackendKind::Remote),
            "both" => Ok(BackendKind::Both),
            other => Err(format!("unknown backend `{other}` (expected baseline, remote or both)")),
        }
    }
}

//! Core library for semi-automatic eligibility review of bond prospectuses.
//!
//! Evidence detection produces character-offset annotations over the
//! prospectus text; the decider turns them into per-criterion outcomes and an
//! overall verdict; the evaluation module scores annotations against gold.

pub mod bio;
pub mod decider;
pub mod decode;
pub mod doc_model;
pub mod evaluation;
pub mod evidence;
pub mod fixtures;

pub use bio::{decode_bio, encode_bio, BioTag, TaggedSequence};
pub use decider::{decide_document, CriterionDecision, DeciderConfig, Outcome, Verdict};
pub use decode::{constrained_viterbi, span_confidence, LabelGrid, TransitionMatrix};
pub use doc_model::{Annotation, Criterion, Document, DocumentMetadata, Source, Span, TargetType, Token};
pub use evidence::{BackendKind, DetectError, EvidenceBackend};

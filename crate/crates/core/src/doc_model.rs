//! Documents, tokens, annotations and the closed vocabularies they use.
//!
//! All character offsets count Unicode scalar values (Rust `char`s), never
//! bytes. Intervals are half-open `[start, end)`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

/// The 17 evidence types a detector can emit.
///
/// Declaration order is the canonical order used for sorting and for the
/// `labels` map of the training export.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetType {
    CouponFixed,
    CouponVariableIndex,
    CouponVariableMargin,
    CouponVariableOperator,
    CouponVariableTenor,
    Currency,
    EarlyRedemptionAmount,
    EarlyRedemption,
    Isin,
    PrincipalAmount,
    RedemptionAtMaturityAmount,
    RedemptionAtMaturity,
    SpecialTermination,
    SpecialTerminationAmount,
    StatusNonPreferred,
    StatusSeniorNonPreferred,
    TypeOfInstrument,
}

impl TargetType {
    pub const ALL: [TargetType; 17] = [
        TargetType::CouponFixed,
        TargetType::CouponVariableIndex,
        TargetType::CouponVariableMargin,
        TargetType::CouponVariableOperator,
        TargetType::CouponVariableTenor,
        TargetType::Currency,
        TargetType::EarlyRedemptionAmount,
        TargetType::EarlyRedemption,
        TargetType::Isin,
        TargetType::PrincipalAmount,
        TargetType::RedemptionAtMaturityAmount,
        TargetType::RedemptionAtMaturity,
        TargetType::SpecialTermination,
        TargetType::SpecialTerminationAmount,
        TargetType::StatusNonPreferred,
        TargetType::StatusSeniorNonPreferred,
        TargetType::TypeOfInstrument,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TargetType::CouponFixed => "coupon_fixed",
            TargetType::CouponVariableIndex => "coupon_variable_index",
            TargetType::CouponVariableMargin => "coupon_variable_margin",
            TargetType::CouponVariableOperator => "coupon_variable_operator",
            TargetType::CouponVariableTenor => "coupon_variable_tenor",
            TargetType::Currency => "currency",
            TargetType::EarlyRedemptionAmount => "early_redemption_amount",
            TargetType::EarlyRedemption => "early_redemption",
            TargetType::Isin => "isin",
            TargetType::PrincipalAmount => "principal_amount",
            TargetType::RedemptionAtMaturityAmount => "redemption_at_maturity_amount",
            TargetType::RedemptionAtMaturity => "redemption_at_maturity",
            TargetType::SpecialTermination => "special_termination",
            TargetType::SpecialTerminationAmount => "special_termination_amount",
            TargetType::StatusNonPreferred => "status_non_preferred",
            TargetType::StatusSeniorNonPreferred => "status_senior_non_preferred",
            TargetType::TypeOfInstrument => "type_of_instrument",
        }
    }
}

impl fmt::Display for TargetType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown target type `{0}`")]
pub struct UnknownTargetType(pub String);

impl FromStr for TargetType {
    type Err = UnknownTargetType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TargetType::ALL.iter().copied().find(|t| t.as_str() == s).ok_or_else(|| UnknownTargetType(s.to_string()))
    }
}

/// The eight eligibility criteria. A prospectus is eligible only when all
/// eight are.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Criterion {
    Coupon,
    Currency,
    EarlyRedemptionAmount,
    PrincipalAmount,
    RedemptionAtMaturity,
    SpecialTerminationRight,
    LiquidationStatus,
    TypeOfInstrument,
}

impl Criterion {
    pub const ALL: [Criterion; 8] = [
        Criterion::Coupon,
        Criterion::Currency,
        Criterion::EarlyRedemptionAmount,
        Criterion::PrincipalAmount,
        Criterion::RedemptionAtMaturity,
        Criterion::SpecialTerminationRight,
        Criterion::LiquidationStatus,
        Criterion::TypeOfInstrument,
    ];
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Half-open character interval `[start, end)`, serialized as `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

impl From<[usize; 2]> for Span {
    fn from([start, end]: [usize; 2]) -> Self {
        Span { start, end }
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub surface: String,
}

impl Token {
    pub fn span(&self) -> Span {
        Span::new(self.start, self.end)
    }
}

/// Wire form of a token: surfaces and indices are recomputed from the text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenOffsets {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Human,
    Model,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(rename = "type")]
    pub target: TargetType,
    pub fragments: Vec<Span>,
    pub source: Source,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator_id: Option<String>,
}

impl Annotation {
    pub fn new(target: TargetType, fragments: Vec<Span>, source: Source, confidence: f64) -> Self {
        Annotation { id: None, target, fragments, source, confidence, annotator_id: None }
    }

    pub fn single(target: TargetType, span: Span, source: Source, confidence: f64) -> Self {
        Self::new(target, vec![span], source, confidence)
    }

    pub fn with_annotator(mut self, annotator: impl Into<String>) -> Self {
        self.annotator_id = Some(annotator.into());
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    /// Offset of the first fragment, or `usize::MAX` for a (invalid) fragmentless annotation.
    pub fn first_offset(&self) -> usize {
        self.fragments.first().map_or(usize::MAX, |f| f.start)
    }

    /// Text covered by the fragments, joined with a single space.
    pub fn surface(&self, text: &str) -> String {
        let chars: Vec<char> = text.chars().collect();
        self.surface_in(&chars)
    }

    pub fn surface_in(&self, chars: &[char]) -> String {
        self.fragments
            .iter()
            .map(|f| {
                let end = f.end.min(chars.len());
                let start = f.start.min(end);
                chars[start..end].iter().collect::<String>()
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Sort key used wherever annotation lists must be deterministic.
    pub fn sort_key(&self) -> (TargetType, usize, usize) {
        let end = self.fragments.last().map_or(0, |f| f.end);
        (self.target, self.first_offset(), end)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DocumentMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub issue_date: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub issuer_group: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset_type: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, String>,
}

/// A prospectus text with its tokenization, metadata and annotations.
///
/// Deserialization recomputes token surfaces from `text`; when the record
/// carries no tokens, [`baseline_tokenize`] supplies them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "DocumentRecord", into = "DocumentRecord")]
pub struct Document {
    pub id: String,
    pub text: String,
    pub tokens: Vec<Token>,
    pub metadata: DocumentMetadata,
    pub annotations: Vec<Annotation>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DocumentRecord {
    id: String,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tokens: Option<Vec<TokenOffsets>>,
    #[serde(default)]
    metadata: DocumentMetadata,
    #[serde(default)]
    annotations: Vec<Annotation>,
}

impl From<DocumentRecord> for Document {
    fn from(r: DocumentRecord) -> Self {
        let tokens = match r.tokens {
            Some(offsets) => tokens_from_offsets(&r.text, &offsets),
            None => baseline_tokenize(&r.text),
        };
        Document { id: r.id, text: r.text, tokens, metadata: r.metadata, annotations: r.annotations }
    }
}

impl From<Document> for DocumentRecord {
    fn from(d: Document) -> Self {
        DocumentRecord {
            tokens: Some(d.tokens.iter().map(|t| TokenOffsets { start: t.start, end: t.end }).collect()),
            id: d.id,
            text: d.text,
            metadata: d.metadata,
            annotations: d.annotations,
        }
    }
}

impl Document {
    /// Builds a document tokenized with [`baseline_tokenize`].
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        Document {
            id: id.into(),
            tokens: baseline_tokenize(&text),
            text,
            metadata: DocumentMetadata::default(),
            annotations: Vec::new(),
        }
    }

    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    pub fn chars(&self) -> Vec<char> {
        self.text.chars().collect()
    }
}

/// Builds tokens from externally supplied offsets. Out-of-range offsets keep
/// an empty surface so that [`validate_document`] can report them.
pub fn tokens_from_offsets(text: &str, offsets: &[TokenOffsets]) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    offsets
        .iter()
        .enumerate()
        .map(|(index, o)| {
            let surface = if o.start < o.end && o.end <= chars.len() {
                chars[o.start..o.end].iter().collect()
            } else {
                String::new()
            };
            Token { index, start: o.start, end: o.end, surface }
        })
        .collect()
}

/// Checks every document, token and annotation invariant and describes each
/// violation. An empty result means the document is well formed.
pub fn validate_document(doc: &Document) -> Vec<String> {
    let mut violations = Vec::new();
    let chars: Vec<char> = doc.text.chars().collect();
    let len = chars.len();

    let mut prev_end: Option<usize> = None;
    for (i, t) in doc.tokens.iter().enumerate() {
        if t.index != i {
            violations.push(format!("token {i}: index field is {}", t.index));
        }
        if t.start >= t.end {
            violations.push(format!("token {i}: token start >= end [{},{})", t.start, t.end));
            continue;
        }
        if t.end > len {
            violations.push(format!("token {i}: token out of bounds [{},{}) for text length {len}", t.start, t.end));
            continue;
        }
        let slice: String = chars[t.start..t.end].iter().collect();
        if slice != t.surface {
            violations.push(format!(
                "token {i}: surface {:?} differs from text slice {:?} at [{},{})",
                t.surface, slice, t.start, t.end
            ));
        }
        if let Some(pe) = prev_end {
            if t.start < pe {
                violations.push(format!(
                    "token {i}: token [{},{}) overlaps or precedes previous token ending at {pe}",
                    t.start, t.end
                ));
            }
        }
        prev_end = Some(t.end);
    }

    for (i, a) in doc.annotations.iter().enumerate() {
        let label = match &a.id {
            Some(id) => format!("annotation {i} ({id})"),
            None => format!("annotation {i}"),
        };
        violations.extend(annotation_violations(a, len).into_iter().map(|v| format!("{label}: {v}")));
    }
    violations
}

/// Invariant violations of a single annotation against a text of `text_len` chars.
pub fn annotation_violations(a: &Annotation, text_len: usize) -> Vec<String> {
    let mut out = Vec::new();
    if a.fragments.is_empty() {
        out.push("annotation has no fragments".to_string());
    }
    if !(0.0..=1.0).contains(&a.confidence) {
        out.push(format!("confidence {} outside [0,1]", a.confidence));
    }
    for (j, f) in a.fragments.iter().enumerate() {
        if f.start >= f.end {
            out.push(format!("fragment {j} empty or inverted {f}"));
        }
        if f.end > text_len {
            out.push(format!("fragment out of bounds {f} for text length {text_len}"));
        }
        if j > 0 {
            let prev = a.fragments[j - 1];
            if f.start < prev.end {
                out.push(format!("fragment {j} {f} overlaps or is not sorted after {prev}"));
            }
        }
    }
    out
}

/// Splits on whitespace and emits every non-alphanumeric character as a
/// single-character token.
pub fn baseline_tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut word: Option<(usize, String)> = None;

    fn flush(word: &mut Option<(usize, String)>, end: usize, tokens: &mut Vec<Token>) {
        if let Some((start, surface)) = word.take() {
            tokens.push(Token { index: tokens.len(), start, end, surface });
        }
    }

    for (pos, c) in text.chars().enumerate() {
        if c.is_whitespace() {
            flush(&mut word, pos, &mut tokens);
        } else if c.is_alphanumeric() {
            word.get_or_insert_with(|| (pos, String::new())).1.push(c);
        } else {
            flush(&mut word, pos, &mut tokens);
            tokens.push(Token { index: tokens.len(), start: pos, end: pos + 1, surface: c.to_string() });
        }
    }
    let total = text.chars().count();
    flush(&mut word, total, &mut tokens);
    tokens
}

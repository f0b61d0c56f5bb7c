//! Conversion between character-offset annotations and per-type BIO tag
//! sequences, and windowed training examples built from them.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::doc_model::{Annotation, Document, Source, Span, TargetType, Token};

pub const DEFAULT_MAX_SEQ_LEN: usize = 256;
pub const DEFAULT_STRIDE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BioTag {
    B,
    I,
    O,
}

impl BioTag {
    /// Column order of label grids and transition tables.
    pub const ALL: [BioTag; 3] = [BioTag::B, BioTag::I, BioTag::O];

    pub fn column(self) -> usize {
        self as usize
    }
}

impl fmt::Display for BioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// True when no `I` starts the sequence or directly follows an `O`.
pub fn is_transition_valid(tags: &[BioTag]) -> bool {
    let mut prev = BioTag::O;
    for &t in tags {
        if t == BioTag::I && prev == BioTag::O {
            return false;
        }
        prev = t;
    }
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedSequence {
    #[serde(rename = "type")]
    pub target: TargetType,
    pub tags: Vec<BioTag>,
}

impl TaggedSequence {
    pub fn is_transition_valid(&self) -> bool {
        is_transition_valid(&self.tags)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{target} annotations {first} and {second} both cover token {token}")]
pub struct OverlapError {
    pub target: TargetType,
    pub token: usize,
    /// Annotation ids, or `#<position>` for annotations without an id.
    pub first: String,
    pub second: String,
}

/// Indices of every token sharing at least one character with `fragment`.
///
/// Tokens are sorted and disjoint, so the result is a contiguous range; it is
/// empty when the fragment only covers inter-token whitespace.
pub fn align_fragment_to_tokens(fragment: Span, tokens: &[Token]) -> Range<usize> {
    let lo = tokens.partition_point(|t| t.end <= fragment.start);
    let hi = tokens.partition_point(|t| t.start < fragment.end);
    if lo >= hi {
        lo..lo
    } else {
        lo..hi
    }
}

/// A fragment that matched no token while encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedFragment {
    pub annotation: String,
    pub fragment: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoded {
    pub sequence: TaggedSequence,
    pub skipped: Vec<SkippedFragment>,
}

fn annotation_label(a: &Annotation, position: usize) -> String {
    a.id.clone().unwrap_or_else(|| format!("#{position}"))
}

/// Encodes annotations of one type as a BIO sequence over `tokens`.
///
/// Each fragment opens a `B` at its first token and marks the rest of its
/// tokens `I`. A token already claimed by an earlier fragment of the same
/// annotation keeps its tag.
/// Fragments covering no token are reported in `skipped`.
pub fn encode_bio(target: TargetType, tokens: &[Token], annotations: &[Annotation]) -> Result<Encoded, OverlapError> {
    let mut tags = vec![BioTag::O; tokens.len()];
    let mut owner: Vec<Option<usize>> = vec![None; tokens.len()];
    let mut skipped = Vec::new();

    for (ai, ann) in annotations.iter().enumerate() {
        debug_assert_eq!(ann.target, target);
        for frag in &ann.fragments {
            let range = align_fragment_to_tokens(*frag, tokens);
            if range.is_empty() {
                skipped.push(SkippedFragment { annotation: annotation_label(ann, ai), fragment: *frag });
                continue;
            }
            for tok in range.clone() {
                match owner[tok] {
                    Some(other) if other != ai => {
                        return Err(OverlapError {
                            target,
                            token: tok,
                            first: annotation_label(&annotations[other], other),
                            second: annotation_label(ann, ai),
                        });
                    }
                    Some(_) => {}
                    None => {
                        owner[tok] = Some(ai);
                        tags[tok] = if tok == range.start { BioTag::B } else { BioTag::I };
                    }
                }
            }
        }
    }
    Ok(Encoded { sequence: TaggedSequence { target, tags }, skipped })
}

/// A decoded `B I*` run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagRun {
    pub tokens: Range<usize>,
    /// The run started with an `I` that was read as `B`.
    pub repaired: bool,
}

/// Maximal runs of the sequence; an `I` at the start or after `O` opens a new run.
pub fn decode_runs(tags: &[BioTag]) -> Vec<TagRun> {
    let mut runs: Vec<TagRun> = Vec::new();
    let mut open: Option<(usize, bool)> = None;
    for (i, &t) in tags.iter().enumerate() {
        match t {
            BioTag::B => {
                if let Some((s, r)) = open.take() {
                    runs.push(TagRun { tokens: s..i, repaired: r });
                }
                open = Some((i, false));
            }
            BioTag::I => {
                if open.is_none() {
                    open = Some((i, true));
                }
            }
            BioTag::O => {
                if let Some((s, r)) = open.take() {
                    runs.push(TagRun { tokens: s..i, repaired: r });
                }
            }
        }
    }
    if let Some((s, r)) = open {
        runs.push(TagRun { tokens: s..tags.len(), repaired: r });
    }
    runs
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub annotations: Vec<Annotation>,
    /// Token indices where an invalid `I` was read as `B`.
    pub repaired: Vec<usize>,
}

/// Turns a tag sequence back into single-fragment annotations spanning from
/// the first token's start to the last token's end. Annotations carry
/// `source` and confidence 1.0; callers attach real confidences.
pub fn decode_bio(tokens: &[Token], sequence: &TaggedSequence, source: Source) -> Decoded {
    assert_eq!(tokens.len(), sequence.tags.len(), "tag sequence length must equal token count");
    let runs = decode_runs(&sequence.tags);
    let repaired = runs.iter().filter(|r| r.repaired).map(|r| r.tokens.start).collect();
    let annotations = runs
        .iter()
        .map(|r| {
            let span = Span::new(tokens[r.tokens.start].start, tokens[r.tokens.end - 1].end);
            Annotation::single(sequence.target, span, source, 1.0)
        })
        .collect();
    Decoded { annotations, repaired }
}

/// Token windows `[start, end)` of at most `max_seq_len` tokens, advancing by
/// `stride` until the last token is covered.
pub fn windows(token_count: usize, max_seq_len: usize, stride: usize) -> Vec<Range<usize>> {
    assert!(max_seq_len >= 2, "max_seq_len must be >= 2");
    assert!((1..=max_seq_len).contains(&stride), "stride must be in 1..=max_seq_len");
    let mut out = Vec::new();
    if token_count == 0 {
        return out;
    }
    let mut start = 0;
    loop {
        let end = (start + max_seq_len).min(token_count);
        out.push(start..end);
        if end == token_count {
            break;
        }
        start += stride;
    }
    out
}

/// One line of the training export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub doc_id: String,
    #[serde(with = "range_pair")]
    pub window: Range<usize>,
    pub tokens: Vec<String>,
    pub labels: BTreeMap<TargetType, Vec<BioTag>>,
}

mod range_pair {
    use std::ops::Range;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(r: &Range<usize>, s: S) -> Result<S::Ok, S::Error> {
        [r.start, r.end].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Range<usize>, D::Error> {
        let [start, end] = <[usize; 2]>::deserialize(d)?;
        Ok(start..end)
    }
}

/// Restricts annotations to the characters covered by a token window.
fn clip_to_window(annotations: &[&Annotation], window: Span) -> Vec<Annotation> {
    annotations
        .iter()
        .filter_map(|a| {
            let fragments: Vec<Span> = a
                .fragments
                .iter()
                .filter(|f| f.overlaps(&window))
                .map(|f| Span::new(f.start.max(window.start), f.end.min(window.end)))
                .collect();
            if fragments.is_empty() {
                None
            } else {
                let mut clipped = (*a).clone();
                clipped.fragments = fragments;
                Some(clipped)
            }
        })
        .collect()
}

/// Sliding-window token-classification examples carrying BIO labels for all
/// 17 types. Runs cut by a window edge re-open with `B` in the next window.
pub fn build_training_examples(
    doc: &Document,
    max_seq_len: usize,
    stride: usize,
) -> Result<Vec<TrainingExample>, OverlapError> {
    let mut by_type: BTreeMap<TargetType, Vec<&Annotation>> = BTreeMap::new();
    for a in &doc.annotations {
        by_type.entry(a.target).or_default().push(a);
    }

    let mut examples = Vec::new();
    for window in windows(doc.tokens.len(), max_seq_len, stride) {
        let toks = &doc.tokens[window.clone()];
        let char_span = Span::new(toks[0].start, toks[toks.len() - 1].end);
        let mut labels = BTreeMap::new();
        for target in TargetType::ALL {
            let anns = by_type.get(&target).map(Vec::as_slice).unwrap_or(&[]);
            let clipped = clip_to_window(anns, char_span);
            let encoded = encode_bio(target, toks, &clipped)?;
            labels.insert(target, encoded.sequence.tags);
        }
        examples.push(TrainingExample {
            doc_id: doc.id.clone(),
            window,
            tokens: toks.iter().map(|t| t.surface.clone()).collect(),
            labels,
        });
    }
    Ok(examples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc_model::baseline_tokenize;
    use BioTag::{B, I, O};

    fn tok(spans: &[(usize, usize)]) -> Vec<Token> {
        spans
            .iter()
            .enumerate()
            .map(|(index, &(start, end))| Token { index, start, end, surface: "x".repeat(end - start) })
            .collect()
    }

    fn ann(spans: &[(usize, usize)]) -> Annotation {
        Annotation::new(TargetType::Currency, spans.iter().map(|&(s, e)| Span::new(s, e)).collect(), Source::Human, 1.0)
    }

    #[test]
    fn alignment_containment() {
        let tokens = tok(&[(0, 3), (4, 7), (8, 14), (15, 18)]);
        assert_eq!(align_fragment_to_tokens(Span::new(10, 13), &tokens), 2..3);
    }

    #[test]
    fn alignment_partial_overlap_includes_token() {
        let tokens = tok(&[(0, 3), (4, 8)]);
        assert_eq!(align_fragment_to_tokens(Span::new(0, 5), &tokens), 0..2);
    }

    #[test]
    fn alignment_gap_is_empty() {
        let tokens = tok(&[(0, 3), (4, 8)]);
        assert!(align_fragment_to_tokens(Span::new(3, 4), &tokens).is_empty());
    }

    #[test]
    fn encode_single_and_double() {
        let tokens = tok(&[(0, 1), (2, 3), (4, 5), (6, 7)]);
        let e = encode_bio(TargetType::Currency, &tokens, &[ann(&[(6, 7)])]).unwrap();
        assert_eq!(e.sequence.tags, [O, O, O, B]);
        let e = encode_bio(TargetType::Currency, &tokens, &[ann(&[(0, 3)])]).unwrap();
        assert_eq!(e.sequence.tags, [B, I, O, O]);
    }

    #[test]
    fn encode_same_type_overlap_is_error() {
        let tokens = tok(&[(0, 1), (2, 3), (4, 5), (6, 7)]);
        let a = ann(&[(2, 5)]).with_id("first");
        let b = ann(&[(4, 7)]).with_id("second");
        let err = encode_bio(TargetType::Currency, &tokens, &[a, b]).unwrap_err();
        assert_eq!(err.token, 2);
        assert_eq!((err.first.as_str(), err.second.as_str()), ("first", "second"));
    }

    #[test]
    fn discontinuous_fragments_open_new_b() {
        let tokens = tok(&[(0, 1), (2, 3), (4, 5), (6, 7)]);
        let e = encode_bio(TargetType::Currency, &tokens, &[ann(&[(0, 1), (4, 7)])]).unwrap();
        assert_eq!(e.sequence.tags, [B, O, B, I]);
        // adjacent fragments still open one run each
        let e = encode_bio(TargetType::Currency, &tokens, &[ann(&[(2, 3), (4, 5)])]).unwrap();
        assert_eq!(e.sequence.tags, [O, B, B, O]);
    }

    #[test]
    fn whitespace_fragment_is_skipped() {
        let tokens = tok(&[(0, 3), (4, 8)]);
        let e = encode_bio(TargetType::Currency, &tokens, &[ann(&[(3, 4)])]).unwrap();
        assert_eq!(e.sequence.tags, [O, O]);
        assert_eq!(e.skipped.len(), 1);
    }

    #[test]
    fn decode_examples() {
        let tokens = tok(&[(0, 1), (2, 3), (4, 5), (6, 7)]);
        let seq = |tags: Vec<BioTag>| TaggedSequence { target: TargetType::Currency, tags };

        let d = decode_bio(&tokens, &seq(vec![B, I, O, B]), Source::Model);
        let spans: Vec<_> = d.annotations.iter().map(|a| a.fragments.clone()).collect();
        assert_eq!(spans, vec![vec![Span::new(0, 3)], vec![Span::new(6, 7)]]);
        assert!(d.repaired.is_empty());

        let d = decode_bio(&tokens, &seq(vec![O, I, I, O]), Source::Model);
        assert_eq!(d.annotations.len(), 1);
        assert_eq!(d.annotations[0].fragments, vec![Span::new(2, 5)]);
        assert_eq!(d.repaired, vec![1]);

        assert!(decode_bio(&tokens, &seq(vec![O; 4]), Source::Model).annotations.is_empty());
    }

    #[test]
    fn window_arithmetic() {
        assert_eq!(windows(10, 10, 4), vec![0..10]);
        assert_eq!(windows(10, 6, 4), vec![0..6, 4..10]);
        assert_eq!(windows(11, 6, 4), vec![0..6, 4..10, 8..11]);
        assert!(windows(0, 6, 4).is_empty());
    }

    #[test]
    fn window_cut_reopens_with_b() {
        let text = "a b c d e f g h i j";
        let mut doc = Document::new("d", text);
        // tokens 3..=6 ("d e f g")
        doc.annotations.push(ann(&[(6, 13)]));
        let ex = build_training_examples(&doc, 6, 4).unwrap();
        assert_eq!(ex.len(), 2);
        assert_eq!(ex[0].labels[&TargetType::Currency], [O, O, O, B, I, I]);
        assert_eq!(ex[1].labels[&TargetType::Currency], [B, I, I, O, O, O]);
        assert_eq!(ex[1].labels[&TargetType::Isin], [O; 6]);
        assert_eq!(ex[1].tokens, ["e", "f", "g", "h", "i", "j"]);
    }

    #[test]
    fn export_line_shape() {
        let mut doc = Document::new("d", "EUR 5");
        doc.tokens = baseline_tokenize("EUR 5");
        doc.annotations.push(ann(&[(0, 3)]));
        let ex = build_training_examples(&doc, 256, 64).unwrap();
        let line = serde_json::to_string(&ex[0]).unwrap();
        assert!(
            line.starts_with(r#"{"doc_id":"d","window":[0,2],"tokens":["EUR","5"],"labels":{"coupon_fixed":["O","O"]"#),
            "{line}"
        );
        assert!(line.contains(r#""currency":["B","O"]"#));
        let back: TrainingExample = serde_json::from_str(&line).unwrap();
        assert_eq!(back, ex[0]);
    }
}

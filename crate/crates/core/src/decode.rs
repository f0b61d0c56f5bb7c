//! Decoding per-token BIO score grids into tag sequences.
//!
//! Scores are log-domain and additive. Grid columns and transition columns
//! are ordered `B, I, O`; transition rows are `start, B, I, O`.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bio::{BioTag, TaggedSequence};
use crate::doc_model::TargetType;

/// Per-token scores over the three BIO labels for one type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelGrid {
    #[serde(rename = "type")]
    pub target: TargetType,
    pub scores: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("score at row {row}, column {column} is not finite")]
    NonFinite { row: usize, column: usize },
    #[error("grid has {rows} rows but the window has {expected} tokens")]
    RowCount { rows: usize, expected: usize },
}

impl LabelGrid {
    pub fn new(target: TargetType, scores: Vec<[f64; 3]>) -> Result<Self, GridError> {
        let grid = LabelGrid { target, scores };
        grid.check()?;
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn check(&self) -> Result<(), GridError> {
        for (row, r) in self.scores.iter().enumerate() {
            if let Some(column) = r.iter().position(|v| !v.is_finite()) {
                return Err(GridError::NonFinite { row, column });
            }
        }
        Ok(())
    }

    fn emission(&self, pos: usize, tag: BioTag) -> f64 {
        self.scores[pos][tag.column()]
    }
}

/// Row index of the virtual start state in a [`TransitionMatrix`].
pub const START_ROW: usize = 0;

/// Transition scores: rows `start, B, I, O`, columns `B, I, O`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    rows: [[f64; 3]; 4],
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransitionError {
    #[error("{from}->{to} must be -inf, found {value}")]
    MustBeForbidden { from: &'static str, to: &'static str, value: f64 },
    #[error("{from}->{to} must be finite, found {value}")]
    MustBeFinite { from: &'static str, to: &'static str, value: f64 },
    #[error("line {line}: {message}")]
    Table { line: usize, message: String },
}

const ROW_NAMES: [&str; 4] = ["start", "B", "I", "O"];
const COL_NAMES: [&str; 3] = ["B", "I", "O"];

impl TransitionMatrix {
    pub fn new(rows: [[f64; 3]; 4]) -> Result<Self, TransitionError> {
        for (r, row) in rows.iter().enumerate() {
            for (c, &value) in row.iter().enumerate() {
                let forbidden = c == BioTag::I.column() && (r == START_ROW || r == Self::row_of(BioTag::O));
                let (from, to) = (ROW_NAMES[r], COL_NAMES[c]);
                if forbidden && value != f64::NEG_INFINITY {
                    return Err(TransitionError::MustBeForbidden { from, to, value });
                }
                if !forbidden && !value.is_finite() {
                    return Err(TransitionError::MustBeFinite { from, to, value });
                }
            }
        }
        Ok(TransitionMatrix { rows })
    }

    fn row_of(tag: BioTag) -> usize {
        tag.column() + 1
    }

    pub fn start(&self, to: BioTag) -> f64 {
        self.rows[START_ROW][to.column()]
    }

    pub fn get(&self, from: BioTag, to: BioTag) -> f64 {
        self.rows[Self::row_of(from)][to.column()]
    }

    pub fn rows(&self) -> &[[f64; 3]; 4] {
        &self.rows
    }

    /// Renders the 4×3 table format accepted by [`FromStr`].
    pub fn to_table(&self) -> String {
        let mut out = String::from("# rows: start B I O; columns: B I O\n");
        for row in &self.rows {
            let cells: Vec<String> =
                row.iter().map(|v| if *v == f64::NEG_INFINITY { "-inf".to_string() } else { v.to_string() }).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Hard BIO constraints only: 0 for allowed transitions, `-inf` for
/// `start->I` and `O->I`.
pub fn default_bio_transitions() -> TransitionMatrix {
    let n = f64::NEG_INFINITY;
    TransitionMatrix::new([[0.0, n, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, n, 0.0]])
        .expect("default transitions satisfy the BIO constraints")
}

impl Default for TransitionMatrix {
    fn default() -> Self {
        default_bio_transitions()
    }
}

impl FromStr for TransitionMatrix {
    type Err = TransitionError;

    /// Four non-comment lines of three whitespace-separated numbers; `#`
    /// starts a comment and `-inf` spells negative infinity.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut rows = Vec::new();
        for (lineno, raw) in s.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cells = line
                .split_whitespace()
                .map(|c| match c {
                    "-inf" => Ok(f64::NEG_INFINITY),
                    other => other.parse::<f64>().map_err(|e| TransitionError::Table {
                        line: lineno + 1,
                        message: format!("bad number {other:?}: {e}"),
                    }),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let row: [f64; 3] = cells.try_into().map_err(|c: Vec<f64>| TransitionError::Table {
                line: lineno + 1,
                message: format!("expected 3 columns, found {}", c.len()),
            })?;
            rows.push(row);
        }
        let rows: [[f64; 3]; 4] = rows.try_into().map_err(|r: Vec<[f64; 3]>| TransitionError::Table {
            line: 0,
            message: format!("expected 4 rows, found {}", r.len()),
        })?;
        TransitionMatrix::new(rows)
    }
}

impl fmt::Display for TransitionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_table())
    }
}

/// Per-token argmax with ties resolved `B` before `I` before `O`. The result
/// may contain invalid `I`s; `decode_bio` repairs them.
pub fn greedy_decode(grid: &LabelGrid) -> TaggedSequence {
    let tags = grid
        .scores
        .iter()
        .map(|row| {
            let mut best = BioTag::B;
            for tag in [BioTag::I, BioTag::O] {
                if row[tag.column()] > row[best.column()] {
                    best = tag;
                }
            }
            best
        })
        .collect();
    TaggedSequence { target: grid.target, tags }
}

/// Total score of a tag path: emissions plus transitions including the start
/// transition. Invalid paths score `-inf` under hard constraints.
pub fn path_score(grid: &LabelGrid, trans: &TransitionMatrix, tags: &[BioTag]) -> f64 {
    assert_eq!(grid.len(), tags.len());
    let mut score = 0.0;
    for (pos, &tag) in tags.iter().enumerate() {
        score += if pos == 0 { trans.start(tag) } else { trans.get(tags[pos - 1], tag) };
        score += grid.emission(pos, tag);
    }
    score
}

/// Highest-scoring transition-valid tag sequence.
///
/// Among equally scoring paths the lexicographically smallest under
/// `B < I < O` wins: suffix maxima are computed right to left, then the path
/// is read left to right taking the first tag that attains the maximum.
pub fn constrained_viterbi(grid: &LabelGrid, trans: &TransitionMatrix) -> TaggedSequence {
    let m = grid.len();
    if m == 0 {
        return TaggedSequence { target: grid.target, tags: Vec::new() };
    }
    // suffix[pos][t]: best score of positions pos.. given tag t at pos,
    // counting emissions from pos on and transitions after pos.
    let mut suffix = vec![[f64::NEG_INFINITY; 3]; m];
    for tag in BioTag::ALL {
        suffix[m - 1][tag.column()] = grid.emission(m - 1, tag);
    }
    for pos in (0..m - 1).rev() {
        for tag in BioTag::ALL {
            let best_next = BioTag::ALL
                .iter()
                .map(|&next| trans.get(tag, next) + suffix[pos + 1][next.column()])
                .fold(f64::NEG_INFINITY, f64::max);
            suffix[pos][tag.column()] = grid.emission(pos, tag) + best_next;
        }
    }

    let mut tags = Vec::with_capacity(m);
    let pick = |entry: &dyn Fn(BioTag) -> f64| {
        let mut best = BioTag::B;
        let mut best_score = entry(BioTag::B);
        for tag in [BioTag::I, BioTag::O] {
            let s = entry(tag);
            if s > best_score {
                best = tag;
                best_score = s;
            }
        }
        best
    };
    let first = pick(&|t| trans.start(t) + suffix[0][t.column()]);
    tags.push(first);
    for pos in 1..m {
        let prev = tags[pos - 1];
        let next = pick(&|t| trans.get(prev, t) + suffix[pos][t.column()]);
        tags.push(next);
    }
    TaggedSequence { target: grid.target, tags }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfidenceError {
    #[error("row {row} probabilities sum to {sum}, expected 1")]
    Normalization { row: usize, sum: f64 },
    #[error("span {start}..{end} is empty or outside the grid of {rows} rows")]
    BadSpan { start: usize, end: usize, rows: usize },
}

const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// Geometric mean of the probabilities of the decoded tags over `span`.
/// Grid rows must be log-probabilities.
pub fn span_confidence(grid: &LabelGrid, tags: &[BioTag], span: Range<usize>) -> Result<f64, ConfidenceError> {
    if span.is_empty() || span.end > grid.len() || span.end > tags.len() {
        return Err(ConfidenceError::BadSpan { start: span.start, end: span.end, rows: grid.len() });
    }
    let mut log_sum = 0.0;
    for row in span.clone() {
        let sum: f64 = grid.scores[row].iter().map(|v| v.exp()).sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(ConfidenceError::Normalization { row, sum });
        }
        log_sum += grid.emission(row, tags[row]);
    }
    let mean = (log_sum / span.len() as f64).exp();
    Ok(mean.clamp(0.0, 1.0))
}

//! Agreement and extraction-quality metrics.
//!
//! IoU compares the character sets covered by two annotations, so
//! discontinuous annotations are handled independently of fragment order.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::doc_model::{Annotation, Document, Span, TargetType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IouMode {
    /// Union of fragment character sets.
    #[default]
    CharSet,
    /// The single interval from the first fragment start to the last fragment end.
    Hull,
}

fn merged(fragments: &[Span]) -> Vec<Span> {
    let mut sorted: Vec<Span> = fragments.iter().copied().filter(|f| !f.is_empty()).collect();
    sorted.sort();
    let mut out: Vec<Span> = Vec::with_capacity(sorted.len());
    for f in sorted {
        match out.last_mut() {
            Some(last) if f.start <= last.end => last.end = last.end.max(f.end),
            _ => out.push(f),
        }
    }
    out
}

fn hull(fragments: &[Span]) -> Vec<Span> {
    let start = fragments.iter().map(|f| f.start).min();
    let end = fragments.iter().map(|f| f.end).max();
    match (start, end) {
        (Some(s), Some(e)) if s < e => vec![Span::new(s, e)],
        _ => Vec::new(),
    }
}

fn covered(fragments: &[Span]) -> usize {
    fragments.iter().map(Span::len).sum()
}

fn intersection(a: &[Span], b: &[Span]) -> usize {
    let (mut i, mut j, mut total) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        let lo = a[i].start.max(b[j].start);
        let hi = a[i].end.min(b[j].end);
        if lo < hi {
            total += hi - lo;
        }
        if a[i].end < b[j].end {
            i += 1;
        } else {
            j += 1;
        }
    }
    total
}

/// IoU of the fragment character sets. Two empty sets score 0.
pub fn iou_fragments(a: &[Span], b: &[Span], mode: IouMode) -> f64 {
    let (a, b) = match mode {
        IouMode::CharSet => (merged(a), merged(b)),
        IouMode::Hull => (hull(a), hull(b)),
    };
    let inter = intersection(&a, &b);
    let union = covered(&a) + covered(&b) - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Character-set IoU of two annotations (types are not compared).
pub fn iou(a: &Annotation, b: &Annotation) -> f64 {
    iou_fragments(&a.fragments, &b.fragments, IouMode::CharSet)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub left: usize,
    pub right: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Matching {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_left: Vec<usize>,
    pub unmatched_right: Vec<usize>,
}

/// Greedy one-to-one matching by descending IoU; ties go to the lower
/// (left, right) index pair. Pairs with IoU 0 are never matched.
pub fn match_annotations(left: &[Annotation], right: &[Annotation], mode: IouMode) -> Matching {
    let mut candidates = Vec::new();
    for (i, a) in left.iter().enumerate() {
        for (j, b) in right.iter().enumerate() {
            let score = iou_fragments(&a.fragments, &b.fragments, mode);
            if score > 0.0 {
                candidates.push(MatchedPair { left: i, right: j, iou: score });
            }
        }
    }
    candidates.sort_by(|x, y| y.iou.total_cmp(&x.iou).then(x.left.cmp(&y.left)).then(x.right.cmp(&y.right)));

    let mut used_left = vec![false; left.len()];
    let mut used_right = vec![false; right.len()];
    let mut pairs = Vec::new();
    for c in candidates {
        if !used_left[c.left] && !used_right[c.right] {
            used_left[c.left] = true;
            used_right[c.right] = true;
            pairs.push(c);
        }
    }
    pairs.sort_by_key(|p| (p.left, p.right));
    Matching {
        pairs,
        unmatched_left: (0..left.len()).filter(|i| !used_left[*i]).collect(),
        unmatched_right: (0..right.len()).filter(|j| !used_right[*j]).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InputError {
    #[error("document {document} has annotations from {found} annotators, expected exactly 2")]
    AnnotatorCount { document: String, found: usize },
    #[error("all weights are zero")]
    ZeroWeights,
    #[error("weights must be finite and non-negative")]
    NegativeWeight,
    #[error("nothing to average")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeAgreement {
    /// Mean IoU over matched pairs and unmatched annotations (scored 0).
    pub mean_iou: f64,
    /// Matched pairs plus unmatched annotations.
    pub items: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentAgreement {
    pub document: String,
    pub annotators: [String; 2],
    #[serde(rename = "type")]
    pub target: TargetType,
    pub pairs: Vec<MatchedPair>,
    pub unmatched_first: Vec<usize>,
    pub unmatched_second: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub per_type: BTreeMap<TargetType, TypeAgreement>,
    pub documents: Vec<DocumentAgreement>,
    pub annotator_pairs: Vec<[String; 2]>,
}

/// Inter-annotator agreement over documents that each carry the annotations
/// of exactly two annotators. Per type, every matched pair contributes its
/// IoU and every unmatched annotation contributes 0; the type score is the
/// mean over all such items in the corpus.
pub fn iaa_report(docs: &[Document], mode: IouMode) -> Result<AgreementReport, InputError> {
    let mut sums: BTreeMap<TargetType, (f64, usize)> = BTreeMap::new();
    let mut documents = Vec::new();
    let mut pairs_seen = BTreeSet::new();

    let mut ordered: Vec<&Document> = docs.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));
    for doc in ordered {
        let annotators: BTreeSet<&str> =
            doc.annotations.iter().map(|a| a.annotator_id.as_deref().unwrap_or("")).collect();
        if annotators.len() != 2 {
            return Err(InputError::AnnotatorCount { document: doc.id.clone(), found: annotators.len() });
        }
        let ids: Vec<&str> = annotators.into_iter().collect();
        let pair = [ids[0].to_string(), ids[1].to_string()];
        pairs_seen.insert(pair.clone());

        for target in TargetType::ALL {
            let side = |who: &str| -> Vec<Annotation> {
                doc.annotations
                    .iter()
                    .filter(|a| a.target == target && a.annotator_id.as_deref().unwrap_or("") == who)
                    .cloned()
                    .collect()
            };
            let (first, second) = (side(ids[0]), side(ids[1]));
            if first.is_empty() && second.is_empty() {
                continue;
            }
            let m = match_annotations(&first, &second, mode);
            let entry = sums.entry(target).or_insert((0.0, 0));
            entry.0 += m.pairs.iter().map(|p| p.iou).sum::<f64>();
            entry.1 += m.pairs.len() + m.unmatched_left.len() + m.unmatched_right.len();
            documents.push(DocumentAgreement {
                document: doc.id.clone(),
                annotators: pair.clone(),
                target,
                pairs: m.pairs,
                unmatched_first: m.unmatched_left,
                unmatched_second: m.unmatched_right,
            });
        }
    }

    let per_type =
        sums.into_iter().map(|(t, (sum, items))| (t, TypeAgreement { mean_iou: sum / items as f64, items })).collect();
    Ok(AgreementReport { per_type, documents, annotator_pairs: pairs_seen.into_iter().collect() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Same type and identical fragment lists.
    Exact,
    /// Matched (greedy, by IoU) with IoU at least the threshold.
    Overlap(f64),
}

/// Additive true-positive and set-size counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PrfCounts {
    pub true_positives: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl PrfCounts {
    pub fn add(&mut self, other: PrfCounts) {
        self.true_positives += other.true_positives;
        self.predicted += other.predicted;
        self.gold += other.gold;
    }

    pub fn score(&self) -> PrfScore {
        let (tp, np, ng) = (self.true_positives as f64, self.predicted, self.gold);
        let (precision, recall) = if np == 0 && ng == 0 {
            (1.0, 1.0)
        } else {
            (if np == 0 { 0.0 } else { tp / np as f64 }, if ng == 0 { 0.0 } else { tp / ng as f64 })
        };
        PrfScore { precision, recall, f1: f1(precision, recall), support: ng }
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrfScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Counts for one document. Annotations of different types never match.
pub fn prf_counts(pred: &[Annotation], gold: &[Annotation], mode: MatchMode) -> PrfCounts {
    let true_positives = match mode {
        MatchMode::Exact => {
            let mut remaining: BTreeMap<(TargetType, &[Span]), usize> = BTreeMap::new();
            for g in gold {
                *remaining.entry((g.target, g.fragments.as_slice())).or_default() += 1;
            }
            let mut tp = 0;
            for p in pred {
                if let Some(n) = remaining.get_mut(&(p.target, p.fragments.as_slice())) {
                    if *n > 0 {
                        *n -= 1;
                        tp += 1;
                    }
                }
            }
            tp
        }
        MatchMode::Overlap(theta) => {
            let types: BTreeSet<TargetType> = pred.iter().chain(gold).map(|a| a.target).collect();
            types
                .into_iter()
                .map(|t| {
                    let p: Vec<Annotation> = pred.iter().filter(|a| a.target == t).cloned().collect();
                    let g: Vec<Annotation> = gold.iter().filter(|a| a.target == t).cloned().collect();
                    match_annotations(&p, &g, IouMode::CharSet).pairs.iter().filter(|pair| pair.iou >= theta).count()
                })
                .sum()
        }
    };
    PrfCounts { true_positives, predicted: pred.len(), gold: gold.len() }
}

pub fn prf(pred: &[Annotation], gold: &[Annotation], mode: MatchMode) -> PrfScore {
    prf_counts(pred, gold, mode).score()
}

/// `Σ f1·w / Σ w`.
pub fn weighted_average(scores: &[(f64, f64)]) -> Result<f64, InputError> {
    if scores.is_empty() {
        return Err(InputError::Empty);
    }
    if scores.iter().any(|(_, w)| !w.is_finite() || *w < 0.0) {
        return Err(InputError::NegativeWeight);
    }
    let total: f64 = scores.iter().map(|(_, w)| w).sum();
    if total == 0.0 {
        return Err(InputError::ZeroWeights);
    }
    Ok(scores.iter().map(|(f, w)| f * w).sum::<f64>() / total)
}

/// Unweighted mean.
pub fn macro_average(values: &[f64]) -> Result<f64, InputError> {
    if values.is_empty() {
        return Err(InputError::Empty);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    #[serde(rename = "type")]
    pub target: TargetType,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    /// F1 averaged over the per-annotator test sets, weighted by their support.
    pub weighted_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub rows: Vec<ReportRow>,
    /// Macro average of `weighted_f1` over types with gold support.
    pub macro_f1: Option<f64>,
}

/// Scores predictions against gold per type.
///
/// Gold annotations are split into test sets by annotator id. Within each
/// set a document's predictions are compared to that annotator's gold; the
/// pooled counts give precision/recall/F1 and the per-set F1s are averaged
/// with the set's support as weight.
pub fn evaluate_corpus(
    gold_docs: &[Document],
    predictions: &BTreeMap<String, Vec<Annotation>>,
    mode: MatchMode,
) -> EvaluationReport {
    // (type, annotator) -> counts
    let mut per_set: BTreeMap<(TargetType, String), PrfCounts> = BTreeMap::new();
    let mut ordered: Vec<&Document> = gold_docs.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));
    for doc in ordered {
        let pred_all = predictions.get(&doc.id).map(Vec::as_slice).unwrap_or(&[]);
        let annotators: BTreeSet<String> =
            doc.annotations.iter().map(|a| a.annotator_id.clone().unwrap_or_default()).collect();
        let annotators = if annotators.is_empty() { BTreeSet::from([String::new()]) } else { annotators };
        for who in &annotators {
            for target in TargetType::ALL {
                let gold: Vec<Annotation> = doc
                    .annotations
                    .iter()
                    .filter(|a| a.target == target && a.annotator_id.clone().unwrap_or_default() == *who)
                    .cloned()
                    .collect();
                let pred: Vec<Annotation> = pred_all.iter().filter(|a| a.target == target).cloned().collect();
                per_set.entry((target, who.clone())).or_default().add(prf_counts(&pred, &gold, mode));
            }
        }
    }

    let mut rows = Vec::new();
    for target in TargetType::ALL {
        let sets: Vec<&PrfCounts> = per_set.iter().filter(|((t, _), _)| *t == target).map(|(_, c)| c).collect();
        let mut pooled = PrfCounts::default();
        for c in &sets {
            pooled.add(**c);
        }
        let score = pooled.score();
        let weighted: Vec<(f64, f64)> = sets.iter().map(|c| (c.score().f1, c.gold as f64)).collect();
        let weighted_f1 = weighted_average(&weighted).unwrap_or(score.f1);
        rows.push(ReportRow {
            target,
            precision: score.precision,
            recall: score.recall,
            f1: score.f1,
            support: score.support,
            weighted_f1,
        });
    }
    let supported: Vec<f64> = rows.iter().filter(|r| r.support > 0).map(|r| r.weighted_f1).collect();
    EvaluationReport { macro_f1: macro_average(&supported).ok(), rows }
}

impl EvaluationReport {
    /// Tab-separated rows `type precision recall f1 support weighted_f1`,
    /// then a `macro_f1` footer line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("type\tprecision\trecall\tf1\tsupport\tweighted_f1\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{:.6}\t{:.6}\t{:.6}\t{}\t{:.6}\n",
                r.target, r.precision, r.recall, r.f1, r.support, r.weighted_f1
            ));
        }
        match self.macro_f1 {
            Some(m) => out.push_str(&format!("macro_f1\t{m:.6}\n")),
            None => out.push_str("macro_f1\tNA\n"),
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc_model::Source;

    fn ann(target: TargetType, spans: &[(usize, usize)]) -> Annotation {
        Annotation::new(target, spans.iter().map(|&(s, e)| Span::new(s, e)).collect(), Source::Human, 1.0)
    }

    fn cur(spans: &[(usize, usize)]) -> Annotation {
        ann(TargetType::Currency, spans)
    }

    #[test]
    fn iou_examples() {
        assert_eq!(iou(&cur(&[(0, 10)]), &cur(&[(0, 10)])), 1.0);
        assert!((iou(&cur(&[(0, 10)]), &cur(&[(5, 15)])) - 1.0 / 3.0).abs() < 1e-12);
        assert!((iou(&cur(&[(0, 5), (10, 15)]), &cur(&[(0, 15)])) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(iou(&cur(&[(0, 5)]), &cur(&[(5, 10)])), 0.0);
    }

    #[test]
    fn hull_mode_ignores_gaps() {
        let a = [Span::new(0, 5), Span::new(10, 15)];
        let b = [Span::new(0, 15)];
        assert_eq!(iou_fragments(&a, &b, IouMode::Hull), 1.0);
    }

    #[test]
    fn matching_examples() {
        let m = match_annotations(&[cur(&[(0, 4)])], &[cur(&[(0, 4)])], IouMode::CharSet);
        assert_eq!(m.pairs, vec![MatchedPair { left: 0, right: 0, iou: 1.0 }]);

        let m = match_annotations(&[cur(&[(0, 4)])], &[cur(&[(10, 14)])], IouMode::CharSet);
        assert!(m.pairs.is_empty());
        assert_eq!((m.unmatched_left, m.unmatched_right), (vec![0], vec![0]));

        // left0 takes right1 first; left1 then has no partner left
        let left = [cur(&[(0, 10)]), cur(&[(8, 20)])];
        let right = [cur(&[(0, 3)]), cur(&[(1, 11)])];
        let m = match_annotations(&left, &right, IouMode::CharSet);
        assert_eq!(m.pairs.len(), 1);
        assert_eq!((m.pairs[0].left, m.pairs[0].right), (0, 1));
        assert_eq!((m.unmatched_left, m.unmatched_right), (vec![1], vec![0]));
    }

    #[test]
    fn prf_worked_example() {
        let gold = [cur(&[(0, 1)]), cur(&[(2, 3)]), cur(&[(4, 5)]), cur(&[(6, 7)])];
        let pred = [cur(&[(0, 1)]), cur(&[(2, 3)]), cur(&[(8, 9)])];
        let s = prf(&pred, &gold, MatchMode::Exact);
        assert!((s.precision - 0.667).abs() < 1e-3);
        assert!((s.recall - 0.5).abs() < 1e-3);
        assert!((s.f1 - 0.571).abs() < 1e-3);
        assert_eq!(s.support, 4);
    }

    #[test]
    fn prf_conventions() {
        let gold = [cur(&[(0, 1)])];
        let s = prf(&gold, &gold, MatchMode::Exact);
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));

        let s = prf(&[], &gold, MatchMode::Exact);
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));

        let s = prf(&[], &[], MatchMode::Exact);
        assert_eq!((s.precision, s.recall), (1.0, 1.0));
    }

    #[test]
    fn exact_match_requires_same_type() {
        let s = prf(&[ann(TargetType::Isin, &[(0, 1)])], &[cur(&[(0, 1)])], MatchMode::Exact);
        assert_eq!(s.f1, 0.0);
        let s = prf(&[ann(TargetType::Isin, &[(0, 1)])], &[cur(&[(0, 1)])], MatchMode::Overlap(0.5));
        assert_eq!(s.f1, 0.0);
    }

    #[test]
    fn overlap_mode_threshold() {
        let gold = [cur(&[(0, 10)])];
        let pred = [cur(&[(0, 8)])];
        assert_eq!(prf(&pred, &gold, MatchMode::Overlap(0.8)).f1, 1.0);
        assert_eq!(prf(&pred, &gold, MatchMode::Overlap(0.9)).f1, 0.0);
    }

    #[test]
    fn averages() {
        assert!((weighted_average(&[(0.8, 10.0), (0.6, 5.0)]).unwrap() - 0.7333333333).abs() < 1e-9);
        assert_eq!(weighted_average(&[(0.42, 3.0)]).unwrap(), 0.42);
        assert_eq!(weighted_average(&[(0.5, 0.0)]), Err(InputError::ZeroWeights));
        assert!((weighted_average(&[(0.2, 1.0), (0.4, 1.0)]).unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(macro_average(&[0.3; 5]).unwrap(), 0.3);
        assert_eq!(macro_average(&[]), Err(InputError::Empty));
    }

    fn two_annotator_doc(id: &str, first: Vec<Annotation>, second: Vec<Annotation>) -> Document {
        let mut doc = Document::new(id, "x".repeat(100));
        doc.annotations.extend(first.into_iter().map(|a| a.with_annotator("alice")));
        doc.annotations.extend(second.into_iter().map(|a| a.with_annotator("bob")));
        doc
    }

    #[test]
    fn iaa_perfect_and_one_sided() {
        let a = vec![cur(&[(0, 5)]), ann(TargetType::Isin, &[(10, 22)])];
        let r = iaa_report(&[two_annotator_doc("d", a.clone(), a.clone())], IouMode::CharSet).unwrap();
        assert!(r.per_type.values().all(|t| t.mean_iou == 1.0));
        assert_eq!(r.annotator_pairs, vec![["alice".to_string(), "bob".to_string()]]);

        let mut doc = two_annotator_doc("d", a, vec![]);
        doc.annotations.push(ann(TargetType::PrincipalAmount, &[(40, 45)]).with_annotator("bob"));
        let r = iaa_report(&[doc], IouMode::CharSet).unwrap();
        assert_eq!(r.per_type[&TargetType::Currency].mean_iou, 0.0);
        assert_eq!(r.per_type[&TargetType::Isin].mean_iou, 0.0);
    }

    #[test]
    fn iaa_requires_two_annotators() {
        let doc = two_annotator_doc("lonely", vec![cur(&[(0, 5)])], vec![]);
        assert_eq!(
            iaa_report(&[doc], IouMode::CharSet),
            Err(InputError::AnnotatorCount { document: "lonely".into(), found: 1 })
        );
    }

    #[test]
    fn corpus_report_weights_by_annotator_set() {
        // alice's set: 1 gold, found; bob's set: 3 gold, 1 found
        let mut doc = Document::new("d", "x".repeat(100));
        doc.annotations.push(cur(&[(0, 5)]).with_annotator("alice"));
        for s in [0, 10, 20] {
            doc.annotations.push(cur(&[(s, s + 5)]).with_annotator("bob"));
        }
        let preds = BTreeMap::from([("d".to_string(), vec![cur(&[(0, 5)])])]);
        let report = evaluate_corpus(&[doc], &preds, MatchMode::Exact);
        let row = report.rows.iter().find(|r| r.target == TargetType::Currency).unwrap();
        assert_eq!(row.support, 4);
        // alice f1 = 1, bob f1 = 2*(1*(1/3))/(4/3) = 0.5
        assert!((row.weighted_f1 - (1.0 * 1.0 + 0.5 * 3.0) / 4.0).abs() < 1e-12);
        assert_eq!(report.macro_f1, Some(row.weighted_f1));
        let tsv = report.to_tsv();
        assert!(tsv.starts_with("type\tprecision\trecall\tf1\tsupport\tweighted_f1\n"));
        assert!(tsv.ends_with(&format!("macro_f1\t{:.6}\n", row.weighted_f1)));
    }
}

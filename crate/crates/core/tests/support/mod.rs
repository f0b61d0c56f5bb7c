//! Independent oracles and random inputs shared by the integration tests.
//!
//! Nothing here calls the library operation it is used to check.
#![allow(dead_code)]

use std::collections::BTreeMap;

use chrono::NaiveDate;
use prospectus_core::decider::{FeatureValue, Outcome};
use prospectus_core::decode::LabelGrid;
use prospectus_core::{Annotation, Source, Span, TargetType};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Published per-type F1 values, rows in table order, columns
/// bert-base-cased, bert-base-german-cased, finbert, gbert-base.
pub const PUBLISHED_F1: [[f64; 4]; 17] = [
    [0.483, 0.836, 0.734, 0.898],
    [0.323, 0.519, 0.219, 0.607],
    [0.327, 0.634, 0.647, 0.561],
    [0.617, 0.429, 0.499, 0.748],
    [0.000, 0.774, 0.596, 0.770],
    [0.896, 0.931, 0.954, 0.942],
    [0.535, 0.648, 0.547, 0.769],
    [0.181, 0.431, 0.000, 0.554],
    [0.883, 0.877, 0.868, 0.927],
    [0.833, 0.921, 0.916, 0.924],
    [0.566, 0.765, 0.531, 0.775],
    [0.000, 0.746, 0.000, 0.761],
    [0.683, 0.712, 0.628, 0.665],
    [0.520, 0.813, 0.679, 0.680],
    [0.222, 0.633, 0.556, 0.438],
    [0.718, 0.822, 0.782, 0.846],
    [0.752, 0.800, 0.726, 0.821],
];

/// Published macro rows in the same column order.
pub const PUBLISHED_MACRO: [(&str, f64); 4] =
    [("bert-base-cased", 0.502), ("bert-base-german-cased", 0.723), ("finbert", 0.581), ("gbert-base", 0.746)];

/// Exact-match precision/recall/F1 by pairing each prediction with an
/// unused identical gold item, scanning in order.
pub fn oracle_prf_exact(pred: &[Annotation], gold: &[Annotation]) -> (f64, f64, f64) {
    let mut used = vec![false; gold.len()];
    let mut tp = 0usize;
    for p in pred {
        for (j, g) in gold.iter().enumerate() {
            if !used[j] && g.target == p.target && g.fragments == p.fragments {
                used[j] = true;
                tp += 1;
                break;
            }
        }
    }
    if pred.is_empty() && gold.is_empty() {
        return (1.0, 1.0, 1.0);
    }
    let p = if pred.is_empty() { 0.0 } else { tp as f64 / pred.len() as f64 };
    let r = if gold.is_empty() { 0.0 } else { tp as f64 / gold.len() as f64 };
    let f = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (pred.len() + gold.len()) as f64 };
    (p, r, f)
}

/// ISIN validity by the textbook procedure: letters become two-digit
/// numbers (A=10 .. Z=35), then every second digit from the right, starting
/// with the check digit's left neighbour, is doubled and digit-summed.
pub fn oracle_isin_valid(s: &str) -> bool {
    if s.len() != 12 {
        return false;
    }
    let chars: Vec<char> = s.chars().collect();
    if !chars[..2].iter().all(|c| c.is_ascii_uppercase())
        || !chars[2..11].iter().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit())
        || !chars[11].is_ascii_digit()
    {
        return false;
    }
    let mut digits = String::new();
    for c in chars {
        if c.is_ascii_digit() {
            digits.push(c);
        } else {
            digits.push_str(&(c as u32 - 'A' as u32 + 10).to_string());
        }
    }
    let mut total = 0;
    for (pos_from_right, ch) in digits.chars().rev().enumerate() {
        let d = ch.to_digit(10).unwrap();
        if pos_from_right % 2 == 1 {
            let doubled = d * 2;
            total += doubled / 10 + doubled % 10;
        } else {
            total += d;
        }
    }
    total % 10 == 0
}

fn text(s: &str) -> FeatureValue {
    FeatureValue::Text(s.to_string())
}

fn as_text(v: Option<&FeatureValue>) -> Option<Option<&str>> {
    v.map(|v| match v {
        FeatureValue::Text(t) => Some(t.as_str()),
        _ => None,
    })
}

/// Table-driven reading of the shipped liquidation-status tree.
pub fn oracle_liquidation_status(f: &BTreeMap<String, FeatureValue>) -> Outcome {
    let Some(status) = as_text(f.get("status")) else { return Outcome::Review };
    match status {
        Some("subordinated") => Outcome::Ineligible,
        Some("senior_preferred") => Outcome::Eligible,
        Some("senior_non_preferred") => {
            let Some(group) = as_text(f.get("issuer_group")) else { return Outcome::Review };
            if !matches!(group, Some("credit_institution") | Some("investment_firm")) {
                return Outcome::Ineligible;
            }
            let cutoff = NaiveDate::from_ymd_opt(2017, 12, 28).unwrap();
            match f.get("issue_date") {
                None => Outcome::Review,
                Some(FeatureValue::Date(d)) if *d < cutoff => Outcome::Ineligible,
                Some(FeatureValue::Date(_)) => Outcome::Eligible,
                Some(_) => Outcome::Review,
            }
        }
        _ => Outcome::Review,
    }
}

/// Table-driven reading of the shipped coupon tree.
pub fn oracle_coupon(f: &BTreeMap<String, FeatureValue>) -> Outcome {
    let asset_check = |f: &BTreeMap<String, FeatureValue>| match as_text(f.get("asset_type")) {
        None => Outcome::Review,
        Some(Some("structured_product")) | Some(Some("derivative")) => Outcome::Ineligible,
        Some(Some(_)) => Outcome::Eligible,
        Some(None) => Outcome::Review,
    };
    if let Some(rate) = f.get("fixed_rate") {
        return match rate {
            FeatureValue::Number(x) if *x < 0.0 => Outcome::Ineligible,
            FeatureValue::Number(_) => asset_check(f),
            _ => Outcome::Review,
        };
    }
    let Some(index) = as_text(f.get("reference_index")) else { return Outcome::Review };
    if !matches!(index, Some("euribor") | Some("estr")) {
        return if index.is_some() { Outcome::Ineligible } else { Outcome::Review };
    }
    match as_text(f.get("operator")) {
        None => Outcome::Review,
        Some(Some("multiplied")) => Outcome::Ineligible,
        Some(Some(_)) => asset_check(f),
        Some(None) => Outcome::Review,
    }
}

/// All assignments over `domains`, each feature also taking "missing".
pub fn enumerate_assignments(domains: &[(String, Vec<FeatureValue>)]) -> Vec<BTreeMap<String, FeatureValue>> {
    let mut out = vec![BTreeMap::new()];
    for (name, values) in domains {
        let mut next = Vec::new();
        for partial in &out {
            next.push(partial.clone());
            for v in values {
                let mut with = partial.clone();
                with.insert(name.clone(), v.clone());
                next.push(with);
            }
        }
        out = next;
    }
    out
}

pub fn text_value(s: &str) -> FeatureValue {
    text(s)
}

/// A random score grid. Fine grids hold normalized log-probabilities;
/// coarse grids draw scores from a few exactly representable values so that
/// equally scoring paths are common and their sums exact in any order.
pub fn random_grid(rng: &mut ChaCha8Rng, m: usize, coarse: bool) -> LabelGrid {
    const LEVELS: [f64; 5] = [0.0, -0.5, -1.0, -2.0, -3.0];
    let rows = (0..m)
        .map(|_| {
            if coarse {
                [0, 1, 2].map(|_| LEVELS[rng.gen_range(0..LEVELS.len())])
            } else {
                let w = [rng.gen_range(0.01..1.0), rng.gen_range(0.01..1.0), rng.gen_range(0.01..1.0)];
                let s: f64 = w.iter().sum();
                w.map(|x: f64| (x / s).ln())
            }
        })
        .collect();
    LabelGrid::new(TargetType::Currency, rows).unwrap()
}

/// Up to `max_fragments` random fragments inside `[0, limit)`, possibly
/// overlapping or touching each other.
pub fn random_fragments(rng: &mut ChaCha8Rng, limit: usize, max_fragments: usize) -> Vec<Span> {
    let n = rng.gen_range(1..=max_fragments);
    (0..n)
        .map(|_| {
            let start = rng.gen_range(0..limit - 1);
            let end = rng.gen_range(start + 1..=limit.min(start + 12));
            Span::new(start, end)
        })
        .collect()
}

/// Single-fragment annotations drawn from a small pool of spans and types so
/// that exact matches and duplicates occur.
pub fn random_annotation_set(rng: &mut ChaCha8Rng, max: usize) -> Vec<Annotation> {
    const TYPES: [TargetType; 2] = [TargetType::Currency, TargetType::Isin];
    let n = rng.gen_range(0..=max);
    (0..n)
        .map(|_| {
            let start = rng.gen_range(0..6) * 4;
            let len = rng.gen_range(1..=2) * 2;
            let mut fragments = vec![Span::new(start, start + len)];
            if rng.gen_bool(0.2) {
                fragments.push(Span::new(start + 20, start + 22));
            }
            Annotation::new(TYPES[rng.gen_range(0..2)], fragments, Source::Model, 1.0)
        })
        .collect()
}

/// A document of random words with token-aligned gold annotations of two
/// types. Annotations of one type never share a token; some annotations are
/// discontinuous.
pub fn random_aligned_document(rng: &mut ChaCha8Rng, id: usize) -> prospectus_core::Document {
    let n_tokens = rng.gen_range(1..=60);
    let words: Vec<String> = (0..n_tokens)
        .map(|_| (0..rng.gen_range(1..=6)).map(|_| rng.gen_range(b'a'..=b'z') as char).collect())
        .collect();
    let mut doc = prospectus_core::Document::new(format!("rt-{id}"), words.join(" "));
    let tokens = doc.tokens.clone();
    assert_eq!(tokens.len(), n_tokens);

    for target in [TargetType::Currency, TargetType::PrincipalAmount] {
        // carve disjoint token runs, then group consecutive runs into annotations
        let mut runs = Vec::new();
        let mut pos = 0;
        while pos < n_tokens {
            pos += rng.gen_range(0..4);
            if pos >= n_tokens {
                break;
            }
            let end = (pos + rng.gen_range(1..=4)).min(n_tokens);
            runs.push((pos, end));
            pos = end;
        }
        let mut i = 0;
        while i < runs.len() {
            let take = if rng.gen_bool(0.25) { 2.min(runs.len() - i) } else { 1 };
            let fragments =
                runs[i..i + take].iter().map(|&(s, e)| Span::new(tokens[s].start, tokens[e - 1].end)).collect();
            doc.annotations.push(Annotation::new(target, fragments, Source::Human, 1.0));
            i += take;
        }
    }
    doc
}

/// Token indices lying entirely inside some fragment of `annotations`.
pub fn covered_tokens(
    tokens: &[prospectus_core::Token],
    annotations: &[Annotation],
) -> std::collections::BTreeSet<usize> {
    tokens
        .iter()
        .filter(|t| annotations.iter().flat_map(|a| &a.fragments).any(|f| f.start <= t.start && t.end <= f.end))
        .map(|t| t.index)
        .collect()
}

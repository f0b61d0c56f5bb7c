//! Deterministic gazetteer/pattern detector used when no neural model
//! server is configured.

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::isin::validate_isin;
use crate::doc_model::{Annotation, Document, Source, Span, TargetType};

/// Default confidence for closed-vocabulary matches.
pub const LITERAL_CONFIDENCE: f64 = 1.0;
/// Default confidence for open pattern matches.
pub const PATTERN_CONFIDENCE: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    /// Case-insensitive literals; longer literals win at the same position.
    Literals(Vec<String>),
    /// A regular expression. When it has a `value` group, only that group is
    /// annotated.
    Pattern(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validator {
    Isin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazetteerRule {
    #[serde(rename = "type")]
    pub target: TargetType,
    pub matcher: Matcher,
    /// Which normalizer the decider is expected to apply (informational).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalizer: Option<String>,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validator: Option<Validator>,
    /// Reject a match when the text right before it matches this pattern.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub not_preceded_by: Option<String>,
    /// Reject a match when the text right after it matches this pattern.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub not_followed_by: Option<String>,
}

impl GazetteerRule {
    pub fn literals(target: TargetType, words: &[&str]) -> Self {
        GazetteerRule {
            target,
            matcher: Matcher::Literals(words.iter().map(|w| w.to_string()).collect()),
            normalizer: None,
            confidence: LITERAL_CONFIDENCE,
            validator: None,
            not_preceded_by: None,
            not_followed_by: None,
        }
    }

    pub fn pattern(target: TargetType, pattern: &str) -> Self {
        GazetteerRule {
            matcher: Matcher::Pattern(pattern.to_string()),
            confidence: PATTERN_CONFIDENCE,
            ..Self::literals(target, &[])
        }
    }

    pub fn normalizer(mut self, hint: &str) -> Self {
        self.normalizer = Some(hint.to_string());
        self
    }

    pub fn validator(mut self, v: Validator) -> Self {
        self.validator = Some(v);
        self
    }

    pub fn not_preceded_by(mut self, pattern: &str) -> Self {
        self.not_preceded_by = Some(pattern.to_string());
        self
    }

    pub fn not_followed_by(mut self, pattern: &str) -> Self {
        self.not_followed_by = Some(pattern.to_string());
        self
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RuleError {
    #[error("rule {index} ({target}): {source}")]
    Pattern {
        index: usize,
        target: TargetType,
        #[source]
        source: regex::Error,
    },
    #[error("rule {index} ({target}): confidence {confidence} outside (0,1]")]
    Confidence { index: usize, target: TargetType, confidence: f64 },
    #[error("rule {index} ({target}): empty literal list")]
    NoLiterals { index: usize, target: TargetType },
}

#[derive(Debug, Clone)]
struct CompiledRule {
    target: TargetType,
    regex: Regex,
    confidence: f64,
    validator: Option<Validator>,
    not_preceded_by: Option<Regex>,
    not_followed_by: Option<Regex>,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn literal_alternation(words: &[String]) -> String {
    let mut sorted: Vec<&String> = words.iter().collect();
    sorted.sort_by(|a, b| b.chars().count().cmp(&a.chars().count()).then(a.cmp(b)));
    let alts: Vec<String> = sorted
        .iter()
        .map(|w| {
            let lead = if w.chars().next().is_some_and(is_word_char) { r"\b" } else { "" };
            let trail = if w.chars().last().is_some_and(is_word_char) { r"\b" } else { "" };
            format!("{lead}{}{trail}", regex::escape(w))
        })
        .collect();
    format!("(?i)(?:{})", alts.join("|"))
}

/// A compiled, validated rule set.
#[derive(Debug, Clone)]
pub struct RuleSet {
    rules: Vec<CompiledRule>,
}

impl RuleSet {
    pub fn compile(rules: &[GazetteerRule]) -> Result<Self, RuleError> {
        let mut compiled = Vec::with_capacity(rules.len());
        for (index, r) in rules.iter().enumerate() {
            let target = r.target;
            if !(r.confidence > 0.0 && r.confidence <= 1.0) {
                return Err(RuleError::Confidence { index, target, confidence: r.confidence });
            }
            let pattern = match &r.matcher {
                Matcher::Literals(words) if words.is_empty() => return Err(RuleError::NoLiterals { index, target }),
                Matcher::Literals(words) => literal_alternation(words),
                Matcher::Pattern(p) => p.clone(),
            };
            let build = |p: &str| Regex::new(p).map_err(|source| RuleError::Pattern { index, target, source });
            compiled.push(CompiledRule {
                target,
                regex: build(&pattern)?,
                confidence: r.confidence,
                validator: r.validator,
                not_preceded_by: r.not_preceded_by.as_deref().map(|p| build(&format!("(?:{p})$"))).transpose()?,
                not_followed_by: r.not_followed_by.as_deref().map(|p| build(&format!("^(?:{p})"))).transpose()?,
            });
        }
        Ok(RuleSet { rules: compiled })
    }

    pub fn default_rules() -> Self {
        RuleSet::compile(&default_rules()).expect("shipped rules compile")
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Runs every rule over the document text. Output is sorted by
    /// (type, start, end) and exact duplicates across rules keep the higher
    /// confidence.
    pub fn detect(&self, doc: &Document) -> Vec<Annotation> {
        let text = doc.text.as_str();
        // byte offset -> char offset
        let mut char_at = vec![0usize; text.len() + 1];
        let mut count = 0;
        for (b, _) in text.char_indices() {
            char_at[b] = count;
            count += 1;
        }
        char_at[text.len()] = count;

        let mut found = Vec::new();
        for rule in &self.rules {
            for caps in rule.regex.captures_iter(text) {
                let m = caps.name("value").unwrap_or_else(|| caps.get(0).expect("group 0"));
                if m.start() == m.end() {
                    continue;
                }
                if let Some(v) = rule.validator {
                    let ok = match v {
                        Validator::Isin => validate_isin(m.as_str()),
                    };
                    if !ok {
                        continue;
                    }
                }
                if let Some(pre) = &rule.not_preceded_by {
                    if pre.is_match(&text[..m.start()]) {
                        continue;
                    }
                }
                if let Some(post) = &rule.not_followed_by {
                    if post.is_match(&text[m.end()..]) {
                        continue;
                    }
                }
                let span = Span::new(char_at[m.start()], char_at[m.end()]);
                found.push(Annotation::single(rule.target, span, Source::Baseline, rule.confidence));
            }
        }
        found.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()).then(b.confidence.total_cmp(&a.confidence)));
        found.dedup_by(|later, earlier| later.target == earlier.target && later.fragments == earlier.fragments);
        found
    }
}

const PERCENT: &str = r"\d{1,3}(?:[.,]\d{1,4})?\s?(?:%|per cent\.?|Prozent)";

/// The shipped rule set covering all 17 types.
pub fn default_rules() -> Vec<GazetteerRule> {
    use TargetType::*;
    let amount_pct = |target, context: &str| {
        GazetteerRule::pattern(
            target,
            &format!(r"(?:{context})\s*(?P<value>{PERCENT}(?: des Nennbetrags| of the principal amount)?)"),
        )
        .normalizer("percentage")
    };
    vec![
        GazetteerRule::literals(
            Currency,
            &[
                "Euro",
                "EUR",
                "€",
                "US-Dollar",
                "USD",
                "Dollar",
                "Pfund Sterling",
                "Pounds Sterling",
                "GBP",
                "Schweizer Franken",
                "Swiss Francs",
                "CHF",
                "Japanische Yen",
                "JPY",
                "Yen",
            ],
        )
        .not_followed_by("STR")
        .normalizer("currency"),
        GazetteerRule::pattern(Isin, r"\b[A-Z]{2}[A-Z0-9]{9}[0-9]\b").validator(Validator::Isin).normalizer("isin"),
        GazetteerRule::pattern(
            PrincipalAmount,
            r"\b\d{1,3}(?:\.\d{3})+(?:,\d{2})?\b|\b\d{1,3}(?:,\d{3})+(?:\.\d{2})?\b",
        )
        .not_followed_by(r"\s*(?:%|per cent|Prozent|[.,]\d)")
        .normalizer("amount"),
        GazetteerRule::pattern(
            CouponFixed,
            &format!(
                r"(?:Zinssatz beträgt|Festzinssatz von|Fixed Rate of Interest:?|fixed rate of)\s*(?P<value>{PERCENT})"
            ),
        )
        .normalizer("percentage"),
        GazetteerRule::literals(
            CouponVariableIndex,
            &["EURIBOR", "€STR", "EONIA", "LIBOR", "SOFR", "CMS-Satz", "CMS Rate"],
        )
        .normalizer("keyword"),
        GazetteerRule::pattern(
            CouponVariableMargin,
            &format!(r"(?:Marge beträgt|Margin:?)\s*(?P<value>[+-]?\s?{PERCENT})"),
        )
        .normalizer("percentage"),
        GazetteerRule::literals(
            CouponVariableOperator,
            &["zuzüglich", "abzüglich", "multipliziert mit", "plus", "minus", "multiplied by"],
        )
        .normalizer("keyword"),
        GazetteerRule::pattern(
            CouponVariableTenor,
            r"(?i)\b\d{1,2}[ -](?:Monate|Monats|months?)\b|\b(?:drei|sechs|zwölf|three|six|twelve)[ -](?:Monate|Monats|months?)\b",
        ),
        GazetteerRule::literals(
            EarlyRedemption,
            &["vorzeitig zurückzuzahlen", "vorzeitige Rückzahlung", "redeem the Notes early", "early redemption"],
        )
        .not_followed_by(r"(?i)\s+amount"),
        amount_pct(EarlyRedemptionAmount, r"vorzeitige Rückzahlungsbetrag entspricht|Early Redemption Amount:?"),
        GazetteerRule::literals(RedemptionAtMaturity, &["zum Nennbetrag zurückgezahlt", "redeemed at par"])
            .normalizer("percentage"),
        amount_pct(RedemptionAtMaturityAmount, r"Rückzahlungsbetrag:|Final Redemption Amount:?"),
        GazetteerRule::literals(SpecialTermination, &["außerordentliches Kündigungsrecht", "Event of Default"]),
        amount_pct(SpecialTerminationAmount, r"Kündigungsbetrag:|Termination Amount:?"),
        GazetteerRule::pattern(StatusNonPreferred, r"(?i)\bnachrangige[n]?\b|\bsubordinated\b")
            .not_preceded_by(r"(?i)nicht\s")
            .normalizer("keyword"),
        GazetteerRule::pattern(
            StatusSeniorNonPreferred,
            r"(?i)\bnicht nachrangige,? (?:nicht )?bevorrechtigte\b|\bsenior (?:non-)?preferred\b",
        )
        .normalizer("keyword"),
        GazetteerRule::pattern(
            TypeOfInstrument,
            r"(?:Art der Wertpapiere:|Type of Securities:)\s*(?P<value>\p{Lu}[\p{L}-]*(?: \p{Lu}[\p{L}-]*)*)",
        )
        .normalizer("keyword"),
    ]
}

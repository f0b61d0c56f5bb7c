//! Mapping evidence surfaces to comparable values.

use std::fmt;
use std::str::FromStr;

use regex::Regex;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NormalizedValue {
    Code(String),
    Number(Decimal),
    /// Surface text that no normalizer recognised.
    Unknown(String),
}

impl NormalizedValue {
    pub fn is_known(&self) -> bool {
        !matches!(self, NormalizedValue::Unknown(_))
    }
}

impl fmt::Display for NormalizedValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormalizedValue::Code(c) => f.write_str(c),
            NormalizedValue::Number(d) => write!(f, "{}", d.normalize()),
            NormalizedValue::Unknown(s) => write!(f, "unrecognized:{s}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizerKind {
    Currency,
    Amount,
    Percentage,
    Isin,
    Keyword,
    /// Lower-cased, whitespace-collapsed surface.
    Text,
}

const CURRENCY_ALIASES: &[(&str, &str)] = &[
    ("euro", "EUR"),
    ("euros", "EUR"),
    ("€", "EUR"),
    ("us-dollar", "USD"),
    ("us dollar", "USD"),
    ("dollar", "USD"),
    ("$", "USD"),
    ("pfund sterling", "GBP"),
    ("pounds sterling", "GBP"),
    ("pound sterling", "GBP"),
    ("£", "GBP"),
    ("schweizer franken", "CHF"),
    ("swiss francs", "CHF"),
    ("japanische yen", "JPY"),
    ("yen", "JPY"),
];

/// Case-insensitive alias lookup. A bare three-letter upper-case surface is
/// taken as a currency code itself; anything else is `Unknown`.
pub fn normalize_currency(surface: &str) -> NormalizedValue {
    let trimmed = surface.trim();
    let lower = trimmed.to_lowercase();
    if let Some((_, code)) = CURRENCY_ALIASES.iter().find(|(alias, _)| *alias == lower) {
        return NormalizedValue::Code(code.to_string());
    }
    if trimmed.len() == 3 && trimmed.chars().all(|c| c.is_ascii_uppercase()) {
        return NormalizedValue::Code(trimmed.to_string());
    }
    NormalizedValue::Unknown(trimmed.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmountLocale {
    /// `.` groups thousands, `,` separates decimals.
    #[default]
    German,
    /// `,` groups thousands, `.` separates decimals.
    English,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse amount {surface:?}: {reason}")]
pub struct ParseError {
    pub surface: String,
    pub reason: &'static str,
}

fn parse_error(surface: &str, reason: &'static str) -> ParseError {
    ParseError { surface: surface.to_string(), reason }
}

fn valid_grouping(integer_part: &str, sep: char) -> bool {
    let groups: Vec<&str> = integer_part.split(sep).collect();
    let first_ok = (1..=3).contains(&groups[0].len());
    first_ok && groups[1..].iter().all(|g| g.len() == 3)
}

/// Parses German (`1.000.000,00`) and English (`1,000,000.00`) amounts.
///
/// When both separators occur, the last one is the decimal separator. A
/// single separator followed by exactly three digits is ambiguous and is
/// read according to `locale`; any other single separator is decimal.
pub fn parse_amount(surface: &str, locale: AmountLocale) -> Result<Decimal, ParseError> {
    let s = surface.trim();
    let (negative, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest.trim_start()),
        None => (false, s.strip_prefix('+').unwrap_or(s).trim_start()),
    };
    if body.is_empty() || !body.chars().next().unwrap().is_ascii_digit() {
        return Err(parse_error(surface, "no leading digit"));
    }
    if !body.chars().all(|c| c.is_ascii_digit() || c == '.' || c == ',') {
        return Err(parse_error(surface, "unexpected character"));
    }
    if !body.chars().last().unwrap().is_ascii_digit() {
        return Err(parse_error(surface, "trailing separator"));
    }

    let dots = body.matches('.').count();
    let commas = body.matches(',').count();
    let (thousands, decimal): (Option<char>, Option<char>) = match (dots, commas) {
        (0, 0) => (None, None),
        (_, 0) | (0, _) => {
            let sep = if dots > 0 { '.' } else { ',' };
            let count = dots + commas;
            let trailing = body.len() - body.rfind(sep).unwrap() - 1;
            if count > 1 {
                (Some(sep), None)
            } else if trailing == 3 {
                let locale_thousands = match locale {
                    AmountLocale::German => '.',
                    AmountLocale::English => ',',
                };
                if sep == locale_thousands {
                    (Some(sep), None)
                } else {
                    (None, Some(sep))
                }
            } else {
                (None, Some(sep))
            }
        }
        _ => {
            let last_dot = body.rfind('.').unwrap();
            let last_comma = body.rfind(',').unwrap();
            if last_dot > last_comma {
                (Some(','), Some('.'))
            } else {
                (Some('.'), Some(','))
            }
        }
    };

    let (integer_part, fraction) = match decimal {
        Some(d) => {
            let idx = body.rfind(d).unwrap();
            (&body[..idx], Some(&body[idx + 1..]))
        }
        None => (body, None),
    };
    if let Some(f) = fraction {
        if f.contains(['.', ',']) {
            return Err(parse_error(surface, "separator after decimal point"));
        }
    }
    let digits: String = match thousands {
        Some(t) => {
            if !valid_grouping(integer_part, t) {
                return Err(parse_error(surface, "malformed thousands grouping"));
            }
            integer_part.chars().filter(|c| *c != t).collect()
        }
        None => {
            if integer_part.contains(['.', ',']) {
                return Err(parse_error(surface, "mixed separators"));
            }
            integer_part.to_string()
        }
    };
    let mut text = if negative { format!("-{digits}") } else { digits };
    if let Some(f) = fraction {
        text.push('.');
        text.push_str(f);
    }
    Decimal::from_str(&text).map_err(|_| parse_error(surface, "out of range"))
}

fn percent_regex() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)([+-])?\s?(\d{1,3}(?:[.,]\d{1,6})?)\s?(?:%|per\s?cent|prozent)").expect("valid regex")
    })
}

const PAR_WORDS: &[&str] = &["nennbetrag", "nominalbetrag", "at par", "principal amount", "pari"];

/// A percentage such as `2,375 %` or `-0.5 per cent`, or 100 for surfaces
/// that only name par ("zum Nennbetrag", "at par"). A single separator is
/// always decimal here.
pub fn parse_percentage(surface: &str) -> Option<Decimal> {
    if let Some(c) = percent_regex().captures(surface) {
        let number = c[2].replace(',', ".");
        let mut d = Decimal::from_str(&number).ok()?;
        if c.get(1).is_some_and(|m| m.as_str() == "-") {
            d = -d;
        }
        return Some(d);
    }
    let lower = surface.to_lowercase();
    PAR_WORDS.iter().any(|w| lower.contains(w)).then(|| Decimal::from(100))
}

/// First keyword whose needle occurs (case-insensitively) in the surface.
pub fn normalize_keyword(surface: &str, table: &[(String, String)]) -> NormalizedValue {
    let lower = surface.to_lowercase();
    table
        .iter()
        .find(|(needle, _)| lower.contains(&needle.to_lowercase()))
        .map(|(_, v)| NormalizedValue::Code(v.clone()))
        .unwrap_or_else(|| NormalizedValue::Unknown(surface.trim().to_string()))
}

pub fn normalize(
    kind: NormalizerKind,
    surface: &str,
    keywords: &[(String, String)],
    locale: AmountLocale,
) -> NormalizedValue {
    match kind {
        NormalizerKind::Currency => normalize_currency(surface),
        NormalizerKind::Amount => match parse_amount(surface, locale) {
            Ok(d) => NormalizedValue::Number(d),
            Err(_) => NormalizedValue::Unknown(surface.trim().to_string()),
        },
        NormalizerKind::Percentage => match parse_percentage(surface) {
            Some(d) => NormalizedValue::Number(d),
            None => NormalizedValue::Unknown(surface.trim().to_string()),
        },
        NormalizerKind::Isin => {
            let up = surface.trim().to_uppercase();
            if crate::evidence::validate_isin(&up) {
                NormalizedValue::Code(up)
            } else {
                NormalizedValue::Unknown(surface.trim().to_string())
            }
        }
        NormalizerKind::Keyword => normalize_keyword(surface, keywords),
        NormalizerKind::Text => {
            let collapsed = surface.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
            if collapsed.is_empty() {
                NormalizedValue::Unknown(String::new())
            } else {
                NormalizedValue::Code(collapsed)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> Decimal {
        Decimal::from_str(s).unwrap()
    }

    #[test]
    fn currency_aliases() {
        assert_eq!(normalize_currency("Euro"), NormalizedValue::Code("EUR".into()));
        assert_eq!(normalize_currency("EUR"), NormalizedValue::Code("EUR".into()));
        assert_eq!(normalize_currency("EURO"), NormalizedValue::Code("EUR".into()));
        assert_eq!(normalize_currency("  us-dollar "), NormalizedValue::Code("USD".into()));
        assert_eq!(normalize_currency("XYZ"), NormalizedValue::Code("XYZ".into()));
        assert_eq!(normalize_currency("Zorkmids"), NormalizedValue::Unknown("Zorkmids".into()));
        assert_eq!(normalize_currency("abc"), NormalizedValue::Unknown("abc".into()));
    }

    #[test]
    fn amounts_in_both_locales() {
        let g = AmountLocale::German;
        assert_eq!(parse_amount("1.000.000,00", g).unwrap(), d("1000000.00"));
        assert_eq!(parse_amount("50,000.25", g).unwrap(), d("50000.25"));
        assert_eq!(parse_amount("1.000", g).unwrap(), d("1000"));
        assert_eq!(parse_amount("1,000", g).unwrap(), d("1.000"));
        assert_eq!(parse_amount("1,000", AmountLocale::English).unwrap(), d("1000"));
        assert_eq!(parse_amount("250,000,000", g).unwrap(), d("250000000"));
        assert_eq!(parse_amount("12,5", g).unwrap(), d("12.5"));
        assert_eq!(parse_amount("500", g).unwrap(), d("500"));
        assert_eq!(parse_amount("-1.500,5", g).unwrap(), d("-1500.5"));
    }

    #[test]
    fn malformed_amounts() {
        let g = AmountLocale::German;
        for bad in ["--", "", "abc", "1.00.000", "1,000.000,00.1", "12.", "1 000", "1.000,00,0"] {
            assert!(parse_amount(bad, g).is_err(), "{bad:?} should not parse");
        }
    }

    #[test]
    fn percentages() {
        assert_eq!(parse_percentage("2,375 %"), Some(d("2.375")));
        assert_eq!(parse_percentage("1.250 per cent."), Some(d("1.25")));
        assert_eq!(parse_percentage("-0,50 %"), Some(d("-0.5")));
        assert_eq!(parse_percentage("100 % des Nennbetrags"), Some(d("100")));
        assert_eq!(parse_percentage("zum Nennbetrag zurückgezahlt"), Some(d("100")));
        assert_eq!(parse_percentage("redeemed at par"), Some(d("100")));
        assert_eq!(parse_percentage("Event of Default"), None);
    }

    #[test]
    fn keyword_first_match_wins() {
        let table: Vec<(String, String)> = [("nicht bevorrechtigt", "snp"), ("bevorrechtigt", "sp")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        assert_eq!(
            normalize_keyword("nicht nachrangige, nicht bevorrechtigte", &table),
            NormalizedValue::Code("snp".into())
        );
        assert_eq!(normalize_keyword("Bevorrechtigte", &table), NormalizedValue::Code("sp".into()));
        assert!(!normalize_keyword("other", &table).is_known());
    }

    #[test]
    fn number_display_is_canonical() {
        assert_eq!(NormalizedValue::Number(d("100.00")).to_string(), "100");
        assert_eq!(NormalizedValue::Number(d("2.3750")).to_string(), "2.375");
    }
}

//! Synthetic prospectus corpus and brute-force oracles for tests.
//!
//! The oracles deliberately share no code with the operations they check.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bio::{BioTag, TaggedSequence};
use crate::decode::{LabelGrid, TransitionMatrix};
use crate::doc_model::{Annotation, Document, DocumentMetadata, Source, Span, TargetType};
use crate::evidence::isin_check_digit;

/// Published train/test annotation counts per type.
pub const PUBLISHED_COUNTS: [(TargetType, usize, usize); 17] = [
    (TargetType::CouponFixed, 431, 375),
    (TargetType::CouponVariableIndex, 56, 84),
    (TargetType::CouponVariableMargin, 38, 42),
    (TargetType::CouponVariableOperator, 37, 43),
    (TargetType::CouponVariableTenor, 45, 75),
    (TargetType::Currency, 514, 577),
    (TargetType::EarlyRedemptionAmount, 64, 52),
    (TargetType::EarlyRedemption, 177, 108),
    (TargetType::Isin, 421, 417),
    (TargetType::PrincipalAmount, 784, 800),
    (TargetType::RedemptionAtMaturityAmount, 26, 42),
    (TargetType::RedemptionAtMaturity, 370, 347),
    (TargetType::SpecialTermination, 96, 109),
    (TargetType::SpecialTerminationAmount, 61, 63),
    (TargetType::StatusNonPreferred, 56, 47),
    (TargetType::StatusSeniorNonPreferred, 488, 333),
    (TargetType::TypeOfInstrument, 431, 422),
];

/// Annotator id carried by generated gold annotations.
pub const GOLD_ANNOTATOR: &str = "gold";

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseOptions {
    /// Probability of a page-break artifact between two sentences.
    #[serde(default)]
    pub column_breaks: f64,
    /// Probability that a filler sentence has one word hyphenated across a line break.
    #[serde(default)]
    pub hyphenation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub seed: u64,
    pub documents: usize,
    /// Gold mentions per type, spread at random over the documents.
    pub counts: BTreeMap<TargetType, usize>,
    /// Share of German documents; the rest are English.
    pub german_fraction: f64,
    #[serde(default)]
    pub noise: NoiseOptions,
}

impl FixtureSpec {
    pub fn new(seed: u64, documents: usize) -> Self {
        FixtureSpec { seed, documents, counts: BTreeMap::new(), german_fraction: 0.7, noise: NoiseOptions::default() }
    }

    pub fn with_count(mut self, target: TargetType, count: usize) -> Self {
        self.counts.insert(target, count);
        self
    }

    /// Roughly `mentions` gold mentions split in the proportions of the
    /// published annotation counts, with at least one per type.
    pub fn proportional(seed: u64, documents: usize, mentions: usize) -> Self {
        let total: usize = PUBLISHED_COUNTS.iter().map(|(_, a, b)| a + b).sum();
        let mut spec = FixtureSpec::new(seed, documents);
        for (target, train, test) in PUBLISHED_COUNTS {
            let share = (train + test) as f64 / total as f64;
            spec.counts.insert(target, ((mentions as f64 * share).round() as usize).max(1));
        }
        spec
    }

    /// The spec behind the committed fixture corpus.
    pub fn committed() -> Self {
        let mut spec = FixtureSpec::proportional(20240501, 40, 360);
        spec.noise = NoiseOptions { column_breaks: 0.1, hyphenation: 0.2 };
        spec
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Lang {
    De,
    En,
}

/// Values shared by every mention within one document.
struct Deal {
    lang: Lang,
    currency: &'static str,
    isin: String,
    principal: u64,
    fixed_eighths: u32,
    index: &'static str,
    operator: usize,
    margin_bp: u32,
    tenor_months: u32,
    early_amount: u32,
    final_amount: u32,
    termination_amount: u32,
    instrument: usize,
}

fn weighted<'a, T>(rng: &mut ChaCha8Rng, items: &'a [(T, u32)]) -> &'a T {
    &items.choose_weighted(rng, |(_, w)| *w).expect("non-empty weights").0
}

fn random_isin(rng: &mut ChaCha8Rng) -> String {
    const COUNTRIES: [&str; 6] = ["DE", "XS", "AT", "FR", "NL", "LU"];
    const ALNUM: &[u8] = b"0123456789ABCDEFGHJKLMNPQRSTUVWXYZ";
    let mut body = COUNTRIES.choose(rng).expect("countries").to_string();
    for i in 0..9 {
        let c = if i < 3 && rng.gen_bool(0.2) {
            ALNUM[rng.gen_range(10..ALNUM.len())]
        } else {
            ALNUM[rng.gen_range(0..10)]
        };
        body.push(c as char);
    }
    let check = isin_check_digit(&body).expect("generated body is well formed");
    format!("{body}{check}")
}

impl Deal {
    fn random(rng: &mut ChaCha8Rng, german_fraction: f64) -> Self {
        let lang = if rng.gen_bool(german_fraction.clamp(0.0, 1.0)) { Lang::De } else { Lang::En };
        Deal {
            lang,
            currency: weighted(rng, &[("EUR", 80), ("USD", 8), ("GBP", 6), ("CHF", 6)]),
            isin: random_isin(rng),
            principal: rng.gen_range(10..=9999u64) * 100_000,
            fixed_eighths: rng.gen_range(1..=48),
            index: weighted(rng, &[("EURIBOR", 70), ("€STR", 15), ("LIBOR", 15)]),
            operator: *weighted(rng, &[(0usize, 80), (1, 10), (2, 10)]),
            margin_bp: rng.gen_range(1..=60) * 5,
            tenor_months: *[3, 6, 12].choose(rng).expect("tenors"),
            early_amount: *weighted(rng, &[(10000u32, 80), (10150, 10), (9950, 10)]),
            final_amount: *weighted(rng, &[(10000u32, 90), (9800, 10)]),
            termination_amount: *weighted(rng, &[(10000u32, 85), (10100, 15)]),
            instrument: *weighted(rng, &[(0usize, 75), (1, 15), (2, 10)]),
        }
    }

    fn de(&self) -> bool {
        self.lang == Lang::De
    }

    fn currency_surface(&self, rng: &mut ChaCha8Rng) -> &'static str {
        let options: &[&str] = match (self.currency, self.lang) {
            ("EUR", Lang::De) => &["Euro", "EUR", "€"],
            ("EUR", Lang::En) => &["Euro", "EUR"],
            ("USD", Lang::De) => &["US-Dollar", "USD"],
            ("USD", Lang::En) => &["USD", "US-Dollar"],
            ("GBP", Lang::De) => &["Pfund Sterling", "GBP"],
            ("GBP", Lang::En) => &["Pounds Sterling", "GBP"],
            (_, Lang::De) => &["Schweizer Franken", "CHF"],
            (_, Lang::En) => &["Swiss Francs", "CHF"],
        };
        options.choose(rng).expect("surfaces")
    }
}

fn group_digits(n: u64, sep: char) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(sep);
        }
        out.push(c);
    }
    out
}

/// `units / 10^scale` written with at least two decimals when fractional.
/// Whole hundredths print without decimals.
fn decimal(units: u64, scale: u32, de: bool) -> String {
    let div = 10u64.pow(scale);
    let (int, frac) = (units / div, units % div);
    if frac == 0 && scale == 2 {
        return int.to_string();
    }
    let mut frac = format!("{frac:0width$}", width = scale as usize);
    while frac.len() > 2 && frac.ends_with('0') {
        frac.pop();
    }
    format!("{int}{}{frac}", if de { ',' } else { '.' })
}

fn percent(number: String, de: bool) -> String {
    if de {
        format!("{number} %")
    } else {
        format!("{number} per cent.")
    }
}

fn amount_percent(hundredths: u32, de: bool, of_principal: bool) -> String {
    let base = percent(decimal(hundredths as u64, 2, de), de);
    match (of_principal, de) {
        (false, _) => base,
        (true, true) => format!("{base} des Nennbetrags"),
        (true, false) => format!("{base} of the principal amount"),
    }
}

/// One sentence carrying a gold mention: `prefix value suffix`.
struct Mention {
    prefix: &'static str,
    value: String,
    suffix: &'static str,
}

fn mention(target: TargetType, deal: &Deal, rng: &mut ChaCha8Rng) -> Mention {
    use TargetType::*;
    let de = deal.de();
    let pick =
        |rng: &mut ChaCha8Rng, options: &[(&'static str, &'static str)]| *options.choose(rng).expect("templates");
    let (templates, value): (&[(&str, &str)], String) = match (target, de) {
        (Currency, true) => (
            &[("Die Schuldverschreibungen werden in ", " begeben."), ("Festgelegte Währung: ", ".")],
            deal.currency_surface(rng).to_string(),
        ),
        (Currency, false) => (
            &[("Specified Currency: ", "."), ("The Notes are denominated in ", ".")],
            deal.currency_surface(rng).to_string(),
        ),
        (Isin, true) => (&[("ISIN: ", "."), ("Die ISIN lautet ", ".")], deal.isin.clone()),
        (Isin, false) => (&[("ISIN: ", "."), ("ISIN Code: ", ".")], deal.isin.clone()),
        (PrincipalAmount, true) => (
            &[("Der Gesamtnennbetrag der Emission beträgt ", "."), ("Gesamtnennbetrag: ", ".")],
            group_digits(deal.principal, '.'),
        ),
        (PrincipalAmount, false) => (
            &[("Aggregate Principal Amount: ", "."), ("The aggregate principal amount is ", ".")],
            group_digits(deal.principal, ','),
        ),
        (CouponFixed, true) => (
            &[
                ("Der Zinssatz beträgt ", " per annum."),
                ("Die Schuldverschreibungen werden mit einem Festzinssatz von ", " verzinst."),
            ],
            percent(decimal(deal.fixed_eighths as u64 * 125, 3, true), true),
        ),
        (CouponFixed, false) => (
            &[
                ("Fixed Rate of Interest: ", " per annum."),
                ("The Notes bear interest at a fixed rate of ", " per annum."),
            ],
            percent(decimal(deal.fixed_eighths as u64 * 125, 3, false), false),
        ),
        (CouponVariableIndex, true) => {
            (&[("Der Referenzsatz ist der ", "."), ("Referenzsatz: ", ".")], deal.index.to_string())
        }
        (CouponVariableIndex, false) => {
            (&[("Reference Rate: ", "."), ("The reference rate is ", ".")], deal.index.to_string())
        }
        (CouponVariableMargin, _) => (
            if de { &[("Die Marge beträgt ", " per annum.")] } else { &[("Margin: ", " per annum.")] },
            percent(decimal(deal.margin_bp as u64, 2, de), de),
        ),
        (CouponVariableOperator, true) => (
            &[("Der Zinssatz entspricht dem Referenzsatz ", " der Marge.")],
            ["zuzüglich", "abzüglich", "multipliziert mit"][deal.operator].to_string(),
        ),
        (CouponVariableOperator, false) => (
            &[("The Rate of Interest is the Reference Rate ", " the Margin.")],
            ["plus", "minus", "multiplied by"][deal.operator].to_string(),
        ),
        (CouponVariableTenor, true) => {
            let word = match deal.tenor_months {
                3 => "drei",
                6 => "sechs",
                _ => "zwölf",
            };
            let value =
                if rng.gen_bool(0.5) { format!("{word} Monate") } else { format!("{} Monate", deal.tenor_months) };
            (&[("Die Zinsperiode beträgt ", ".")], value)
        }
        (CouponVariableTenor, false) => {
            let word = match deal.tenor_months {
                3 => "three",
                6 => "six",
                _ => "twelve",
            };
            let value =
                if rng.gen_bool(0.5) { format!("{word} months") } else { format!("{} months", deal.tenor_months) };
            (&[("Interest Period: ", ".")], value)
        }
        (EarlyRedemption, true) => {
            if rng.gen_bool(0.5) {
                (
                    &[("Die Emittentin ist berechtigt, die Schuldverschreibungen ", ".")],
                    "vorzeitig zurückzuzahlen".into(),
                )
            } else {
                (&[("Eine ", " nach Wahl der Emittentin ist zulässig.")], "vorzeitige Rückzahlung".into())
            }
        }
        (EarlyRedemption, false) => {
            if rng.gen_bool(0.5) {
                (&[("The Issuer may ", " at its option.")], "redeem the Notes early".into())
            } else {
                (&[("The Issuer may elect ", " of the Notes.")], "early redemption".into())
            }
        }
        (EarlyRedemptionAmount, _) => (
            if de {
                &[("Der vorzeitige Rückzahlungsbetrag entspricht ", ".")]
            } else {
                &[("Early Redemption Amount: ", ".")]
            },
            amount_percent(deal.early_amount, de, true),
        ),
        (RedemptionAtMaturity, true) => {
            (&[("Die Schuldverschreibungen werden am Fälligkeitstag ", ".")], "zum Nennbetrag zurückgezahlt".into())
        }
        (RedemptionAtMaturity, false) => {
            (&[("The Notes will be ", " on the Maturity Date.")], "redeemed at par".into())
        }
        (RedemptionAtMaturityAmount, _) => (
            if de { &[("Rückzahlungsbetrag: ", ".")] } else { &[("Final Redemption Amount: ", ".")] },
            amount_percent(deal.final_amount, de, rng.gen_bool(0.7)),
        ),
        (SpecialTermination, true) => {
            (&[("Den Gläubigern steht ein ", " zu.")], "außerordentliches Kündigungsrecht".into())
        }
        (SpecialTermination, false) => {
            (&[("Each Holder may declare its Notes due upon an ", ".")], "Event of Default".into())
        }
        (SpecialTerminationAmount, _) => (
            if de { &[("Kündigungsbetrag: ", ".")] } else { &[("Termination Amount: ", ".")] },
            amount_percent(deal.termination_amount, de, rng.gen_bool(0.3)),
        ),
        (StatusNonPreferred, true) => {
            (&[("Die Schuldverschreibungen begründen ", " Verbindlichkeiten der Emittentin.")], "nachrangige".into())
        }
        (StatusNonPreferred, false) => {
            (&[("The Notes constitute ", " obligations of the Issuer.")], "subordinated".into())
        }
        (StatusSeniorNonPreferred, true) => (
            &[("Die Schuldverschreibungen begründen ", " Verbindlichkeiten der Emittentin.")],
            "nicht nachrangige, nicht bevorrechtigte".into(),
        ),
        (StatusSeniorNonPreferred, false) => {
            (&[("The Notes constitute ", " obligations of the Issuer.")], "senior non-preferred".into())
        }
        (TypeOfInstrument, true) => {
            let options: [&[&str]; 3] = [
                &["Inhaberschuldverschreibungen", "Schuldverschreibungen"],
                &["Pfandbriefe", "Hypothekenpfandbriefe"],
                &["Zertifikate"],
            ];
            (&[("Art der Wertpapiere: ", ".")], options[deal.instrument].choose(rng).expect("names").to_string())
        }
        (TypeOfInstrument, false) => {
            let options: [&[&str]; 3] = [&["Notes", "Bonds"], &["Covered Bonds"], &["Certificates"]];
            (&[("Type of Securities: ", ".")], options[deal.instrument].choose(rng).expect("names").to_string())
        }
    };
    let (prefix, suffix) = pick(rng, templates);
    Mention { prefix, value, suffix }
}

const FILLER_DE: [&str; 8] = [
    "Diese Endgültigen Bedingungen sind zusammen mit dem Basisprospekt zu lesen.",
    "Die Emittentin hat ihren Sitz in Frankfurt am Main.",
    "Die Zahlstelle ist die Hauptzahlstelle der Emittentin.",
    "Die Anleihebedingungen unterliegen deutschem Recht.",
    "Gerichtsstand ist Frankfurt am Main.",
    "Bekanntmachungen erfolgen im Bundesanzeiger.",
    "Die Zulassung zum Handel am regulierten Markt wird beantragt.",
    "Die Gläubiger sind an die Beschlüsse der Gläubigerversammlung gebunden.",
];

const FILLER_EN: [&str; 8] = [
    "These Final Terms must be read in conjunction with the Base Prospectus.",
    "The Issuer has its registered office in Frankfurt am Main.",
    "The Notes are governed by German law.",
    "Notices will be published on the website of the Issuer.",
    "The Fiscal Agent is the principal paying agent of the Issuer.",
    "Place of jurisdiction is Frankfurt am Main.",
    "Application will be made for admission to trading on the regulated market.",
    "Holders are bound by resolutions of the meeting of Holders.",
];

fn hyphenate(sentence: &str, rng: &mut ChaCha8Rng) -> String {
    let words: Vec<&str> = sentence.split(' ').collect();
    let long: Vec<usize> = (0..words.len())
        .filter(|&i| words[i].chars().count() >= 8 && words[i].chars().all(char::is_alphabetic))
        .collect();
    let Some(&target) = long.choose(rng) else {
        return sentence.to_string();
    };
    let chars: Vec<char> = words[target].chars().collect();
    let cut = chars.len() / 2;
    let broken = format!("{}-\n{}", chars[..cut].iter().collect::<String>(), chars[cut..].iter().collect::<String>());
    words.iter().enumerate().map(|(i, w)| if i == target { broken.as_str() } else { w }).collect::<Vec<_>>().join(" ")
}

enum Piece {
    Filler(String),
    Mention(TargetType, Mention),
}

/// Generates documents with gold annotations. The same spec always yields
/// the same corpus; a spec without mentions yields an empty corpus.
pub fn generate_corpus(spec: &FixtureSpec) -> Vec<Document> {
    let total: usize = spec.counts.values().sum();
    if total == 0 || spec.documents == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let deals: Vec<Deal> = (0..spec.documents).map(|_| Deal::random(&mut rng, spec.german_fraction)).collect();
    let mut slots: Vec<Vec<TargetType>> = vec![Vec::new(); spec.documents];
    for (&target, &n) in &spec.counts {
        for _ in 0..n {
            slots[rng.gen_range(0..spec.documents)].push(target);
        }
    }

    let issuer_groups = ["credit_institution", "investment_firm", "corporate"];
    let asset_types = ["debt_instrument", "covered_bond", "structured_product"];
    let base_date = NaiveDate::from_ymd_opt(2015, 1, 1).expect("valid date");

    let mut docs = Vec::with_capacity(spec.documents);
    for (i, (deal, targets)) in deals.iter().zip(&slots).enumerate() {
        let de = deal.de();
        let mut pieces: Vec<Piece> = targets.iter().map(|&t| Piece::Mention(t, mention(t, deal, &mut rng))).collect();
        let fillers = if de { &FILLER_DE } else { &FILLER_EN };
        let filler_count = rng.gen_range(2..=4);
        let chosen: Vec<&str> = fillers.choose_multiple(&mut rng, filler_count).copied().collect();
        for sentence in chosen {
            let text = if rng.gen_bool(spec.noise.hyphenation.clamp(0.0, 1.0)) {
                hyphenate(sentence, &mut rng)
            } else {
                sentence.to_string()
            };
            pieces.push(Piece::Filler(text));
        }
        pieces.shuffle(&mut rng);

        let mut text = String::from(if de { "Endgültige Bedingungen" } else { "Final Terms" });
        let mut len = text.chars().count();
        let mut annotations = Vec::new();
        for piece in pieces {
            let sep = if rng.gen_bool(spec.noise.column_breaks.clamp(0.0, 1.0)) {
                format!("\n\n{}\n\n", rng.gen_range(2..60))
            } else {
                "\n".to_string()
            };
            let sentence = match piece {
                Piece::Filler(s) => s,
                Piece::Mention(target, m) => {
                    let start = len + sep.chars().count() + m.prefix.chars().count();
                    let end = start + m.value.chars().count();
                    annotations.push(
                        Annotation::single(target, Span::new(start, end), Source::Human, 1.0)
                            .with_annotator(GOLD_ANNOTATOR),
                    );
                    format!("{}{}{}", m.prefix, m.value, m.suffix)
                }
            };
            len += sep.chars().count() + sentence.chars().count();
            text.push_str(&sep);
            text.push_str(&sentence);
        }
        annotations.sort_by_key(Annotation::sort_key);

        let mut doc = Document::new(format!("fx-{:04}", i + 1), text);
        doc.metadata = DocumentMetadata {
            isin: Some(deal.isin.clone()),
            issue_date: Some(base_date + chrono::Duration::days(rng.gen_range(0..3650))),
            issuer_group: Some(issuer_groups.choose(&mut rng).expect("groups").to_string()),
            asset_type: Some(
                (*weighted(&mut rng, &[(asset_types[0], 70), (asset_types[1], 15), (asset_types[2], 15)])).to_string(),
            ),
            extra: BTreeMap::new(),
        };
        doc.annotations = annotations;
        docs.push(doc);
    }
    docs
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("oracle refuses grids longer than {max} tokens (got {len})")]
pub struct OracleRefused {
    pub len: usize,
    pub max: usize,
}

/// Longest grid [`oracle_viterbi`] will enumerate.
pub const ORACLE_MAX_LEN: usize = 10;

/// Exhaustive search over all `3^m` tag sequences. Sequences with `I` after
/// `O` or at the start are discarded; among the rest the highest total score
/// wins, earliest in `B < I < O` lexicographic order on ties.
pub fn oracle_viterbi(grid: &LabelGrid, trans: &TransitionMatrix) -> Result<TaggedSequence, OracleRefused> {
    let m = grid.scores.len();
    if m > ORACLE_MAX_LEN {
        return Err(OracleRefused { len: m, max: ORACLE_MAX_LEN });
    }
    const TAGS: [BioTag; 3] = [BioTag::B, BioTag::I, BioTag::O];
    let table = trans.rows();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut digits = vec![0usize; m];
    for _ in 0..3usize.pow(m as u32) {
        let allowed = digits.iter().enumerate().all(|(p, &d)| d != 1 || (p > 0 && digits[p - 1] != 2));
        if allowed {
            let mut score = 0.0;
            let mut prev_row = 0;
            for (p, &d) in digits.iter().enumerate() {
                score += table[prev_row][d] + grid.scores[p][d];
                prev_row = d + 1;
            }
            if best.as_ref().is_none_or(|(s, _)| score > *s) {
                best = Some((score, digits.clone()));
            }
        }
        // odometer increment, last position fastest
        for p in (0..m).rev() {
            digits[p] += 1;
            if digits[p] < 3 {
                break;
            }
            digits[p] = 0;
        }
    }
    let tags = best.map(|(_, d)| d.into_iter().map(|x| TAGS[x]).collect()).unwrap_or_default();
    Ok(TaggedSequence { target: grid.target, tags })
}

/// IoU over explicitly materialized character index sets.
pub fn oracle_iou(a: &[Span], b: &[Span]) -> f64 {
    let set = |spans: &[Span]| -> BTreeSet<usize> { spans.iter().flat_map(|s| s.start..s.end).collect() };
    let (sa, sb) = (set(a), set(b));
    let union = sa.union(&sb).count();
    if union == 0 {
        return 0.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

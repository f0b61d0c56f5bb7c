//! Building blocks of the command line: corpus I/O, backend construction
//! and report rendering.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context};
use prospectus_core::decider::DeciderConfig;
use prospectus_core::decode::TransitionMatrix;
use prospectus_core::evaluation::{evaluate_corpus, iaa_report, AgreementReport, EvaluationReport, IouMode, MatchMode};
use prospectus_core::evidence::{BaselineBackend, CombinedBackend, RemoteBackend, RemoteModelConfig};
use prospectus_core::{BackendKind, Document, EvidenceBackend};

/// Reads documents from a JSON array, a single JSON object or JSON lines.
pub fn read_documents(path: &Path) -> anyhow::Result<Vec<Document>> {
    let raw = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_documents(&raw).with_context(|| format!("parsing {}", path.display()))
}

pub fn parse_documents(raw: &str) -> anyhow::Result<Vec<Document>> {
    let trimmed = raw.trim_start();
    if trimmed.starts_with('[') {
        return Ok(serde_json::from_str(trimmed)?);
    }
    if let Ok(doc) = serde_json::from_str::<Document>(trimmed) {
        return Ok(vec![doc]);
    }
    let mut docs = Vec::new();
    for (n, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        docs.push(serde_json::from_str(line).with_context(|| format!("line {}", n + 1))?);
    }
    Ok(docs)
}

/// One compact JSON document per line.
pub fn documents_to_jsonl(docs: &[Document]) -> String {
    let mut out = String::new();
    for d in docs {
        out.push_str(&serde_json::to_string(d).expect("document serializes"));
        out.push('\n');
    }
    out
}

pub fn load_config(path: Option<&Path>) -> anyhow::Result<DeciderConfig> {
    match path {
        None => Ok(DeciderConfig::default()),
        Some(p) => {
            let raw = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            DeciderConfig::from_json(&raw).with_context(|| format!("loading decider config {}", p.display()))
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct BackendOptions {
    pub kind: Option<BackendKind>,
    pub remote_endpoint: Option<String>,
    /// JSON file holding a full remote model configuration.
    pub remote_config: Option<std::path::PathBuf>,
    /// Transition table file; the standard BIO constraints when absent.
    pub transitions: Option<std::path::PathBuf>,
}

fn remote_backend(opts: &BackendOptions) -> anyhow::Result<RemoteBackend> {
    let mut config = match &opts.remote_config {
        Some(p) => {
            let raw = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<RemoteModelConfig>(&raw).with_context(|| format!("parsing {}", p.display()))?
        }
        None => match &opts.remote_endpoint {
            Some(endpoint) => RemoteModelConfig::new(endpoint.clone()),
            None => bail!("the remote backend needs --remote-endpoint or --remote-config"),
        },
    };
    if let (Some(endpoint), Some(_)) = (&opts.remote_endpoint, &opts.remote_config) {
        config.endpoint = endpoint.clone();
    }
    config.validate()?;
    let transitions = match &opts.transitions {
        Some(p) => fs::read_to_string(p)
            .with_context(|| format!("reading {}", p.display()))?
            .parse::<TransitionMatrix>()
            .map_err(|e| anyhow::anyhow!("{}: {e}", p.display()))?,
        None => TransitionMatrix::default(),
    };
    Ok(RemoteBackend { config, transitions })
}

pub fn build_backend(opts: &BackendOptions) -> anyhow::Result<Arc<dyn EvidenceBackend>> {
    Ok(match opts.kind.unwrap_or(BackendKind::Baseline) {
        BackendKind::Baseline => Arc::new(BaselineBackend::default()),
        BackendKind::Remote => Arc::new(remote_backend(opts)?),
        BackendKind::Both => {
            Arc::new(CombinedBackend { remote: remote_backend(opts)?, baseline: BaselineBackend::default() })
        }
    })
}

pub fn parse_iou_mode(s: &str) -> anyhow::Result<IouMode> {
    match s {
        "charset" => Ok(IouMode::CharSet),
        "hull" => Ok(IouMode::Hull),
        other => bail!("unknown IoU mode `{other}` (expected charset or hull)"),
    }
}

pub fn parse_match_mode(s: &str, theta: f64) -> anyhow::Result<MatchMode> {
    match s {
        "exact" => Ok(MatchMode::Exact),
        "overlap" => {
            if !(theta > 0.0 && theta <= 1.0) {
                bail!("--theta must lie in (0, 1], got {theta}");
            }
            Ok(MatchMode::Overlap(theta))
        }
        other => bail!("unknown match mode `{other}` (expected exact or overlap)"),
    }
}

/// `type  mean_iou  items` per type with at least one item.
pub fn agreement_tsv(report: &AgreementReport) -> String {
    let mut out = String::from("type\tmean_iou\titems\n");
    for (target, agreement) in &report.per_type {
        if agreement.items > 0 {
            out.push_str(&format!("{target}\t{:.6}\t{}\n", agreement.mean_iou, agreement.items));
        }
    }
    out
}

pub fn iaa(corpus: &[Document], mode: IouMode) -> anyhow::Result<String> {
    Ok(agreement_tsv(&iaa_report(corpus, mode)?))
}

/// Scores `predictions` (documents matched by id) against the gold corpus.
pub fn prf_report(gold: &[Document], predictions: &[Document], mode: MatchMode) -> EvaluationReport {
    let by_id: BTreeMap<String, Vec<prospectus_core::Annotation>> =
        predictions.iter().map(|d| (d.id.clone(), d.annotations.clone())).collect();
    evaluate_corpus(gold, &by_id, mode)
}

/// Baseline predictions for every document of a corpus.
pub fn baseline_predictions(corpus: &[Document]) -> anyhow::Result<Vec<Document>> {
    let backend = BaselineBackend::default();
    corpus
        .iter()
        .map(|d| {
            let mut p = d.clone();
            p.annotations = backend.detect(d)?;
            Ok(p)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_three_layouts() {
        let one = r#"{"id":"a","text":"EUR"}"#;
        assert_eq!(parse_documents(one).unwrap().len(), 1);
        let arr = format!("[{one},{one}]");
        assert_eq!(parse_documents(&arr).unwrap().len(), 2);
        let lines = format!("{one}\n\n{one}\n");
        assert_eq!(parse_documents(&lines).unwrap().len(), 2);
        assert!(parse_documents("{nope").is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let docs = vec![Document::new("a", "EUR 5"), Document::new("b", "")];
        assert_eq!(parse_documents(&documents_to_jsonl(&docs)).unwrap(), docs);
    }

    #[test]
    fn modes() {
        assert_eq!(parse_match_mode("overlap", 0.5).unwrap(), MatchMode::Overlap(0.5));
        assert!(parse_match_mode("overlap", 0.0).is_err());
        assert_eq!(parse_iou_mode("hull").unwrap(), IouMode::Hull);
        assert!(parse_iou_mode("x").is_err());
    }

    #[test]
    fn remote_needs_endpoint() {
        let opts = BackendOptions { kind: Some(BackendKind::Remote), ..Default::default() };
        assert!(build_backend(&opts).is_err());
        let opts = BackendOptions { remote_endpoint: Some("http://127.0.0.1:1".into()), ..opts };
        assert_eq!(build_backend(&opts).unwrap().name(), "remote");
    }
}

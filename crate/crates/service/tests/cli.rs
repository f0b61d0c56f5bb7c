//! The `prospectus` binary end to end.

mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::*;
use prospectus_core::fixtures::GOLD_ANNOTATOR;
use prospectus_service::commands::documents_to_jsonl;
use prospectus_service::PredictResponse;

fn run(args: &[&str], store: &Path) -> Output {
    let out =
        Command::new(env!("CARGO_BIN_EXE_prospectus")).args(args).env("PROSPECTUS_STORE", store).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn generate_fixtures_reproduces_committed_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("corpus.jsonl");
    run(&["generate-fixtures", "--out", out.to_str().unwrap()], dir.path());
    assert!(std::fs::read(&out).unwrap() == std::fs::read(corpus_path()).unwrap());
}

#[test]
fn predict_matches_golden_and_feeds_export() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let docs: Vec<_> = committed_corpus().iter().take(3).map(raw).collect();
    let input = dir.path().join("in.jsonl");
    std::fs::write(&input, documents_to_jsonl(&docs)).unwrap();

    let out = run(&["predict", input.to_str().unwrap()], &store);
    let responses: Vec<PredictResponse> = stdout(&out).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(responses.len(), 3);
    for r in &responses {
        let golden = std::fs::read_to_string(golden_path(&r.document_id)).unwrap();
        assert_eq!(golden_text(r), golden);
    }

    let export = dir.path().join("train.jsonl");
    run(&["export-training", export.to_str().unwrap()], &store);
    assert_eq!(std::fs::read_to_string(&export).unwrap(), "");
}

#[test]
fn ingest_then_decide() {
    let dir = tempfile::tempdir().unwrap();
    let doc = committed_corpus().remove(2);
    let input = dir.path().join("doc.json");
    std::fs::write(&input, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    let out = run(&["ingest", input.to_str().unwrap(), "--store", dir.path().join("s").to_str().unwrap()], dir.path());
    assert_eq!(stdout(&out).trim(), doc.id);
    assert!(dir.path().join("s/documents").read_dir().unwrap().count() == 1);

    let out = run(&["decide", input.to_str().unwrap()], dir.path());
    let resp: PredictResponse = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(resp.annotations, doc.annotations);
}

#[test]
fn evaluate_prf_writes_tsv_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.tsv");
    run(&["evaluate", "prf", corpus_path().to_str().unwrap(), "--out", report.to_str().unwrap()], dir.path());
    let tsv = std::fs::read_to_string(&report).unwrap();
    let mut lines = tsv.lines();
    assert_eq!(lines.next(), Some("type\tprecision\trecall\tf1\tsupport\tweighted_f1"));
    let currency = tsv.lines().find(|l| l.starts_with("currency\t")).unwrap();
    let f1: f64 = currency.split('\t').nth(3).unwrap().parse().unwrap();
    assert!(f1 >= 0.9, "{currency}");
    assert!(tsv.lines().last().unwrap().starts_with("macro_f1\t"));

    let pred = dir.path().join("pred.jsonl");
    std::fs::write(&pred, std::fs::read(corpus_path()).unwrap()).unwrap();
    let out = run(
        &[
            "evaluate",
            "prf",
            corpus_path().to_str().unwrap(),
            "--pred",
            pred.to_str().unwrap(),
            "--mode",
            "overlap",
            "--theta",
            "0.5",
        ],
        dir.path(),
    );
    assert!(stdout(&out).lines().last().unwrap() == "macro_f1\t1.000000");
}

#[test]
fn evaluate_iaa_on_two_annotators() {
    let dir = tempfile::tempdir().unwrap();
    let docs: Vec<_> = committed_corpus()
        .into_iter()
        .filter(|d| !d.annotations.is_empty())
        .map(|mut d| {
            let mut second = d.annotations.clone();
            for a in &mut second {
                a.annotator_id = Some("second".into());
            }
            assert!(d.annotations.iter().all(|a| a.annotator_id.as_deref() == Some(GOLD_ANNOTATOR)));
            d.annotations.extend(second);
            d
        })
        .collect();
    let input = dir.path().join("iaa.jsonl");
    std::fs::write(&input, documents_to_jsonl(&docs)).unwrap();
    let out = run(&["evaluate", "iaa", input.to_str().unwrap()], dir.path());
    let text = stdout(&out);
    assert!(text.starts_with("type\tmean_iou\titems\n"));
    assert!(text.lines().skip(1).all(|l| l.split('\t').nth(1) == Some("1.000000")), "{text}");
}

#[test]
fn bad_input_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.json");
    std::fs::write(&input, r#"{"id":"x","text":"EUR","annotations":[{"type":"currency","fragments":[[0,9]],"source":"human","confidence":1}]}"#).unwrap();
    let out =
        Command::new(env!("CARGO_BIN_EXE_prospectus")).args(["decide", input.to_str().unwrap()]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid request"));
}

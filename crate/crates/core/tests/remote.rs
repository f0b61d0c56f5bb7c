use std::collections::BTreeMap;
use std::thread;

use prospectus_core::decode::{default_bio_transitions, span_confidence, LabelGrid};
use prospectus_core::evidence::remote::GridRequest;
use prospectus_core::evidence::{
    BaselineBackend, CombinedBackend, DetectError, EvidenceBackend, RemoteBackend, RemoteModelConfig,
};
use prospectus_core::{BioTag, Document, Source, Span, TargetType};

/// Serves grids that tag every token equal to `EUR` as a one-token span.
fn spawn_server(status: u16, extra_row: bool) -> String {
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let addr = server.server_addr().to_ip().unwrap();
    thread::spawn(move || {
        for mut request in server.incoming_requests() {
            let mut body = String::new();
            request.as_reader().read_to_string(&mut body).unwrap();
            let req: GridRequest = serde_json::from_str(&body).unwrap();
            assert!(request.url().starts_with("/predict/"));
            let mut scores: Vec<[f64; 3]> = req
                .tokens
                .iter()
                .map(|t| {
                    if t == "EUR" {
                        [0.9f64.ln(), 0.05f64.ln(), 0.05f64.ln()]
                    } else {
                        [0.1f64.ln(), 0.1f64.ln(), 0.8f64.ln()]
                    }
                })
                .collect();
            if extra_row {
                scores.push([0.0, -50.0, -50.0]);
            }
            let response = tiny_http::Response::from_string(serde_json::json!({ "scores": scores }).to_string())
                .with_status_code(status);
            let _ = request.respond(response);
        }
    });
    format!("http://{addr}")
}

fn config(endpoint: String) -> RemoteModelConfig {
    let mut cfg = RemoteModelConfig::new(endpoint);
    cfg.models = BTreeMap::from([(TargetType::Currency, "currency-v1".to_string())]);
    cfg.timeout_ms = 2_000;
    cfg
}

fn backend(endpoint: String) -> RemoteBackend {
    RemoteBackend { config: config(endpoint), transitions: default_bio_transitions() }
}

#[test]
fn single_token_span_with_its_confidence() {
    let doc = Document::new("r", "Denominated in EUR only");
    let anns = backend(spawn_server(200, false)).detect(&doc).unwrap();
    assert_eq!(anns.len(), 1);
    assert_eq!(anns[0].target, TargetType::Currency);
    assert_eq!(anns[0].fragments, vec![Span::new(15, 18)]);
    assert_eq!(anns[0].source, Source::Model);

    let l = |p: f64| p.ln();
    let grid = LabelGrid::new(TargetType::Currency, vec![[l(0.9), l(0.05), l(0.05)]]).unwrap();
    let expected = span_confidence(&grid, &[BioTag::B], 0..1).unwrap();
    assert!((anns[0].confidence - expected).abs() < 1e-12);
}

#[test]
fn all_outside_grid_gives_nothing() {
    let doc = Document::new("r", "no currency mentioned here");
    assert!(backend(spawn_server(200, false)).detect(&doc).unwrap().is_empty());
}

#[test]
fn overlapping_windows_are_merged() {
    let text =
        (0..20).map(|i| if i % 7 == 3 { "EUR".to_string() } else { format!("w{i}") }).collect::<Vec<_>>().join(" ");
    let doc = Document::new("r", text);
    let mut b = backend(spawn_server(200, false));
    b.config.max_seq_len = 6;
    b.config.stride = 4;
    let anns = b.detect(&doc).unwrap();
    let starts: Vec<usize> = anns.iter().map(|a| a.first_offset()).collect();
    let expected: Vec<usize> = doc.tokens.iter().filter(|t| t.surface == "EUR").map(|t| t.start).collect();
    assert_eq!(starts, expected);
}

#[test]
fn unreachable_endpoint_is_unavailable() {
    let doc = Document::new("r", "EUR");
    let err = backend("http://127.0.0.1:1".into()).detect(&doc).unwrap_err();
    assert!(matches!(err, DetectError::BackendUnavailable(_)), "{err:?}");
}

#[test]
fn server_errors_and_bad_grids() {
    let doc = Document::new("r", "EUR");
    let err = backend(spawn_server(503, false)).detect(&doc).unwrap_err();
    assert!(matches!(err, DetectError::BackendUnavailable(_)), "{err:?}");
    let err = backend(spawn_server(400, false)).detect(&doc).unwrap_err();
    assert!(matches!(err, DetectError::Protocol(_)), "{err:?}");
    let err = backend(spawn_server(200, true)).detect(&doc).unwrap_err();
    assert!(matches!(err, DetectError::Protocol(_)), "{err:?}");
}

#[test]
fn combined_backend_falls_back_to_rules() {
    let doc = Document::new("r", "Festgelegte Währung: Euro.");
    let combined =
        CombinedBackend { remote: backend("http://127.0.0.1:1".into()), baseline: BaselineBackend::default() };
    let (anns, warnings) = combined.detect_with_warnings(&doc).unwrap();
    assert_eq!(anns.len(), 1);
    assert_eq!(warnings.len(), 1);
}

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use prospectus_core::fixtures::{generate_corpus, FixtureSpec, NoiseOptions};
use prospectus_core::BackendKind;
use prospectus_service::commands::{self, BackendOptions};
use prospectus_service::{Controller, DocumentStore, FileStore};

#[derive(Parser)]
#[command(name = "prospectus", version, about = "Eligibility review of bond prospectuses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ServiceArgs {
    /// Decider configuration (JSON); the built-in default when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Evidence detection backend: baseline, remote or both.
    #[arg(long, default_value = "baseline")]
    backend: BackendKind,
    /// Base URL of the model server used by the remote backend.
    #[arg(long)]
    remote_endpoint: Option<String>,
    /// Full remote model configuration (JSON).
    #[arg(long)]
    remote_config: Option<PathBuf>,
    /// BIO transition table for remote decoding.
    #[arg(long)]
    transitions: Option<PathBuf>,
    /// Document store directory.
    #[arg(long, env = "PROSPECTUS_STORE", default_value = "store")]
    store: PathBuf,
}

impl ServiceArgs {
    fn controller(&self) -> anyhow::Result<Controller> {
        let config = commands::load_config(self.config.as_deref())?;
        let backend = commands::build_backend(&BackendOptions {
            kind: Some(self.backend),
            remote_endpoint: self.remote_endpoint.clone(),
            remote_config: self.remote_config.clone(),
            transitions: self.transitions.clone(),
        })?;
        let store: Arc<dyn DocumentStore> =
            Arc::new(FileStore::open(&self.store).with_context(|| format!("opening store {}", self.store.display()))?);
        Ok(Controller::new(store, backend, config))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Iaa,
    Prf,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[command(flatten)]
        service: ServiceArgs,
    },
    /// Store documents as given, without prediction.
    Ingest {
        file: PathBuf,
        #[command(flatten)]
        service: ServiceArgs,
    },
    /// Detect evidence and decide; prints one response per document.
    Predict {
        file: PathBuf,
        #[command(flatten)]
        service: ServiceArgs,
    },
    /// Decide on the annotations in the file; prints one response per document.
    Decide {
        file: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Agreement (iaa) or extraction quality (prf) report as TSV.
    Evaluate {
        metric: Metric,
        corpus: PathBuf,
        /// Predicted documents; baseline predictions when omitted (prf only).
        #[arg(long)]
        pred: Option<PathBuf>,
        /// exact or overlap for prf; charset or hull for iaa.
        #[arg(long)]
        mode: Option<String>,
        /// IoU threshold of overlap matching.
        #[arg(long, default_value_t = 0.5)]
        theta: f64,
        /// Report file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the training examples of all reviewed documents.
    ExportTraining {
        out: PathBuf,
        #[arg(long, env = "PROSPECTUS_STORE", default_value = "store")]
        store: PathBuf,
    },
    /// Generate a synthetic annotated corpus.
    GenerateFixtures {
        #[arg(long, default_value_t = 20240501)]
        seed: u64,
        #[arg(long, default_value_t = 40)]
        docs: usize,
        /// Total gold mentions, spread over the types in training-set proportion.
        #[arg(long, default_value_t = 360)]
        mentions: usize,
        /// Probability of a page-break artifact between sentences.
        #[arg(long, default_value_t = 0.1)]
        column_breaks: f64,
        /// Probability of a hyphenated line break in a filler sentence.
        #[arg(long, default_value_t = 0.2)]
        hyphenation: f64,
        /// Share of German documents.
        #[arg(long, default_value_t = 0.7)]
        german_fraction: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn emit(out: Option<&Path>, body: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, body).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(body.as_bytes())?;
            Ok(())
        }
    }
}

fn print_json_lines<T: serde::Serialize>(items: &[T]) -> anyhow::Result<()> {
    let mut body = String::new();
    for item in items {
        body.push_str(&serde_json::to_string(item)?);
        body.push('\n');
    }
    emit(None, &body)
}

async fn shutdown() {
    let _ = tokio::signal::ctrl_c().await;
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Serve { port, host, service } => {
            let controller = Arc::new(service.controller()?);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port))
                    .await
                    .with_context(|| format!("binding {host}:{port}"))?;
                eprintln!("listening on http://{}", listener.local_addr()?);
                axum::serve(listener, prospectus_service::http::router(controller))
                    .with_graceful_shutdown(shutdown())
                    .await?;
                Ok(())
            })
        }
        Command::Ingest { file, service } => {
            let controller = service.controller()?;
            for doc in commands::read_documents(&file)? {
                let stored = controller.ingest(doc)?;
                println!("{}", stored.document.id);
            }
            Ok(())
        }
        Command::Predict { file, service } => {
            let controller = service.controller()?;
            let responses = commands::read_documents(&file)?
                .into_iter()
                .map(|d| controller.predict(d))
                .collect::<Result<Vec<_>, _>>()?;
            print_json_lines(&responses)
        }
        Command::Decide { file, config } => {
            let config = commands::load_config(config.as_deref())?;
            let controller = Controller::new(
                Arc::new(prospectus_service::MemoryStore::new()),
                Arc::new(prospectus_core::evidence::BaselineBackend::default()),
                config,
            );
            let responses =
                commands::read_documents(&file)?.iter().map(|d| controller.decide(d)).collect::<Result<Vec<_>, _>>()?;
            print_json_lines(&responses)
        }
        Command::Evaluate { metric, corpus, pred, mode, theta, out } => {
            let gold = commands::read_documents(&corpus)?;
            let report = match metric {
                Metric::Iaa => {
                    let mode = commands::parse_iou_mode(mode.as_deref().unwrap_or("charset"))?;
                    commands::iaa(&gold, mode)?
                }
                Metric::Prf => {
                    let mode = commands::parse_match_mode(mode.as_deref().unwrap_or("exact"), theta)?;
                    let predictions = match pred {
                        Some(p) => commands::read_documents(&p)?,
                        None => commands::baseline_predictions(&gold)?,
                    };
                    commands::prf_report(&gold, &predictions, mode).to_tsv()
                }
            };
            emit(out.as_deref(), &report)
        }
        Command::ExportTraining { out, store } => {
            let store: Arc<dyn DocumentStore> = Arc::new(FileStore::open(&store)?);
            let controller = Controller::new(
                store,
                Arc::new(prospectus_core::evidence::BaselineBackend::default()),
                Default::default(),
            );
            let export = controller.export_training()?;
            for (id, reason) in &export.skipped {
                eprintln!("skipped {id}: {reason}");
            }
            emit(Some(&out), &export.jsonl)
        }
        Command::GenerateFixtures { seed, docs, mentions, column_breaks, hyphenation, german_fraction, out } => {
            for (name, p) in
                [("column-breaks", column_breaks), ("hyphenation", hyphenation), ("german-fraction", german_fraction)]
            {
                anyhow::ensure!((0.0..=1.0).contains(&p), "--{name} must lie in [0, 1], got {p}");
            }
            let mut spec = FixtureSpec::proportional(seed, docs, mentions);
            spec.noise = NoiseOptions { column_breaks, hyphenation };
            spec.german_fraction = german_fraction;
            let corpus = generate_corpus(&spec);
            emit(Some(&out), &commands::documents_to_jsonl(&corpus))
        }
    }
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

//! Model service, document store and the `prospectus` command line.

pub mod commands;
pub mod controller;
pub mod http;
pub mod store;

pub use controller::{Controller, FeedbackAck, PredictResponse, ServiceError, Timings};
pub use store::{DocumentStore, FeedbackAction, FeedbackRecord, FileStore, MemoryStore, StoreEvent, StoredDocument};

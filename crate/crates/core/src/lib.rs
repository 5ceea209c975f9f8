//! Generator-retriever-generator question answering.
//!
//! For each question the engine generates background documents with a
//! prompted language model, keeps the ones closest to the question by cosine
//! similarity, retrieves corpus passages with a dual encoder, and asks a
//! reader model for the answer over both sets of evidence. Every model call
//! goes through a pluggable endpoint, with deterministic mocks for offline
//! runs.

pub mod corpus;
pub mod cost;
pub mod embedder;
pub mod error;
pub mod generator;
pub mod http;
pub mod metrics;
pub mod pipeline;
pub mod retriever;
pub mod vindex;

pub use error::{Error, Result};

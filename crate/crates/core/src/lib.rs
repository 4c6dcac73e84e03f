//! Compromised-account detection by authorship verification on short posts.
//!
//! The pipeline has two phases. In training, annotated account timelines are
//! turned into same-author / different-author post pairs ([`corpus`]), posts
//! are tokenized and embedded ([`text`]), and a weight-shared siamese LSTM with
//! a small classifier head is fitted to score pairs ([`nn`], [`verifier`]). In
//! application, every new post of an account is scored against the account's
//! last accepted post and flagged when the score drops below a calibrated
//! threshold ([`detection`]). [`eval`] computes pair-level metrics and
//! [`synth`] generates corpora with known compromise points.

pub mod corpus;
pub mod detection;
pub mod eval;
pub mod nn;
pub mod seed;
pub mod synth;
pub mod text;
pub mod verifier;

pub use corpus::{Account, CompromisePoint, Corpus, PairExample, PairLabel, PairOrigin, Post};
pub use detection::{AccountState, DetectionEvent, Verdict};
pub use eval::{ConfusionMatrix, Metric, MetricsReport};
pub use text::{EmbeddingTable, Tokenizer, Vocabulary};
pub use verifier::{Verifier, VerifierConfig, VerifierModel};

//! Siamese LSTM same-author scorer.
//!
//! Both posts of a pair run through one shared LSTM encoder. The two final
//! hidden states are merged into order-independent features
//! `[h_a + h_b; |h_a − h_b|; h_a ⊙ h_b]`, passed through a tanh layer and a
//! sigmoid unit that outputs `p_same`, the probability that one author wrote
//! both posts.

mod calibrate;
mod checkpoint;
mod model;
mod train;

pub use calibrate::{calibrate_threshold, Calibration};
pub use checkpoint::{
    load_checkpoint, load_checkpoint_for_vocab, read_checkpoint, save_checkpoint,
    write_checkpoint, CheckpointMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use model::{toy_gradient_check, EncodedPair, MergeMode, Verifier, VerifierConfig, VerifierModel};
pub use train::{accuracy_at_half, train, train_observed, EpochStats, TrainReport};

use std::path::PathBuf;

use thiserror::Error;

use crate::corpus::CorpusError;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum VerifierError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("embedding dimension {table} does not match configured {config}")]
    EmbeddingDim { config: usize, table: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{0} pairs must contain both labels")]
    SingleLabel(&'static str),
    #[error("loss became non-finite in epoch {epoch}")]
    NonFiniteLoss { epoch: usize, report: Box<TrainReport> },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("checkpoint checksum mismatch")]
    ChecksumMismatch,
    #[error("checkpoint metadata: {0}")]
    Metadata(String),
    #[error("vocabulary checksum {found} does not match the model's {expected}")]
    VocabMismatch { expected: String, found: String },
}

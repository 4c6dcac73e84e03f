//! Post normalization, vocabulary construction and embedding lookup.

mod embedding;
mod tokenizer;
mod vocab;

pub use embedding::{cooccurrence_embeddings, load_embedding_file, read_embeddings, write_embeddings, EmbeddingSource, EmbeddingTable};
pub use tokenizer::{MentionPolicy, Tokenizer, UrlPolicy, MENTION_TOKEN, URL_TOKEN};
pub use vocab::{build_vocab, encode_indices, encode_post, EncodedPost, Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("vocabulary is empty: no token reaches min_count {min_count}")]
    EmptyVocabulary { min_count: usize },
    #[error("embedding line {line}: expected dimension {expected}, found {found}")]
    Dimension {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("embedding line {line}: component {value:?} is not a finite number")]
    BadComponent { line: usize, value: String },
    #[error("embedding line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("embedding file has no vectors")]
    NoVectors,
    #[error("vocabulary line {line}: {message}")]
    BadVocabulary { line: usize, message: String },
}

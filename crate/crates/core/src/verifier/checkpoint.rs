//! Binary checkpoint format.
//!
//! ```text
//! "AVF1"                      magic
//! u32                         format version
//! u64 + bytes                 JSON metadata (CheckpointMeta)
//! u32                         tensor count
//! per tensor:
//!   u32 + bytes               name
//!   u64, u64                  rows, cols
//!   rows*cols f64             data
//! [32]                        SHA-256 of everything above
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{VerifierConfig, VerifierError, VerifierModel};
use crate::nn::{Activation, DenseParams, LstmParams, Tensor2, GATE_ORDER};
use crate::text::{EmbeddingSource, EmbeddingTable, Tokenizer, Vocabulary};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"AVF1";
pub const CHECKPOINT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: VerifierConfig,
    pub tokenizer: Tokenizer,
    pub vocab_size: usize,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub merge_input_dim: usize,
    pub merge_hidden: usize,
    pub gate_order: Vec<String>,
    pub vocab_checksum: String,
    pub embedding_source: EmbeddingSource,
}

impl CheckpointMeta {
    fn of(model: &VerifierModel) -> Self {
        CheckpointMeta {
            config: model.config.clone(),
            tokenizer: model.tokenizer.clone(),
            vocab_size: model.embedding.rows(),
            embedding_dim: model.embedding.dim,
            hidden_dim: model.encoder.hidden_dim,
            merge_input_dim: model.merge_layer.input_dim(),
            merge_hidden: model.merge_layer.output_dim(),
            gate_order: GATE_ORDER.iter().map(|g| g.to_string()).collect(),
            vocab_checksum: model.vocab_checksum.clone(),
            embedding_source: model.embedding.source,
        }
    }
}

pub fn write_checkpoint(model: &VerifierModel) -> Vec<u8> {
    let meta = serde_json::to_vec(&CheckpointMeta::of(model)).expect("metadata serializes");
    let tensors = model.named_tensors();
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    buf.extend_from_slice(&meta);
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.rows as u64).to_le_bytes());
        buf.extend_from_slice(&(t.cols as u64).to_le_bytes());
        for x in &t.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    buf
}

pub fn save_checkpoint(model: &VerifierModel, path: &Path) -> Result<(), VerifierError> {
    fs::write(path, write_checkpoint(model)).map_err(|source| VerifierError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<VerifierModel, VerifierError> {
    let bytes = fs::read(path).map_err(|source| VerifierError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_checkpoint(&bytes)
}

/// Loads and checks that `vocab` is the vocabulary the model was trained with.
pub fn load_checkpoint_for_vocab(path: &Path, vocab: &Vocabulary) -> Result<VerifierModel, VerifierError> {
    let model = load_checkpoint(path)?;
    let found = vocab.checksum();
    if found != model.vocab_checksum {
        return Err(VerifierError::VocabMismatch {
            expected: model.vocab_checksum,
            found,
        });
    }
    Ok(model)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], VerifierError> {
        let end = self.pos.checked_add(n).ok_or(VerifierError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(VerifierError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, VerifierError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<usize, VerifierError> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| VerifierError::Truncated)
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<VerifierModel, VerifierError> {
    if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(VerifierError::BadMagic);
    }
    if bytes.len() < 4 + 4 + 8 + 4 + DIGEST_LEN {
        return Err(VerifierError::Truncated);
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(VerifierError::ChecksumMismatch);
    }

    let mut r = Reader { buf: body, pos: 4 };
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(VerifierError::UnsupportedVersion(version));
    }
    let meta_len = r.u64()?;
    let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)
        .map_err(|e| VerifierError::Metadata(e.to_string()))?;
    let count = r.u32()? as usize;
    let mut tensors: Vec<(String, Tensor2)> = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|e| VerifierError::Metadata(e.to_string()))?
            .to_string();
        let rows = r.u64()?;
        let cols = r.u64()?;
        let n = rows.checked_mul(cols).ok_or(VerifierError::Truncated)?;
        let raw = r.take(n.checked_mul(8).ok_or(VerifierError::Truncated)?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.push((name, Tensor2::from_vec(rows, cols, data)));
    }
    if r.pos != body.len() {
        return Err(VerifierError::Metadata("trailing bytes after tensors".into()));
    }
    assemble(meta, tensors)
}

fn assemble(meta: CheckpointMeta, tensors: Vec<(String, Tensor2)>) -> Result<VerifierModel, VerifierError> {
    meta.config.validate()?;
    let take = |name: &str, shape: (usize, usize)| -> Result<Tensor2, VerifierError> {
        let t = tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.clone())
            .ok_or_else(|| VerifierError::Metadata(format!("missing tensor {name}")))?;
        if t.shape() != shape {
            return Err(VerifierError::Metadata(format!(
                "tensor {name} has shape {:?}, expected {shape:?}",
                t.shape()
            )));
        }
        if !t.is_finite() {
            return Err(VerifierError::Metadata(format!("tensor {name} has non-finite values")));
        }
        Ok(t)
    };
    let (v, d, h) = (meta.vocab_size, meta.embedding_dim, meta.hidden_dim);
    if d != meta.config.embedding_dim
        || h != meta.config.hidden_dim
        || meta.merge_input_dim != meta.config.merge_input_dim()
        || meta.merge_hidden != meta.config.merge_hidden
    {
        return Err(VerifierError::Metadata("dimensions disagree with config".into()));
    }
    let lstm = |prefix: &str| -> Result<LstmParams, VerifierError> {
        Ok(LstmParams {
            input_dim: d,
            hidden_dim: h,
            w: take(&format!("{prefix}.w"), (4 * h, d))?,
            u: take(&format!("{prefix}.u"), (4 * h, h))?,
            b: take(&format!("{prefix}.b"), (4 * h, 1))?,
        })
    };
    let encoder = lstm("encoder")?;
    let encoder_right = if meta.config.shared_encoder {
        None
    } else {
        Some(lstm("encoder_right")?)
    };
    let m = meta.merge_hidden;
    let embedding = EmbeddingTable {
        dim: d,
        vectors: take("embedding", (v, d))?,
        trainable: meta.config.embeddings_trainable,
        source: meta.embedding_source,
    };
    let merge_layer = DenseParams {
        w: take("merge.w", (m, meta.merge_input_dim))?,
        b: take("merge.b", (m, 1))?,
        activation: Activation::Tanh,
    };
    let output_layer = DenseParams {
        w: take("output.w", (1, m))?,
        b: take("output.b", (1, 1))?,
        activation: Activation::Sigmoid,
    };
    Ok(VerifierModel {
        config: meta.config,
        tokenizer: meta.tokenizer,
        embedding,
        encoder,
        encoder_right,
        merge_layer,
        output_layer,
        vocab_checksum: meta.vocab_checksum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verifier::MergeMode;
    use crate::text::EmbeddingSource;

    fn model(cfg: VerifierConfig) -> (VerifierModel, Vocabulary) {
        let vocab = Vocabulary::from_tokens(["a", "b", "c"]);
        let table = EmbeddingTable::random(&vocab, cfg.embedding_dim, 1, EmbeddingSource::GloveText);
        (VerifierModel::init(cfg, Tokenizer::default(), &vocab, table).unwrap(), vocab)
    }

    fn small() -> VerifierConfig {
        VerifierConfig {
            embedding_dim: 4,
            hidden_dim: 3,
            merge_hidden: 5,
            ..Default::default()
        }
    }

    #[test]
    fn round_trip_is_identity() {
        for cfg in [
            small(),
            VerifierConfig {
                merge: MergeMode::Concat,
                shared_encoder: false,
                ..small()
            },
        ] {
            let (m, _) = model(cfg);
            let bytes = write_checkpoint(&m);
            assert_eq!(&bytes[..4], b"AVF1");
            let back = read_checkpoint(&bytes).unwrap();
            assert_eq!(back, m);
            assert_eq!(write_checkpoint(&back), bytes);
        }
    }

    #[test]
    fn corruption_detected() {
        let (m, _) = model(small());
        let mut bytes = write_checkpoint(&m);
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(read_checkpoint(&bytes), Err(VerifierError::ChecksumMismatch)));
        let good = write_checkpoint(&m);
        assert!(matches!(read_checkpoint(&good[..20]), Err(VerifierError::ChecksumMismatch | VerifierError::Truncated)));
        assert!(matches!(read_checkpoint(b"NOPE and more bytes"), Err(VerifierError::BadMagic)));
    }

    #[test]
    fn version_checked() {
        let (m, _) = model(small());
        let mut bytes = write_checkpoint(&m);
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        let n = bytes.len() - DIGEST_LEN;
        let digest = Sha256::digest(&bytes[..n]);
        bytes[n..].copy_from_slice(&digest);
        assert!(matches!(read_checkpoint(&bytes), Err(VerifierError::UnsupportedVersion(2))));
    }

    #[test]
    fn vocabulary_must_match() {
        let (m, vocab) = model(small());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.avf");
        save_checkpoint(&m, &path).unwrap();
        assert!(load_checkpoint_for_vocab(&path, &vocab).is_ok());
        let other = Vocabulary::from_tokens(["a", "b", "d"]);
        assert!(matches!(
            load_checkpoint_for_vocab(&path, &other),
            Err(VerifierError::VocabMismatch { .. })
        ));
    }
}

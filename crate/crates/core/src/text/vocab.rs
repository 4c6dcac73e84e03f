use std::collections::HashMap;
use std::io::{BufRead, Write};

use sha2::{Digest, Sha256};

use super::{EmbeddingTable, TextError, Tokenizer};
use crate::corpus::Corpus;
use crate::nn::Tensor2;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token ↔ index map. Indices 0 and 1 are reserved for padding and
/// out-of-vocabulary tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_index: HashMap<String, usize>,
    index_to_token: Vec<String>,
}

impl Vocabulary {
    /// Builds from tokens already in index order (reserved entries excluded).
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut index_to_token = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        index_to_token.extend(tokens.into_iter().map(Into::into));
        let token_to_index = index_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            token_to_index,
            index_to_token,
        }
    }

    /// Keeps tokens with count ≥ `min_count`, ordered by count descending
    /// then token ascending.
    pub fn from_counts(counts: &HashMap<String, usize>, min_count: usize) -> Result<Self, TextError> {
        let mut kept: Vec<(&String, usize)> = counts
            .iter()
            .filter(|(t, &c)| c >= min_count && t.as_str() != PAD_TOKEN && t.as_str() != UNK_TOKEN)
            .map(|(t, &c)| (t, c))
            .collect();
        if kept.is_empty() {
            return Err(TextError::EmptyVocabulary { min_count });
        }
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Ok(Self::from_tokens(kept.into_iter().map(|(t, _)| t.clone())))
    }

    pub fn len(&self) -> usize {
        self.index_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        // The reserved entries are always present.
        false
    }

    pub fn index(&self, token: &str) -> Option<usize> {
        self.token_to_index.get(token).copied()
    }

    pub fn index_or_unk(&self, token: &str) -> usize {
        self.index(token).unwrap_or(UNK)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.index_to_token.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.index_to_token
    }

    /// One token per line, in index order.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for t in &self.index_to_token {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(reader: R) -> Result<Self, TextError> {
        let mut tokens = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|source| TextError::Io {
                path: Default::default(),
                source,
            })?;
            tokens.push((i + 1, line));
        }
        let reserved = [PAD_TOKEN, UNK_TOKEN];
        for (k, want) in reserved.iter().enumerate() {
            if tokens.get(k).map(|(_, t)| t.as_str()) != Some(want) {
                return Err(TextError::BadVocabulary {
                    line: k + 1,
                    message: format!("expected reserved token {want}"),
                });
            }
        }
        let vocab = Self::from_tokens(tokens[2..].iter().map(|(_, t)| t.clone()));
        if vocab.token_to_index.len() != vocab.index_to_token.len() {
            let mut seen = HashMap::new();
            for (line, t) in &tokens {
                if seen.insert(t, *line).is_some() {
                    return Err(TextError::BadVocabulary {
                        line: *line,
                        message: format!("duplicate token {t:?}"),
                    });
                }
            }
        }
        Ok(vocab)
    }

    /// Hex SHA-256 of the text export.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.index_to_token {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn build_vocab(
    corpus: &Corpus,
    tokenizer: &Tokenizer,
    min_count: usize,
) -> Result<Vocabulary, TextError> {
    assert!(min_count >= 1, "min_count must be at least 1");
    let mut counts: HashMap<String, usize> = HashMap::new();
    for post in corpus.posts() {
        for tok in tokenizer.tokenize(&post.text) {
            *counts.entry(tok).or_default() += 1;
        }
    }
    Vocabulary::from_counts(&counts, min_count)
}

/// Model input for one post.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPost {
    /// Vocabulary indices; a single `PAD` when the post has no tokens.
    pub indices: Vec<usize>,
    /// Row lookups of `indices`, one row per position.
    pub embedded: Tensor2,
    /// Token count before padding.
    pub true_length: usize,
}

pub fn encode_indices(vocab: &Vocabulary, tokens: &[String]) -> (Vec<usize>, usize) {
    if tokens.is_empty() {
        return (vec![PAD], 0);
    }
    (tokens.iter().map(|t| vocab.index_or_unk(t)).collect(), tokens.len())
}

pub fn encode_post(vocab: &Vocabulary, table: &EmbeddingTable, tokens: &[String]) -> EncodedPost {
    let (indices, true_length) = encode_indices(vocab, tokens);
    let embedded = table.lookup(&indices);
    EncodedPost {
        indices,
        embedded,
        true_length,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::EmbeddingSource;

    fn counts(pairs: &[(&str, usize)]) -> HashMap<String, usize> {
        pairs.iter().map(|(t, c)| (t.to_string(), *c)).collect()
    }

    #[test]
    fn min_count_filtering_and_order() {
        let c = counts(&[("a", 5), ("b", 2), ("c", 1)]);
        let v = Vocabulary::from_counts(&c, 2).unwrap();
        assert_eq!(v.tokens(), ["<pad>", "<unk>", "a", "b"]);
        let v = Vocabulary::from_counts(&c, 1).unwrap();
        assert_eq!(v.index("c"), Some(4));
        assert!(matches!(
            Vocabulary::from_counts(&c, 6),
            Err(TextError::EmptyVocabulary { min_count: 6 })
        ));
    }

    #[test]
    fn ties_break_lexicographically() {
        let v = Vocabulary::from_counts(&counts(&[("zeta", 3), ("alpha", 3), ("mid", 3)]), 1).unwrap();
        assert_eq!(&v.tokens()[2..], ["alpha", "mid", "zeta"]);
    }

    #[test]
    fn round_trip_and_text_export() {
        let v = Vocabulary::from_tokens(["x", "#y", "<url>"]);
        for (i, t) in v.tokens().iter().enumerate() {
            assert_eq!(v.index(t), Some(i));
            assert_eq!(v.token(i), Some(t.as_str()));
        }
        let mut buf = Vec::new();
        v.write_text(&mut buf).unwrap();
        let back = Vocabulary::read_text(buf.as_slice()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.checksum(), v.checksum());
        assert_ne!(Vocabulary::from_tokens(["x"]).checksum(), v.checksum());
        assert!(Vocabulary::read_text("a\nb\n".as_bytes()).is_err());
        assert!(Vocabulary::read_text("<pad>\n<unk>\nq\nq\n".as_bytes()).is_err());
    }

    #[test]
    fn encode_maps_oov_to_unk() {
        let v = Vocabulary::from_tokens(["a"]);
        let table = EmbeddingTable::random(&v, 4, 1, EmbeddingSource::RandomInit);
        let enc = encode_post(&v, &table, &["a".into(), "zzz".into()]);
        assert_eq!(enc.indices, [2, 1]);
        assert_eq!(enc.true_length, 2);
        for (pos, &ix) in enc.indices.iter().enumerate() {
            assert_eq!(enc.embedded.row(pos), table.vectors.row(ix));
        }
        let empty = encode_post(&v, &table, &[]);
        assert_eq!(empty.indices, [PAD]);
        assert_eq!(empty.true_length, 0);
        assert!(empty.embedded.row(0).iter().all(|&x| x == 0.0));
    }
}

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{build_vocab, TextError, Tokenizer, Vocabulary, PAD, UNK};
use crate::corpus::Corpus;
use crate::nn::Tensor2;
use crate::seed;

/// Half-width of the uniform range used for rows the file does not cover.
pub const OOV_INIT_RANGE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    GloveText,
    Word2vecText,
    RandomInit,
    Cooccurrence,
}

/// One `dim`-wide row per vocabulary index. The padding row is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub vectors: Tensor2,
    pub trainable: bool,
    pub source: EmbeddingSource,
}

impl EmbeddingTable {
    /// Uniform rows in ±[`OOV_INIT_RANGE`]; row `i` depends only on `(seed, i)`.
    pub fn random(vocab: &Vocabulary, dim: usize, seed: u64, source: EmbeddingSource) -> Self {
        let mut vectors = Tensor2::zeros(vocab.len(), dim);
        let mut rng = seed::rng(seed::derive(seed, 0xE3B));
        for r in 0..vocab.len() {
            for x in vectors.row_mut(r) {
                *x = rng.random_range(-OOV_INIT_RANGE..=OOV_INIT_RANGE);
            }
        }
        vectors.row_mut(PAD).fill(0.0);
        EmbeddingTable {
            dim,
            vectors,
            trainable: false,
            source,
        }
    }

    /// Count-based vectors built from unlabeled text. Each word starts as its
    /// positive-PMI row over post-level co-occurrence, randomly projected to
    /// `dim`; `smoothing` rounds then replace every vector by the PMI-weighted
    /// mean of itself and its neighbours. Rows are scaled to L2 norm `norm`.
    /// Words that never co-occur keep the [`Self::random`] row.
    pub fn cooccurrence<P: AsRef<[String]>>(
        vocab: &Vocabulary,
        posts: &[P],
        dim: usize,
        norm: f64,
        smoothing: usize,
        seed: u64,
    ) -> Self {
        let mut table = Self::random(vocab, dim, seed, EmbeddingSource::Cooccurrence);
        let mut single = vec![0.0f64; vocab.len()];
        let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
        let mut total = 0.0;
        for post in posts {
            let mut ix: Vec<usize> = post.as_ref().iter().map(|t| vocab.index_or_unk(t)).collect();
            ix.sort_unstable();
            ix.dedup();
            ix.retain(|&i| i != PAD && i != UNK);
            total += 1.0;
            for (a, &w) in ix.iter().enumerate() {
                single[w] += 1.0;
                for &c in &ix[a + 1..] {
                    *joint.entry((w, c)).or_default() += 1.0;
                }
            }
        }
        let mut cells: Vec<_> = joint
            .into_iter()
            .map(|((w, c), n)| ((w, c), (n * total / (single[w] * single[c])).ln()))
            .filter(|&(_, pmi)| pmi > 0.0)
            .collect();
        cells.sort_unstable_by_key(|&(k, _)| k);
        let mut neighbours: Vec<Vec<(usize, f64)>> = vec![Vec::new(); vocab.len()];
        for &((w, c), pmi) in &cells {
            neighbours[w].push((c, pmi));
            neighbours[c].push((w, pmi));
        }

        let projection = seed::derive(seed, 0xC0C);
        let mut vecs = Tensor2::zeros(vocab.len(), dim);
        for (w, row) in neighbours.iter().enumerate() {
            for &(c, pmi) in row {
                let mut rng = seed::rng(seed::derive(projection, c as u64));
                for x in vecs.row_mut(w) {
                    *x += if rng.random_bool(0.5) { pmi } else { -pmi };
                }
            }
        }
        normalize_rows(&mut vecs, 1.0);
        for _ in 0..smoothing {
            let mut next = vecs.clone();
            for (w, row) in neighbours.iter().enumerate() {
                for &(c, pmi) in row {
                    let src = vecs.row(c).to_vec();
                    for (x, s) in next.row_mut(w).iter_mut().zip(src) {
                        *x += pmi * s;
                    }
                }
            }
            normalize_rows(&mut next, 1.0);
            vecs = next;
        }
        normalize_rows(&mut vecs, norm);
        for (w, row) in neighbours.iter().enumerate() {
            if !row.is_empty() {
                table.vectors.row_mut(w).copy_from_slice(vecs.row(w));
            }
        }
        table
    }

    pub fn rows(&self) -> usize {
        self.vectors.rows
    }

    /// Gathers rows for `indices` into a `len × dim` matrix.
    pub fn lookup(&self, indices: &[usize]) -> Tensor2 {
        let mut out = Tensor2::zeros(indices.len(), self.dim);
        for (pos, &ix) in indices.iter().enumerate() {
            out.row_mut(pos).copy_from_slice(self.vectors.row(ix));
        }
        out
    }
}

pub fn load_embedding_file(
    path: &Path,
    vocab: &Vocabulary,
    seed: u64,
) -> Result<EmbeddingTable, TextError> {
    let file = File::open(path).map_err(|source| TextError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_embeddings(BufReader::new(file), vocab, seed).map_err(|e| match e {
        TextError::Io { source, .. } => TextError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

/// Co-occurrence vectors (unit norm) over every post of `corpus`, with the
/// vocabulary they index: a stand-in for pretrained vectors on generated text.
pub fn cooccurrence_embeddings(
    corpus: &Corpus,
    tokenizer: &Tokenizer,
    dim: usize,
    smoothing: usize,
    seed: u64,
) -> Result<(Vocabulary, EmbeddingTable), TextError> {
    let vocab = build_vocab(corpus, tokenizer, 1)?;
    let posts: Vec<Vec<String>> = corpus.posts().map(|p| tokenizer.tokenize(&p.text)).collect();
    let table = EmbeddingTable::cooccurrence(&vocab, &posts, dim, 1.0, smoothing, seed);
    Ok((vocab, table))
}

/// Writes GloVe-style `token v1 … vd` lines for every real token (PAD and UNK
/// are skipped). Values use the shortest exact decimal form, so reading the
/// file back reproduces the table bit for bit.
pub fn write_embeddings<W: Write>(mut w: W, vocab: &Vocabulary, table: &EmbeddingTable) -> std::io::Result<()> {
    for (ix, token) in vocab.tokens().iter().enumerate() {
        if ix == PAD || ix == UNK {
            continue;
        }
        write!(w, "{token}")?;
        for v in table.vectors.row(ix) {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut it = line.split_whitespace();
    let count = it.next()?.parse().ok()?;
    let dim = it.next()?.parse().ok()?;
    it.next().is_none().then_some((count, dim))
}

/// Reads `token v1 … vd` lines (GloVe text, or word2vec text when the first
/// line is a `count dim` header). Vocabulary tokens missing from the file get
/// seeded random rows; tokens not in the vocabulary are skipped.
pub fn read_embeddings<R: BufRead>(
    reader: R,
    vocab: &Vocabulary,
    seed: u64,
) -> Result<EmbeddingTable, TextError> {
    let mut dim: Option<usize> = None;
    let mut header_dim = None;
    let mut found: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut covered = vec![false; vocab.len()];

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| TextError::Io {
            path: Default::default(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 {
            if let Some((_, d)) = parse_header(&line) {
                header_dim = Some(d);
                continue;
            }
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().unwrap_or_default();
        let mut values = Vec::with_capacity(dim.unwrap_or(64));
        for p in parts {
            match p.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(TextError::BadComponent {
                        line: line_no,
                        value: p.to_string(),
                    })
                }
            }
        }
        if values.is_empty() {
            return Err(TextError::Malformed {
                line: line_no,
                message: format!("token {token:?} has no vector components"),
            });
        }
        let expected = *dim.get_or_insert_with(|| header_dim.unwrap_or(values.len()));
        if values.len() != expected {
            return Err(TextError::Dimension {
                line: line_no,
                expected,
                found: values.len(),
            });
        }
        if let Some(ix) = vocab.index(token) {
            if ix != PAD && !covered[ix] {
                covered[ix] = true;
                found.push((ix, values));
            }
        }
    }

    let dim = dim.ok_or(TextError::NoVectors)?;
    let source = if header_dim.is_some() {
        EmbeddingSource::Word2vecText
    } else {
        EmbeddingSource::GloveText
    };
    let mut table = EmbeddingTable::random(vocab, dim, seed, source);
    for (ix, values) in found {
        table.vectors.row_mut(ix).copy_from_slice(&values);
    }
    Ok(table)
}

fn normalize_rows(m: &mut Tensor2, norm: f64) {
    for r in 0..m.rows {
        let row = m.row_mut(r);
        let len = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len > 0.0 {
            row.iter_mut().for_each(|x| *x *= norm / len);
        }
    }
}

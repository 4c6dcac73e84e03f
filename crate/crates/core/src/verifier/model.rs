use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::VerifierError;
use crate::corpus::{Corpus, CorpusError, PairExample, PairLabel, PostKey};
use crate::nn::{
    bce_loss, dense_apply, dense_backward, grad_check, lstm_backward, lstm_forward, Activation,
    DenseParams, GradCheckOptions, GradCheckReport, LstmOutput, LstmParams, NnError, Tensor2,
};
use crate::seed;
use crate::text::{encode_indices, EmbeddingTable, Tokenizer, Vocabulary, PAD};

/// How the two post encodings are combined before the classifier head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeMode {
    /// `[h_a + h_b; |h_a − h_b|; h_a ⊙ h_b]`, exactly symmetric in the pair order.
    Symmetric,
    /// `[h_a; h_b; |h_a − h_b|; h_a ⊙ h_b]`, order-dependent.
    Concat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierConfig {
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub merge_hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub embeddings_trainable: bool,
    pub merge: MergeMode,
    /// One encoder for both sides; `false` trains a separate right encoder.
    pub shared_encoder: bool,
    /// Stop once a full pass over the training pairs reaches this accuracy.
    pub early_stop_accuracy: Option<f64>,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        VerifierConfig {
            embedding_dim: 50,
            hidden_dim: 64,
            merge_hidden: 64,
            epochs: 20,
            batch_size: 32,
            lr: 1e-3,
            seed: 0,
            embeddings_trainable: false,
            merge: MergeMode::Symmetric,
            shared_encoder: true,
            early_stop_accuracy: None,
        }
    }
}

impl VerifierConfig {
    pub fn validate(&self) -> Result<(), VerifierError> {
        let sizes = [
            ("embedding_dim", self.embedding_dim),
            ("hidden_dim", self.hidden_dim),
            ("merge_hidden", self.merge_hidden),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(VerifierError::Config(format!("{name} must be positive")));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(VerifierError::Config(format!("lr {} must be positive", self.lr)));
        }
        if let Some(a) = self.early_stop_accuracy {
            if !(0.0..=1.0).contains(&a) {
                return Err(VerifierError::Config(format!("early_stop_accuracy {a} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn merge_input_dim(&self) -> usize {
        match self.merge {
            MergeMode::Symmetric => 3 * self.hidden_dim,
            MergeMode::Concat => 4 * self.hidden_dim,
        }
    }
}

/// A pair ready for the network: index sequences plus training target.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPair {
    pub left: Vec<usize>,
    pub left_len: usize,
    pub right: Vec<usize>,
    pub right_len: usize,
    pub label: PairLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifierModel {
    pub config: VerifierConfig,
    pub tokenizer: Tokenizer,
    pub embedding: EmbeddingTable,
    pub encoder: LstmParams,
    /// Present only when `config.shared_encoder` is false.
    pub encoder_right: Option<LstmParams>,
    pub merge_layer: DenseParams,
    pub output_layer: DenseParams,
    pub vocab_checksum: String,
}

impl VerifierModel {
    pub fn init(
        config: VerifierConfig,
        tokenizer: Tokenizer,
        vocab: &Vocabulary,
        mut table: EmbeddingTable,
    ) -> Result<Self, VerifierError> {
        config.validate()?;
        if table.dim != config.embedding_dim {
            return Err(VerifierError::EmbeddingDim {
                config: config.embedding_dim,
                table: table.dim,
            });
        }
        if table.rows() != vocab.len() {
            return Err(VerifierError::Config(format!(
                "embedding table has {} rows for a vocabulary of {}",
                table.rows(),
                vocab.len()
            )));
        }
        table.trainable = config.embeddings_trainable;
        let mut rng = seed::rng(seed::derive(config.seed, 0x5EED));
        let (d, h) = (config.embedding_dim, config.hidden_dim);
        let encoder = LstmParams::init(d, h, &mut rng);
        let encoder_right = (!config.shared_encoder).then(|| LstmParams::init(d, h, &mut rng));
        let merge_layer =
            DenseParams::init(config.merge_input_dim(), config.merge_hidden, Activation::Tanh, &mut rng);
        let output_layer = DenseParams::init(config.merge_hidden, 1, Activation::Sigmoid, &mut rng);
        Ok(VerifierModel {
            config,
            tokenizer,
            embedding: table,
            encoder,
            encoder_right,
            merge_layer,
            output_layer,
            vocab_checksum: vocab.checksum(),
        })
    }

    fn side_encoder(&self, right: bool) -> &LstmParams {
        match (&self.encoder_right, right) {
            (Some(r), true) => r,
            _ => &self.encoder,
        }
    }

    fn run_encoder(&self, right: bool, indices: &[usize], len: usize) -> Result<LstmOutput, NnError> {
        let inputs = self.embedding.lookup(indices);
        lstm_forward(self.side_encoder(right), &inputs, len)
    }

    /// Final masked hidden state of the (left) encoder; zero for empty posts.
    pub fn encode(&self, indices: &[usize], true_length: usize) -> Vec<f64> {
        self.encode_side(false, indices, true_length)
    }

    pub fn encode_side(&self, right: bool, indices: &[usize], true_length: usize) -> Vec<f64> {
        self.run_encoder(right, indices, true_length)
            .expect("encoder shapes are fixed at init")
            .final_hidden()
            .to_vec()
    }

    pub fn features(&self, ha: &[f64], hb: &[f64]) -> Vec<f64> {
        let mut f = Vec::with_capacity(self.config.merge_input_dim());
        if self.config.merge == MergeMode::Concat {
            f.extend_from_slice(ha);
            f.extend_from_slice(hb);
        } else {
            f.extend(ha.iter().zip(hb).map(|(a, b)| a + b));
        }
        f.extend(ha.iter().zip(hb).map(|(a, b)| (a - b).abs()));
        f.extend(ha.iter().zip(hb).map(|(a, b)| a * b));
        debug_assert_eq!(f.len(), self.config.merge_input_dim());
        f
    }

    /// `p_same` from two encodings.
    pub fn score_hidden(&self, ha: &[f64], hb: &[f64]) -> f64 {
        let f = self.features(ha, hb);
        let (m, _) = dense_apply(&self.merge_layer, &f).expect("merge shapes are fixed at init");
        let (p, _) = dense_apply(&self.output_layer, &m).expect("output shapes are fixed at init");
        p[0]
    }

    pub fn score(&self, left: (&[usize], usize), right: (&[usize], usize)) -> f64 {
        let ha = self.encode_side(false, left.0, left.1);
        let hb = self.encode_side(true, right.0, right.1);
        self.score_hidden(&ha, &hb)
    }

    pub fn score_pair(&self, pair: &EncodedPair) -> f64 {
        self.score((&pair.left, pair.left_len), (&pair.right, pair.right_len))
    }

    pub fn loss(&self, pair: &EncodedPair) -> f64 {
        bce_loss(self.score_pair(pair), pair.label.target()).0
    }

    /// Adds this pair's gradients into `grads` (laid out like
    /// [`trainable_params`](Self::trainable_params)); returns `(loss, p_same)`.
    pub fn accumulate_gradients(
        &self,
        pair: &EncodedPair,
        grads: &mut [Tensor2],
    ) -> Result<(f64, f64), NnError> {
        let slots = Slots::of(self);
        if grads.len() != slots.count {
            return Err(NnError::ParamCount {
                params: slots.count,
                grads: grads.len(),
            });
        }
        let ea = self.run_encoder(false, &pair.left, pair.left_len)?;
        let eb = self.run_encoder(true, &pair.right, pair.right_len)?;
        let (ha, hb) = (ea.final_hidden(), eb.final_hidden());
        let f = self.features(ha, hb);
        let (m, merge_cache) = dense_apply(&self.merge_layer, &f)?;
        let (p, out_cache) = dense_apply(&self.output_layer, &m)?;
        let p = p[0];
        let (loss, dp) = bce_loss(p, pair.label.target());

        let g_out = dense_backward(&self.output_layer, &out_cache, &[dp])?;
        let g_merge = dense_backward(&self.merge_layer, &merge_cache, &g_out.input)?;
        grads[slots.output].add_assign(&g_out.w);
        grads[slots.output + 1].add_assign(&g_out.b);
        grads[slots.merge].add_assign(&g_merge.w);
        grads[slots.merge + 1].add_assign(&g_merge.b);

        let h = ha.len();
        let df = &g_merge.input;
        let (mut dha, mut dhb) = (vec![0.0; h], vec![0.0; h]);
        let blocks = match self.config.merge {
            MergeMode::Symmetric => {
                for j in 0..h {
                    dha[j] += df[j];
                    dhb[j] += df[j];
                }
                1
            }
            MergeMode::Concat => {
                for j in 0..h {
                    dha[j] += df[j];
                    dhb[j] += df[h + j];
                }
                2
            }
        };
        let (d_abs, d_mul) = (&df[blocks * h..(blocks + 1) * h], &df[(blocks + 1) * h..]);
        for j in 0..h {
            let s = sign(ha[j] - hb[j]);
            dha[j] += s * d_abs[j] + hb[j] * d_mul[j];
            dhb[j] += -s * d_abs[j] + ha[j] * d_mul[j];
        }

        for (right, out, dh, indices) in [(false, &ea, dha, &pair.left), (true, &eb, dhb, &pair.right)] {
            let g = lstm_backward(self.side_encoder(right), &out.cache, &dh)?;
            let base = if right { slots.encoder_right } else { slots.encoder };
            grads[base].add_assign(&g.w);
            grads[base + 1].add_assign(&g.u);
            grads[base + 2].add_assign(&g.b);
            if let Some(e) = slots.embedding {
                for (pos, &ix) in indices.iter().enumerate().take(out.cache.true_length()) {
                    if ix != PAD {
                        grads[e]
                            .row_mut(ix)
                            .iter_mut()
                            .zip(g.inputs.row(pos))
                            .for_each(|(a, b)| *a += b);
                    }
                }
            }
        }
        Ok((loss, p))
    }

    /// Tensors updated by training, in a fixed order.
    pub fn trainable_params(&self) -> Vec<&Tensor2> {
        let mut v = Vec::new();
        if self.config.embeddings_trainable {
            v.push(&self.embedding.vectors);
        }
        v.extend([&self.encoder.w, &self.encoder.u, &self.encoder.b]);
        if let Some(r) = &self.encoder_right {
            v.extend([&r.w, &r.u, &r.b]);
        }
        v.extend([
            &self.merge_layer.w,
            &self.merge_layer.b,
            &self.output_layer.w,
            &self.output_layer.b,
        ]);
        v
    }

    pub fn trainable_params_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut v = Vec::new();
        if self.config.embeddings_trainable {
            v.push(&mut self.embedding.vectors);
        }
        v.extend([&mut self.encoder.w, &mut self.encoder.u, &mut self.encoder.b]);
        if let Some(r) = &mut self.encoder_right {
            v.extend([&mut r.w, &mut r.u, &mut r.b]);
        }
        v.extend([
            &mut self.merge_layer.w,
            &mut self.merge_layer.b,
            &mut self.output_layer.w,
            &mut self.output_layer.b,
        ]);
        v
    }

    pub fn zero_grads(&self) -> Vec<Tensor2> {
        self.trainable_params()
            .into_iter()
            .map(|t| Tensor2::zeros(t.rows, t.cols))
            .collect()
    }

    /// Every tensor of the model with its checkpoint name.
    pub fn named_tensors(&self) -> Vec<(&'static str, &Tensor2)> {
        let mut v = vec![
            ("embedding", &self.embedding.vectors),
            ("encoder.w", &self.encoder.w),
            ("encoder.u", &self.encoder.u),
            ("encoder.b", &self.encoder.b),
        ];
        if let Some(r) = &self.encoder_right {
            v.extend([("encoder_right.w", &r.w), ("encoder_right.u", &r.u), ("encoder_right.b", &r.b)]);
        }
        v.extend([
            ("merge.w", &self.merge_layer.w),
            ("merge.b", &self.merge_layer.b),
            ("output.w", &self.output_layer.w),
            ("output.b", &self.output_layer.b),
        ]);
        v
    }

    pub fn flatten_trainable(&self) -> Vec<f64> {
        self.trainable_params()
            .into_iter()
            .flat_map(|t| t.data.iter().copied())
            .collect()
    }

    pub fn set_trainable(&mut self, flat: &[f64]) {
        let mut off = 0;
        for t in self.trainable_params_mut() {
            let n = t.data.len();
            t.data.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        assert_eq!(off, flat.len(), "flat parameter length");
    }

    pub fn flatten_grads(grads: &[Tensor2]) -> Vec<f64> {
        grads.iter().flat_map(|t| t.data.iter().copied()).collect()
    }

    /// Compares backpropagated gradients of the summed pair loss with
    /// central differences over every trainable coordinate.
    pub fn check_gradients(
        &self,
        pairs: &[EncodedPair],
        opts: GradCheckOptions,
    ) -> Result<GradCheckReport, NnError> {
        let mut grads = self.zero_grads();
        for p in pairs {
            self.accumulate_gradients(p, &mut grads)?;
        }
        let analytic = Self::flatten_grads(&grads);
        let x = self.flatten_trainable();
        let mut probe = self.clone();
        grad_check(
            |flat| {
                probe.set_trainable(flat);
                pairs.iter().map(|p| probe.loss(p)).sum()
            },
            &x,
            &analytic,
            opts,
        )
    }
}

/// Gradient check of the full model on a toy problem: 20-token vocabulary,
/// d = H = 8, trainable embeddings, four random pairs of 1 to 6 tokens.
pub fn toy_gradient_check(seed: u64, base: &VerifierConfig) -> Result<GradCheckReport, VerifierError> {
    use rand::Rng;
    let vocab = Vocabulary::from_tokens((0..18).map(|i| format!("tok{i}")));
    let config = VerifierConfig {
        embedding_dim: 8,
        hidden_dim: 8,
        merge_hidden: 8,
        embeddings_trainable: true,
        seed,
        ..base.clone()
    };
    let table = EmbeddingTable::random(&vocab, 8, seed::derive(seed, 1), crate::text::EmbeddingSource::RandomInit);
    let model = VerifierModel::init(config, Tokenizer::default(), &vocab, table)?;
    let mut rng = seed::rng(seed::derive(seed, 2));
    let post = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<usize> {
        (0..rng.random_range(1..=6)).map(|_| rng.random_range(1..vocab.len())).collect()
    };
    let pairs: Vec<EncodedPair> = (0..4)
        .map(|k| {
            let (a, b) = (post(&mut rng), post(&mut rng));
            EncodedPair {
                left_len: a.len(),
                left: a,
                right_len: b.len(),
                right: b,
                label: if k % 2 == 0 { PairLabel::SameAuthor } else { PairLabel::DifferentAuthor },
            }
        })
        .collect();
    Ok(model.check_gradients(&pairs, GradCheckOptions::default())?)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Positions of each parameter group inside the trainable list.
struct Slots {
    embedding: Option<usize>,
    encoder: usize,
    encoder_right: usize,
    merge: usize,
    output: usize,
    count: usize,
}

impl Slots {
    fn of(model: &VerifierModel) -> Self {
        let e = usize::from(model.config.embeddings_trainable);
        let encoder = e;
        let separate = model.encoder_right.is_some();
        let encoder_right = if separate { encoder + 3 } else { encoder };
        let merge = encoder + if separate { 6 } else { 3 };
        Slots {
            embedding: model.config.embeddings_trainable.then_some(0),
            encoder,
            encoder_right,
            merge,
            output: merge + 2,
            count: merge + 4,
        }
    }
}

/// A model together with the vocabulary it was trained on.
#[derive(Debug, Clone)]
pub struct Verifier {
    pub model: VerifierModel,
    pub vocab: Vocabulary,
}

impl Verifier {
    pub fn new(model: VerifierModel, vocab: Vocabulary) -> Result<Self, VerifierError> {
        let found = vocab.checksum();
        if found != model.vocab_checksum {
            return Err(VerifierError::VocabMismatch {
                expected: model.vocab_checksum.clone(),
                found,
            });
        }
        Ok(Verifier { model, vocab })
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        self.model.tokenizer.tokenize(text)
    }

    pub fn encode_text(&self, text: &str) -> (Vec<usize>, usize) {
        encode_indices(&self.vocab, &self.tokenize(text))
    }

    pub fn score_texts(&self, left: &str, right: &str) -> f64 {
        let (a, la) = self.encode_text(left);
        let (b, lb) = self.encode_text(right);
        self.model.score((&a, la), (&b, lb))
    }

    pub fn encode_pairs(
        &self,
        corpus: &Corpus,
        pairs: &[PairExample],
    ) -> Result<Vec<EncodedPair>, VerifierError> {
        let mut cache: HashMap<&PostKey, (Vec<usize>, usize)> = HashMap::new();
        let mut out = Vec::with_capacity(pairs.len());
        for p in pairs {
            let enc = |key: &PostKey| -> Result<(Vec<usize>, usize), VerifierError> {
                if let Some(e) = cache.get(key) {
                    return Ok(e.clone());
                }
                let post = corpus.post(key).ok_or_else(|| CorpusError::UnknownPost {
                    account_id: key.account_id.clone(),
                    post_index: key.post_index,
                })?;
                Ok(self.encode_text(&post.text))
            };
            let l = enc(&p.left)?;
            let r = enc(&p.right)?;
            cache.entry(&p.left).or_insert_with(|| l.clone());
            cache.entry(&p.right).or_insert_with(|| r.clone());
            out.push(EncodedPair {
                left: l.0,
                left_len: l.1,
                right: r.0,
                right_len: r.1,
                label: p.label,
            });
        }
        Ok(out)
    }

    /// Scores pairs, encoding each distinct post once per side.
    pub fn score_pairs(&self, corpus: &Corpus, pairs: &[PairExample]) -> Result<Vec<f64>, VerifierError> {
        let mut hidden: HashMap<(&PostKey, bool), Vec<f64>> = HashMap::new();
        let shared = self.model.encoder_right.is_none();
        let mut out = Vec::with_capacity(pairs.len());
        for p in pairs {
            for (key, right) in [(&p.left, false), (&p.right, true)] {
                let side = right && !shared;
                if hidden.contains_key(&(key, side)) {
                    continue;
                }
                let post = corpus.post(key).ok_or_else(|| CorpusError::UnknownPost {
                    account_id: key.account_id.clone(),
                    post_index: key.post_index,
                })?;
                let (ix, len) = self.encode_text(&post.text);
                hidden.insert((key, side), self.model.encode_side(side, &ix, len));
            }
            let ha = &hidden[&(&p.left, false)];
            let hb = &hidden[&(&p.right, !shared)];
            out.push(self.model.score_hidden(ha, hb));
        }
        Ok(out)
    }
}

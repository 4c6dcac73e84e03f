use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{EncodedPair, VerifierError, VerifierModel};
use crate::corpus::PairLabel;
use crate::eval::{evaluate_scores, MetricsReport};
use crate::nn::{AdamConfig, AdamState};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Accuracy at 0.5 of the predictions made while the epoch ran.
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// Epoch (1-based) after which the accuracy target was met.
    pub early_stopped_at: Option<usize>,
    /// Validation metrics at threshold 0.5, absent when no validation pairs were given.
    pub validation: Option<MetricsReport>,
    pub wall_clock_seconds: f64,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.mean_loss)
    }
}

fn has_both_labels(pairs: &[EncodedPair]) -> bool {
    let same = pairs.iter().any(|p| p.label == PairLabel::SameAuthor);
    let diff = pairs.iter().any(|p| p.label == PairLabel::DifferentAuthor);
    same && diff
}

pub fn accuracy_at_half(model: &VerifierModel, pairs: &[EncodedPair]) -> f64 {
    let correct = pairs
        .iter()
        .filter(|p| (model.score_pair(p) >= 0.5) == (p.label == PairLabel::SameAuthor))
        .count();
    correct as f64 / pairs.len().max(1) as f64
}

/// Minimizes mean binary cross-entropy of `p_same` against the pair labels
/// with Adam over seeded shuffled mini-batches. Gradients inside a batch are
/// summed in batch order, so a fixed seed gives a bit-identical model.
pub fn train(
    model: VerifierModel,
    train_pairs: &[EncodedPair],
    validation_pairs: &[EncodedPair],
) -> Result<(VerifierModel, TrainReport), VerifierError> {
    train_observed(model, train_pairs, validation_pairs, |_, _| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_observed<F>(
    mut model: VerifierModel,
    train_pairs: &[EncodedPair],
    validation_pairs: &[EncodedPair],
    mut observe: F,
) -> Result<(VerifierModel, TrainReport), VerifierError>
where
    F: FnMut(&EpochStats, &VerifierModel),
{
    let cfg = model.config.clone();
    cfg.validate()?;
    if !has_both_labels(train_pairs) {
        return Err(VerifierError::SingleLabel("training"));
    }
    let started = Instant::now();
    let adam_cfg = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::new(adam_cfg, model.trainable_params());
    let mut order: Vec<usize> = (0..train_pairs.len()).collect();
    let mut report = TrainReport {
        epochs: Vec::with_capacity(cfg.epochs),
        early_stopped_at: None,
        validation: None,
        wall_clock_seconds: 0.0,
    };

    for epoch in 1..=cfg.epochs {
        let mut rng = seed::rng(seed::derive(cfg.seed, 0x7A1_0000 + epoch as u64));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = model.zero_grads();
            for &i in batch {
                let pair = &train_pairs[i];
                let (loss, p) = model.accumulate_gradients(pair, &mut grads)?;
                if !loss.is_finite() {
                    report.wall_clock_seconds = started.elapsed().as_secs_f64();
                    return Err(VerifierError::NonFiniteLoss {
                        epoch,
                        report: Box::new(report),
                    });
                }
                loss_sum += loss;
                correct += usize::from((p >= 0.5) == (pair.label == PairLabel::SameAuthor));
            }
            let scale = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|g| g.scale(scale));
            let grad_refs: Vec<_> = grads.iter().collect();
            adam.step(&mut model.trainable_params_mut(), &grad_refs)?;
        }
        let n = train_pairs.len() as f64;
        let stats = EpochStats {
            epoch,
            mean_loss: loss_sum / n,
            train_accuracy: correct as f64 / n,
        };
        log::info!(
            "epoch {epoch}/{}: loss {:.5} acc {:.4}",
            cfg.epochs,
            stats.mean_loss,
            stats.train_accuracy
        );
        observe(&stats, &model);
        report.epochs.push(stats);
        if let Some(target) = cfg.early_stop_accuracy {
            if accuracy_at_half(&model, train_pairs) >= target {
                report.early_stopped_at = Some(epoch);
                break;
            }
        }
    }

    if !validation_pairs.is_empty() {
        let scores: Vec<f64> = validation_pairs.iter().map(|p| model.score_pair(p)).collect();
        let labels: Vec<PairLabel> = validation_pairs.iter().map(|p| p.label).collect();
        report.validation = Some(
            evaluate_scores(&scores, &labels, 0.5).expect("validation set is nonempty"),
        );
    }
    report.wall_clock_seconds = started.elapsed().as_secs_f64();
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{EmbeddingSource, EmbeddingTable, Tokenizer, Vocabulary};
    use crate::verifier::VerifierConfig;

    fn setup(batch_size: usize) -> (VerifierModel, Vec<EncodedPair>) {
        let vocab = Vocabulary::from_tokens((0..12).map(|i| format!("t{i}")));
        let cfg = VerifierConfig {
            embedding_dim: 6,
            hidden_dim: 6,
            merge_hidden: 6,
            epochs: 15,
            batch_size,
            lr: 1e-2,
            seed: 1,
            ..Default::default()
        };
        let table = EmbeddingTable::random(&vocab, 6, 2, EmbeddingSource::RandomInit);
        let model = VerifierModel::init(cfg, Tokenizer::default(), &vocab, table).unwrap();
        // Tokens 2..7 belong to author A, 8..13 to author B.
        let mut rng = seed::rng(3);
        use rand::Rng;
        let mut post = |lo: usize| -> Vec<usize> { (0..4).map(|_| rng.random_range(lo..lo + 6)).collect() };
        let mut pairs = Vec::new();
        for k in 0..24 {
            let (a, b, label) = match k % 3 {
                0 => (post(2), post(2), PairLabel::SameAuthor),
                1 => (post(8), post(8), PairLabel::SameAuthor),
                _ => (post(2), post(8), PairLabel::DifferentAuthor),
            };
            pairs.push(EncodedPair {
                left_len: a.len(),
                left: a,
                right_len: b.len(),
                right: b,
                label,
            });
        }
        (model, pairs)
    }

    #[test]
    fn loss_decreases_and_reruns_match() {
        let (model, pairs) = setup(4);
        let (trained, report) = train(model.clone(), &pairs, &pairs).unwrap();
        assert_eq!(report.epochs.len(), 15);
        assert!(report.epochs.last().unwrap().mean_loss < report.epochs[0].mean_loss);
        assert!(report.validation.is_some());
        let (again, report2) = train(model, &pairs, &pairs).unwrap();
        assert_eq!(trained, again);
        assert_eq!(report.epochs, report2.epochs);
    }

    #[test]
    fn batch_size_changes_trajectory() {
        let (m1, pairs) = setup(1);
        let (mn, _) = setup(pairs.len());
        let (a, _) = train(m1.clone(), &pairs, &[]).unwrap();
        let (b, _) = train(mn.clone(), &pairs, &[]).unwrap();
        assert_ne!(a, b);
        assert_eq!(a, train(m1, &pairs, &[]).unwrap().0);
        assert_eq!(b, train(mn, &pairs, &[]).unwrap().0);
    }

    #[test]
    fn frozen_embeddings_untouched() {
        let (model, pairs) = setup(4);
        let before = model.embedding.vectors.clone();
        let (trained, _) = train(model, &pairs, &[]).unwrap();
        assert_eq!(trained.embedding.vectors, before);
    }

    #[test]
    fn trainable_embeddings_keep_pad_row_zero() {
        let (mut model, mut pairs) = setup(4);
        model.config.embeddings_trainable = true;
        pairs[0].left = vec![crate::text::PAD];
        pairs[0].left_len = 0;
        let before = model.embedding.vectors.clone();
        let (trained, _) = train(model, &pairs, &[]).unwrap();
        assert_ne!(trained.embedding.vectors, before);
        assert!(trained.embedding.vectors.row(0).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_label_rejected() {
        let (model, pairs) = setup(4);
        let same: Vec<_> = pairs.into_iter().filter(|p| p.label == PairLabel::SameAuthor).collect();
        assert!(matches!(train(model, &same, &[]), Err(VerifierError::SingleLabel(_))));
    }

    #[test]
    fn early_stop_is_recorded() {
        let (mut model, pairs) = setup(4);
        model.config.early_stop_accuracy = Some(0.0);
        let (_, report) = train(model, &pairs, &[]).unwrap();
        assert_eq!(report.early_stopped_at, Some(1));
        assert_eq!(report.epochs.len(), 1);
    }
}

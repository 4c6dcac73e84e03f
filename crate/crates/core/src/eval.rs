//! Pair-level metrics. The positive class is "different author", i.e. a
//! compromised post; a pair is predicted positive when `p_same < tau`.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::corpus::{Corpus, PairExample, PairLabel};
use crate::verifier::{Verifier, VerifierError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no pairs to evaluate")]
    EmptyPairs,
    #[error("threshold grid is empty")]
    EmptyGrid,
    #[error("threshold grid must be ascending and inside (0, 1)")]
    BadGrid,
    #[error(transparent)]
    Verifier(#[from] VerifierError),
}

/// A metric value, or `Undefined` when its denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Defined(f64),
    Undefined,
}

impl Metric {
    fn ratio(num: u64, den: u64) -> Self {
        if den == 0 {
            Metric::Undefined
        } else {
            Metric::Defined(num as f64 / den as f64)
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Metric::Defined(v) => Some(v),
            Metric::Undefined => None,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Defined(v) => write!(f, "{v:.4}"),
            Metric::Undefined => f.write_str("n/a"),
        }
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.value().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.map_or(Metric::Undefined, Metric::Defined))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn predicted_positive(&self) -> u64 {
        self.tp + self.fp
    }

    pub fn accuracy(&self) -> Metric {
        Metric::ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> Metric {
        Metric::ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Metric {
        Metric::ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f_measure(&self) -> Metric {
        // Harmonic mean of precision and recall, in count form: 2tp / (2tp + fp + fn).
        match (self.precision(), self.recall()) {
            (Metric::Defined(_), Metric::Defined(_)) if self.tp > 0 => {
                Metric::ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
            }
            _ => Metric::Undefined,
        }
    }

    pub fn report(self) -> MetricsReport {
        MetricsReport {
            accuracy: self.accuracy(),
            precision: self.precision(),
            recall: self.recall(),
            f_measure: self.f_measure(),
            counts: self,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: Metric,
    pub precision: Metric,
    pub recall: Metric,
    pub f_measure: Metric,
    pub counts: ConfusionMatrix,
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.counts;
        writeln!(f, "{:<10} {:>8}", "accuracy", self.accuracy.to_string())?;
        writeln!(f, "{:<10} {:>8}", "precision", self.precision.to_string())?;
        writeln!(f, "{:<10} {:>8}", "recall", self.recall.to_string())?;
        writeln!(f, "{:<10} {:>8}", "f_measure", self.f_measure.to_string())?;
        write!(f, "{:<10} tp={} fp={} fn={} tn={}", "counts", c.tp, c.fp, c.fn_, c.tn)
    }
}

/// Counts predictions against labels; positive = different author.
pub fn confusion(scores: &[f64], labels: &[PairLabel], tau: f64) -> ConfusionMatrix {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    let mut m = ConfusionMatrix::default();
    for (&s, &l) in scores.iter().zip(labels) {
        let predicted = s < tau;
        let actual = l == PairLabel::DifferentAuthor;
        match (predicted, actual) {
            (true, true) => m.tp += 1,
            (true, false) => m.fp += 1,
            (false, true) => m.fn_ += 1,
            (false, false) => m.tn += 1,
        }
    }
    m
}

pub fn evaluate_scores(scores: &[f64], labels: &[PairLabel], tau: f64) -> Result<MetricsReport, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::EmptyPairs);
    }
    Ok(confusion(scores, labels, tau).report())
}

pub fn evaluate_pairs(
    verifier: &Verifier,
    corpus: &Corpus,
    tau: f64,
    pairs: &[PairExample],
) -> Result<MetricsReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyPairs);
    }
    let scores = verifier.score_pairs(corpus, pairs)?;
    let labels: Vec<PairLabel> = pairs.iter().map(|p| p.label).collect();
    evaluate_scores(&scores, &labels, tau)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tau: f64,
    pub report: MetricsReport,
}

pub fn sweep_scores(
    scores: &[f64],
    labels: &[PairLabel],
    grid: &[f64],
) -> Result<Vec<SweepRow>, EvalError> {
    if grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    if scores.is_empty() {
        return Err(EvalError::EmptyPairs);
    }
    let in_range = grid.iter().all(|&t| t > 0.0 && t < 1.0);
    let ascending = grid.windows(2).all(|w| w[0] < w[1]);
    if !in_range || !ascending {
        return Err(EvalError::BadGrid);
    }
    Ok(grid
        .iter()
        .map(|&tau| SweepRow {
            tau,
            report: confusion(scores, labels, tau).report(),
        })
        .collect())
}

/// Scores once, then reports every threshold of `grid`.
pub fn sweep_thresholds(
    verifier: &Verifier,
    corpus: &Corpus,
    pairs: &[PairExample],
    grid: &[f64],
) -> Result<Vec<SweepRow>, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyPairs);
    }
    let scores = verifier.score_pairs(corpus, pairs)?;
    let labels: Vec<PairLabel> = pairs.iter().map(|p| p.label).collect();
    sweep_scores(&scores, &labels, grid)
}

pub const SWEEP_CSV_HEADER: &str = "tau,tp,fp,fn,tn,accuracy,precision,recall,f_measure";

fn csv_metric(m: Metric) -> String {
    m.value().map_or_else(|| "n/a".to_string(), |v| format!("{v}"))
}

pub fn write_sweep_csv<W: Write>(mut w: W, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(w, "{SWEEP_CSV_HEADER}")?;
    for row in rows {
        let r = &row.report;
        let c = &r.counts;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            row.tau,
            c.tp,
            c.fp,
            c.fn_,
            c.tn,
            csv_metric(r.accuracy),
            csv_metric(r.precision),
            csv_metric(r.recall),
            csv_metric(r.f_measure)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use PairLabel::{DifferentAuthor as D, SameAuthor as S};

    #[test]
    fn balanced_counts() {
        let m = ConfusionMatrix { tp: 8, fp: 2, fn_: 2, tn: 8 };
        let r = m.report();
        assert_eq!(r.accuracy, Metric::Defined(0.8));
        assert_eq!(r.precision, Metric::Defined(0.8));
        assert_eq!(r.recall, Metric::Defined(0.8));
        let f = r.f_measure.value().unwrap();
        assert!((f - 0.8).abs() < 1e-15);
    }

    #[test]
    fn no_predicted_positives() {
        let scores = [0.9, 0.8, 0.7];
        let labels = [D, S, D];
        let r = evaluate_scores(&scores, &labels, 0.5).unwrap();
        assert_eq!(r.recall, Metric::Defined(0.0));
        assert_eq!(r.precision, Metric::Undefined);
        assert_eq!(r.f_measure, Metric::Undefined);
        assert_eq!(r.precision.to_string(), "n/a");
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"precision\":null"));
        assert!(json.contains("\"fn\":2"));
        let back: MetricsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(matches!(evaluate_scores(&[], &[], 0.5), Err(EvalError::EmptyPairs)));
        assert!(matches!(sweep_scores(&[0.1], &[S], &[]), Err(EvalError::EmptyGrid)));
        assert!(matches!(sweep_scores(&[0.1], &[S], &[0.6, 0.4]), Err(EvalError::BadGrid)));
        assert!(matches!(sweep_scores(&[0.1], &[S], &[0.0]), Err(EvalError::BadGrid)));
    }

    #[test]
    fn single_point_sweep_matches_evaluate() {
        let scores = [0.2, 0.6, 0.4, 0.9];
        let labels = [D, S, D, S];
        let rows = sweep_scores(&scores, &labels, &[0.5]).unwrap();
        assert_eq!(rows[0].report, evaluate_scores(&scores, &labels, 0.5).unwrap());
    }

    #[test]
    fn low_threshold_predicts_few_positives() {
        let scores = [0.2, 0.6, 0.4, 0.9, 0.05];
        let labels = [D, S, D, S, D];
        let rows = sweep_scores(&scores, &labels, &[0.01, 0.99]).unwrap();
        assert_eq!(rows[0].report.counts.predicted_positive(), 0);
        assert_eq!(rows[1].report.counts.predicted_positive(), 5);
    }

    #[test]
    fn csv_layout() {
        let rows = sweep_scores(&[0.3, 0.7], &[D, S], &[0.5]).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "tau,tp,fp,fn,tn,accuracy,precision,recall,f_measure\n0.5,1,0,0,1,1,1,1,1\n");
    }

    proptest! {
        #[test]
        fn sweep_invariants(
            data in proptest::collection::vec((0.0f64..1.0, any::<bool>()), 1..40),
        ) {
            let scores: Vec<f64> = data.iter().map(|d| d.0).collect();
            let labels: Vec<PairLabel> = data.iter().map(|d| if d.1 { S } else { D }).collect();
            let grid: Vec<f64> = (1..=19).map(|k| k as f64 / 20.0).collect();
            let rows = sweep_scores(&scores, &labels, &grid).unwrap();
            let mut prev = 0;
            for row in &rows {
                let c = row.report.counts;
                prop_assert_eq!(c.total(), scores.len() as u64);
                // Brute-force recount.
                let pos = scores.iter().filter(|&&s| s < row.tau).count() as u64;
                prop_assert_eq!(c.predicted_positive(), pos);
                prop_assert!(c.predicted_positive() >= prev);
                prev = c.predicted_positive();
                let acc = row.report.accuracy.value().unwrap();
                prop_assert_eq!(acc, (c.tp + c.tn) as f64 / c.total() as f64);
                for m in [row.report.precision, row.report.recall, row.report.f_measure] {
                    if let Some(v) = m.value() {
                        prop_assert!(v.is_finite() && (0.0..=1.0).contains(&v));
                    }
                }
            }
        }
    }
}

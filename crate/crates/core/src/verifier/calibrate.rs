use serde::{Deserialize, Serialize};

use super::VerifierError;
use crate::corpus::PairLabel;
use crate::eval::{confusion, Metric};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub tau: f64,
    /// F-measure at `tau`; `None` when undefined.
    pub f_measure: Option<f64>,
    /// All scores were identical; `tau` fell back to 0.5.
    pub degenerate: bool,
}

/// Grid point `k/100`, computed directly so every value is the nearest double.
fn grid() -> impl Iterator<Item = f64> {
    (1..=99).map(|k| k as f64 / 100.0)
}

/// Picks the threshold on `{0.01, …, 0.99}` that maximizes the F-measure of
/// the compromised (different-author) class; ties go to the grid point
/// closest to 0.5.
pub fn calibrate_threshold(scores: &[f64], labels: &[PairLabel]) -> Result<Calibration, VerifierError> {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    let same = labels.iter().filter(|&&l| l == PairLabel::SameAuthor).count();
    if same == 0 || same == labels.len() {
        return Err(VerifierError::SingleLabel("validation"));
    }
    if scores.windows(2).all(|w| w[0] == w[1]) {
        log::warn!("calibrate_threshold: all validation scores are identical, using 0.5");
        let f = confusion(scores, labels, 0.5).f_measure();
        return Ok(Calibration {
            tau: 0.5,
            f_measure: f.value(),
            degenerate: true,
        });
    }

    let mut best: Option<(f64, f64)> = None;
    for tau in grid() {
        let f = match confusion(scores, labels, tau).f_measure() {
            Metric::Defined(f) => f,
            Metric::Undefined => continue,
        };
        let better = match best {
            None => true,
            Some((bt, bf)) => f > bf || (f == bf && (tau - 0.5).abs() < (bt - 0.5).abs()),
        };
        if better {
            best = Some((tau, f));
        }
    }
    Ok(match best {
        Some((tau, f)) => Calibration {
            tau,
            f_measure: Some(f),
            degenerate: false,
        },
        None => Calibration {
            tau: 0.5,
            f_measure: None,
            degenerate: true,
        },
    })
}

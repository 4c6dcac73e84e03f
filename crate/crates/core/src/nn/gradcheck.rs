use rand::seq::index::sample;
use serde::Serialize;

use super::NnError;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Denominator floor for the relative error.
    pub abs_floor: f64,
    /// Check at most this many coordinates, chosen by `seed`.
    pub max_coords: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            tolerance: 1e-4,
            abs_floor: 1e-6,
            max_coords: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradMismatch {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
    /// Coordinate with the largest error.
    pub worst: Option<GradMismatch>,
    /// Every coordinate above tolerance.
    pub failures: Vec<GradMismatch>,
    pub passed: bool,
}

/// Compares `analytic` against central differences of `loss` at `x`.
/// Relative error is `|a - n| / max(|a|, |n|, abs_floor)`.
pub fn grad_check<F>(
    mut loss: F,
    x: &[f64],
    analytic: &[f64],
    opts: GradCheckOptions,
) -> Result<GradCheckReport, NnError>
where
    F: FnMut(&[f64]) -> f64,
{
    if x.len() != analytic.len() {
        return Err(NnError::ParamCount {
            params: x.len(),
            grads: analytic.len(),
        });
    }
    let base = loss(x);
    if !base.is_finite() {
        return Err(NnError::NonFiniteLoss(base));
    }
    let coords: Vec<usize> = match opts.max_coords {
        Some(k) if k < x.len() => {
            let mut idx = sample(&mut seed::rng(opts.seed), x.len(), k).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..x.len()).collect(),
    };

    let mut point = x.to_vec();
    let mut sum = 0.0;
    let mut worst: Option<GradMismatch> = None;
    let mut failures = Vec::new();
    for &i in &coords {
        let orig = point[i];
        point[i] = orig + opts.step;
        let plus = loss(&point);
        point[i] = orig - opts.step;
        let minus = loss(&point);
        point[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(NnError::NonFiniteLoss(if plus.is_finite() { minus } else { plus }));
        }
        let numeric = (plus - minus) / (2.0 * opts.step);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.abs_floor);
        sum += rel;
        let m = GradMismatch {
            index: i,
            analytic: a,
            numeric,
            rel_error: rel,
        };
        if rel > opts.tolerance {
            failures.push(m.clone());
        }
        if worst.as_ref().is_none_or(|w| rel > w.rel_error) {
            worst = Some(m);
        }
    }
    let checked = coords.len();
    let max_rel_error = worst.as_ref().map_or(0.0, |w| w.rel_error);
    Ok(GradCheckReport {
        checked,
        max_rel_error,
        mean_rel_error: if checked == 0 { 0.0 } else { sum / checked as f64 },
        worst,
        passed: failures.is_empty(),
        failures,
    })
}

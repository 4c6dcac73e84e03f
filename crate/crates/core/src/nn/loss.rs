/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before the log.
pub const PROB_CLAMP: f64 = 1e-7;

/// Binary cross-entropy and its derivative with respect to `p`. The
/// derivative is zero where the clamp is active.
pub fn bce_loss(p: f64, y: f64) -> (f64, f64) {
    let lo = PROB_CLAMP;
    let hi = 1.0 - PROB_CLAMP;
    let pc = p.clamp(lo, hi);
    let loss = -(y * pc.ln() + (1.0 - y) * (1.0 - pc).ln());
    let grad = if p < lo || p > hi {
        0.0
    } else {
        -y / pc + (1.0 - y) / (1.0 - pc)
    };
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_probability() {
        let (l, _) = bce_loss(0.5, 1.0);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn clamp_boundary() {
        let (l, _) = bce_loss(1.0 - 1e-7, 1.0);
        assert!((l - 1e-7).abs() < 1e-12);
        let (l, g) = bce_loss(1.0, 0.0);
        assert!(l.is_finite() && g == 0.0);
        let (l, g) = bce_loss(0.0, 1.0);
        assert!((l - 16.118_095_650_958_32).abs() < 1e-9 && g == 0.0);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let (p, y, eps) = (0.3, 0.0, 1e-6);
        let (_, g) = bce_loss(p, y);
        let n = (bce_loss(p + eps, y).0 - bce_loss(p - eps, y).0) / (2.0 * eps);
        assert!((g - n).abs() / g.abs() < 1e-8);
        assert!((g - 1.0 / 0.7).abs() < 1e-12);
    }
}

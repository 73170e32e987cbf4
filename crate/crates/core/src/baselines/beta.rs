//! Beta calibration: `v(z) = 1 / (1 + e^{−c} (1 − z)^b z^{−a})`, a logistic
//! regression on `(ln z, −ln(1 − z))` with nonnegative slopes.

use alloc::vec;
use alloc::vec::Vec;

use super::logistic;
use crate::error::{Error, Result};
use crate::math;

/// Scores are clipped to `[EPS, 1 − EPS]` before taking logarithms.
pub const EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl BetaParams {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a >= 0.0 && b >= 0.0) || !c.is_finite() || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidParameter(alloc::format!(
                "beta calibration needs finite a, b >= 0 (got a = {a}, b = {b}, c = {c})"
            )));
        }
        Ok(BetaParams { a, b, c })
    }

    pub fn logit(&self, z: f64) -> f64 {
        let z = clip(z);
        self.a * math::ln(z) - self.b * math::ln(1.0 - z) + self.c
    }

    pub fn apply(&self, z: f64) -> f64 {
        math::sigmoid(self.logit(z))
    }
}

fn clip(z: f64) -> f64 {
    z.clamp(EPS, 1.0 - EPS)
}

pub fn fit_beta(scores: &[f64], correct: &[bool]) -> Result<BetaParams> {
    logistic::check_lengths(scores, correct)?;
    logistic::require_both_classes(correct)?;
    let clipped: Vec<f64> = scores.iter().map(|&z| clip(z)).collect();
    let first = clipped[0];
    if clipped.iter().all(|&z| z == first) {
        return Err(Error::Degenerate("all scores are identical; the beta map is not identifiable".into()));
    }
    let rate = correct.iter().filter(|&&t| t).count() as f64 / correct.len() as f64;
    let intercept = math::ln(rate / (1.0 - rate));
    let f1: Vec<f64> = clipped.iter().map(|&z| math::ln(z)).collect();
    let f2: Vec<f64> = clipped.iter().map(|&z| -math::ln(1.0 - z)).collect();

    let full: Vec<Vec<f64>> = (0..clipped.len()).map(|i| vec![f1[i], f2[i], 1.0]).collect();
    let theta = logistic::fit(&full, correct, vec![0.0, 0.0, intercept])?;
    let (a, b, c) = if theta[0] < 0.0 {
        let (b, c) = refit_single(&f2, correct, intercept)?;
        (0.0, b, c)
    } else if theta[1] < 0.0 {
        let (a, c) = refit_single(&f1, correct, intercept)?;
        (a, 0.0, c)
    } else {
        (theta[0], theta[1], theta[2])
    };
    BetaParams::new(a, b, c)
}

/// Refit with one slope; a negative slope is clipped to zero as well.
fn refit_single(feature: &[f64], correct: &[bool], intercept: f64) -> Result<(f64, f64)> {
    let x: Vec<Vec<f64>> = feature.iter().map(|&f| vec![f, 1.0]).collect();
    let theta = logistic::fit(&x, correct, vec![0.0, intercept])?;
    if theta[0] >= 0.0 {
        Ok((theta[0], theta[1]))
    } else {
        Ok((0.0, intercept))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_parameters() {
        let p = BetaParams::new(1.0, 1.0, 0.0).unwrap();
        assert!((p.apply(0.5) - 0.5).abs() < 1e-15);
        assert!((p.apply(0.2) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn constant_scores_are_degenerate() {
        let r = fit_beta(&[0.5; 4], &[true, false, true, false]);
        assert!(matches!(r, Err(Error::Degenerate(_))));
    }

    #[test]
    fn slopes_stay_nonnegative() {
        // decreasing relation pushes a below zero
        let scores = [0.1, 0.2, 0.3, 0.6, 0.7, 0.9, 0.95, 0.4];
        let correct = [true, true, true, false, false, false, false, true];
        let p = fit_beta(&scores, &correct).unwrap();
        assert!(p.a >= 0.0 && p.b >= 0.0);
    }

    #[test]
    fn negative_slope_rejected() {
        assert!(BetaParams::new(-0.1, 1.0, 0.0).is_err());
    }
}

//! Platt scaling: `v(s) = 1 / (1 + exp(−a s − b))`.

use alloc::vec;
use alloc::vec::Vec;

use super::logistic;
use crate::error::Result;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlattParams {
    pub a: f64,
    pub b: f64,
}

impl PlattParams {
    pub fn apply(&self, s: f64) -> f64 {
        math::sigmoid(self.a * s + self.b)
    }

    /// Mean logistic negative log-likelihood of the targets.
    pub fn nll(&self, scores: &[f64], correct: &[bool]) -> f64 {
        let features: Vec<Vec<f64>> = scores.iter().map(|&s| vec![s, 1.0]).collect();
        logistic::nll(&features, correct, &[self.a, self.b]) / scores.len() as f64
    }
}

/// Maximum-likelihood logistic fit of `correct` on `scores`.
pub fn fit_platt(scores: &[f64], correct: &[bool]) -> Result<PlattParams> {
    logistic::check_lengths(scores, correct)?;
    logistic::require_both_classes(correct)?;
    let features: Vec<Vec<f64>> = scores.iter().map(|&s| vec![s, 1.0]).collect();
    let rate = correct.iter().filter(|&&t| t).count() as f64 / correct.len() as f64;
    let theta = logistic::fit(&features, correct, vec![0.0, math::ln(rate / (1.0 - rate))])?;
    Ok(PlattParams { a: theta[0], b: theta[1] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn separable_scores_give_increasing_map() {
        let scores = [0.1, 0.2, 0.3, 0.7, 0.8, 0.9];
        let correct = [false, false, false, true, true, true];
        let p = fit_platt(&scores, &correct).unwrap();
        assert!(p.a > 0.0);
        assert!(p.apply(0.9) > p.apply(0.1));
    }

    #[test]
    fn symmetric_data_has_no_offset() {
        let base = [0.3, 1.2, -0.4, 2.0, 0.7, -1.1, 0.05];
        let labels = [true, true, false, true, false, false, true];
        let mut scores = Vec::new();
        let mut correct = Vec::new();
        for (&s, &t) in base.iter().zip(&labels) {
            scores.extend([s, -s]);
            correct.extend([t, !t]);
        }
        let p = fit_platt(&scores, &correct).unwrap();
        assert!(p.b.abs() < 1e-6, "b = {}", p.b);
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(matches!(fit_platt(&[0.1, 0.2], &[true, true]), Err(Error::Degenerate(_))));
    }
}

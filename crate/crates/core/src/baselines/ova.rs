//! Binary calibrators and the one-vs-all multi-class wrapper.

use alloc::vec;
use alloc::vec::Vec;

use super::{fit_bbq, fit_beta, fit_isotonic, fit_platt, BbqConfig, BbqModel, BetaParams, IsotonicMap, PlattParams};
use crate::error::{Error, Result};
use crate::metrics::{PredictionSet, ScoreKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryMethod {
    Platt,
    Isotonic,
    Beta,
    Bbq,
}

impl BinaryMethod {
    pub fn name(self) -> &'static str {
        match self {
            BinaryMethod::Platt => "platt",
            BinaryMethod::Isotonic => "isotonic",
            BinaryMethod::Beta => "beta",
            BinaryMethod::Bbq => "bbq",
        }
    }
}

/// A fitted map from a score to a probability of being correct.
#[derive(Debug, Clone, PartialEq)]
pub enum BinaryCalibrator {
    Platt(PlattParams),
    Isotonic(IsotonicMap),
    Beta(BetaParams),
    Bbq(BbqModel),
    /// Used in place of a calibrator that could not be fit.
    Identity,
}

impl BinaryCalibrator {
    pub fn fit(method: BinaryMethod, scores: &[f64], correct: &[bool]) -> Result<Self> {
        Ok(match method {
            BinaryMethod::Platt => BinaryCalibrator::Platt(fit_platt(scores, correct)?),
            BinaryMethod::Isotonic => BinaryCalibrator::Isotonic(fit_isotonic(scores, correct)?),
            BinaryMethod::Beta => BinaryCalibrator::Beta(fit_beta(scores, correct)?),
            BinaryMethod::Bbq => BinaryCalibrator::Bbq(fit_bbq(scores, correct, &BbqConfig::default())?),
        })
    }

    pub fn apply(&self, s: f64) -> f64 {
        match self {
            BinaryCalibrator::Platt(p) => p.apply(s),
            BinaryCalibrator::Isotonic(m) => m.apply(s),
            BinaryCalibrator::Beta(b) => b.apply(s),
            BinaryCalibrator::Bbq(m) => m.apply(s),
            BinaryCalibrator::Identity => s,
        }
    }
}

/// One binary calibrator per class, fit on `(z_k, y == k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneVsAllModel {
    pub method: BinaryMethod,
    pub calibrators: Vec<BinaryCalibrator>,
    /// Classes whose calibrator fell back to the identity.
    pub degenerate: Vec<bool>,
}

/// Calibrated rows together with the row sums before renormalization.
#[derive(Debug, Clone, PartialEq)]
pub struct OneVsAllOutput {
    pub probs: Vec<f64>,
    pub raw_row_sums: Vec<f64>,
}

pub fn fit_one_vs_all(method: BinaryMethod, preds: &PredictionSet) -> Result<OneVsAllModel> {
    if preds.kind() != ScoreKind::Simplex {
        return Err(Error::InvalidInput("one-vs-all calibration needs simplex scores".into()));
    }
    let k = preds.n_classes();
    let mut calibrators = Vec::with_capacity(k);
    let mut degenerate = Vec::with_capacity(k);
    for class in 0..k {
        let scores: Vec<f64> = preds.rows().map(|r| r[class]).collect();
        let targets: Vec<bool> = preds.labels().iter().map(|&y| y == class).collect();
        let fitted = if targets.iter().any(|&t| t) {
            match BinaryCalibrator::fit(method, &scores, &targets) {
                Ok(c) => Some(c),
                Err(Error::Degenerate(_)) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        degenerate.push(fitted.is_none());
        calibrators.push(fitted.unwrap_or(BinaryCalibrator::Identity));
    }
    Ok(OneVsAllModel { method, calibrators, degenerate })
}

/// Calibrates each column with its class calibrator and renormalizes rows;
/// an all-zero row becomes uniform.
pub fn apply_one_vs_all(model: &OneVsAllModel, scores: &[f64], k: usize) -> Result<OneVsAllOutput> {
    if k != model.calibrators.len() || !scores.len().is_multiple_of(k) {
        return Err(Error::InvalidInput(alloc::format!(
            "model has {} classes but scores do not form rows of that width",
            model.calibrators.len()
        )));
    }
    let mut probs = vec![0.0; scores.len()];
    let mut raw_row_sums = Vec::with_capacity(scores.len() / k);
    for (row, out) in scores.chunks_exact(k).zip(probs.chunks_exact_mut(k)) {
        for ((o, &s), c) in out.iter_mut().zip(row).zip(&model.calibrators) {
            *o = c.apply(s).max(0.0);
        }
        let sum: f64 = out.iter().sum();
        raw_row_sums.push(sum);
        if sum > 0.0 {
            out.iter_mut().for_each(|v| *v /= sum);
        } else {
            out.iter_mut().for_each(|v| *v = 1.0 / k as f64);
        }
    }
    Ok(OneVsAllOutput { probs, raw_row_sums })
}

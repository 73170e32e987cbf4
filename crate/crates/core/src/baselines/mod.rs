//! Baseline calibration methods.
//!
//! Platt scaling, isotonic regression, beta calibration and BBQ are binary:
//! they map the positive-class score to a probability. Multi-class outputs
//! use them one-vs-all. Temperature scaling is natively multi-class.

mod bbq;
mod beta;
mod isotonic;
mod logistic;
mod ova;
mod platt;
mod temperature;

use alloc::vec::Vec;

pub use bbq::{default_grid, fit_bbq, log_beta_binomial, BbqBinning, BbqConfig, BbqModel, PRIOR_STRENGTH};
pub use beta::{fit_beta, BetaParams};
pub use isotonic::{fit_isotonic, pava, IsotonicMap};
pub use ova::{apply_one_vs_all, fit_one_vs_all, BinaryCalibrator, BinaryMethod, OneVsAllModel, OneVsAllOutput};
pub use platt::{fit_platt, PlattParams};
pub use temperature::{fit_temperature, temperature_nll, TemperatureParam};

use crate::error::{Error, Result};
use crate::metrics::{PredictionSet, ScoreKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMethod {
    Binary(BinaryMethod),
    Temperature,
}

/// A fitted baseline calibrator.
#[derive(Debug, Clone, PartialEq)]
pub enum BaselineModel {
    /// Two classes: calibrates the class-1 column, class 0 gets the rest.
    Binary(BinaryCalibrator),
    OneVsAll(OneVsAllModel),
    Temperature(TemperatureParam),
}

impl BaselineModel {
    /// Fits `method` to `preds`. Binary methods need simplex rows and, for
    /// `K > 2`, `one_vs_all`; temperature scaling needs logits.
    pub fn fit(method: BaselineMethod, preds: &PredictionSet, one_vs_all: bool) -> Result<Self> {
        match method {
            BaselineMethod::Temperature => Ok(BaselineModel::Temperature(fit_temperature(preds)?)),
            BaselineMethod::Binary(m) => {
                if preds.kind() != ScoreKind::Simplex {
                    return Err(Error::InvalidInput(alloc::format!("{} calibration needs simplex scores", m.name())));
                }
                if one_vs_all {
                    Ok(BaselineModel::OneVsAll(fit_one_vs_all(m, preds)?))
                } else if preds.n_classes() == 2 {
                    let scores: Vec<f64> = preds.rows().map(|r| r[1]).collect();
                    let targets: Vec<bool> = preds.labels().iter().map(|&y| y == 1).collect();
                    Ok(BaselineModel::Binary(BinaryCalibrator::fit(m, &scores, &targets)?))
                } else {
                    Err(Error::InvalidParameter(alloc::format!(
                        "{} is a binary method; {} classes need one-vs-all",
                        m.name(),
                        preds.n_classes()
                    )))
                }
            }
        }
    }

    /// Calibrated simplex rows for row-major `scores` with `k` classes.
    pub fn apply(&self, scores: &[f64], k: usize) -> Result<Vec<f64>> {
        if k < 2 || !scores.len().is_multiple_of(k) {
            return Err(Error::InvalidInput(alloc::format!("{} scores do not form rows of {k}", scores.len())));
        }
        match self {
            BaselineModel::Temperature(t) => Ok(t.apply(scores, k)),
            BaselineModel::OneVsAll(m) => Ok(apply_one_vs_all(m, scores, k)?.probs),
            BaselineModel::Binary(c) => {
                if k != 2 {
                    return Err(Error::InvalidInput("binary calibrator applied to more than two classes".into()));
                }
                let mut out = Vec::with_capacity(scores.len());
                for row in scores.chunks_exact(2) {
                    let v = c.apply(row[1]).clamp(0.0, 1.0);
                    out.push(1.0 - v);
                    out.push(v);
                }
                Ok(out)
            }
        }
    }

    /// Calibrates a prediction set, keeping its labels.
    pub fn calibrate(&self, preds: &PredictionSet) -> Result<PredictionSet> {
        let probs = self.apply(preds.scores(), preds.n_classes())?;
        PredictionSet::new(ScoreKind::Simplex, preds.n_classes(), probs, preds.labels().to_vec())
    }
}

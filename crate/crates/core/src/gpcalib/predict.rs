//! Calibrated predictions and latent-function summaries.
//!
//! Predictive covariances leave out the white-noise kernel term: the noise
//! describes observation jitter of the training marginals, not the latent
//! function itself.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::inference::{row_marginal, Inducing, RowCov};
use super::GpCalibrationModel;
use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, JITTER};
use crate::math;
use crate::metrics::{PredictionSet, ScoreKind};

pub const DEFAULT_MC_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictMode {
    /// Average softargmax over `samples` latent draws; row `i` uses ChaCha
    /// stream `i` of `seed`, so results do not depend on row order.
    MonteCarlo { samples: usize, seed: u64 },
    /// Softargmax of the posterior mean.
    Mean,
}

impl Default for PredictMode {
    fn default() -> Self {
        PredictMode::MonteCarlo { samples: DEFAULT_MC_SAMPLES, seed: 0 }
    }
}

fn check_rows(scores: &[f64], k: usize) -> Result<()> {
    if k < 2 || !scores.len().is_multiple_of(k) {
        return Err(Error::InvalidInput(alloc::format!("{} scores do not form rows of {k}", scores.len())));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("scores must be finite".into()));
    }
    Ok(())
}

/// `softargmax(φ*)` for every row of the row-major `scores` (L×K).
pub fn predict_mean(model: &GpCalibrationModel, scores: &[f64], k: usize) -> Result<Vec<f64>> {
    check_rows(scores, k)?;
    let ind = Inducing::new(model)?;
    let mut out = vec![0.0; scores.len()];
    for (x, o) in scores.chunks_exact(k).zip(out.chunks_exact_mut(k)) {
        let r = row_marginal(model, &ind, x, false, model.cov_structure);
        math::softmax_into(&r.phi, o);
    }
    Ok(out)
}

/// Monte-Carlo estimate of the calibrated distribution with `samples` draws
/// per row.
pub fn predict_mc(model: &GpCalibrationModel, scores: &[f64], k: usize, samples: usize, seed: u64) -> Result<Vec<f64>> {
    check_rows(scores, k)?;
    if samples == 0 {
        return Err(Error::InvalidParameter("need at least one Monte-Carlo sample".into()));
    }
    let ind = Inducing::new(model)?;
    let mut out = vec![0.0; scores.len()];
    let mut g = vec![0.0; k];
    let mut z = vec![0.0; k];
    let mut p = vec![0.0; k];
    for (row, (x, o)) in scores.chunks_exact(k).zip(out.chunks_exact_mut(k)).enumerate() {
        let r = row_marginal(model, &ind, x, false, model.cov_structure);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(row as u64);
        let factor = match &r.cov {
            RowCov::Diag(c) => Sampler::Diag(c.iter().map(|&v| math::sqrt(v.max(0.0))).collect()),
            RowCov::Full(c) => Sampler::Full(Cholesky::with_jitter(c, JITTER)?),
        };
        for _ in 0..samples {
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(&mut rng);
            }
            match &factor {
                Sampler::Diag(sd) => {
                    for i in 0..k {
                        g[i] = r.phi[i] + sd[i] * z[i];
                    }
                }
                Sampler::Full(chol) => {
                    let lz = chol.mul_factor(&z);
                    for i in 0..k {
                        g[i] = r.phi[i] + lz[i];
                    }
                }
            }
            math::softmax_into(&g, &mut p);
            for (oi, pi) in o.iter_mut().zip(&p) {
                *oi += pi;
            }
        }
        let q = samples as f64;
        o.iter_mut().for_each(|v| *v /= q);
    }
    Ok(out)
}

enum Sampler {
    Diag(Vec<f64>),
    Full(Cholesky),
}

/// Calibrates a prediction set, keeping its labels.
pub fn calibrate(model: &GpCalibrationModel, preds: &PredictionSet, mode: PredictMode) -> Result<PredictionSet> {
    if preds.kind() != model.input_kind() {
        return Err(Error::InvalidInput(alloc::format!(
            "model was fit on {} but data holds {}",
            model.input_kind().as_str(),
            preds.kind().as_str()
        )));
    }
    let k = preds.n_classes();
    let mut probs = match mode {
        PredictMode::Mean => predict_mean(model, preds.scores(), k)?,
        PredictMode::MonteCarlo { samples, seed } => predict_mc(model, preds.scores(), k, samples, seed)?,
    };
    // renormalize away accumulated rounding
    for row in probs.chunks_exact_mut(k) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    PredictionSet::new(ScoreKind::Simplex, k, probs, preds.labels().to_vec())
}

/// Pointwise posterior mean and variance of the latent function.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPosterior {
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

pub fn latent_curve(model: &GpCalibrationModel, grid: &[f64]) -> Result<LatentPosterior> {
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("grid must be finite".into()));
    }
    let ind = Inducing::new(model)?;
    let kern = model.kernel();
    let kxu = kern.gram_unchecked(grid, model.inducing_inputs(), false);
    let a = kxu.matmul(&ind.precision);
    let ad = a.matmul(&ind.delta);
    let mut mean = Vec::with_capacity(grid.len());
    let mut variance = Vec::with_capacity(grid.len());
    for (i, &x) in grid.iter().enumerate() {
        mean.push(model.prior_mean().eval(x) + dot(a.row(i), model.variational_mean()));
        let v = kern.signal_variance() + dot(ad.row(i), a.row(i));
        variance.push(v.max(f64::MIN_POSITIVE));
    }
    Ok(LatentPosterior { grid: grid.to_vec(), mean, variance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpcalib::{CovStructure, PriorMean};
    use crate::kernel::KernelParams;

    fn model() -> GpCalibrationModel {
        let mut m = GpCalibrationModel::prior(
            vec![-2.0, 0.0, 2.0],
            KernelParams::new(0.8, 1.2, 0.01).unwrap(),
            PriorMean::Identity,
            ScoreKind::Logits,
            CovStructure::Diagonal,
        )
        .unwrap();
        m.variational_mean = vec![0.2, -0.1, 0.4];
        m
    }

    #[test]
    fn prior_mean_prediction_is_softargmax() {
        let prior = GpCalibrationModel::prior(
            vec![-1.0, 1.0],
            KernelParams::default(),
            PriorMean::Identity,
            ScoreKind::Logits,
            CovStructure::Diagonal,
        )
        .unwrap();
        let z = [0.3, -1.2, 2.0, 1.0, 1.0, 0.0];
        let out = predict_mean(&prior, &z, 3).unwrap();
        for (o, row) in out.chunks(3).zip(z.chunks(3)) {
            let s = math::softmax(row);
            for (a, b) in o.iter().zip(&s) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mc_rows_on_simplex_and_deterministic() {
        let m = model();
        let z = [0.3, -1.2, 2.0, 1.0, 1.0, 0.0];
        let a = predict_mc(&m, &z, 3, 100, 5).unwrap();
        let b = predict_mc(&m, &z, 3, 100, 5).unwrap();
        assert_eq!(a, b);
        for row in a.chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        // row order independence
        let swapped = [1.0, 1.0, 0.0, 0.3, -1.2, 2.0];
        let c = predict_mc(&m, &swapped, 3, 100, 5).unwrap();
        assert_eq!(&c[0..3], &predict_mc(&m, &z[3..], 3, 100, 5).unwrap()[..]);
        assert!(predict_mc(&m, &z, 3, 0, 5).is_err());
    }

    #[test]
    fn latent_curve_prior_and_empty() {
        let prior = GpCalibrationModel::prior(
            vec![0.2, 0.7],
            KernelParams::default(),
            PriorMean::Log,
            ScoreKind::Simplex,
            CovStructure::Diagonal,
        )
        .unwrap();
        let grid = [0.1, 0.5, 0.9];
        let lc = latent_curve(&prior, &grid).unwrap();
        for (m, x) in lc.mean.iter().zip(&grid) {
            assert!((m - x.ln()).abs() < 1e-12);
        }
        assert!(lc.variance.iter().all(|&v| v > 0.0));
        let empty = latent_curve(&prior, &[]).unwrap();
        assert!(empty.grid.is_empty() && empty.mean.is_empty());
    }

    #[test]
    fn calibrate_checks_kind() {
        let m = model();
        let p = PredictionSet::new(ScoreKind::Simplex, 2, vec![0.5, 0.5], vec![0]).unwrap();
        assert!(calibrate(&m, &p, PredictMode::Mean).is_err());
    }
}

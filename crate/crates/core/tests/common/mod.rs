#![allow(dead_code)]

use calibra_core::gpcalib::{CovStructure, GpCalibrationModel, PriorMean};
use calibra_core::kernel::KernelParams;
use calibra_core::linalg::Matrix;
use calibra_core::{PredictionSet, ScoreKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random logits with labels drawn from their softmax.
pub fn random_logits(rng: &mut ChaCha8Rng, n: usize, k: usize, scale: f64) -> PredictionSet {
    let mut scores = Vec::with_capacity(n * k);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..k).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|z| (z - max).exp()).collect();
        let s: f64 = e.iter().sum();
        let u: f64 = rng.random::<f64>() * s;
        let mut acc = 0.0;
        let mut y = k - 1;
        for (i, v) in e.iter().enumerate() {
            acc += v;
            if u < acc {
                y = i;
                break;
            }
        }
        scores.extend(row);
        labels.push(y);
    }
    PredictionSet::new(ScoreKind::Logits, k, scores, labels).unwrap()
}

pub fn random_simplex(rng: &mut ChaCha8Rng, n: usize, k: usize) -> PredictionSet {
    let logits = random_logits(rng, n, k, 3.0);
    logits.to_simplex()
}

/// A random valid model: sorted inducing inputs in `range`, random
/// variational mean and lower-triangular factor.
pub fn random_model(
    rng: &mut ChaCha8Rng,
    m: usize,
    range: (f64, f64),
    prior: PriorMean,
    kind: ScoreKind,
    structure: CovStructure,
) -> GpCalibrationModel {
    let mut w: Vec<f64> = (0..m).map(|_| rng.random_range(range.0..range.1)).collect();
    w.sort_by(f64::total_cmp);
    let mean: Vec<f64> = (0..m).map(|_| rng.random_range(-0.5..0.5)).collect();
    let mut l = Matrix::zeros(m, m);
    for i in 0..m {
        for j in 0..i {
            l[(i, j)] = rng.random_range(-0.2..0.2);
        }
        l[(i, i)] = rng.random_range(0.2..1.0);
    }
    let kernel =
        KernelParams::new(rng.random_range(0.3..2.0), rng.random_range(0.3..2.0), rng.random_range(0.005..0.1))
            .unwrap();
    GpCalibrationModel::from_parts(w, mean, l, kernel, prior, kind, structure).unwrap()
}

//! Damped Newton solver for small logistic regressions.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::math;

const MAX_ITERS: usize = 200;

/// Negative log-likelihood of `targets` under `sigmoid(features · theta)`.
pub(crate) fn nll(features: &[Vec<f64>], targets: &[bool], theta: &[f64]) -> f64 {
    features
        .iter()
        .zip(targets)
        .map(|(x, &t)| {
            let eta: f64 = x.iter().zip(theta).map(|(a, b)| a * b).sum();
            // ln(1 + e^η) − tη
            math::softplus(eta) - if t { eta } else { 0.0 }
        })
        .sum()
}

/// Minimizes the logistic NLL from `theta0` with Levenberg-damped Newton
/// steps and backtracking. Every accepted step lowers the NLL.
pub(crate) fn fit(features: &[Vec<f64>], targets: &[bool], theta0: Vec<f64>) -> Result<Vec<f64>> {
    let d = theta0.len();
    let mut theta = theta0;
    let mut f = nll(features, targets, &theta);
    if !f.is_finite() {
        return Err(Error::Numerical("logistic NLL is not finite at the starting point".into()));
    }
    let mut damping = 1e-10;
    for _ in 0..MAX_ITERS {
        let mut grad = vec![0.0; d];
        let mut hess = Matrix::zeros(d, d);
        for (x, &t) in features.iter().zip(targets) {
            let eta: f64 = x.iter().zip(&theta).map(|(a, b)| a * b).sum();
            let p = math::sigmoid(eta);
            let r = p - if t { 1.0 } else { 0.0 };
            let w = p * (1.0 - p);
            for i in 0..d {
                grad[i] += r * x[i];
                for j in 0..d {
                    hess[(i, j)] += w * x[i] * x[j];
                }
            }
        }
        let gmax = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        if gmax <= 1e-12 * (features.len() as f64).max(1.0) {
            break;
        }
        let scale = (0..d).map(|i| hess[(i, i)]).fold(0.0f64, f64::max).max(1e-300);
        let mut improved = false;
        for _ in 0..60 {
            let mut h = hess.clone();
            h.add_diag(damping * scale);
            let Ok(chol) = Cholesky::new(&h) else {
                damping *= 10.0;
                continue;
            };
            let step = chol.solve(&grad);
            let mut t = 1.0;
            for _ in 0..30 {
                let trial: Vec<f64> = theta.iter().zip(&step).map(|(a, s)| a - t * s).collect();
                let ft = nll(features, targets, &trial);
                if ft.is_finite() && ft < f {
                    theta = trial;
                    let rel = (f - ft) / f.max(1e-300);
                    f = ft;
                    improved = rel > 1e-15;
                    break;
                }
                t *= 0.5;
            }
            if improved {
                damping = (damping * 0.1).max(1e-12);
                break;
            }
            damping *= 10.0;
            if damping > 1e12 {
                break;
            }
        }
        if !improved {
            break;
        }
    }
    Ok(theta)
}

pub(crate) fn require_both_classes(targets: &[bool]) -> Result<()> {
    let pos = targets.iter().filter(|&&t| t).count();
    if pos == 0 || pos == targets.len() {
        return Err(Error::Degenerate("calibration targets contain a single class".into()));
    }
    Ok(())
}

pub(crate) fn check_lengths(scores: &[f64], targets: &[bool]) -> Result<()> {
    if scores.len() != targets.len() {
        return Err(Error::InvalidInput(alloc::format!("{} scores but {} targets", scores.len(), targets.len())));
    }
    if scores.is_empty() {
        return Err(Error::InvalidInput("no calibration samples".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("scores must be finite".into()));
    }
    Ok(())
}

use alloc::vec::Vec;

use super::inference::{elbo_grad_with, elbo_with, Inducing};
use super::optim::{minimize, OptimOptions};
use super::{CovStructure, FitDiagnostics, GpCalibrationModel, PriorMean};
use crate::error::{Error, Result};
use crate::kernel::KernelParams;
use crate::linalg::{Cholesky, Matrix, JITTER};
use crate::math;
use crate::metrics::PredictionSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    /// Number of inducing points `M`.
    pub num_inducing: usize,
    /// Defaults to [`PriorMean::default_for`] the data kind.
    pub prior_mean: Option<PriorMean>,
    pub cov_structure: CovStructure,
    pub kernel: KernelParams,
    pub max_iters: usize,
    /// Relative ELBO change at which optimization stops.
    pub tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            num_inducing: 10,
            prior_mean: None,
            cov_structure: CovStructure::Diagonal,
            kernel: KernelParams::default(),
            max_iters: 1000,
            tol: 1e-6,
        }
    }
}

/// Fits the variational posterior, inducing inputs and kernel parameters by
/// maximizing the ELBO with L-BFGS.
///
/// Hitting `max_iters` is not an error: the model comes back with
/// `diagnostics.converged == false`.
pub fn fit(data: &PredictionSet, config: &FitConfig) -> Result<GpCalibrationModel> {
    let mm = config.num_inducing;
    if mm == 0 {
        return Err(Error::InvalidParameter("need at least one inducing point".into()));
    }
    if data.len() < mm {
        return Err(Error::InvalidInput(alloc::format!(
            "{} samples are fewer than the {mm} inducing points",
            data.len()
        )));
    }
    let prior_mean = config.prior_mean.unwrap_or_else(|| PriorMean::default_for(data.kind()));
    prior_mean.validate_for(data.kind())?;

    let w0 = quantile_grid(data.scores(), mm);
    let init = GpCalibrationModel::prior(w0, config.kernel, prior_mean, data.kind(), config.cov_structure)?;
    let init_ind = Inducing::new(&init)?;
    let initial_elbo = elbo_with(&init, &init_ind, data);
    let single_class = data.labels().windows(2).all(|p| p[0] == p[1]);

    let opts = OptimOptions { max_iters: config.max_iters, tol: config.tol, ..OptimOptions::default() };
    let objective = |theta: &[f64]| {
        let model = unpack(&init, theta);
        let ind = Inducing::new(&model).ok()?;
        let (value, grad) = elbo_grad_with(&model, &ind, data);
        let mut flat = pack_gradient(&model, &grad);
        flat.iter_mut().for_each(|v| *v = -*v);
        Some((-value, flat))
    };
    let result = minimize(objective, pack(&init), &opts)
        .ok_or_else(|| Error::Numerical("ELBO is not finite at the initial parameters".into()))?;

    let mut model = if result.iterations == 0 { init } else { sorted(unpack(&init, &result.x))? };
    let final_elbo = if result.iterations == 0 { initial_elbo } else { -result.value };
    model.diagnostics = FitDiagnostics {
        initial_elbo,
        final_elbo,
        iterations: result.iterations,
        converged: result.converged,
        single_class,
        elbo_trace: result.trace.iter().map(|v| -v).collect(),
    };
    Ok(model)
}

/// `m` equally spaced quantiles (min to max) of all scalar inputs.
fn quantile_grid(values: &[f64], m: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let last = (sorted.len() - 1) as f64;
    (0..m)
        .map(|i| {
            let t = if m == 1 { 0.5 } else { i as f64 / (m - 1) as f64 };
            let pos = t * last;
            let lo = libm::floor(pos) as usize;
            let hi = (lo + 1).min(sorted.len() - 1);
            let frac = pos - lo as f64;
            sorted[lo] + frac * (sorted[hi] - sorted[lo])
        })
        .collect()
}

/// Layout: `m`, lower triangle of `L_S` row by row (diagonal as inverse
/// softplus), `w`, kernel log-parameters.
pub(crate) fn pack(model: &GpCalibrationModel) -> Vec<f64> {
    let mm = model.num_inducing();
    let mut theta = Vec::with_capacity(param_count(mm));
    theta.extend_from_slice(&model.variational_mean);
    for i in 0..mm {
        for j in 0..=i {
            let v = model.cov_factor[(i, j)];
            theta.push(if i == j { math::softplus_inv(v) } else { v });
        }
    }
    theta.extend_from_slice(&model.inducing_inputs);
    theta.extend_from_slice(&model.kernel.to_array());
    theta
}

pub(crate) fn param_count(mm: usize) -> usize {
    2 * mm + mm * (mm + 1) / 2 + KernelParams::COUNT
}

pub(crate) fn unpack(template: &GpCalibrationModel, theta: &[f64]) -> GpCalibrationModel {
    let mm = template.num_inducing();
    let mut it = theta.iter().copied();
    let mean: Vec<f64> = it.by_ref().take(mm).collect();
    let mut l = Matrix::zeros(mm, mm);
    for i in 0..mm {
        for j in 0..=i {
            let v = it.next().expect("parameter vector too short");
            l[(i, j)] = if i == j { math::softplus(v) } else { v };
        }
    }
    let w: Vec<f64> = it.by_ref().take(mm).collect();
    let k: Vec<f64> = it.collect();
    GpCalibrationModel {
        inducing_inputs: w,
        variational_mean: mean,
        cov_factor: l,
        kernel: KernelParams::from_array([k[0], k[1], k[2]]),
        diagnostics: FitDiagnostics::default(),
        ..template.clone()
    }
}

fn pack_gradient(model: &GpCalibrationModel, grad: &super::ElboGradient) -> Vec<f64> {
    let mm = model.num_inducing();
    let mut flat = Vec::with_capacity(param_count(mm));
    flat.extend_from_slice(&grad.mean);
    for i in 0..mm {
        for j in 0..=i {
            let g = grad.cov_factor[(i, j)];
            if i == j {
                // dL/draw = sigmoid(raw) with L = softplus(raw)
                let raw = math::softplus_inv(model.cov_factor[(i, i)]);
                flat.push(g * math::sigmoid(raw));
            } else {
                flat.push(g);
            }
        }
    }
    flat.extend_from_slice(&grad.inducing_inputs);
    flat.extend_from_slice(&grad.kernel);
    flat
}

/// Reorders inducing points ascending, permuting `m` and `S` to match.
fn sorted(model: GpCalibrationModel) -> Result<GpCalibrationModel> {
    let mm = model.num_inducing();
    let mut order: Vec<usize> = (0..mm).collect();
    order.sort_by(|&a, &b| model.inducing_inputs[a].total_cmp(&model.inducing_inputs[b]));
    if order.iter().enumerate().all(|(i, &o)| i == o) {
        return Ok(model);
    }
    let s = model.variational_cov();
    let permuted = Matrix::from_fn(mm, mm, |i, j| s[(order[i], order[j])]);
    let chol = Cholesky::new(&permuted).or_else(|_| Cholesky::with_jitter(&permuted, JITTER))?;
    let w = order.iter().map(|&i| model.inducing_inputs[i]).collect();
    let m = order.iter().map(|&i| model.variational_mean[i]).collect();
    Ok(GpCalibrationModel { inducing_inputs: w, variational_mean: m, cov_factor: chol.factor().clone(), ..model })
}

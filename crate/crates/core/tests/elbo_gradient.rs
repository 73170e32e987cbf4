//! Central finite differences against the analytic ELBO gradient.

mod common;

use calibra_core::gpcalib::{elbo, elbo_grad, CovStructure, GpCalibrationModel, PriorMean};
use calibra_core::kernel::KernelParams;
use calibra_core::{PredictionSet, ScoreKind};

const H: f64 = 1e-5;

/// `|a − b| / max(|a|, |b|, 1)`.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn rebuild(
    model: &GpCalibrationModel,
    edit: impl FnOnce(&mut Vec<f64>, &mut Vec<f64>, &mut calibra_core::linalg::Matrix, &mut KernelParams),
) -> GpCalibrationModel {
    let mut w = model.inducing_inputs().to_vec();
    let mut m = model.variational_mean().to_vec();
    let mut l = model.cov_factor().clone();
    let mut k = *model.kernel();
    edit(&mut w, &mut m, &mut l, &mut k);
    GpCalibrationModel::from_parts(w, m, l, k, model.prior_mean(), model.input_kind(), model.cov_structure()).unwrap()
}

fn central(
    model: &GpCalibrationModel,
    data: &PredictionSet,
    edit: impl Fn(&mut Vec<f64>, &mut Vec<f64>, &mut calibra_core::linalg::Matrix, &mut KernelParams, f64),
) -> f64 {
    let plus = rebuild(model, |w, m, l, k| edit(w, m, l, k, H));
    let minus = rebuild(model, |w, m, l, k| edit(w, m, l, k, -H));
    (elbo(&plus, data).unwrap() - elbo(&minus, data).unwrap()) / (2.0 * H)
}

/// Largest relative error over all gradient components.
pub fn max_gradient_error(model: &GpCalibrationModel, data: &PredictionSet) -> f64 {
    let (_, g) = elbo_grad(model, data).unwrap();
    let mm = model.num_inducing();
    let mut worst = 0.0f64;
    for j in 0..mm {
        let fd = central(model, data, |_, m, _, _, h| m[j] += h);
        worst = worst.max(rel_err(fd, g.mean[j]));
        let fd = central(model, data, |w, _, _, _, h| w[j] += h);
        worst = worst.max(rel_err(fd, g.inducing_inputs[j]));
        for i in j..mm {
            let fd = central(model, data, |_, _, l, _, h| l[(i, j)] += h);
            worst = worst.max(rel_err(fd, g.cov_factor[(i, j)]));
        }
    }
    for p in 0..3 {
        let fd = central(model, data, |_, _, _, k, h| match p {
            0 => k.log_signal_variance += h,
            1 => k.log_lengthscale_sq += h,
            _ => k.log_noise_variance += h,
        });
        worst = worst.max(rel_err(fd, g.kernel[p]));
    }
    worst
}

#[test]
fn gradient_matches_finite_differences_logits() {
    let mut rng = common::rng(11);
    for structure in [CovStructure::Diagonal, CovStructure::BlockDiagonal] {
        for _ in 0..3 {
            let data = common::random_logits(&mut rng, 50, 4, 2.0);
            let model =
                common::random_model(&mut rng, 5, (-2.0, 2.0), PriorMean::Identity, ScoreKind::Logits, structure);
            let err = max_gradient_error(&model, &data);
            assert!(err < 1e-4, "{structure:?}: relative error {err:e}");
        }
    }
}

#[test]
fn gradient_matches_finite_differences_simplex() {
    let mut rng = common::rng(12);
    for structure in [CovStructure::Diagonal, CovStructure::BlockDiagonal] {
        let data = common::random_simplex(&mut rng, 50, 4);
        let model = common::random_model(&mut rng, 5, (0.0, 1.0), PriorMean::Log, ScoreKind::Simplex, structure);
        let err = max_gradient_error(&model, &data);
        assert!(err < 1e-4, "{structure:?}: relative error {err:e}");
    }
}

#[test]
fn far_inducing_input_has_vanishing_gradient() {
    let mut rng = common::rng(13);
    let data = common::random_logits(&mut rng, 50, 4, 2.0);
    let base =
        common::random_model(&mut rng, 5, (-2.0, 2.0), PriorMean::Identity, ScoreKind::Logits, CovStructure::Diagonal);
    let far = rebuild(&base, |w, _, _, k| {
        *k = KernelParams::new(1.0, 1.0, 0.01).unwrap();
        w[4] = 1e3;
    });
    let (_, g) = elbo_grad(&far, &data).unwrap();
    assert!(g.inducing_inputs[4].abs() < 1e-6, "{}", g.inducing_inputs[4]);
    let fd = central(&far, &data, |w, _, _, _, h| w[4] += h);
    assert!(fd.abs() < 1e-6);
}

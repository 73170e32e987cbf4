//! Variational objective: marginals of `q(g_n)`, Taylor-approximated expected
//! log-likelihoods, the KL term, and the analytic ELBO gradient.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{inducing_cov, CovStructure, GpCalibrationModel};
use crate::error::{Error, Result};
use crate::kernel::KernelParams;
use crate::linalg::{dot, Cholesky, Matrix};
use crate::math;
use crate::metrics::PredictionSet;

/// Quantities of the inducing-point prior and posterior shared by all rows.
pub(crate) struct Inducing {
    pub chol: Cholesky,
    /// `Σ_u⁻¹`
    pub precision: Matrix,
    /// `S − Σ_u`
    pub delta: Matrix,
    pub s: Matrix,
}

impl Inducing {
    pub fn new(model: &GpCalibrationModel) -> Result<Self> {
        let sigma_u = inducing_cov(&model.kernel, &model.inducing_inputs)?;
        let chol = Cholesky::new(&sigma_u).map_err(|e| {
            Error::Numerical(format!(
                "inducing covariance is not positive definite even with jitter ({e}); M = {}, kernel = {:?}",
                model.inducing_inputs.len(),
                model.kernel
            ))
        })?;
        let precision = chol.inverse();
        let s = model.variational_cov();
        let delta = s.sub(&sigma_u);
        Ok(Inducing { chol, precision, delta, s })
    }
}

/// Marginal covariance of one sample: full or diagonal.
#[derive(Debug, Clone)]
pub(crate) enum RowCov {
    Diag(Vec<f64>),
    Full(Matrix),
}

impl RowCov {
    pub fn to_matrix(&self) -> Matrix {
        match self {
            RowCov::Diag(d) => Matrix::diag(d),
            RowCov::Full(c) => c.clone(),
        }
    }
}

pub(crate) struct RowMarginal {
    /// `k(x, w)`, K×M
    pub kxu: Matrix,
    /// `k(x, w) Σ_u⁻¹`, K×M
    pub a: Matrix,
    /// `A (S − Σ_u)`, K×M
    pub ad: Matrix,
    pub phi: Vec<f64>,
    pub cov: RowCov,
}

/// Mean and covariance of `q(g_n)` at the K inputs `x`. `with_noise` adds
/// the white-noise variance to the latent prior covariance of `x`; it is used
/// for the training marginals and omitted for predictions.
pub(crate) fn row_marginal(
    model: &GpCalibrationModel,
    ind: &Inducing,
    x: &[f64],
    with_noise: bool,
    structure: CovStructure,
) -> RowMarginal {
    let k = x.len();
    let w = &model.inducing_inputs;
    let kern = &model.kernel;
    let kxu = kern.gram_unchecked(x, w, false);
    let a = kxu.matmul(&ind.precision);
    let ad = a.matmul(&ind.delta);
    let phi: Vec<f64> = (0..k).map(|i| model.prior_mean.eval(x[i]) + dot(a.row(i), &model.variational_mean)).collect();
    let cov = match structure {
        CovStructure::Diagonal => {
            let base = kern.signal_variance() + if with_noise { kern.noise_variance() } else { 0.0 };
            RowCov::Diag((0..k).map(|i| base + dot(ad.row(i), a.row(i))).collect())
        }
        CovStructure::BlockDiagonal => {
            let mut c = kern.gram_unchecked(x, x, with_noise);
            for i in 0..k {
                for j in 0..k {
                    c[(i, j)] += dot(ad.row(i), a.row(j));
                }
            }
            // exact symmetry
            for i in 0..k {
                for j in 0..i {
                    let v = 0.5 * (c[(i, j)] + c[(j, i)]);
                    c[(i, j)] = v;
                    c[(j, i)] = v;
                }
            }
            RowCov::Full(c)
        }
    };
    RowMarginal { kxu, a, ad, phi, cov }
}

/// Mean `φ` and covariance `C` of the K-dimensional marginal `q(g_n)` for one
/// input row, as used in the ELBO (white noise included). Under a diagonal
/// covariance structure `C` is returned as a diagonal matrix.
pub fn marginal_q(model: &GpCalibrationModel, z_row: &[f64]) -> Result<(Vec<f64>, Matrix)> {
    check_row(z_row)?;
    let ind = Inducing::new(model)?;
    let r = row_marginal(model, &ind, z_row, true, model.cov_structure);
    Ok((r.phi, r.cov.to_matrix()))
}

fn check_row(z: &[f64]) -> Result<()> {
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("input row has non-finite values".into()));
    }
    Ok(())
}

/// Second-order Taylor approximation of `E[ln softargmax(g)_y]` for
/// `g ~ N(φ, C)`:
/// `ln σ(φ)_y + ½(σ(φ)ᵀ C σ(φ) − diag(C)ᵀ σ(φ))`.
pub fn expected_loglik_taylor(phi: &[f64], cov: &Matrix, y: usize) -> f64 {
    let s = math::softmax(phi);
    let quad: f64 = (0..phi.len()).map(|i| s[i] * dot(cov.row(i), &s)).sum();
    let diag: f64 = (0..phi.len()).map(|i| cov[(i, i)] * s[i]).sum();
    log_softmax_at(phi, y) + 0.5 * (quad - diag)
}

fn log_softmax_at(phi: &[f64], y: usize) -> f64 {
    phi[y] - math::log_sum_exp(phi)
}

fn taylor_row(phi: &[f64], s: &[f64], cov: &RowCov, y: usize) -> f64 {
    let correction = match cov {
        RowCov::Diag(c) => (0..phi.len()).map(|i| c[i] * (s[i] * s[i] - s[i])).sum::<f64>(),
        RowCov::Full(c) => {
            let quad: f64 = (0..phi.len()).map(|i| s[i] * dot(c.row(i), s)).sum();
            let diag: f64 = (0..phi.len()).map(|i| c[(i, i)] * s[i]).sum();
            quad - diag
        }
    };
    log_softmax_at(phi, y) + 0.5 * correction
}

fn kl_with(model: &GpCalibrationModel, ind: &Inducing) -> f64 {
    let mm = model.num_inducing();
    let trace: f64 = (0..mm).map(|i| dot(ind.precision.row(i), &column(&ind.s, i))).sum();
    let pm = ind.precision.matvec(&model.variational_mean);
    let maha = dot(&model.variational_mean, &pm);
    let logdet_s: f64 = 2.0 * (0..mm).map(|i| math::ln(model.cov_factor[(i, i)])).sum::<f64>();
    0.5 * (trace + maha - mm as f64 + ind.chol.log_det() - logdet_s)
}

fn column(m: &Matrix, j: usize) -> Vec<f64> {
    (0..m.rows()).map(|i| m[(i, j)]).collect()
}

/// `KL[N(m, S) ‖ N(0, Σ_u)]` in closed form.
pub fn kl_to_prior(model: &GpCalibrationModel) -> Result<f64> {
    let ind = Inducing::new(model)?;
    Ok(kl_with(model, &ind))
}

fn check_data(model: &GpCalibrationModel, data: &PredictionSet) -> Result<()> {
    if data.kind() != model.input_kind {
        return Err(Error::InvalidInput(format!(
            "model expects {} inputs but data holds {}",
            model.input_kind.as_str(),
            data.kind().as_str()
        )));
    }
    Ok(())
}

/// Evidence lower bound: Taylor-approximated expected log-likelihood of all
/// samples minus the KL term.
pub fn elbo(model: &GpCalibrationModel, data: &PredictionSet) -> Result<f64> {
    check_data(model, data)?;
    let ind = Inducing::new(model)?;
    Ok(elbo_with(model, &ind, data))
}

pub(crate) fn elbo_with(model: &GpCalibrationModel, ind: &Inducing, data: &PredictionSet) -> f64 {
    let mut s = vec![0.0; data.n_classes()];
    let lik: f64 = data
        .rows()
        .zip(data.labels())
        .map(|(x, &y)| {
            let r = row_marginal(model, ind, x, true, model.cov_structure);
            math::softmax_into(&r.phi, &mut s);
            taylor_row(&r.phi, &s, &r.cov, y)
        })
        .sum();
    lik - kl_with(model, ind)
}

/// Gradient of the ELBO with respect to the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ElboGradient {
    /// `∂/∂m`
    pub mean: Vec<f64>,
    /// `∂/∂L_S` on the lower triangle (upper triangle zero).
    pub cov_factor: Matrix,
    /// `∂/∂w`
    pub inducing_inputs: Vec<f64>,
    /// `∂/∂(ln σ², ln l², ln σ_n²)`
    pub kernel: [f64; 3],
}

/// ELBO value and its analytic gradient.
pub fn elbo_grad(model: &GpCalibrationModel, data: &PredictionSet) -> Result<(f64, ElboGradient)> {
    check_data(model, data)?;
    let ind = Inducing::new(model)?;
    Ok(elbo_grad_with(model, &ind, data))
}

pub(crate) fn elbo_grad_with(model: &GpCalibrationModel, ind: &Inducing, data: &PredictionSet) -> (f64, ElboGradient) {
    let mm = model.num_inducing();
    let kk = data.n_classes();
    let w = &model.inducing_inputs;
    let m = &model.variational_mean;
    let kern: &KernelParams = &model.kernel;
    let sv = kern.signal_variance();
    let nv = kern.noise_variance();
    let inv_l2 = 1.0 / kern.lengthscale_sq();

    let mut lik = 0.0;
    let mut grad_m = vec![0.0; mm];
    let mut grad_w = vec![0.0; mm];
    let mut grad_kern = [0.0; 3];
    // Σ_n Aᵀ G A and Σ_n Aᵀ dA
    let mut gs = Matrix::zeros(mm, mm);
    let mut q = Matrix::zeros(mm, mm);

    let mut s = vec![0.0; kk];
    let mut g_phi = vec![0.0; kk];
    let mut v = vec![0.0; kk];
    let mut da = Matrix::zeros(kk, mm);

    for (x, &y) in data.rows().zip(data.labels()) {
        let r = row_marginal(model, ind, x, true, model.cov_structure);
        math::softmax_into(&r.phi, &mut s);
        lik += taylor_row(&r.phi, &s, &r.cov, y);

        // v = C s − diag(C)/2
        match &r.cov {
            RowCov::Diag(c) => {
                for i in 0..kk {
                    v[i] = c[i] * s[i] - 0.5 * c[i];
                }
            }
            RowCov::Full(c) => {
                for i in 0..kk {
                    v[i] = dot(c.row(i), &s) - 0.5 * c[(i, i)];
                }
            }
        }
        // g_φ = e_y − s + (diag(s) − s sᵀ) v
        let sv_dot = dot(&s, &v);
        for i in 0..kk {
            g_phi[i] = -s[i] + s[i] * (v[i] - sv_dot);
        }
        g_phi[y] += 1.0;

        for j in 0..mm {
            grad_m[j] += (0..kk).map(|i| r.a[(i, j)] * g_phi[i]).sum::<f64>();
        }

        // G = ½(s sᵀ − diag(s)); accumulate Aᵀ G A and build dA = g_φ mᵀ + 2 G A D
        match &r.cov {
            RowCov::Diag(_) => {
                for i in 0..kk {
                    let gi = 0.5 * (s[i] * s[i] - s[i]);
                    let ai = r.a.row(i);
                    for p in 0..mm {
                        let f = gi * ai[p];
                        if f != 0.0 {
                            let row = gs.row_mut(p);
                            for (o, &aq) in row.iter_mut().zip(ai) {
                                *o += f * aq;
                            }
                        }
                    }
                    let adi = r.ad.row(i);
                    let dai = da.row_mut(i);
                    for p in 0..mm {
                        dai[p] = g_phi[i] * m[p] + 2.0 * gi * adi[p];
                    }
                    // Kxx diagonal: σ² + σ_n²
                    grad_kern[0] += gi * sv;
                    grad_kern[2] += gi * nv;
                }
            }
            RowCov::Full(_) => {
                let g = Matrix::from_fn(kk, kk, |i, j| 0.5 * (s[i] * s[j] - if i == j { s[i] } else { 0.0 }));
                let ga = g.matmul(&r.a);
                let gad = g.matmul(&r.ad);
                for p in 0..mm {
                    for qq in 0..mm {
                        gs[(p, qq)] += (0..kk).map(|i| r.a[(i, p)] * ga[(i, qq)]).sum::<f64>();
                    }
                }
                for i in 0..kk {
                    for p in 0..mm {
                        da[(i, p)] = g_phi[i] * m[p] + 2.0 * gad[(i, p)];
                    }
                }
                for i in 0..kk {
                    for j in 0..kk {
                        let d = x[i] - x[j];
                        let r2 = 0.5 * d * d * inv_l2;
                        let k_ij = sv * math::exp(-r2);
                        grad_kern[0] += g[(i, j)] * k_ij;
                        grad_kern[1] += g[(i, j)] * k_ij * r2;
                    }
                    grad_kern[2] += g[(i, i)] * nv;
                }
            }
        }

        // through A = Kxu Σ_u⁻¹
        let dkxu = da.matmul(&ind.precision);
        for p in 0..mm {
            for qq in 0..mm {
                q[(p, qq)] += (0..kk).map(|i| r.a[(i, p)] * da[(i, qq)]).sum::<f64>();
            }
        }
        for i in 0..kk {
            for j in 0..mm {
                let gk = dkxu[(i, j)];
                let kij = r.kxu[(i, j)];
                let d = x[i] - w[j];
                grad_w[j] += gk * kij * d * inv_l2;
                grad_kern[0] += gk * kij;
                grad_kern[1] += gk * kij * 0.5 * d * d * inv_l2;
            }
        }
    }

    let kl = kl_with(model, ind);
    let p = &ind.precision;
    let l_s = &model.cov_factor;

    // m
    let pm = p.matvec(m);
    for j in 0..mm {
        grad_m[j] -= pm[j];
    }

    // L_S: 2·GS·L − (P L − diag(1/L_ii))
    let gs_l = gs.matmul(l_s);
    let p_l = p.matmul(l_s);
    let mut grad_l = Matrix::zeros(mm, mm);
    for i in 0..mm {
        for j in 0..=i {
            let mut g = 2.0 * gs_l[(i, j)] - p_l[(i, j)];
            if i == j {
                g += 1.0 / l_s[(i, i)];
            }
            grad_l[(i, j)] = g;
        }
    }

    // Σ_u: −GS − Q P − ½(P − P S P − P m mᵀ P)
    let qp = q.matmul(p);
    let psp = p.matmul(&ind.s).matmul(p);
    let mut d_sigma = Matrix::zeros(mm, mm);
    for i in 0..mm {
        for j in 0..mm {
            d_sigma[(i, j)] = -gs[(i, j)] - qp[(i, j)] - 0.5 * (p[(i, j)] - psp[(i, j)] - pm[i] * pm[j]);
        }
    }
    for i in 0..mm {
        for j in 0..mm {
            let g = d_sigma[(i, j)];
            let d = w[i] - w[j];
            let r2 = 0.5 * d * d * inv_l2;
            let k_ij = sv * math::exp(-r2);
            grad_kern[0] += g * k_ij;
            grad_kern[1] += g * k_ij * r2;
            if i != j {
                // Σ_ij depends on w_i and w_j
                let dk = -k_ij * d * inv_l2;
                grad_w[i] += g * dk;
                grad_w[j] -= g * dk;
            }
        }
        grad_kern[2] += d_sigma[(i, i)] * nv;
    }

    (lik - kl, ElboGradient { mean: grad_m, cov_factor: grad_l, inducing_inputs: grad_w, kernel: grad_kern })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpcalib::PriorMean;
    use crate::metrics::ScoreKind;

    fn prior_model(structure: CovStructure) -> GpCalibrationModel {
        GpCalibrationModel::prior(
            vec![-2.0, -0.5, 1.0, 2.5],
            KernelParams::new(1.3, 1.5, 0.05).unwrap(),
            PriorMean::Identity,
            ScoreKind::Logits,
            structure,
        )
        .unwrap()
    }

    #[test]
    fn prior_is_recovered() {
        for structure in [CovStructure::Diagonal, CovStructure::BlockDiagonal] {
            let model = prior_model(structure);
            let x = [0.3, -1.0, 2.0];
            let (phi, c) = marginal_q(&model, &x).unwrap();
            for (p, xi) in phi.iter().zip(&x) {
                assert!((p - xi).abs() < 1e-12);
            }
            let kxx = model.kernel().gram(&x, &x, true).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let expect = if structure == CovStructure::Diagonal && i != j { 0.0 } else { kxx[(i, j)] };
                    assert!((c[(i, j)] - expect).abs() < 1e-9, "{structure:?} {i} {j}");
                }
            }
            assert!(kl_to_prior(&model).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn equal_components_share_latent_values() {
        let mut model = prior_model(CovStructure::BlockDiagonal);
        model.variational_mean = vec![0.3, -0.2, 0.5, 0.1];
        let (phi, _) = marginal_q(&model, &[0.7, 0.7, 0.7]).unwrap();
        assert_eq!(phi[0], phi[1]);
        assert_eq!(phi[1], phi[2]);
    }

    #[test]
    fn taylor_zero_covariance_and_hand_value() {
        let phi = [0.2, -0.4, 1.1];
        let c0 = Matrix::zeros(3, 3);
        let exact = phi[2] - math::log_sum_exp(&phi);
        assert_eq!(expected_loglik_taylor(&phi, &c0, 2), exact);

        let phi = [0.0; 4];
        let c = Matrix::identity(4).scale(0.01);
        let v = expected_loglik_taylor(&phi, &c, 1);
        let expect = (0.25f64).ln() + 0.5 * (0.01 * (4.0 * (1.0 / 16.0)) - 0.01);
        assert!((v - expect).abs() < 1e-15);
        assert!((v - ((0.25f64).ln() - 0.00375)).abs() < 1e-15);
    }

    #[test]
    fn kl_mean_shift() {
        let mut model = prior_model(CovStructure::Diagonal);
        let delta = vec![0.4, -0.3, 0.2, 0.9];
        model.variational_mean = delta.clone();
        let sigma = inducing_cov(model.kernel(), model.inducing_inputs()).unwrap();
        let solved = Cholesky::new(&sigma).unwrap().solve(&delta);
        let expect = 0.5 * dot(&delta, &solved);
        assert!((kl_to_prior(&model).unwrap() - expect).abs() < 1e-10 * expect.max(1.0));
    }

    #[test]
    fn elbo_without_data_is_negative_kl() {
        let mut model = prior_model(CovStructure::Diagonal);
        model.variational_mean = vec![0.1, 0.2, -0.3, 0.0];
        let empty = PredictionSet::empty(ScoreKind::Logits, 3).unwrap();
        let e = elbo(&model, &empty).unwrap();
        assert!((e + kl_to_prior(&model).unwrap()).abs() < 1e-14);
        assert!(e <= 0.0);
    }

    #[test]
    fn mean_gradient_vanishes_at_prior_without_data() {
        let model = prior_model(CovStructure::Diagonal);
        let empty = PredictionSet::empty(ScoreKind::Logits, 3).unwrap();
        let (_, g) = elbo_grad(&model, &empty).unwrap();
        assert!(g.mean.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let model = prior_model(CovStructure::Diagonal);
        let data = PredictionSet::new(ScoreKind::Simplex, 2, vec![0.4, 0.6], vec![1]).unwrap();
        assert!(matches!(elbo(&model, &data), Err(Error::InvalidInput(_))));
    }
}

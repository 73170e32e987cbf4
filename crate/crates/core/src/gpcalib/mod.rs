//! Calibration with a shared one-dimensional latent Gaussian process.
//!
//! Every component `z_k` of a classifier output is mapped through the same
//! latent function `g`, and the calibrated distribution is
//! `softargmax(g(z_1), …, g(z_K))`. The prior `g ~ GP(μ, k)` uses a mean `μ`
//! that leaves the classifier unchanged (`ln z` for probabilities, `z` for
//! logits) and the RBF + white-noise [`kernel`](crate::kernel).
//!
//! Inference is sparse variational: `M` inducing inputs `w` carry inducing
//! variables `u = g(w) − μ(w)` with prior `N(0, Σ_u)` and variational posterior
//! `q(u) = N(m, S)`. The evidence lower bound is a sum of per-sample expected
//! log-likelihoods, each approximated by a second-order Taylor expansion of
//! the log-softargmax around the marginal mean, minus `KL[q(u) ‖ p(u)]`.

mod fit;
mod inference;
mod optim;
mod predict;

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernel::KernelParams;
use crate::linalg::{Cholesky, Matrix, JITTER};
use crate::math;
use crate::metrics::ScoreKind;

pub use fit::{fit, FitConfig};
pub use inference::{elbo, elbo_grad, expected_loglik_taylor, kl_to_prior, marginal_q, ElboGradient};
pub use optim::{minimize, OptimOptions, OptimResult};
pub use predict::{
    calibrate, latent_curve, predict_mc, predict_mean, LatentPosterior, PredictMode, DEFAULT_MC_SAMPLES,
};

/// Prior mean `μ` of the latent function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorMean {
    /// `μ(z) = ln max(z, 1e-12)`; for probability inputs.
    Log,
    /// `μ(z) = z`; for logits.
    Identity,
    /// `μ(z) = slope·z + intercept`.
    Affine { slope: f64, intercept: f64 },
}

impl PriorMean {
    /// The mean under which an already calibrated classifier is left as is.
    pub fn default_for(kind: ScoreKind) -> Self {
        match kind {
            ScoreKind::Simplex => PriorMean::Log,
            ScoreKind::Logits => PriorMean::Identity,
        }
    }

    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        match *self {
            PriorMean::Log => math::ln_floored(z),
            PriorMean::Identity => z,
            PriorMean::Affine { slope, intercept } => slope * z + intercept,
        }
    }

    pub fn validate_for(&self, kind: ScoreKind) -> Result<()> {
        match (self, kind) {
            (PriorMean::Log, ScoreKind::Logits) => {
                Err(Error::InvalidParameter("the log prior mean needs probability inputs, not logits".into()))
            }
            (PriorMean::Affine { slope, intercept }, _) if !slope.is_finite() || !intercept.is_finite() => {
                Err(Error::InvalidParameter("affine prior mean must have finite coefficients".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Covariance of the `K` latent values of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovStructure {
    /// Components treated as independent; `O(K)` per expectation.
    #[default]
    Diagonal,
    /// Full `K×K` covariance from the shared kernel; `O(K²)`.
    BlockDiagonal,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitDiagnostics {
    pub initial_elbo: f64,
    pub final_elbo: f64,
    pub iterations: usize,
    pub converged: bool,
    /// All calibration labels belong to one class.
    pub single_class: bool,
    /// ELBO after every accepted optimizer step, starting with the initial
    /// value.
    pub elbo_trace: Vec<f64>,
}

/// A fitted (or prior) GP calibration map.
#[derive(Debug, Clone, PartialEq)]
pub struct GpCalibrationModel {
    inducing_inputs: Vec<f64>,
    variational_mean: Vec<f64>,
    cov_factor: Matrix,
    kernel: KernelParams,
    prior_mean: PriorMean,
    input_kind: ScoreKind,
    cov_structure: CovStructure,
    pub diagnostics: FitDiagnostics,
}

impl GpCalibrationModel {
    /// Validates and assembles a model. `cov_factor` is the lower Cholesky
    /// factor of `S`; its upper triangle must be zero.
    pub fn from_parts(
        inducing_inputs: Vec<f64>,
        variational_mean: Vec<f64>,
        cov_factor: Matrix,
        kernel: KernelParams,
        prior_mean: PriorMean,
        input_kind: ScoreKind,
        cov_structure: CovStructure,
    ) -> Result<Self> {
        let m = inducing_inputs.len();
        if m == 0 {
            return Err(Error::InvalidInput("need at least one inducing input".into()));
        }
        if variational_mean.len() != m || cov_factor.rows() != m || cov_factor.cols() != m {
            return Err(Error::InvalidInput("variational parameters do not match the inducing inputs".into()));
        }
        if inducing_inputs.iter().chain(&variational_mean).chain(cov_factor.as_slice()).any(|v| !v.is_finite())
            || !kernel.is_finite()
        {
            return Err(Error::InvalidInput("model parameters must be finite".into()));
        }
        for i in 0..m {
            if !(cov_factor[(i, i)] > 0.0) {
                return Err(Error::InvalidInput("covariance factor needs a positive diagonal".into()));
            }
            if (i + 1..m).any(|j| cov_factor[(i, j)] != 0.0) {
                return Err(Error::InvalidInput("covariance factor must be lower triangular".into()));
            }
        }
        if inducing_inputs.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidInput("inducing inputs must be sorted ascending".into()));
        }
        prior_mean.validate_for(input_kind)?;
        Ok(GpCalibrationModel {
            inducing_inputs,
            variational_mean,
            cov_factor,
            kernel,
            prior_mean,
            input_kind,
            cov_structure,
            diagnostics: FitDiagnostics::default(),
        })
    }

    /// The model whose variational posterior equals the prior:
    /// `m = 0`, `S = Σ_u`.
    pub fn prior(
        inducing_inputs: Vec<f64>,
        kernel: KernelParams,
        prior_mean: PriorMean,
        input_kind: ScoreKind,
        cov_structure: CovStructure,
    ) -> Result<Self> {
        let m = inducing_inputs.len();
        let sigma_u = inducing_cov(&kernel, &inducing_inputs)?;
        let chol = Cholesky::new(&sigma_u)?;
        Self::from_parts(
            inducing_inputs,
            alloc::vec![0.0; m],
            chol.factor().clone(),
            kernel,
            prior_mean,
            input_kind,
            cov_structure,
        )
    }

    pub fn num_inducing(&self) -> usize {
        self.inducing_inputs.len()
    }

    pub fn inducing_inputs(&self) -> &[f64] {
        &self.inducing_inputs
    }

    pub fn variational_mean(&self) -> &[f64] {
        &self.variational_mean
    }

    /// Lower Cholesky factor of `S`.
    pub fn cov_factor(&self) -> &Matrix {
        &self.cov_factor
    }

    pub fn variational_cov(&self) -> Matrix {
        self.cov_factor.matmul(&self.cov_factor.transpose())
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn prior_mean(&self) -> PriorMean {
        self.prior_mean
    }

    pub fn input_kind(&self) -> ScoreKind {
        self.input_kind
    }

    pub fn cov_structure(&self) -> CovStructure {
        self.cov_structure
    }

    pub fn with_cov_structure(mut self, cov_structure: CovStructure) -> Self {
        self.cov_structure = cov_structure;
        self
    }
}

/// `Σ_u = k(w, w) + σ_n² I + jitter·I`.
pub(crate) fn inducing_cov(kernel: &KernelParams, w: &[f64]) -> Result<Matrix> {
    let mut k = kernel.gram(w, w, true)?;
    k.add_diag(JITTER);
    Ok(k)
}

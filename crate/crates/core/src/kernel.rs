//! One-dimensional sum kernel: squared-exponential plus white noise.
//!
//! `k(x, x') = σ² exp(−(x − x')² / (2l²)) + σ_n² δ(x, x')`
//!
//! All three parameters are stored as logarithms so that unconstrained
//! optimization keeps them positive.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    /// `ln σ²`
    pub log_signal_variance: f64,
    /// `ln l²`
    pub log_lengthscale_sq: f64,
    /// `ln σ_n²`
    pub log_noise_variance: f64,
}

impl Default for KernelParams {
    /// σ² = 1, l = 10, σ_n² = 0.01.
    fn default() -> Self {
        KernelParams::new(1.0, 10.0, 0.01).expect("default kernel parameters are valid")
    }
}

impl KernelParams {
    pub const COUNT: usize = 3;

    pub fn new(signal_variance: f64, lengthscale: f64, noise_variance: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(signal_variance) || !ok(lengthscale) || !ok(noise_variance) {
            return Err(Error::InvalidParameter(alloc::format!(
                "kernel parameters must be positive and finite: σ²={signal_variance}, l={lengthscale}, σ_n²={noise_variance}"
            )));
        }
        Ok(KernelParams {
            log_signal_variance: math::ln(signal_variance),
            log_lengthscale_sq: math::ln(lengthscale * lengthscale),
            log_noise_variance: math::ln(noise_variance),
        })
    }

    pub fn signal_variance(&self) -> f64 {
        math::exp(self.log_signal_variance)
    }

    pub fn lengthscale_sq(&self) -> f64 {
        math::exp(self.log_lengthscale_sq)
    }

    pub fn lengthscale(&self) -> f64 {
        math::sqrt(self.lengthscale_sq())
    }

    pub fn noise_variance(&self) -> f64 {
        math::exp(self.log_noise_variance)
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.log_signal_variance, self.log_lengthscale_sq, self.log_noise_variance]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        KernelParams { log_signal_variance: v[0], log_lengthscale_sq: v[1], log_noise_variance: v[2] }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// The RBF part for a pair of inputs.
    #[inline]
    pub fn rbf(&self, a: f64, b: f64) -> f64 {
        let d = a - b;
        self.signal_variance() * math::exp(-0.5 * d * d / self.lengthscale_sq())
    }

    /// Gram matrix between `x` (n) and `x2` (m).
    ///
    /// With `include_noise`, σ_n² is added at entries `(i, i)` whose inputs are
    /// identical, i.e. on the diagonal of a self-gram. Cross-covariances
    /// between different input sets should pass `false`.
    pub fn gram(&self, x: &[f64], x2: &[f64], include_noise: bool) -> Result<Matrix> {
        check_finite(x)?;
        check_finite(x2)?;
        Ok(self.gram_unchecked(x, x2, include_noise))
    }

    pub(crate) fn gram_unchecked(&self, x: &[f64], x2: &[f64], include_noise: bool) -> Matrix {
        let sv = self.signal_variance();
        let inv_l2 = 1.0 / self.lengthscale_sq();
        let noise = self.noise_variance();
        Matrix::from_fn(x.len(), x2.len(), |i, j| {
            let d = x[i] - x2[j];
            let mut v = sv * math::exp(-0.5 * d * d * inv_l2);
            if include_noise && i == j && x[i].to_bits() == x2[j].to_bits() {
                v += noise;
            }
            v
        })
    }

    /// Analytic derivatives of [`gram`](Self::gram) with respect to
    /// `(ln σ², ln l², ln σ_n²)`.
    pub fn gram_grad(&self, x: &[f64], x2: &[f64], include_noise: bool) -> Result<[Matrix; 3]> {
        check_finite(x)?;
        check_finite(x2)?;
        let sv = self.signal_variance();
        let inv_l2 = 1.0 / self.lengthscale_sq();
        let noise = self.noise_variance();
        let d_sv = Matrix::from_fn(x.len(), x2.len(), |i, j| {
            let d = x[i] - x2[j];
            sv * math::exp(-0.5 * d * d * inv_l2)
        });
        let d_ls = Matrix::from_fn(x.len(), x2.len(), |i, j| {
            let d = x[i] - x2[j];
            let r2 = 0.5 * d * d * inv_l2;
            sv * math::exp(-r2) * r2
        });
        let d_nv = Matrix::from_fn(x.len(), x2.len(), |i, j| {
            if include_noise && i == j && x[i].to_bits() == x2[j].to_bits() {
                noise
            } else {
                0.0
            }
        });
        Ok([d_sv, d_ls, d_nv])
    }
}

fn check_finite(x: &[f64]) -> Result<()> {
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(alloc::format!("kernel input {i} is not finite")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{Cholesky, JITTER};
    use alloc::vec::Vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_self_gram_at_origin() {
        let k = KernelParams::default();
        let g = k.gram(&[0.0], &[0.0], true).unwrap();
        assert!((g[(0, 0)] - 1.01).abs() < 1e-15);
        let cross = k.gram(&[0.0], &[0.0], false).unwrap();
        assert!((cross[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn decays_with_distance() {
        let k = KernelParams::default();
        let g = k.gram(&[0.0], &[1e3, 1e6], false).unwrap();
        assert!(g[(0, 0)] < 1e-300);
        assert_eq!(g[(0, 1)], 0.0);
    }

    #[test]
    fn rejects_non_finite() {
        let k = KernelParams::default();
        assert!(k.gram(&[f64::NAN], &[0.0], false).is_err());
        assert!(KernelParams::new(1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn symmetric_stationary_and_pd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let k =
                KernelParams::new(rng.random_range(0.1..3.0), rng.random_range(0.05..5.0), rng.random_range(1e-4..0.5))
                    .unwrap();
            let x: Vec<f64> = (0..20).map(|_| rng.random_range(-3.0..3.0)).collect();
            let g = k.gram(&x, &x, true).unwrap();
            assert_eq!(g, g.transpose());
            Cholesky::with_jitter(&g, JITTER).unwrap();
            let shift = rng.random_range(-10.0..10.0);
            let xs: Vec<f64> = x.iter().map(|v| v + shift).collect();
            let gs = k.gram(&xs, &xs, true).unwrap();
            assert!(g.sub(&gs).max_abs() < 1e-12);
        }
    }

    #[test]
    fn scale_derivative_is_rbf_part() {
        let k = KernelParams::new(2.0, 0.7, 0.3).unwrap();
        let x = [0.1, 0.5, 0.9];
        let grads = k.gram_grad(&x, &x, true).unwrap();
        let rbf = k.gram(&x, &x, false).unwrap();
        assert!(grads[0].sub(&rbf).max_abs() < 1e-15);
        // zero distance: lengthscale derivative vanishes
        for i in 0..3 {
            assert_eq!(grads[1][(i, i)], 0.0);
        }
    }
}

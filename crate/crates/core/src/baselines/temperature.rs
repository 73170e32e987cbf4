//! Temperature scaling: `v(z) = softargmax(z / T)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::metrics::{PredictionSet, ScoreKind};

/// Search interval for `ln T`.
pub const LOG_T_RANGE: (f64, f64) = (-5.0, 5.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureParam {
    temperature: f64,
}

impl TemperatureParam {
    pub fn new(temperature: f64) -> Result<Self> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::InvalidParameter(alloc::format!("temperature must be positive, got {temperature}")));
        }
        Ok(TemperatureParam { temperature })
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Scales every row of the row-major logits and applies softargmax.
    pub fn apply(&self, logits: &[f64], k: usize) -> Vec<f64> {
        let mut out = vec![0.0; logits.len()];
        let mut scaled = vec![0.0; k];
        for (row, o) in logits.chunks_exact(k).zip(out.chunks_exact_mut(k)) {
            for (s, z) in scaled.iter_mut().zip(row) {
                *s = z / self.temperature;
            }
            math::softmax_into(&scaled, o);
        }
        out
    }
}

/// Mean NLL of the labels at inverse temperature `beta`, with first and
/// second derivatives in `beta`.
fn nll_at(preds: &PredictionSet, beta: f64) -> (f64, f64, f64) {
    let k = preds.n_classes();
    let mut scaled = vec![0.0; k];
    let mut p = vec![0.0; k];
    let (mut f, mut d1, mut d2) = (0.0, 0.0, 0.0);
    for (row, &y) in preds.rows().zip(preds.labels()) {
        for (s, z) in scaled.iter_mut().zip(row) {
            *s = beta * z;
        }
        f += math::log_sum_exp(&scaled) - scaled[y];
        math::softmax_into(&scaled, &mut p);
        let mean: f64 = p.iter().zip(row).map(|(a, z)| a * z).sum();
        let second: f64 = p.iter().zip(row).map(|(a, z)| a * z * z).sum();
        d1 += mean - row[y];
        d2 += second - mean * mean;
    }
    let n = preds.len() as f64;
    (f / n, d1 / n, d2 / n)
}

/// Mean negative log-likelihood of the labels after scaling by `T`.
pub fn temperature_nll(preds: &PredictionSet, temperature: f64) -> f64 {
    nll_at(preds, 1.0 / temperature).0
}

/// Minimizes the NLL over `ln T ∈ [−5, 5]` by golden-section search followed
/// by Newton steps in `1/T` (where the NLL is convex). Never returns a
/// temperature worse than `T = 1`.
pub fn fit_temperature(logits: &PredictionSet) -> Result<TemperatureParam> {
    if logits.kind() != ScoreKind::Logits {
        return Err(Error::InvalidInput("temperature scaling needs logits".into()));
    }
    if logits.is_empty() {
        return Err(Error::InvalidInput("no calibration samples".into()));
    }
    let f = |t: f64| nll_at(logits, math::exp(-t)).0;
    let phi = 0.5 * (libm::sqrt(5.0) - 1.0);
    let (mut a, mut b) = LOG_T_RANGE;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-7 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    let golden = math::exp(-0.5 * (a + b));
    let golden_nll = nll_at(logits, golden).0;

    // Newton on the convex NLL in beta; stop on the step size because the
    // objective is flat to rounding near the minimum.
    let (beta_lo, beta_hi) = (math::exp(-LOG_T_RANGE.1), math::exp(-LOG_T_RANGE.0));
    let mut beta = golden;
    for _ in 0..50 {
        let (_, d1, d2) = nll_at(logits, beta);
        if !(d2 > 0.0) {
            break;
        }
        let next = (beta - d1 / d2).clamp(beta_lo, beta_hi);
        let step = (next - beta).abs();
        beta = next;
        if step <= 1e-15 * beta {
            break;
        }
    }
    let (mut beta, mut best) = match nll_at(logits, beta).0 {
        f if f <= golden_nll + 1e-12 * golden_nll.abs() => (beta, f),
        _ => (golden, golden_nll),
    };
    let at_one = nll_at(logits, 1.0).0;
    if at_one < best {
        beta = 1.0;
        best = at_one;
    }
    debug_assert!(best <= at_one);
    TemperatureParam::new(1.0 / beta)
}

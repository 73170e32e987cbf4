//! Miscalibrated classifier outputs with a known ground truth.
//!
//! True posteriors are drawn from a symmetric Dirichlet and labels from the
//! posteriors, so the undistorted outputs are calibrated by construction. A
//! distortion is then applied as the inverse of a known calibration map.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::math;
use crate::metrics::{BinStats, BinningConfig, PredictionSet, ReliabilityData, ScoreKind};

const BISECTION_TOL: f64 = 1e-12;

/// Strictly increasing piecewise-linear function, extended linearly past both
/// ends of the table.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Tabulated {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(Error::InvalidParameter("a tabulated map needs at least two (x, y) points".into()));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("tabulated map values must be finite".into()));
        }
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if !increasing(&xs) || !increasing(&ys) {
            return Err(Error::InvalidParameter("tabulated map is not strictly increasing".into()));
        }
        Ok(Tabulated { xs, ys })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn eval(&self, x: f64) -> f64 {
        interpolate(&self.xs, &self.ys, x)
    }

    pub fn inverse(&self, y: f64) -> f64 {
        interpolate(&self.ys, &self.xs, y)
    }
}

fn interpolate(from: &[f64], to: &[f64], v: f64) -> f64 {
    let last = from.len() - 1;
    // Segment index by binary search, clamped so the end segments extrapolate.
    let i = from.partition_point(|&f| f <= v).clamp(1, last);
    let (x0, x1, y0, y1) = (from[i - 1], from[i], to[i - 1], to[i]);
    y0 + (v - x0) * (y1 - y0) / (x1 - x0)
}

/// The calibration map whose inverse is applied to the true posteriors.
#[derive(Debug, Clone, PartialEq)]
pub enum Distortion {
    /// Calibrated by `softmax(z / T)` on logits, `softmax(ln s / T)` on the simplex.
    Temperature(f64),
    /// Two classes only: class 1 probability `σ(a ln s − b ln(1 − s) + c)`.
    Beta { a: f64, b: f64, c: f64 },
    /// Calibrated by `softmax(g(z_j))` with `g` applied to each score.
    Latent(Tabulated),
}

impl Distortion {
    fn validate(&self, k: usize) -> Result<()> {
        match self {
            Distortion::Temperature(t) if !(t.is_finite() && *t > 0.0) => {
                Err(Error::InvalidParameter(format!("temperature must be positive and finite (got {t})")))
            }
            Distortion::Beta { .. } if k != 2 => {
                Err(Error::InvalidParameter(format!("beta distortion needs K = 2 (got {k})")))
            }
            &Distortion::Beta { a, b, c }
                if !(a >= 0.0 && b >= 0.0 && a + b > 0.0 && a.is_finite() && b.is_finite() && c.is_finite()) =>
            {
                Err(Error::InvalidParameter(format!(
                    "beta distortion needs finite a, b >= 0 with a + b > 0 (got a = {a}, b = {b}, c = {c})"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Applies the true calibration map to one score row.
    pub fn calibrate_row(&self, scores: &[f64], kind: ScoreKind) -> Vec<f64> {
        match self {
            Distortion::Temperature(t) => {
                let z: Vec<f64> = match kind {
                    ScoreKind::Logits => scores.iter().map(|v| v / t).collect(),
                    ScoreKind::Simplex => scores.iter().map(|&v| math::ln(v) / t).collect(),
                };
                math::softmax(&z)
            }
            &Distortion::Beta { a, b, c } => {
                let t = match kind {
                    ScoreKind::Logits => scores[1] - scores[0],
                    ScoreKind::Simplex => math::ln(scores[1]) - math::ln(scores[0]),
                };
                let p1 = math::sigmoid(beta_logit(a, b, c, t));
                vec![1.0 - p1, p1]
            }
            Distortion::Latent(g) => {
                let z: Vec<f64> = scores.iter().map(|&v| g.eval(v)).collect();
                math::softmax(&z)
            }
        }
    }

    /// Calibrates a whole prediction set with the true map.
    pub fn calibrate(&self, preds: &PredictionSet) -> Result<PredictionSet> {
        let k = preds.n_classes();
        self.validate(k)?;
        let scores = preds.rows().flat_map(|row| self.calibrate_row(row, preds.kind())).collect();
        PredictionSet::new(ScoreKind::Simplex, k, scores, preds.labels().to_vec())
    }

    /// Scores whose true calibration is `p`.
    fn distort(&self, p: &[f64], kind: ScoreKind) -> Result<Vec<f64>> {
        match self {
            Distortion::Temperature(t) => {
                let z: Vec<f64> = p.iter().map(|&v| t * math::ln(v)).collect();
                Ok(match kind {
                    ScoreKind::Logits => z,
                    ScoreKind::Simplex if *t == 1.0 => p.to_vec(),
                    ScoreKind::Simplex => math::softmax(&z),
                })
            }
            &Distortion::Beta { a, b, c } => {
                let target = math::ln(p[1]) - math::ln(p[0]);
                let t = bisect(|t| beta_logit(a, b, c, t) - target);
                Ok(match kind {
                    ScoreKind::Logits => vec![0.0, t],
                    ScoreKind::Simplex => {
                        let s = math::sigmoid(t);
                        vec![1.0 - s, s]
                    }
                })
            }
            Distortion::Latent(g) => {
                let lp: Vec<f64> = p.iter().map(|&v| math::ln(v)).collect();
                match kind {
                    ScoreKind::Logits => Ok(lp.iter().map(|&v| g.inverse(v)).collect()),
                    ScoreKind::Simplex => {
                        // Softmax is shift invariant, so pick the shift that
                        // lands the preimage on the simplex.
                        let shift = bisect(|c| lp.iter().map(|&v| g.inverse(v + c)).sum::<f64>() - 1.0);
                        let s: Vec<f64> = lp.iter().map(|&v| g.inverse(v + shift)).collect();
                        if s.iter().any(|&v| !(v > 0.0)) {
                            return Err(Error::InvalidParameter(
                                "tabulated distortion has no preimage on the simplex for this posterior".into(),
                            ));
                        }
                        let total: f64 = s.iter().sum();
                        Ok(s.iter().map(|v| v / total).collect())
                    }
                }
            }
        }
    }
}

/// Beta calibration logit as a function of `t = logit(s)`.
fn beta_logit(a: f64, b: f64, c: f64, t: f64) -> f64 {
    // ln σ(t) = −softplus(−t), ln(1 − σ(t)) = −softplus(t).
    -a * math::softplus(-t) + b * math::softplus(t) + c
}

/// Root of an increasing function on the real line.
fn bisect(f: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (-1.0, 1.0);
    while f(lo) > 0.0 {
        lo *= 2.0;
    }
    while f(hi) < 0.0 {
        hi *= 2.0;
    }
    while hi - lo > BISECTION_TOL * (1.0 + lo.abs().max(hi.abs())) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    pub k: usize,
    /// Symmetric Dirichlet parameter of the true posteriors.
    pub concentration: f64,
    pub distortion: Distortion,
    pub output_kind: ScoreKind,
    pub seed: u64,
}

impl SynthConfig {
    /// Undistorted simplex outputs from the uniform Dirichlet.
    pub fn new(n: usize, k: usize, seed: u64) -> Self {
        SynthConfig {
            n,
            k,
            concentration: 1.0,
            distortion: Distortion::Temperature(1.0),
            output_kind: ScoreKind::Simplex,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.k < 2 {
            return Err(Error::InvalidParameter(format!(
                "need N >= 1 and K >= 2 (got N = {}, K = {})",
                self.n, self.k
            )));
        }
        if !(self.concentration.is_finite() && self.concentration > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "concentration must be positive and finite (got {})",
                self.concentration
            )));
        }
        self.distortion.validate(self.k)
    }
}

/// The quantities the generator knows and a classifier would not.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub n_classes: usize,
    /// Row-major N×K true posteriors.
    pub true_posteriors: Vec<f64>,
    pub distortion: Distortion,
}

impl Truth {
    pub fn row(&self, n: usize) -> &[f64] {
        &self.true_posteriors[n * self.n_classes..(n + 1) * self.n_classes]
    }
}

/// Draws a synthetic prediction set. Row `i` uses its own stream of the seed.
pub fn generate(config: &SynthConfig) -> Result<(PredictionSet, Truth)> {
    config.validate()?;
    let (n, k) = (config.n, config.k);
    let gamma = Gamma::new(config.concentration, 1.0)
        .map_err(|e| Error::InvalidParameter(format!("invalid concentration: {e}")))?;
    let mut posteriors = Vec::with_capacity(n * k);
    let mut scores = Vec::with_capacity(n * k);
    let mut labels = Vec::with_capacity(n);
    let mut draws = vec![0.0; k];
    for row in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(row as u64);
        // Small concentrations can underflow a component to zero; redraw.
        let total = loop {
            for d in draws.iter_mut() {
                *d = gamma.sample(&mut rng);
            }
            let total: f64 = draws.iter().sum();
            if draws.iter().all(|&d| d > 0.0) && total.is_finite() {
                break total;
            }
        };
        let p: Vec<f64> = draws.iter().map(|d| d / total).collect();
        let u: f64 = rng.random();
        let mut cum = 0.0;
        let mut label = k - 1;
        for (j, &pj) in p.iter().enumerate() {
            cum += pj;
            if u < cum {
                label = j;
                break;
            }
        }
        scores.extend(config.distortion.distort(&p, config.output_kind)?);
        posteriors.extend(p);
        labels.push(label);
    }
    let preds = PredictionSet::new(config.output_kind, k, scores, labels)?;
    let truth = Truth { n_classes: k, true_posteriors: posteriors, distortion: config.distortion.clone() };
    Ok((preds, truth))
}

/// Reliability data whose per-bin accuracy is the mean true probability of
/// the predicted class instead of the empirical hit rate.
pub fn oracle_reliability(truth: &Truth, preds: &PredictionSet, binning: BinningConfig) -> Result<ReliabilityData> {
    if truth.n_classes != preds.n_classes() || truth.true_posteriors.len() != preds.scores().len() {
        return Err(Error::InvalidInput("truth and predictions have different shapes".into()));
    }
    let nb = binning.num_bins;
    let mut conf = vec![0.0; nb];
    let mut acc = vec![0.0; nb];
    let mut counts = vec![0usize; nb];
    for (i, top) in preds.top_label().iter().enumerate() {
        let b = binning.bin_of(top.confidence);
        conf[b] += top.confidence;
        acc[b] += truth.row(i)[top.prediction];
        counts[b] += 1;
    }
    let bins = (0..nb)
        .map(|b| {
            if counts[b] == 0 {
                BinStats { mean_confidence: f64::NAN, accuracy: f64::NAN, count: 0 }
            } else {
                let n = counts[b] as f64;
                BinStats { mean_confidence: conf[b] / n, accuracy: acc[b] / n, count: counts[b] }
            }
        })
        .collect();
    Ok(ReliabilityData { binning, bins })
}

/// ECE_1 against the true posteriors, free of label noise.
pub fn oracle_ece(truth: &Truth, preds: &PredictionSet, binning: BinningConfig) -> Result<f64> {
    oracle_reliability(truth, preds, binning)?.ece(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn config(n: usize, k: usize, distortion: Distortion, kind: ScoreKind) -> SynthConfig {
        SynthConfig { distortion, output_kind: kind, ..SynthConfig::new(n, k, 7) }
    }

    fn latent_table() -> Tabulated {
        let xs: Vec<f64> = (0..=20).map(|i| -10.0 + i as f64).collect();
        let ys = xs.iter().map(|&x| 0.5 * x + 0.05 * x * x.abs()).collect();
        Tabulated::new(xs, ys).unwrap()
    }

    /// Log-like map on `(0, 2]` for simplex inputs.
    fn simplex_table() -> Tabulated {
        let xs: Vec<f64> = (0..=40).map(|i| 2.0 * 10f64.powf(-12.0 * (1.0 - i as f64 / 40.0))).collect();
        let ys = xs.iter().map(|&x| 1.5 * x.ln() + 0.3 * x).collect();
        Tabulated::new(xs, ys).unwrap()
    }

    #[test]
    fn tabulated_round_trip_and_extension() {
        let g = latent_table();
        for &x in &[-30.0, -10.0, -3.3, 0.0, 2.5, 10.0, 40.0] {
            assert_abs_diff_eq!(g.inverse(g.eval(x)), x, epsilon = 1e-12);
        }
        assert!(Tabulated::new(vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(Tabulated::new(vec![0.0], vec![1.0]).is_err());
    }

    #[test]
    fn same_seed_same_output() {
        let c = config(200, 4, Distortion::Temperature(2.0), ScoreKind::Logits);
        assert_eq!(generate(&c).unwrap(), generate(&c).unwrap());
        let other = SynthConfig { seed: 8, ..c.clone() };
        assert_ne!(generate(&c).unwrap().0, generate(&other).unwrap().0);
    }

    #[test]
    fn true_map_recovers_posteriors() {
        let cases = [
            config(300, 4, Distortion::Temperature(3.0), ScoreKind::Logits),
            config(300, 4, Distortion::Temperature(0.5), ScoreKind::Simplex),
            config(300, 2, Distortion::Beta { a: 2.0, b: 0.5, c: 0.3 }, ScoreKind::Simplex),
            config(300, 2, Distortion::Beta { a: 0.7, b: 1.5, c: -0.4 }, ScoreKind::Logits),
            config(300, 3, Distortion::Latent(latent_table()), ScoreKind::Logits),
            config(300, 3, Distortion::Latent(simplex_table()), ScoreKind::Simplex),
        ];
        for c in cases {
            let (preds, truth) = generate(&c).unwrap();
            let back = truth.distortion.calibrate(&preds).unwrap();
            for (a, b) in back.scores().iter().zip(&truth.true_posteriors) {
                assert!((a - b).abs() < 1e-9, "{:?}: {a} vs {b}", c.distortion);
            }
        }
    }

    #[test]
    fn simplex_rows_sum_to_one() {
        for d in [Distortion::Temperature(2.0), Distortion::Latent(simplex_table())] {
            let (preds, truth) = generate(&config(500, 5, d, ScoreKind::Simplex)).unwrap();
            for row in preds.rows().chain(truth.true_posteriors.chunks(5)) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn undistorted_oracle_is_exactly_zero() {
        let (preds, truth) = generate(&SynthConfig::new(2000, 4, 3)).unwrap();
        assert_eq!(oracle_ece(&truth, &preds, BinningConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn single_bin_oracle() {
        let c = config(1000, 3, Distortion::Temperature(2.0), ScoreKind::Simplex);
        let (preds, truth) = generate(&c).unwrap();
        let top = preds.top_label();
        let conf = top.iter().map(|t| t.confidence).sum::<f64>() / 1000.0;
        let tru = top.iter().enumerate().map(|(i, t)| truth.row(i)[t.prediction]).sum::<f64>() / 1000.0;
        let e = oracle_ece(&truth, &preds, BinningConfig::frequency(1)).unwrap();
        assert_abs_diff_eq!(e, (conf - tru).abs(), epsilon = 1e-12);
    }

    #[test]
    fn invalid_configs() {
        assert!(generate(&config(10, 3, Distortion::Beta { a: 1.0, b: 1.0, c: 0.0 }, ScoreKind::Simplex)).is_err());
        assert!(generate(&config(10, 2, Distortion::Temperature(0.0), ScoreKind::Logits)).is_err());
        assert!(generate(&SynthConfig::new(0, 2, 1)).is_err());
        assert!(generate(&SynthConfig::new(10, 1, 1)).is_err());
        assert!(generate(&SynthConfig { concentration: -1.0, ..SynthConfig::new(10, 2, 1) }).is_err());
    }

    #[test]
    fn non_invertible_latent_on_simplex() {
        // Preimages of very negative log-probabilities fall below zero.
        let g = Tabulated::new(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        let c = SynthConfig { concentration: 0.2, ..config(200, 4, Distortion::Latent(g), ScoreKind::Simplex) };
        assert!(generate(&c).is_err());
    }
}

//! Bayesian binning into quantiles.
//!
//! Several equal-frequency binnings of the scores are scored by their
//! Beta-Binomial marginal likelihood under a uniform model prior. The
//! calibrated value is the likelihood-weighted average of the per-bin
//! posterior mean accuracies.

use alloc::vec::Vec;

use super::logistic::check_lengths;
use crate::error::{Error, Result};
use crate::math;

/// Strength `α + β` of each bin's Beta prior.
pub const PRIOR_STRENGTH: f64 = 2.0;

const MID_FLOOR: f64 = 1e-6;

/// One equal-frequency binning.
#[derive(Debug, Clone, PartialEq)]
pub struct BbqBinning {
    /// Interior bin boundaries (`bins − 1` of them); a score `s` falls in bin
    /// `#{edges < s}`.
    pub edges: Vec<f64>,
    /// Posterior mean accuracy of each bin.
    pub posterior_means: Vec<f64>,
    pub log_marginal_likelihood: f64,
}

impl BbqBinning {
    pub fn num_bins(&self) -> usize {
        self.posterior_means.len()
    }

    pub fn bin_of(&self, s: f64) -> usize {
        self.edges.partition_point(|&e| e < s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BbqModel {
    pub binnings: Vec<BbqBinning>,
    /// Normalized model weights.
    pub weights: Vec<f64>,
}

impl BbqModel {
    pub fn new(binnings: Vec<BbqBinning>, weights: Vec<f64>) -> Result<Self> {
        if binnings.is_empty() || binnings.len() != weights.len() {
            return Err(Error::InvalidInput("BBQ needs one weight per binning model".into()));
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|&w| !(w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput("BBQ weights must be nonnegative and sum to 1".into()));
        }
        for b in &binnings {
            if b.edges.len() + 1 != b.posterior_means.len() || b.edges.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::InvalidInput("BBQ binning has inconsistent edges".into()));
            }
        }
        Ok(BbqModel { binnings, weights })
    }

    pub fn apply(&self, s: f64) -> f64 {
        self.binnings.iter().zip(&self.weights).map(|(b, w)| w * b.posterior_means[b.bin_of(s)]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BbqConfig {
    /// Candidate bin counts; `None` selects [`default_grid`].
    pub model_grid: Option<Vec<usize>>,
}

/// Bin counts `⌈N^{1/3}/2⌉ ..= ⌈2 N^{1/3}⌉`, capped at `N`.
pub fn default_grid(n: usize) -> Vec<usize> {
    let cube = libm::cbrt(n as f64);
    let lo = (libm::ceil(cube / 2.0) as usize).max(1);
    let hi = (libm::ceil(2.0 * cube) as usize).min(n).max(lo);
    (lo..=hi).collect()
}

/// `ln ∫ θ^k (1 − θ)^{n−k} Beta(θ; α, β) dθ`.
pub fn log_beta_binomial(successes: usize, trials: usize, alpha: f64, beta: f64) -> f64 {
    let k = successes as f64;
    let f = (trials - successes) as f64;
    ln_beta(alpha + k, beta + f) - ln_beta(alpha, beta)
}

fn ln_beta(a: f64, b: f64) -> f64 {
    math::lgamma(a) + math::lgamma(b) - math::lgamma(a + b)
}

pub fn fit_bbq(scores: &[f64], correct: &[bool], config: &BbqConfig) -> Result<BbqModel> {
    check_lengths(scores, correct)?;
    let n = scores.len();
    let grid = config.model_grid.clone().unwrap_or_else(|| default_grid(n));
    if grid.is_empty() {
        return Err(Error::InvalidParameter("BBQ model grid is empty".into()));
    }
    if grid.contains(&0) {
        return Err(Error::InvalidParameter("BBQ bin counts must be positive".into()));
    }
    let smallest = *grid.iter().min().expect("grid is nonempty");
    if n < smallest {
        return Err(Error::InvalidInput(alloc::format!("{n} samples cannot fill {smallest} bins")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
    let hits: Vec<bool> = order.iter().map(|&i| correct[i]).collect();

    let binnings: Vec<BbqBinning> = grid.iter().map(|&bins| binning(&sorted, &hits, bins.min(n))).collect();
    let max_ll = binnings.iter().map(|b| b.log_marginal_likelihood).fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = binnings.iter().map(|b| math::exp(b.log_marginal_likelihood - max_ll)).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w / total).collect();
    BbqModel::new(binnings, weights)
}

fn binning(sorted: &[f64], hits: &[bool], bins: usize) -> BbqBinning {
    let n = sorted.len();
    let edges: Vec<f64> = (1..bins)
        .map(|j| {
            let split = j * n / bins;
            0.5 * (sorted[split - 1] + sorted[split])
        })
        .collect();
    let mut posterior_means = Vec::with_capacity(bins);
    let mut log_ml = 0.0;
    let mut start = 0;
    for j in 0..bins {
        // samples s with edges[j-1] < s <= edges[j]
        let end = if j + 1 == bins { n } else { sorted.partition_point(|&s| s <= edges[j]) };
        let count = end - start;
        let successes = hits[start..end].iter().filter(|&&h| h).count();
        let lo = if j == 0 { 0.0 } else { edges[j - 1] };
        let hi = if j + 1 == bins { 1.0 } else { edges[j] };
        let mid = (0.5 * (lo + hi)).clamp(MID_FLOOR, 1.0 - MID_FLOOR);
        let alpha = PRIOR_STRENGTH * mid;
        let beta = PRIOR_STRENGTH * (1.0 - mid);
        log_ml += log_beta_binomial(successes, count, alpha, beta);
        posterior_means.push((alpha + successes as f64) / (PRIOR_STRENGTH + count as f64));
        start = end;
    }
    BbqBinning { edges, posterior_means, log_marginal_likelihood: log_ml }
}

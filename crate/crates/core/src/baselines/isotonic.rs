//! Isotonic regression by pool-adjacent-violators.

use alloc::vec::Vec;

use super::logistic::check_lengths;
use crate::error::{Error, Result};

/// Nondecreasing map given by breakpoints; linear between them and constant
/// outside.
#[derive(Debug, Clone, PartialEq)]
pub struct IsotonicMap {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl IsotonicMap {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return Err(Error::InvalidInput("isotonic map needs matching, nonempty breakpoints and values".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) || values.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::InvalidInput("isotonic map must be increasing in x and nondecreasing in y".into()));
        }
        if breakpoints.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("isotonic map must be finite".into()));
        }
        Ok(IsotonicMap { breakpoints, values })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn apply(&self, s: f64) -> f64 {
        let xs = &self.breakpoints;
        let ys = &self.values;
        if s <= xs[0] {
            return ys[0];
        }
        if s >= xs[xs.len() - 1] {
            return ys[ys.len() - 1];
        }
        let hi = xs.partition_point(|&x| x < s);
        if xs[hi] == s {
            return ys[hi];
        }
        let lo = hi - 1;
        let t = (s - xs[lo]) / (xs[hi] - xs[lo]);
        ys[lo] + t * (ys[hi] - ys[lo])
    }
}

/// Weighted pool-adjacent-violators on values already ordered by input.
/// Returns the fitted value of every position.
pub fn pava(values: &[f64], weights: &[f64]) -> Vec<f64> {
    // blocks of (weighted mean, total weight, length)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        let mut cur = (v, w, 1usize);
        while let Some(&(mean, weight, len)) = blocks.last() {
            if mean <= cur.0 {
                break;
            }
            blocks.pop();
            let total = weight + cur.1;
            cur = ((mean * weight + cur.0 * cur.1) / total, total, len + cur.2);
        }
        blocks.push(cur);
    }
    let mut out = Vec::with_capacity(values.len());
    for (mean, _, len) in blocks {
        out.extend(core::iter::repeat_n(mean, len));
    }
    out
}

/// Least-squares nondecreasing fit of the 0/1 targets against the scores.
/// Samples with equal scores share one fitted value.
pub fn fit_isotonic(scores: &[f64], correct: &[bool]) -> Result<IsotonicMap> {
    check_lengths(scores, correct)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // pool ties first
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut ws: Vec<f64> = Vec::new();
    for &i in &order {
        let t = if correct[i] { 1.0 } else { 0.0 };
        if xs.last() == Some(&scores[i]) {
            let last = ys.len() - 1;
            ys[last] = (ys[last] * ws[last] + t) / (ws[last] + 1.0);
            ws[last] += 1.0;
        } else {
            xs.push(scores[i]);
            ys.push(t);
            ws.push(1.0);
        }
    }
    let fitted = pava(&ys, &ws);
    // keep the two ends of each constant run
    let mut bx = Vec::new();
    let mut by = Vec::new();
    for i in 0..xs.len() {
        let starts = i == 0 || fitted[i] != fitted[i - 1];
        let ends = i + 1 == xs.len() || fitted[i] != fitted[i + 1];
        if starts || ends {
            bx.push(xs[i]);
            by.push(fitted[i]);
        }
    }
    IsotonicMap::new(bx, by)
}

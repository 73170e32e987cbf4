//! Calibration metrics over top-label confidences.
//!
//! Confidences are binned on the fixed uniform grid `b/B`, `b = 0..=B`. Bins
//! are right-closed, `(b/B, (b+1)/B]`, except the first which also contains 0.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Whether score rows are unnormalized logits or points on the simplex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScoreKind {
    Logits,
    Simplex,
}

impl ScoreKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreKind::Logits => "logits",
            ScoreKind::Simplex => "simplex",
        }
    }
}

/// Tolerance on simplex row sums.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// N×K classifier outputs with their true labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    kind: ScoreKind,
    n_classes: usize,
    scores: Vec<f64>,
    labels: Vec<usize>,
}

impl PredictionSet {
    /// Validates and wraps row-major `scores` (N×K) and `labels` (N).
    pub fn new(kind: ScoreKind, n_classes: usize, scores: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidInput("prediction set needs at least one sample".into()));
        }
        Self::build(kind, n_classes, scores, labels)
    }

    /// A set without samples. Only objective evaluation accepts it; metrics
    /// reject it.
    pub fn empty(kind: ScoreKind, n_classes: usize) -> Result<Self> {
        Self::build(kind, n_classes, Vec::new(), Vec::new())
    }

    fn build(kind: ScoreKind, n_classes: usize, scores: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 classes, got {n_classes}")));
        }
        if scores.len() != labels.len() * n_classes {
            return Err(Error::InvalidInput(format!(
                "{} scores do not form {} rows of {} classes",
                scores.len(),
                labels.len(),
                n_classes
            )));
        }
        for (n, row) in scores.chunks_exact(n_classes).enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("row {n} has a non-finite score")));
            }
            if kind == ScoreKind::Simplex {
                if row.iter().any(|&v| v < 0.0) {
                    return Err(Error::InvalidInput(format!("row {n} has a negative probability")));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > SIMPLEX_TOL {
                    return Err(Error::InvalidInput(format!("row {n} sums to {sum}, not 1")));
                }
            }
        }
        if let Some((n, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= n_classes) {
            return Err(Error::InvalidInput(format!("label {y} of row {n} is outside 0..{n_classes}")));
        }
        Ok(PredictionSet { kind, n_classes, scores, labels })
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.scores[n * self.n_classes..(n + 1) * self.n_classes]
    }

    pub fn rows(&self) -> core::slice::ChunksExact<'_, f64> {
        self.scores.chunks_exact(self.n_classes)
    }

    /// The same samples as simplex rows; logits go through softargmax.
    pub fn to_simplex(&self) -> PredictionSet {
        match self.kind {
            ScoreKind::Simplex => self.clone(),
            ScoreKind::Logits => {
                let mut scores = vec![0.0; self.scores.len()];
                for (out, row) in scores.chunks_exact_mut(self.n_classes).zip(self.rows()) {
                    math::softmax_into(row, out);
                }
                PredictionSet {
                    kind: ScoreKind::Simplex,
                    n_classes: self.n_classes,
                    scores,
                    labels: self.labels.clone(),
                }
            }
        }
    }

    /// Samples at the given indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> PredictionSet {
        let mut scores = Vec::with_capacity(indices.len() * self.n_classes);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            scores.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        PredictionSet { kind: self.kind, n_classes: self.n_classes, scores, labels }
    }

    /// Top-label confidence and correctness of every sample.
    pub fn top_label(&self) -> Vec<TopLabel> {
        let mut buf = vec![0.0; self.n_classes];
        self.rows()
            .zip(&self.labels)
            .map(|(row, &y)| {
                let probs: &[f64] = match self.kind {
                    ScoreKind::Simplex => row,
                    ScoreKind::Logits => {
                        math::softmax_into(row, &mut buf);
                        &buf
                    }
                };
                let pred = math::argmax(probs);
                TopLabel { prediction: pred, confidence: probs[pred], correct: pred == y }
            })
            .collect()
    }

    pub fn accuracy(&self) -> f64 {
        let top = self.top_label();
        top.iter().filter(|t| t.correct).count() as f64 / top.len() as f64
    }

    pub fn mean_confidence(&self) -> f64 {
        let top = self.top_label();
        top.iter().map(|t| t.confidence).sum::<f64>() / top.len() as f64
    }

    fn require_samples(&self) -> Result<()> {
        if self.is_empty() {
            Err(Error::InvalidInput("metric of an empty prediction set".into()))
        } else {
            Ok(())
        }
    }
}

/// Prediction ŷ, confidence ẑ and correctness of one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopLabel {
    pub prediction: usize,
    pub confidence: f64,
    pub correct: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinWeighting {
    /// `(1/B)(Σ_b |gap_b|^p)^{1/p}`, the sum running over nonempty bins.
    Uniform,
    /// `(Σ_b (N_b/N)|gap_b|^p)^{1/p}`.
    Frequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinningConfig {
    pub num_bins: usize,
    pub weighting: BinWeighting,
}

impl BinningConfig {
    pub const DEFAULT_BINS: usize = 100;

    pub fn new(num_bins: usize, weighting: BinWeighting) -> Result<Self> {
        if num_bins == 0 {
            return Err(Error::InvalidParameter("number of bins must be positive".into()));
        }
        Ok(BinningConfig { num_bins, weighting })
    }

    pub fn frequency(num_bins: usize) -> Self {
        assert!(num_bins > 0, "number of bins must be positive");
        BinningConfig { num_bins, weighting: BinWeighting::Frequency }
    }

    pub fn uniform(num_bins: usize) -> Self {
        assert!(num_bins > 0, "number of bins must be positive");
        BinningConfig { num_bins, weighting: BinWeighting::Uniform }
    }

    /// Upper edge `b/B` of the fixed grid.
    pub fn edge(&self, b: usize) -> f64 {
        b as f64 / self.num_bins as f64
    }

    /// Bin of confidence `z` under the right-closed convention.
    pub fn bin_of(&self, z: f64) -> usize {
        let nb = self.num_bins;
        let mut idx = libm::ceil(z * nb as f64) as i64 - 1;
        idx = idx.clamp(0, nb as i64 - 1);
        let mut idx = idx as usize;
        // correct for rounding in z·B against the exact edges b/B
        while idx > 0 && z <= self.edge(idx) {
            idx -= 1;
        }
        while idx + 1 < nb && z > self.edge(idx + 1) {
            idx += 1;
        }
        idx
    }
}

impl Default for BinningConfig {
    fn default() -> Self {
        BinningConfig::frequency(Self::DEFAULT_BINS)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinStats {
    /// Mean confidence, NaN when the bin is empty.
    pub mean_confidence: f64,
    /// Fraction correct, NaN when the bin is empty.
    pub accuracy: f64,
    pub count: usize,
}

impl BinStats {
    pub fn gap(&self) -> f64 {
        (self.mean_confidence - self.accuracy).abs()
    }
}

/// Per-bin statistics of a reliability diagram.
#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityData {
    pub binning: BinningConfig,
    pub bins: Vec<BinStats>,
}

impl ReliabilityData {
    /// Bins `(confidence, correct)` pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, bool)>, binning: BinningConfig) -> Self {
        let mut conf = vec![0.0; binning.num_bins];
        let mut hits = vec![0usize; binning.num_bins];
        let mut counts = vec![0usize; binning.num_bins];
        for (z, correct) in pairs {
            let b = binning.bin_of(z);
            conf[b] += z;
            hits[b] += usize::from(correct);
            counts[b] += 1;
        }
        let bins = (0..binning.num_bins)
            .map(|b| {
                if counts[b] == 0 {
                    BinStats { mean_confidence: f64::NAN, accuracy: f64::NAN, count: 0 }
                } else {
                    let n = counts[b] as f64;
                    BinStats { mean_confidence: conf[b] / n, accuracy: hits[b] as f64 / n, count: counts[b] }
                }
            })
            .collect();
        ReliabilityData { binning, bins }
    }

    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    pub fn nonempty(&self) -> impl Iterator<Item = &BinStats> {
        self.bins.iter().filter(|b| b.count > 0)
    }

    /// Binned ECE_p estimate under the configured weighting.
    pub fn ece(&self, p: f64) -> Result<f64> {
        check_p(p)?;
        let total = self.total();
        if total == 0 {
            return Err(Error::InvalidInput("no samples in reliability data".into()));
        }
        let pow = |g: f64| if p == 1.0 { g } else { math::powf(g, p) };
        let root = |s: f64| if p == 1.0 { s } else { math::powf(s, 1.0 / p) };
        let value = match self.binning.weighting {
            BinWeighting::Frequency => {
                let n = total as f64;
                root(self.nonempty().map(|b| b.count as f64 / n * pow(b.gap())).sum())
            }
            BinWeighting::Uniform => root(self.nonempty().map(|b| pow(b.gap())).sum()) / self.binning.num_bins as f64,
        };
        Ok(value)
    }

    /// Largest gap over nonempty bins.
    pub fn max_error(&self) -> f64 {
        self.nonempty().map(BinStats::gap).fold(0.0, f64::max)
    }

    /// Count-weighted merge of two diagrams on the same grid.
    pub fn merge(&self, other: &ReliabilityData) -> Result<ReliabilityData> {
        if self.binning.num_bins != other.binning.num_bins {
            return Err(Error::InvalidInput("cannot merge diagrams with different bin counts".into()));
        }
        let bins = self
            .bins
            .iter()
            .zip(&other.bins)
            .map(|(a, b)| match (a.count, b.count) {
                (0, _) => *b,
                (_, 0) => *a,
                (na, nb) => {
                    let (wa, wb) = (na as f64, nb as f64);
                    let n = wa + wb;
                    BinStats {
                        mean_confidence: (wa * a.mean_confidence + wb * b.mean_confidence) / n,
                        accuracy: (wa * a.accuracy + wb * b.accuracy) / n,
                        count: na + nb,
                    }
                }
            })
            .collect();
        Ok(ReliabilityData { binning: self.binning, bins })
    }
}

fn check_p(p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("ECE exponent must be finite and >= 1, got {p}")))
    }
}

pub fn reliability(preds: &PredictionSet, binning: BinningConfig) -> ReliabilityData {
    ReliabilityData::from_pairs(preds.top_label().into_iter().map(|t| (t.confidence, t.correct)), binning)
}

/// Binned expected calibration error ECE_p.
pub fn ece_p(preds: &PredictionSet, p: f64, binning: BinningConfig) -> Result<f64> {
    check_p(p)?;
    preds.require_samples()?;
    reliability(preds, binning).ece(p)
}

/// Maximum calibration error over nonempty bins.
pub fn ece_max(preds: &PredictionSet, binning: BinningConfig) -> Result<f64> {
    preds.require_samples()?;
    Ok(reliability(preds, binning).max_error())
}

/// Overconfidence (mean confidence on errors) and underconfidence (mean
/// `1 − confidence` on correct predictions). An empty conditioning set gives
/// NaN and clears the matching `*_defined` flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverUnder {
    pub overconfidence: f64,
    pub underconfidence: f64,
    pub over_defined: bool,
    pub under_defined: bool,
}

pub fn over_underconfidence(preds: &PredictionSet) -> Result<OverUnder> {
    preds.require_samples()?;
    Ok(over_under_from(&preds.top_label()))
}

fn over_under_from(top: &[TopLabel]) -> OverUnder {
    let (mut wrong_sum, mut wrong_n, mut right_sum, mut right_n) = (0.0, 0usize, 0.0, 0usize);
    for t in top {
        if t.correct {
            right_sum += 1.0 - t.confidence;
            right_n += 1;
        } else {
            wrong_sum += t.confidence;
            wrong_n += 1;
        }
    }
    OverUnder {
        overconfidence: if wrong_n > 0 { wrong_sum / wrong_n as f64 } else { f64::NAN },
        underconfidence: if right_n > 0 { right_sum / right_n as f64 } else { f64::NAN },
        over_defined: wrong_n > 0,
        under_defined: right_n > 0,
    }
}

/// Empirical check of `|o·P(ŷ≠y) − u·P(ŷ=y)| ≤ ECE_1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem1Check {
    pub lhs: f64,
    pub ece1: f64,
    pub holds: bool,
}

pub fn theorem1_check(preds: &PredictionSet, binning: BinningConfig) -> Result<Theorem1Check> {
    preds.require_samples()?;
    let top = preds.top_label();
    let ou = over_under_from(&top);
    if !ou.over_defined || !ou.under_defined {
        return Err(Error::Degenerate(
            "over/underconfidence bound needs both correct and incorrect predictions".into(),
        ));
    }
    let acc = top.iter().filter(|t| t.correct).count() as f64 / top.len() as f64;
    let lhs = (ou.overconfidence * (1.0 - acc) - ou.underconfidence * acc).abs();
    let freq = BinningConfig { weighting: BinWeighting::Frequency, ..binning };
    let ece1 = ReliabilityData::from_pairs(top.iter().map(|t| (t.confidence, t.correct)), freq).ece(1.0)?;
    Ok(Theorem1Check { lhs, ece1, holds: lhs <= ece1 + 1e-12 })
}

/// Mean negative log-probability of the true class, floored at 1e-12.
pub fn nll(preds: &PredictionSet) -> Result<f64> {
    preds.require_samples()?;
    let k = preds.n_classes();
    let mut buf = vec![0.0; k];
    let total: f64 = preds
        .rows()
        .zip(preds.labels())
        .map(|(row, &y)| match preds.kind() {
            ScoreKind::Simplex => -math::ln_floored(row[y]),
            ScoreKind::Logits => {
                math::softmax_into(row, &mut buf);
                -math::ln_floored(buf[y])
            }
        })
        .sum();
    Ok(total / preds.len() as f64)
}

/// Metrics bundle for one prediction set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationReport {
    pub ece_1: f64,
    pub ece_max: f64,
    pub nll: f64,
    pub accuracy: f64,
    pub overconfidence: f64,
    pub underconfidence: f64,
    pub mean_confidence: f64,
    pub binning: BinningConfig,
}

impl CalibrationReport {
    pub fn compute(preds: &PredictionSet, binning: BinningConfig) -> Result<Self> {
        preds.require_samples()?;
        let top = preds.top_label();
        let rel = ReliabilityData::from_pairs(top.iter().map(|t| (t.confidence, t.correct)), binning);
        let ou = over_under_from(&top);
        let n = top.len() as f64;
        Ok(CalibrationReport {
            ece_1: rel.ece(1.0)?,
            ece_max: rel.max_error(),
            nll: nll(preds)?,
            accuracy: top.iter().filter(|t| t.correct).count() as f64 / n,
            overconfidence: ou.overconfidence,
            underconfidence: ou.underconfidence,
            mean_confidence: top.iter().map(|t| t.confidence).sum::<f64>() / n,
            binning,
        })
    }
}

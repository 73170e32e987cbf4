//! The evaluation report JSON document.
//!
//! Undefined quantities (over/underconfidence without errors or hits, empty
//! bins) are NaN in memory and `null` on disk.

use std::path::Path;

use calibra_core::metrics::{BinStats, BinWeighting, BinningConfig, CalibrationReport, ReliabilityData, Theorem1Check};
use serde::{Deserialize, Serialize};

use crate::atomic::write_atomic;
use crate::error::{CliError, CliResult};
use crate::model_file::{from_json_bytes, to_json_bytes};

pub const REPORT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFile {
    pub report: CalibrationReport,
    /// Absent when the set has no errors or no hits.
    pub theorem1: Option<Theorem1Check>,
    pub reliability: ReliabilityData,
}

fn opt(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn unopt(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum WeightingDoc {
    Uniform,
    Frequency,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BinningDoc {
    num_bins: usize,
    weighting: WeightingDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricsDoc {
    ece_1: f64,
    ece_max: f64,
    nll: f64,
    accuracy: f64,
    overconfidence: Option<f64>,
    underconfidence: Option<f64>,
    mean_confidence: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Theorem1Doc {
    lhs: f64,
    ece1: f64,
    holds: bool,
}

/// Column arrays, one entry per bin.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReliabilityDoc {
    lower_edge: Vec<f64>,
    upper_edge: Vec<f64>,
    mean_confidence: Vec<Option<f64>>,
    accuracy: Vec<Option<f64>>,
    count: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportDoc {
    binning: BinningDoc,
    metrics: MetricsDoc,
    theorem1: Option<Theorem1Doc>,
    reliability: ReliabilityDoc,
}

fn binning_doc(b: &BinningConfig) -> BinningDoc {
    BinningDoc {
        num_bins: b.num_bins,
        weighting: match b.weighting {
            BinWeighting::Uniform => WeightingDoc::Uniform,
            BinWeighting::Frequency => WeightingDoc::Frequency,
        },
    }
}

impl ReportFile {
    fn to_doc(&self) -> ReportDoc {
        let r = &self.report;
        let rel = &self.reliability;
        let nb = rel.binning.num_bins;
        ReportDoc {
            binning: binning_doc(&r.binning),
            metrics: MetricsDoc {
                ece_1: r.ece_1,
                ece_max: r.ece_max,
                nll: r.nll,
                accuracy: r.accuracy,
                overconfidence: opt(r.overconfidence),
                underconfidence: opt(r.underconfidence),
                mean_confidence: r.mean_confidence,
            },
            theorem1: self.theorem1.map(|t| Theorem1Doc { lhs: t.lhs, ece1: t.ece1, holds: t.holds }),
            reliability: ReliabilityDoc {
                lower_edge: (0..nb).map(|b| rel.binning.edge(b)).collect(),
                upper_edge: (1..=nb).map(|b| rel.binning.edge(b)).collect(),
                mean_confidence: rel.bins.iter().map(|s| opt(s.mean_confidence)).collect(),
                accuracy: rel.bins.iter().map(|s| opt(s.accuracy)).collect(),
                count: rel.bins.iter().map(|s| s.count).collect(),
            },
        }
    }

    fn from_doc(doc: ReportDoc) -> Result<Self, String> {
        let weighting = match doc.binning.weighting {
            WeightingDoc::Uniform => BinWeighting::Uniform,
            WeightingDoc::Frequency => BinWeighting::Frequency,
        };
        let binning = BinningConfig::new(doc.binning.num_bins, weighting).map_err(|e| e.to_string())?;
        let rel = doc.reliability;
        let nb = binning.num_bins;
        if [rel.mean_confidence.len(), rel.accuracy.len(), rel.count.len(), rel.lower_edge.len()]
            .iter()
            .any(|&l| l != nb)
        {
            return Err(format!("reliability arrays must have {nb} entries"));
        }
        let bins = (0..nb)
            .map(|b| BinStats {
                mean_confidence: unopt(rel.mean_confidence[b]),
                accuracy: unopt(rel.accuracy[b]),
                count: rel.count[b],
            })
            .collect();
        let m = doc.metrics;
        Ok(ReportFile {
            report: CalibrationReport {
                ece_1: m.ece_1,
                ece_max: m.ece_max,
                nll: m.nll,
                accuracy: m.accuracy,
                overconfidence: unopt(m.overconfidence),
                underconfidence: unopt(m.underconfidence),
                mean_confidence: m.mean_confidence,
                binning,
            },
            theorem1: doc.theorem1.map(|t| Theorem1Check { lhs: t.lhs, ece1: t.ece1, holds: t.holds }),
            reliability: ReliabilityData { binning, bins },
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        to_json_bytes(REPORT_VERSION, &self.to_doc())
    }

    pub fn from_bytes(bytes: &[u8], what: &str) -> CliResult<Self> {
        let doc: ReportDoc = from_json_bytes(bytes, REPORT_VERSION, what)?;
        Self::from_doc(doc).map_err(|e| CliError::Input(format!("{what}: {e}")))
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use calibra_core::metrics::{reliability, theorem1_check};
    use calibra_core::synthetic::{generate, Distortion, SynthConfig};

    /// NaN-aware equality on every float.
    fn same(a: f64, b: f64) -> bool {
        a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan())
    }

    #[test]
    fn round_trips_losslessly() {
        let config = SynthConfig { distortion: Distortion::Temperature(0.5), ..SynthConfig::new(50, 3, 4) };
        let (preds, _) = generate(&config).unwrap();
        let binning = BinningConfig::frequency(100);
        let file = ReportFile {
            report: CalibrationReport::compute(&preds, binning).unwrap(),
            theorem1: theorem1_check(&preds, binning).ok(),
            reliability: reliability(&preds, binning),
        };
        let bytes = file.to_bytes();
        let back = ReportFile::from_bytes(&bytes, "report").unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.theorem1, file.theorem1);
        for (x, y) in back.reliability.bins.iter().zip(&file.reliability.bins) {
            assert!(same(x.mean_confidence, y.mean_confidence) && same(x.accuracy, y.accuracy));
            assert_eq!(x.count, y.count);
        }
        let (r, s) = (back.report, file.report);
        for (x, y) in [
            (r.ece_1, s.ece_1),
            (r.ece_max, s.ece_max),
            (r.nll, s.nll),
            (r.accuracy, s.accuracy),
            (r.overconfidence, s.overconfidence),
            (r.underconfidence, s.underconfidence),
            (r.mean_confidence, s.mean_confidence),
        ] {
            assert!(same(x, y), "{x} != {y}");
        }
    }

    #[test]
    fn empty_bins_are_null() {
        let text = String::from_utf8(
            ReportFile {
                report: CalibrationReport {
                    ece_1: 0.0,
                    ece_max: 0.0,
                    nll: 0.1,
                    accuracy: 1.0,
                    overconfidence: f64::NAN,
                    underconfidence: 0.1,
                    mean_confidence: 0.9,
                    binning: BinningConfig::frequency(2),
                },
                theorem1: None,
                reliability: ReliabilityData::from_pairs([(0.9, true)], BinningConfig::frequency(2)),
            }
            .to_bytes(),
        )
        .unwrap();
        assert!(text.contains("\"overconfidence\": null"), "{text}");
        assert!(text.contains("null"));
    }
}

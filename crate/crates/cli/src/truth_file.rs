//! The ground-truth sidecar written next to synthetic scores, and the
//! tabulated latent distortion file read by `synth --latent`.

use std::path::Path;

use calibra_core::synthetic::{Distortion, Tabulated, Truth};
use serde::{Deserialize, Serialize};

use crate::atomic::write_atomic;
use crate::error::{CliError, CliResult};
use crate::model_file::{from_json_bytes, to_json_bytes};

pub const TRUTH_VERSION: u64 = 1;

/// Knots of a piecewise-linear map, extended linearly past both ends.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableDoc {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum DistortionDoc {
    Temperature { temperature: f64 },
    Beta { a: f64, b: f64, c: f64 },
    Latent { xs: Vec<f64>, ys: Vec<f64> },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TruthDoc {
    n_classes: usize,
    distortion: DistortionDoc,
    /// One row of true class posteriors per sample.
    true_posteriors: Vec<Vec<f64>>,
}

fn distortion_doc(d: &Distortion) -> DistortionDoc {
    match d {
        Distortion::Temperature(t) => DistortionDoc::Temperature { temperature: *t },
        Distortion::Beta { a, b, c } => DistortionDoc::Beta { a: *a, b: *b, c: *c },
        Distortion::Latent(t) => DistortionDoc::Latent { xs: t.xs().to_vec(), ys: t.ys().to_vec() },
    }
}

fn distortion_from_doc(d: DistortionDoc) -> calibra_core::Result<Distortion> {
    Ok(match d {
        DistortionDoc::Temperature { temperature } => Distortion::Temperature(temperature),
        DistortionDoc::Beta { a, b, c } => Distortion::Beta { a, b, c },
        DistortionDoc::Latent { xs, ys } => Distortion::Latent(Tabulated::new(xs, ys)?),
    })
}

pub fn truth_to_bytes(truth: &Truth) -> Vec<u8> {
    let doc = TruthDoc {
        n_classes: truth.n_classes,
        distortion: distortion_doc(&truth.distortion),
        true_posteriors: truth.true_posteriors.chunks(truth.n_classes).map(<[f64]>::to_vec).collect(),
    };
    to_json_bytes(TRUTH_VERSION, &doc)
}

pub fn truth_from_bytes(bytes: &[u8], what: &str) -> CliResult<Truth> {
    let doc: TruthDoc = from_json_bytes(bytes, TRUTH_VERSION, what)?;
    let k = doc.n_classes;
    if doc.true_posteriors.iter().any(|r| r.len() != k) {
        return Err(CliError::Input(format!("{what}: every posterior row needs {k} entries")));
    }
    Ok(Truth {
        n_classes: k,
        true_posteriors: doc.true_posteriors.concat(),
        distortion: distortion_from_doc(doc.distortion).map_err(|e| CliError::input(what, e))?,
    })
}

pub fn save_truth(path: &Path, truth: &Truth) -> CliResult<()> {
    write_atomic(path, &truth_to_bytes(truth))
}

pub fn load_truth(path: &Path) -> CliResult<Truth> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    truth_from_bytes(&bytes, &path.display().to_string())
}

/// Reads `{"xs": [...], "ys": [...]}`.
pub fn load_table(path: &Path) -> CliResult<Tabulated> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let what = path.display().to_string();
    let doc: TableDoc = serde_json::from_slice(&bytes).map_err(|e| CliError::input(&what, e))?;
    Tabulated::new(doc.xs, doc.ys).map_err(|e| CliError::input(&what, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use calibra_core::synthetic::{generate, SynthConfig};

    #[test]
    fn truth_round_trips() {
        for distortion in [
            Distortion::Temperature(3.0),
            Distortion::Beta { a: 0.5, b: 2.0, c: 0.1 },
            Distortion::Latent(Tabulated::new(vec![-1.0, 0.0, 2.0], vec![-3.0, 0.0, 1.0]).unwrap()),
        ] {
            let config = SynthConfig { distortion, ..SynthConfig::new(20, 2, 9) };
            let config = SynthConfig { output_kind: calibra_core::ScoreKind::Logits, ..config };
            let (_, truth) = generate(&config).unwrap();
            let bytes = truth_to_bytes(&truth);
            let back = truth_from_bytes(&bytes, "truth").unwrap();
            assert_eq!(back.true_posteriors, truth.true_posteriors);
            assert_eq!(back.distortion, truth.distortion);
            assert_eq!(truth_to_bytes(&back), bytes);
        }
    }
}

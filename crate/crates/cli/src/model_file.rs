//! Versioned JSON model documents.
//!
//! Every document carries `version` and a `method` tag. Reals are written as
//! shortest round-trip decimals and parsed exactly, so save → load is
//! bit-faithful.

use std::path::Path;

use calibra_core::baselines::{
    BaselineModel, BbqBinning, BbqModel, BetaParams, BinaryCalibrator, BinaryMethod, IsotonicMap, OneVsAllModel,
    PlattParams, TemperatureParam,
};
use calibra_core::gpcalib::{CovStructure, FitDiagnostics, GpCalibrationModel, PriorMean};
use calibra_core::kernel::KernelParams;
use calibra_core::linalg::Matrix;
use calibra_core::ScoreKind;
use serde::{Deserialize, Serialize};

use crate::atomic::write_atomic;
use crate::error::{CliError, CliResult};

pub const MODEL_VERSION: u64 = 1;

/// A fitted calibrator of any method.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Gp(GpCalibrationModel),
    Baseline {
        model: BaselineModel,
        /// Kind of the scores the model was fit on. Binary methods convert
        /// logits to the simplex first; temperature scaling converts simplex
        /// rows to log-probabilities.
        input_kind: ScoreKind,
    },
}

impl Model {
    pub fn input_kind(&self) -> ScoreKind {
        match self {
            Model::Gp(m) => m.input_kind(),
            Model::Baseline { input_kind, .. } => *input_kind,
        }
    }

    pub fn method_name(&self) -> &'static str {
        match self {
            Model::Gp(_) => "gpcalib",
            Model::Baseline { model, .. } => match model {
                BaselineModel::Temperature(_) => "temperature",
                BaselineModel::Binary(c) => calibrator_method(c).map_or("identity", BinaryMethod::name),
                BaselineModel::OneVsAll(m) => m.method.name(),
            },
        }
    }
}

fn calibrator_method(c: &BinaryCalibrator) -> Option<BinaryMethod> {
    match c {
        BinaryCalibrator::Platt(_) => Some(BinaryMethod::Platt),
        BinaryCalibrator::Isotonic(_) => Some(BinaryMethod::Isotonic),
        BinaryCalibrator::Beta(_) => Some(BinaryMethod::Beta),
        BinaryCalibrator::Bbq(_) => Some(BinaryMethod::Bbq),
        BinaryCalibrator::Identity => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum KindDoc {
    Logits,
    Simplex,
}

impl From<ScoreKind> for KindDoc {
    fn from(k: ScoreKind) -> Self {
        match k {
            ScoreKind::Logits => KindDoc::Logits,
            ScoreKind::Simplex => KindDoc::Simplex,
        }
    }
}

impl From<KindDoc> for ScoreKind {
    fn from(k: KindDoc) -> Self {
        match k {
            KindDoc::Logits => ScoreKind::Logits,
            KindDoc::Simplex => ScoreKind::Simplex,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum PriorDoc {
    Log,
    Identity,
    Affine { slope: f64, intercept: f64 },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum CovDoc {
    Diagonal,
    BlockDiagonal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelDoc {
    /// ln σ²
    log_sv: f64,
    /// ln l
    log_ls: f64,
    /// ln σ_n²
    log_nv: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiagnosticsDoc {
    initial_elbo: f64,
    final_elbo: f64,
    iterations: usize,
    converged: bool,
    single_class: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GpDoc {
    input_kind: KindDoc,
    prior_mean: PriorDoc,
    #[serde(rename = "M")]
    num_inducing: usize,
    w: Vec<f64>,
    m: Vec<f64>,
    /// Row-major lower triangle of the Cholesky factor of S.
    #[serde(rename = "L_S")]
    cov_factor: Vec<f64>,
    kernel: KernelDoc,
    cov_structure: CovDoc,
    diagnostics: DiagnosticsDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BbqBinningDoc {
    edges: Vec<f64>,
    posterior_means: Vec<f64>,
    log_marginal_likelihood: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum CalibratorDoc {
    Platt { a: f64, b: f64 },
    Isotonic { breakpoints: Vec<f64>, values: Vec<f64> },
    Beta { a: f64, b: f64, c: f64 },
    Bbq { binnings: Vec<BbqBinningDoc>, weights: Vec<f64> },
    Identity,
}

/// Binary calibrators: one for class 1 when `one_vs_all` is false, one per
/// class otherwise.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BinaryDoc {
    input_kind: KindDoc,
    one_vs_all: bool,
    calibrators: Vec<CalibratorDoc>,
    degenerate: Vec<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TemperatureDoc {
    input_kind: KindDoc,
    temperature: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
enum ModelDoc {
    Gpcalib(GpDoc),
    Temperature(TemperatureDoc),
    Platt(BinaryDoc),
    Isotonic(BinaryDoc),
    Beta(BinaryDoc),
    Bbq(BinaryDoc),
}

#[derive(Serialize)]
struct Versioned<'a, T> {
    version: u64,
    #[serde(flatten)]
    body: &'a T,
}

/// Pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize>(version: u64, body: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(&Versioned { version, body }).expect("serializable document");
    out.push(b'\n');
    out
}

/// Parses a document, checking `version` before the body.
pub fn from_json_bytes<T: for<'de> Deserialize<'de>>(bytes: &[u8], expected: u64, what: &str) -> CliResult<T> {
    let mut value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| CliError::input(&format!("{what} is not valid JSON"), e))?;
    let obj = value.as_object_mut().ok_or_else(|| CliError::Input(format!("{what} must be a JSON object")))?;
    match obj.remove("version").and_then(|v| v.as_u64()) {
        Some(v) if v == expected => {}
        Some(v) => return Err(CliError::Input(format!("{what} has unsupported version {v} (expected {expected})"))),
        None => return Err(CliError::Input(format!("{what} lacks an integer 'version' field"))),
    }
    serde_json::from_value(value).map_err(|e| CliError::input(&format!("{what} does not match the schema"), e))
}

fn gp_to_doc(model: &GpCalibrationModel) -> GpDoc {
    let k = model.kernel();
    let d = &model.diagnostics;
    GpDoc {
        input_kind: model.input_kind().into(),
        prior_mean: match model.prior_mean() {
            PriorMean::Log => PriorDoc::Log,
            PriorMean::Identity => PriorDoc::Identity,
            PriorMean::Affine { slope, intercept } => PriorDoc::Affine { slope, intercept },
        },
        num_inducing: model.num_inducing(),
        w: model.inducing_inputs().to_vec(),
        m: model.variational_mean().to_vec(),
        cov_factor: packed_lower(model.cov_factor()),
        kernel: KernelDoc {
            log_sv: k.log_signal_variance,
            log_ls: 0.5 * k.log_lengthscale_sq,
            log_nv: k.log_noise_variance,
        },
        cov_structure: match model.cov_structure() {
            CovStructure::Diagonal => CovDoc::Diagonal,
            CovStructure::BlockDiagonal => CovDoc::BlockDiagonal,
        },
        diagnostics: DiagnosticsDoc {
            initial_elbo: d.initial_elbo,
            final_elbo: d.final_elbo,
            iterations: d.iterations,
            converged: d.converged,
            single_class: d.single_class,
        },
    }
}

fn packed_lower(l: &Matrix) -> Vec<f64> {
    (0..l.rows()).flat_map(|i| (0..=i).map(move |j| l[(i, j)])).collect()
}

fn gp_from_doc(doc: GpDoc) -> calibra_core::Result<GpCalibrationModel> {
    let mm = doc.num_inducing;
    let bad = |msg: &str| calibra_core::Error::InvalidInput(msg.into());
    if doc.w.len() != mm || doc.m.len() != mm || doc.cov_factor.len() != mm * (mm + 1) / 2 {
        return Err(bad("w, m and L_S lengths do not match M"));
    }
    let mut l = Matrix::zeros(mm, mm);
    let mut it = doc.cov_factor.iter();
    for i in 0..mm {
        for j in 0..=i {
            l[(i, j)] = *it.next().expect("length checked");
        }
    }
    let kernel = KernelParams::from_array([doc.kernel.log_sv, 2.0 * doc.kernel.log_ls, doc.kernel.log_nv]);
    if !kernel.is_finite() {
        return Err(bad("kernel parameters must be finite"));
    }
    let prior = match doc.prior_mean {
        PriorDoc::Log => PriorMean::Log,
        PriorDoc::Identity => PriorMean::Identity,
        PriorDoc::Affine { slope, intercept } => PriorMean::Affine { slope, intercept },
    };
    let cov = match doc.cov_structure {
        CovDoc::Diagonal => CovStructure::Diagonal,
        CovDoc::BlockDiagonal => CovStructure::BlockDiagonal,
    };
    let mut model = GpCalibrationModel::from_parts(doc.w, doc.m, l, kernel, prior, doc.input_kind.into(), cov)?;
    let d = doc.diagnostics;
    model.diagnostics = FitDiagnostics {
        initial_elbo: d.initial_elbo,
        final_elbo: d.final_elbo,
        iterations: d.iterations,
        converged: d.converged,
        single_class: d.single_class,
        elbo_trace: Vec::new(),
    };
    Ok(model)
}

fn calibrator_to_doc(c: &BinaryCalibrator) -> CalibratorDoc {
    match c {
        BinaryCalibrator::Platt(p) => CalibratorDoc::Platt { a: p.a, b: p.b },
        BinaryCalibrator::Isotonic(m) => {
            CalibratorDoc::Isotonic { breakpoints: m.breakpoints().to_vec(), values: m.values().to_vec() }
        }
        BinaryCalibrator::Beta(p) => CalibratorDoc::Beta { a: p.a, b: p.b, c: p.c },
        BinaryCalibrator::Bbq(m) => CalibratorDoc::Bbq {
            binnings: m
                .binnings
                .iter()
                .map(|b| BbqBinningDoc {
                    edges: b.edges.clone(),
                    posterior_means: b.posterior_means.clone(),
                    log_marginal_likelihood: b.log_marginal_likelihood,
                })
                .collect(),
            weights: m.weights.clone(),
        },
        BinaryCalibrator::Identity => CalibratorDoc::Identity,
    }
}

fn calibrator_from_doc(doc: CalibratorDoc, method: BinaryMethod) -> calibra_core::Result<BinaryCalibrator> {
    let c = match doc {
        CalibratorDoc::Platt { a, b } => BinaryCalibrator::Platt(PlattParams { a, b }),
        CalibratorDoc::Isotonic { breakpoints, values } => {
            BinaryCalibrator::Isotonic(IsotonicMap::new(breakpoints, values)?)
        }
        CalibratorDoc::Beta { a, b, c } => BinaryCalibrator::Beta(BetaParams::new(a, b, c)?),
        CalibratorDoc::Bbq { binnings, weights } => {
            let binnings = binnings
                .into_iter()
                .map(|b| BbqBinning {
                    edges: b.edges,
                    posterior_means: b.posterior_means,
                    log_marginal_likelihood: b.log_marginal_likelihood,
                })
                .collect();
            BinaryCalibrator::Bbq(BbqModel::new(binnings, weights)?)
        }
        CalibratorDoc::Identity => BinaryCalibrator::Identity,
    };
    match calibrator_method(&c) {
        Some(m) if m != method => Err(calibra_core::Error::InvalidInput(format!(
            "a {} calibrator inside a {} model",
            m.name(),
            method.name()
        ))),
        _ => Ok(c),
    }
}

fn to_doc(model: &Model) -> ModelDoc {
    match model {
        Model::Gp(m) => ModelDoc::Gpcalib(gp_to_doc(m)),
        Model::Baseline { model: BaselineModel::Temperature(t), input_kind } => {
            ModelDoc::Temperature(TemperatureDoc { input_kind: (*input_kind).into(), temperature: t.temperature() })
        }
        Model::Baseline { model, input_kind } => {
            let (method, doc) = match model {
                BaselineModel::Binary(c) => (
                    calibrator_method(c).expect("a fitted binary model is never the identity"),
                    BinaryDoc {
                        input_kind: (*input_kind).into(),
                        one_vs_all: false,
                        calibrators: vec![calibrator_to_doc(c)],
                        degenerate: vec![false],
                    },
                ),
                BaselineModel::OneVsAll(m) => (
                    m.method,
                    BinaryDoc {
                        input_kind: (*input_kind).into(),
                        one_vs_all: true,
                        calibrators: m.calibrators.iter().map(calibrator_to_doc).collect(),
                        degenerate: m.degenerate.clone(),
                    },
                ),
                BaselineModel::Temperature(_) => unreachable!("handled above"),
            };
            match method {
                BinaryMethod::Platt => ModelDoc::Platt(doc),
                BinaryMethod::Isotonic => ModelDoc::Isotonic(doc),
                BinaryMethod::Beta => ModelDoc::Beta(doc),
                BinaryMethod::Bbq => ModelDoc::Bbq(doc),
            }
        }
    }
}

fn from_doc(doc: ModelDoc) -> calibra_core::Result<Model> {
    let (method, doc) = match doc {
        ModelDoc::Gpcalib(g) => return Ok(Model::Gp(gp_from_doc(g)?)),
        ModelDoc::Temperature(t) => {
            return Ok(Model::Baseline {
                model: BaselineModel::Temperature(TemperatureParam::new(t.temperature)?),
                input_kind: t.input_kind.into(),
            })
        }
        ModelDoc::Platt(d) => (BinaryMethod::Platt, d),
        ModelDoc::Isotonic(d) => (BinaryMethod::Isotonic, d),
        ModelDoc::Beta(d) => (BinaryMethod::Beta, d),
        ModelDoc::Bbq(d) => (BinaryMethod::Bbq, d),
    };
    if doc.calibrators.len() != doc.degenerate.len() {
        return Err(calibra_core::Error::InvalidInput("one degenerate flag per calibrator required".into()));
    }
    let mut calibrators = doc
        .calibrators
        .into_iter()
        .map(|c| calibrator_from_doc(c, method))
        .collect::<calibra_core::Result<Vec<_>>>()?;
    let model = if doc.one_vs_all {
        if calibrators.len() < 2 {
            return Err(calibra_core::Error::InvalidInput("one-vs-all needs at least two calibrators".into()));
        }
        BaselineModel::OneVsAll(OneVsAllModel { method, calibrators, degenerate: doc.degenerate })
    } else {
        match (calibrators.pop(), calibrators.is_empty()) {
            (Some(c), true) if calibrator_method(&c).is_some() => BaselineModel::Binary(c),
            _ => {
                return Err(calibra_core::Error::InvalidInput(
                    "a binary model holds exactly one fitted calibrator".into(),
                ))
            }
        }
    };
    Ok(Model::Baseline { model, input_kind: doc.input_kind.into() })
}

pub fn model_to_bytes(model: &Model) -> Vec<u8> {
    to_json_bytes(MODEL_VERSION, &to_doc(model))
}

pub fn model_from_bytes(bytes: &[u8], what: &str) -> CliResult<Model> {
    let doc: ModelDoc = from_json_bytes(bytes, MODEL_VERSION, what)?;
    from_doc(doc).map_err(|e| CliError::input(&format!("{what} is invalid"), e))
}

pub fn save_model(path: &Path, model: &Model) -> CliResult<()> {
    write_atomic(path, &model_to_bytes(model))
}

pub fn load_model(path: &Path) -> CliResult<Model> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    model_from_bytes(&bytes, &path.display().to_string())
}

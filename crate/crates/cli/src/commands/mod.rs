//! Command implementations. Diagnostics go to standard output as one JSON
//! object; human-readable messages go to standard error.

mod apply;
mod compare;
mod evaluate;
mod fit;
mod synth;

use calibra_core::baselines::{BaselineMethod, BaselineModel, BinaryMethod};
use calibra_core::gpcalib::{self, CovStructure, FitConfig, PredictMode, PriorMean};
use calibra_core::math;
use calibra_core::metrics::{BinWeighting, BinningConfig};
use calibra_core::{PredictionSet, ScoreKind};

use crate::args::{Command, CovArg, GpArgs, Method, WeightingArg};
use crate::error::{CliError, CliResult};
use crate::model_file::Model;

pub use apply::apply;
pub use compare::compare;
pub use evaluate::{evaluate, reliability};
pub use fit::fit;
pub use synth::synth;

pub fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Fit(a) => fit(&a),
        Command::Apply(a) => apply(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Reliability(a) => reliability(&a),
        Command::Synth(a) => synth(&a),
        Command::Compare(a) => compare(&a),
    }
}

pub(crate) fn emit(value: &serde_json::Value) {
    println!("{value}");
}

pub(crate) fn binning(bins: usize, weighting: WeightingArg) -> CliResult<BinningConfig> {
    let weighting = match weighting {
        WeightingArg::Frequency => BinWeighting::Frequency,
        WeightingArg::Uniform => BinWeighting::Uniform,
    };
    BinningConfig::new(bins, weighting).map_err(|e| CliError::input("--bins", e))
}

/// `log`, `identity` or `affine:SLOPE,INTERCEPT`.
pub fn parse_prior(text: &str) -> CliResult<PriorMean> {
    let bad = || CliError::Input(format!("--prior '{text}': expected log, identity or affine:SLOPE,INTERCEPT"));
    match text {
        "log" => Ok(PriorMean::Log),
        "identity" => Ok(PriorMean::Identity),
        _ => {
            let rest = text.strip_prefix("affine:").ok_or_else(bad)?;
            let (a, b) = rest.split_once(',').ok_or_else(bad)?;
            let slope: f64 = a.trim().parse().map_err(|_| bad())?;
            let intercept: f64 = b.trim().parse().map_err(|_| bad())?;
            if !slope.is_finite() || !intercept.is_finite() {
                return Err(bad());
            }
            Ok(PriorMean::Affine { slope, intercept })
        }
    }
}

pub(crate) fn gp_config(gp: &GpArgs) -> CliResult<FitConfig> {
    if gp.num_inducing == 0 {
        return Err(CliError::Input("--M must be positive".into()));
    }
    if !(gp.tol >= 0.0) {
        return Err(CliError::Input("--tol must be nonnegative".into()));
    }
    Ok(FitConfig {
        num_inducing: gp.num_inducing,
        prior_mean: gp.prior.as_deref().map(parse_prior).transpose()?,
        cov_structure: match gp.cov {
            CovArg::Diagonal => CovStructure::Diagonal,
            CovArg::BlockDiagonal => CovStructure::BlockDiagonal,
        },
        max_iters: gp.max_iters,
        tol: gp.tol,
        ..FitConfig::default()
    })
}

/// Log-probabilities of simplex rows; softargmax maps them back exactly.
pub(crate) fn as_logits(preds: &PredictionSet) -> PredictionSet {
    match preds.kind() {
        ScoreKind::Logits => preds.clone(),
        ScoreKind::Simplex => {
            let scores = preds.scores().iter().map(|&p| math::ln_floored(p)).collect();
            PredictionSet::new(ScoreKind::Logits, preds.n_classes(), scores, preds.labels().to_vec())
                .expect("log-probabilities of a valid set are valid logits")
        }
    }
}

fn binary_method(method: Method) -> Option<BinaryMethod> {
    match method {
        Method::Platt => Some(BinaryMethod::Platt),
        Method::Isotonic => Some(BinaryMethod::Isotonic),
        Method::Beta => Some(BinaryMethod::Beta),
        Method::Bbq => Some(BinaryMethod::Bbq),
        Method::Gpcalib | Method::Temperature => None,
    }
}

pub(crate) fn method_name(method: Method) -> &'static str {
    match method {
        Method::Gpcalib => "gpcalib",
        Method::Temperature => "temperature",
        m => binary_method(m).expect("binary").name(),
    }
}

/// Fits `method`, converting the scores to the kind it needs.
pub(crate) fn fit_model(method: Method, preds: &PredictionSet, one_vs_all: bool, gp: &FitConfig) -> CliResult<Model> {
    let fail = |e| CliError::numerical(&format!("{} fit failed", method_name(method)), e);
    let input_kind = preds.kind();
    match (method, binary_method(method)) {
        (Method::Gpcalib, _) => Ok(Model::Gp(gpcalib::fit(preds, gp).map_err(fail)?)),
        (_, Some(binary)) => {
            let model =
                BaselineModel::fit(BaselineMethod::Binary(binary), &preds.to_simplex(), one_vs_all).map_err(fail)?;
            Ok(Model::Baseline { model, input_kind })
        }
        _ => {
            let model = BaselineModel::fit(BaselineMethod::Temperature, &as_logits(preds), false).map_err(fail)?;
            Ok(Model::Baseline { model, input_kind })
        }
    }
}

/// Calibrated simplex rows, plus the raw one-vs-all row sums when the model
/// renormalizes.
pub(crate) fn apply_model(
    model: &Model,
    preds: &PredictionSet,
    mode: PredictMode,
) -> CliResult<(PredictionSet, Option<Vec<f64>>)> {
    if model.input_kind() != preds.kind() {
        return Err(CliError::Numerical(format!(
            "the {} model was fit on {} scores but the input holds {}",
            model.method_name(),
            model.input_kind().as_str(),
            preds.kind().as_str()
        )));
    }
    let fail = |e| CliError::numerical(&format!("applying the {} model failed", model.method_name()), e);
    match model {
        Model::Gp(gp) => Ok((gpcalib::calibrate(gp, preds, mode).map_err(fail)?, None)),
        Model::Baseline { model: BaselineModel::OneVsAll(ova), .. } => {
            let simplex = preds.to_simplex();
            let out =
                calibra_core::baselines::apply_one_vs_all(ova, simplex.scores(), simplex.n_classes()).map_err(fail)?;
            let set = PredictionSet::new(ScoreKind::Simplex, preds.n_classes(), out.probs, preds.labels().to_vec())
                .map_err(fail)?;
            Ok((set, Some(out.raw_row_sums)))
        }
        Model::Baseline { model: m @ BaselineModel::Temperature(_), .. } => {
            Ok((m.calibrate(&as_logits(preds)).map_err(fail)?, None))
        }
        Model::Baseline { model: m, .. } => Ok((m.calibrate(&preds.to_simplex()).map_err(fail)?, None)),
    }
}

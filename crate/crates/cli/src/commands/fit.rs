use calibra_core::baselines::BaselineModel;
use calibra_core::metrics::nll;
use serde_json::json;

use super::{apply_model, binary_method, emit, fit_model, gp_config, method_name};
use crate::args::FitArgs;
use crate::error::{CliError, CliResult};
use crate::model_file::{save_model, Model};
use crate::scores::read_scores;

pub fn fit(args: &FitArgs) -> CliResult<()> {
    let preds = read_scores(&args.scores)?;
    let k = preds.n_classes();
    if binary_method(args.method).is_some() && k > 2 && !args.one_vs_all {
        return Err(CliError::Numerical(format!(
            "{} is a binary method and the data has {k} classes; pass --one-vs-all",
            method_name(args.method)
        )));
    }
    let config = gp_config(&args.gp)?;
    let model = fit_model(args.method, &preds, args.one_vs_all, &config)?;
    save_model(&args.model, &model)?;

    let diagnostics = match &model {
        Model::Gp(gp) => {
            let d = &gp.diagnostics;
            if !d.converged {
                eprintln!("warning: stopped after {} iterations without converging", d.iterations);
            }
            let kernel = gp.kernel();
            json!({
                "method": "gpcalib",
                "samples": preds.len(),
                "classes": k,
                "initial_elbo": d.initial_elbo,
                "final_elbo": d.final_elbo,
                "iterations": d.iterations,
                "converged": d.converged,
                "single_class": d.single_class,
                "kernel": {
                    "signal_variance": kernel.signal_variance(),
                    "lengthscale": kernel.lengthscale(),
                    "noise_variance": kernel.noise_variance(),
                },
            })
        }
        Model::Baseline { model: inner, .. } => {
            let (calibrated, _) = apply_model(&model, &preds, Default::default())?;
            let mut value = json!({
                "method": model.method_name(),
                "samples": preds.len(),
                "classes": k,
                "nll_before": nll(&preds).ok(),
                "nll_after": nll(&calibrated).ok(),
            });
            match inner {
                BaselineModel::Temperature(t) => value["temperature"] = json!(t.temperature()),
                BaselineModel::OneVsAll(ova) => {
                    let degenerate: Vec<usize> = (0..k).filter(|&c| ova.degenerate[c]).collect();
                    if !degenerate.is_empty() {
                        eprintln!(
                            "warning: classes {degenerate:?} have a single outcome; calibrated with the identity"
                        );
                    }
                    value["degenerate_classes"] = json!(degenerate);
                }
                BaselineModel::Binary(_) => {}
            }
            value
        }
    };
    emit(&diagnostics);
    eprintln!("saved {} model to {}", model.method_name(), args.model.display());
    Ok(())
}

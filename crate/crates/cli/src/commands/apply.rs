use calibra_core::gpcalib::PredictMode;
use serde_json::json;

use super::{apply_model, emit};
use crate::args::ApplyArgs;
use crate::error::{CliError, CliResult};
use crate::model_file::{load_model, Model};
use crate::scores::{read_scores, write_scores};

pub fn apply(args: &ApplyArgs) -> CliResult<()> {
    if args.samples == 0 {
        return Err(CliError::Input("--samples must be positive".into()));
    }
    let model = load_model(&args.model)?;
    let preds = read_scores(&args.scores)?;
    let mode = if args.mean_approx {
        PredictMode::Mean
    } else {
        PredictMode::MonteCarlo { samples: args.samples, seed: args.seed }
    };
    let (calibrated, raw_sums) = apply_model(&model, &preds, mode)?;
    write_scores(&args.out, &calibrated)?;

    let mut value = json!({
        "method": model.method_name(),
        "samples": calibrated.len(),
        "classes": calibrated.n_classes(),
    });
    if let Model::Gp(_) = model {
        value["prediction"] = match mode {
            PredictMode::Mean => json!({ "mode": "mean" }),
            PredictMode::MonteCarlo { samples, seed } => {
                json!({ "mode": "monte_carlo", "draws": samples, "seed": seed })
            }
        };
    }
    if let Some(sums) = raw_sums {
        let min = sums.iter().copied().fold(f64::INFINITY, f64::min);
        let max = sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        value["raw_row_sum"] = json!({ "min": min, "max": max });
    }
    emit(&value);
    eprintln!("wrote {} calibrated rows to {}", calibrated.len(), args.out.display());
    Ok(())
}

use calibra_core::metrics::{ece_p, reliability as reliability_data, theorem1_check, BinningConfig, CalibrationReport};
use serde_json::json;

use super::{binning, emit};
use crate::args::{EvaluateArgs, ReliabilityArgs};
use crate::atomic::write_atomic;
use crate::error::{CliError, CliResult};
use crate::report_file::ReportFile;
use crate::scores::{format_f64, read_scores};

pub fn evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let bins = binning(args.bins.bins, args.bins.weighting)?;
    if let Some(p) = args.p {
        if !(p >= 1.0) {
            return Err(CliError::Input(format!("--p must be at least 1, got {p}")));
        }
    }
    let preds = read_scores(&args.scores)?;
    let numerical = |e| CliError::numerical("evaluation failed", e);
    let report = CalibrationReport::compute(&preds, bins).map_err(numerical)?;
    let theorem1 = theorem1_check(&preds, bins).ok();
    let file = ReportFile { report, theorem1, reliability: reliability_data(&preds, bins) };
    if let Some(out) = &args.out {
        file.save(out)?;
    }

    let mut value = json!({
        "samples": preds.len(),
        "classes": preds.n_classes(),
        "bins": bins.num_bins,
        "ece_1": report.ece_1,
        "ece_max": report.ece_max,
        "nll": report.nll,
        "accuracy": report.accuracy,
        "mean_confidence": report.mean_confidence,
        "overconfidence": report.overconfidence,
        "underconfidence": report.underconfidence,
        "theorem1": theorem1.map(|t| json!({ "lhs": t.lhs, "ece1": t.ece1, "holds": t.holds })),
    });
    if let Some(p) = args.p {
        value["p"] = json!(p);
        value["ece_p"] = json!(ece_p(&preds, p, bins).map_err(numerical)?);
    }
    emit(&value);
    match theorem1 {
        Some(t) if !t.holds => eprintln!("warning: over/underconfidence bound violated ({} > {})", t.lhs, t.ece1),
        None => eprintln!("note: the over/underconfidence bound needs both correct and incorrect predictions"),
        _ => {}
    }
    Ok(())
}

/// CSV `bin,mean_conf,acc,count`; empty bins leave the two means blank.
pub fn reliability(args: &ReliabilityArgs) -> CliResult<()> {
    if args.bins == 0 {
        return Err(CliError::Input("--bins must be positive".into()));
    }
    let preds = read_scores(&args.scores)?;
    let data = reliability_data(&preds, BinningConfig::frequency(args.bins));
    let mut out = String::from("bin,mean_conf,acc,count\n");
    for (b, s) in data.bins.iter().enumerate() {
        let cell = |v: f64| if s.count == 0 { String::new() } else { format_f64(v) };
        out.push_str(&format!("{b},{},{},{}\n", cell(s.mean_confidence), cell(s.accuracy), s.count));
    }
    write_atomic(&args.out, out.as_bytes())?;
    emit(&json!({ "samples": preds.len(), "bins": args.bins, "nonempty_bins": data.nonempty().count() }));
    Ok(())
}

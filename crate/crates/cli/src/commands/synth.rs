use std::path::PathBuf;

use calibra_core::metrics::BinningConfig;
use calibra_core::synthetic::{generate, oracle_ece, Distortion, SynthConfig};
use calibra_core::ScoreKind;
use serde_json::json;

use super::emit;
use crate::args::{KindArg, SynthArgs};
use crate::error::{CliError, CliResult};
use crate::scores::write_scores;
use crate::truth_file::{load_table, save_truth};

fn parse_beta(text: &str) -> CliResult<Distortion> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Input(format!("--beta '{text}': expected three comma-separated numbers a,b,c")))?;
    match parts[..] {
        [a, b, c] => Ok(Distortion::Beta { a, b, c }),
        _ => Err(CliError::Input(format!("--beta '{text}': expected three comma-separated numbers a,b,c"))),
    }
}

pub fn synth(args: &SynthArgs) -> CliResult<()> {
    let distortion = match (&args.temperature, &args.beta, &args.latent) {
        (Some(t), _, _) => Distortion::Temperature(*t),
        (_, Some(b), _) => parse_beta(b)?,
        (_, _, Some(path)) => Distortion::Latent(load_table(path)?),
        _ => Distortion::Temperature(1.0),
    };
    let config = SynthConfig {
        n: args.n,
        k: args.k,
        concentration: args.concentration,
        distortion,
        output_kind: match args.kind {
            KindArg::Logits => ScoreKind::Logits,
            KindArg::Simplex => ScoreKind::Simplex,
        },
        seed: args.seed,
    };
    config.validate().map_err(|e| CliError::input("invalid synthetic configuration", e))?;
    let (preds, truth) = generate(&config).map_err(|e| CliError::numerical("generation failed", e))?;
    let truth_path = args.truth.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".truth.json");
        PathBuf::from(p)
    });
    write_scores(&args.out, &preds)?;
    save_truth(&truth_path, &truth)?;
    let oracle = oracle_ece(&truth, &preds, BinningConfig::default()).map_err(|e| CliError::numerical("oracle", e))?;
    emit(&json!({
        "samples": preds.len(),
        "classes": preds.n_classes(),
        "kind": preds.kind().as_str(),
        "seed": args.seed,
        "truth": truth_path.display().to_string(),
        "oracle_ece_1": oracle,
    }));
    Ok(())
}

use std::time::Instant;

use calibra_core::gpcalib::PredictMode;
use calibra_core::metrics::{BinningConfig, CalibrationReport};
use calibra_core::PredictionSet;
use clap::ValueEnum;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::{apply_model, binary_method, emit, fit_model, gp_config, method_name};
use crate::args::{CompareArgs, Method};
use crate::atomic::write_atomic;
use crate::error::{CliError, CliResult};
use crate::scores::{format_f64, read_scores};

const METRICS: [&str; 7] = ["ece_1", "mce", "nll", "accuracy", "o", "u", "fit_seconds"];

pub fn parse_methods(text: &str) -> CliResult<Vec<Method>> {
    let mut methods = Vec::new();
    for name in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let m =
            Method::from_str(name, true).map_err(|_| CliError::Input(format!("--methods: unknown method '{name}'")))?;
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    Ok(methods)
}

/// Calibration subsets: the whole split for one fold, otherwise a
/// without-replacement draw of `fraction` per fold on its own ChaCha stream.
fn fold_indices(n: usize, folds: usize, fraction: f64, seed: u64) -> Vec<Vec<usize>> {
    if folds == 1 {
        return vec![(0..n).collect()];
    }
    let size = ((fraction * n as f64).round() as usize).clamp(1, n);
    (0..folds)
        .map(|fold| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(fold as u64);
            let mut idx = rand::seq::index::sample(&mut rng, n, size).into_vec();
            idx.sort_unstable();
            idx
        })
        .collect()
}

/// One fold of one method: the seven metric values (NaN when undefined).
fn run_fold(
    method: Option<Method>,
    calib: &PredictionSet,
    test: &PredictionSet,
    args: &CompareArgs,
    bins: BinningConfig,
    seed: u64,
) -> CliResult<[f64; 7]> {
    let (evaluated, seconds) = match method {
        None => (test.to_simplex(), f64::NAN),
        Some(m) => {
            let config = gp_config(&args.gp)?;
            let start = Instant::now();
            let one_vs_all = binary_method(m).is_some() && calib.n_classes() > 2;
            let model = fit_model(m, calib, one_vs_all, &config)?;
            let seconds = start.elapsed().as_secs_f64();
            let mode = PredictMode::MonteCarlo { samples: calibra_core::gpcalib::DEFAULT_MC_SAMPLES, seed };
            (apply_model(&model, test, mode)?.0, seconds)
        }
    };
    let r = CalibrationReport::compute(&evaluated, bins).map_err(|e| CliError::numerical("evaluation failed", e))?;
    let seconds = if args.no_timing { f64::NAN } else { seconds };
    Ok([r.ece_1, r.ece_max, r.nll, r.accuracy, r.overconfidence, r.underconfidence, seconds])
}

fn cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format_f64(v)
    }
}

/// Mean and sample standard deviation, ignoring NaN (undefined) values.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let defined: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    let n = defined.len() as f64;
    if defined.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = defined.iter().sum::<f64>() / n;
    let std = if defined.len() < 2 {
        0.0
    } else {
        (defined.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (mean, std)
}

pub fn compare(args: &CompareArgs) -> CliResult<()> {
    if args.folds == 0 {
        return Err(CliError::Input("--folds must be positive".into()));
    }
    if !(args.subsample > 0.0 && args.subsample <= 1.0) {
        return Err(CliError::Input("--subsample must lie in (0, 1]".into()));
    }
    let methods = parse_methods(&args.methods)?;
    gp_config(&args.gp)?;
    let bins = BinningConfig::new(args.bins, calibra_core::metrics::BinWeighting::Frequency)
        .map_err(|e| CliError::input("--bins", e))?;
    let calib = read_scores(&args.calib)?;
    let test = read_scores(&args.test)?;
    if calib.n_classes() != test.n_classes() || calib.kind() != test.kind() {
        return Err(CliError::Input("calibration and test files differ in kind or number of classes".into()));
    }
    let folds = fold_indices(calib.len(), args.folds, args.subsample, args.seed);
    let subsets: Vec<PredictionSet> =
        if args.folds == 1 { vec![calib.clone()] } else { folds.iter().map(|idx| calib.subset(idx)).collect() };

    let mut header = vec!["method".to_string(), "status".to_string()];
    for name in METRICS {
        if args.folds == 1 {
            header.push(name.to_string());
        } else {
            header.push(format!("{name}_mean"));
            header.push(format!("{name}_std"));
        }
    }
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Input(format!("{}: {e}", args.out.display()));
    wtr.write_record(&header).map_err(io)?;

    let mut summary = Vec::new();
    for method in std::iter::once(None).chain(methods.iter().copied().map(Some)) {
        let name = method.map_or("uncalibrated", method_name);
        // The uncalibrated scores do not depend on the calibration subset.
        let used = if method.is_none() { &subsets[..1] } else { &subsets[..] };
        let runs: CliResult<Vec<[f64; 7]>> = used
            .iter()
            .enumerate()
            .map(|(fold, subset)| run_fold(method, subset, &test, args, bins, args.seed.wrapping_add(fold as u64)))
            .collect();
        let mut record = vec![name.to_string()];
        match runs {
            Ok(runs) => {
                record.push("ok".into());
                for j in 0..METRICS.len() {
                    let column: Vec<f64> = runs.iter().map(|r| r[j]).collect();
                    if args.folds == 1 {
                        record.push(cell(column[0]));
                    } else {
                        let (mean, std) = mean_std(&column);
                        record.push(cell(mean));
                        record.push(cell(std));
                    }
                }
                let ece: Vec<f64> = runs.iter().map(|r| r[0]).collect();
                summary.push(json!({ "method": name, "status": "ok", "ece_1": mean_std(&ece).0 }));
            }
            Err(e) => {
                eprintln!("{name}: {e}");
                record.push(format!("error: {e}"));
                record.resize(header.len(), String::new());
                summary.push(json!({ "method": name, "status": "error", "message": e.to_string() }));
            }
        }
        wtr.write_record(&record).map_err(io)?;
    }
    let bytes = wtr.into_inner().map_err(|e| CliError::Input(e.to_string()))?;
    write_atomic(&args.out, &bytes)?;
    emit(&json!({ "folds": args.folds, "methods": summary }));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn methods_parse() {
        assert!(parse_methods("").unwrap().is_empty());
        assert_eq!(
            parse_methods("temperature, gpcalib,temperature").unwrap(),
            vec![Method::Temperature, Method::Gpcalib]
        );
        assert!(parse_methods("platt,nope").is_err());
    }

    #[test]
    fn folds_draw_without_replacement() {
        let folds = fold_indices(100, 5, 0.8, 3);
        assert_eq!(folds.len(), 5);
        for f in &folds {
            assert_eq!(f.len(), 80);
            assert!(f.windows(2).all(|w| w[0] < w[1]));
        }
        assert_ne!(folds[0], folds[1]);
        assert_eq!(folds, fold_indices(100, 5, 0.8, 3));
        assert_eq!(fold_indices(7, 1, 0.5, 0), vec![(0..7).collect::<Vec<_>>()]);
    }

    #[test]
    fn mean_std_skips_undefined() {
        let (m, s) = mean_std(&[1.0, f64::NAN, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
        assert!(mean_std(&[f64::NAN]).0.is_nan());
    }
}

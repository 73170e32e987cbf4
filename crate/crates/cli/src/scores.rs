//! The scores CSV format.
//!
//! A header `{kind}_0,…,{kind}_{K−1},label` with `kind` either `logits` or
//! `simplex`, then one row of K reals and an integer label per sample. Reals
//! are written in shortest round-trip form.

use std::io::Read;
use std::path::Path;

use calibra_core::metrics::SIMPLEX_TOL;
use calibra_core::{PredictionSet, ScoreKind};

use crate::atomic::write_atomic;
use crate::error::{CliError, CliResult};

pub fn format_f64(v: f64) -> String {
    if v.is_finite() {
        ryu::Buffer::new().format_finite(v).to_owned()
    } else {
        v.to_string()
    }
}

pub fn read_scores(path: &Path) -> CliResult<PredictionSet> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_scores(file, &path.display().to_string())
}

/// Strict parse: rectangular rows, finite reals, labels in range and, for
/// simplex files, rows on the simplex. Errors name the offending line.
pub fn parse_scores<R: Read>(reader: R, source: &str) -> CliResult<PredictionSet> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| CliError::input(source, e))?.clone();
    let (kind, k) = parse_header(&header).map_err(|msg| CliError::Input(format!("{source}: line 1: {msg}")))?;

    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| CliError::input(source, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let fail = |msg: String| CliError::Input(format!("{source}: line {line}: {msg}"));
        if record.len() != k + 1 {
            return Err(fail(format!("expected {} fields, found {}", k + 1, record.len())));
        }
        let start = scores.len();
        for field in record.iter().take(k) {
            let v: f64 = field.parse().map_err(|_| fail(format!("'{field}' is not a number")))?;
            if !v.is_finite() {
                return Err(fail(format!("'{field}' is not finite")));
            }
            scores.push(v);
        }
        let field = &record[k];
        let y: usize = field.parse().map_err(|_| fail(format!("label '{field}' is not a nonnegative integer")))?;
        if y >= k {
            return Err(fail(format!("label {y} is out of range for {k} classes")));
        }
        labels.push(y);
        if kind == ScoreKind::Simplex {
            let row = &scores[start..];
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&v| v < 0.0) || (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(fail(format!("row is not on the simplex (sum {sum})")));
            }
        }
    }
    if labels.is_empty() {
        return Err(CliError::Input(format!("{source}: no data rows")));
    }
    PredictionSet::new(kind, k, scores, labels).map_err(|e| CliError::input(source, e))
}

fn parse_header(header: &csv::StringRecord) -> Result<(ScoreKind, usize), String> {
    let n = header.len();
    if n < 3 || &header[n - 1] != "label" {
        return Err("header must list at least two score columns followed by 'label'".into());
    }
    let k = n - 1;
    let kind = match header[0].split_once('_') {
        Some(("logits", _)) => ScoreKind::Logits,
        Some(("simplex", _)) => ScoreKind::Simplex,
        _ => return Err(format!("unknown score column '{}'; expected logits_0 or simplex_0", &header[0])),
    };
    for (j, name) in header.iter().take(k).enumerate() {
        let expected = format!("{}_{j}", kind.as_str());
        if name != expected {
            return Err(format!("column {} is '{name}', expected '{expected}'", j + 1));
        }
    }
    Ok((kind, k))
}

pub fn format_scores(preds: &PredictionSet) -> Vec<u8> {
    let k = preds.n_classes();
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (0..k).map(|j| format!("{}_{j}", preds.kind().as_str())).collect();
    header.push("label".into());
    // Writing to memory cannot fail.
    wtr.write_record(&header).expect("in-memory write");
    for (row, y) in preds.rows().zip(preds.labels()) {
        let mut rec: Vec<String> = row.iter().map(|&v| format_f64(v)).collect();
        rec.push(y.to_string());
        wtr.write_record(&rec).expect("in-memory write");
    }
    wtr.into_inner().expect("in-memory write")
}

pub fn write_scores(path: &Path, preds: &PredictionSet) -> CliResult<()> {
    write_atomic(path, &format_scores(preds))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> CliResult<PredictionSet> {
        parse_scores(text.as_bytes(), "test.csv")
    }

    #[test]
    fn round_trip_is_lossless() {
        let scores = vec![0.1, 0.2 + 0.1, 1e-300, -2.5e17, 1.0 / 3.0, f64::MIN_POSITIVE];
        let preds = PredictionSet::new(ScoreKind::Logits, 3, scores, vec![2, 0]).unwrap();
        let bytes = format_scores(&preds);
        let back = parse_scores(&bytes[..], "mem").unwrap();
        assert_eq!(back, preds);
        assert_eq!(format_scores(&back), bytes);
    }

    #[test]
    fn header_declares_kind_and_classes() {
        let p = parse("simplex_0,simplex_1,label\n0.25,0.75,1\n").unwrap();
        assert_eq!((p.kind(), p.n_classes(), p.len()), (ScoreKind::Simplex, 2, 1));
        assert!(parse("logits_0,logits_2,label\n1,2,0\n").is_err());
        assert!(parse("probs_0,probs_1,label\n1,2,0\n").is_err());
        assert!(parse("logits_0,label\n1,0\n").is_err());
    }

    #[test]
    fn errors_name_the_line() {
        let cases = [
            ("logits_0,logits_1,label\n1,2,0\n1,x,0\n", "line 3"),
            ("logits_0,logits_1,label\n1,2,0\n1,2,2\n", "line 3"),
            ("logits_0,logits_1,label\n1,2\n", "line 2"),
            ("simplex_0,simplex_1,label\n0.5,0.6,0\n", "line 2"),
            ("logits_0,logits_1,label\n1,inf,0\n", "line 2"),
            ("logits_0,logits_1,label\n1,2,-1\n", "line 2"),
        ];
        for (text, where_) in cases {
            let err = parse(text).unwrap_err();
            assert!(err.to_string().contains(where_), "{err}");
            assert_eq!(err.exit_code(), 2);
        }
        assert!(parse("logits_0,logits_1,label\n").is_err());
    }

    #[test]
    fn thousands_separators_are_rejected() {
        assert!(parse("logits_0,logits_1,label\n\"1,000\",2,0\n").is_err());
    }
}

//! CSV and JSON result files. Floats are written in Rust's shortest
//! round-trip form, so every file reads back to the same bits.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExperimentError;

/// One row of `metrics.csv`. Error metrics are empty when the run has no
/// reference solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub eps: Option<f64>,
    pub grad_eps: Option<f64>,
    pub jump_eps: Option<f64>,
    pub ou: Option<f64>,
    pub mv: f64,
    pub vp: f64,
    pub mu_max: f64,
}

fn csv_err(path: &Path, e: csv::Error) -> ExperimentError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => ExperimentError::io(path, io),
        other => ExperimentError::Config(format!("{}: {other:?}", path.display())),
    }
}

/// Write a header and numeric rows.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r.iter().map(|x| x.to_string())).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| ExperimentError::io(path, e))
}

/// Read a file written by [`write_csv`]; empty fields read as NaN.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), ExperimentError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = rec
            .iter()
            .map(|f| {
                if f.is_empty() {
                    Ok(f64::NAN)
                } else {
                    f.parse::<f64>().map_err(|e| ExperimentError::Config(format!("{}: bad number '{f}': {e}", path.display())))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// Serialize any row type with a header line.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| ExperimentError::io(path, e))
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, ExperimentError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|x| x.map_err(|e| csv_err(path, e))).collect()
}

pub fn read_metric_rows(path: &Path) -> Result<Vec<MetricRow>, ExperimentError> {
    read_rows(path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| ExperimentError::Config(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| ExperimentError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn metric_rows_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let rows = vec![
            MetricRow {
                step: 1,
                t: 0.1,
                dt: 0.1,
                eps: Some(1.0 / 3.0),
                grad_eps: None,
                jump_eps: Some(0.0),
                ou: Some(1e-300),
                mv: 2.5e-17,
                vp: 0.0,
                mu_max: 0.25,
            },
            MetricRow {
                step: 2,
                t: 0.2,
                dt: 0.1,
                eps: None,
                grad_eps: None,
                jump_eps: None,
                ou: None,
                mv: 0.0,
                vp: 1.0,
                mu_max: 0.0,
            },
        ];
        write_rows(&p, &rows).unwrap();
        assert_eq!(read_metric_rows(&p).unwrap(), rows);
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = read_csv(Path::new("/nonexistent/x.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/x.csv"));
        assert_eq!(err.exit_code(), 2);
    }

    proptest! {
        #[test]
        fn numeric_csv_round_trips(rows in prop::collection::vec(prop::collection::vec(-1e300f64..1e300, 3), 0..20)) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("x.csv");
            write_csv(&p, &["a", "b", "c"], &rows).unwrap();
            let (h, back) = read_csv(&p).unwrap();
            prop_assert_eq!(h, vec!["a", "b", "c"]);
            prop_assert_eq!(back, rows);
        }
    }
}

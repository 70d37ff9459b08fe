//! Labelled CSV datasets: a header of feature names plus one label column.

use std::path::Path;

use hhsae_core::data::{Dataset, FeatureKind};
use hhsae_core::Matrix;

use crate::error::{CliError, Result};

/// Reads a dataset; every non-label column must be numeric. Columns whose
/// values are all 0 or 1 are treated as flags.
pub fn read_dataset(path: &Path, label_column: &str) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| CliError::format("csv", path, format!("no label column `{label_column}`")))?;
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(_, h)| h.to_string())
        .collect();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        for (i, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                CliError::format("csv", path, format!("row {}: `{field}` is not a number", line + 1))
            })?;
            if i == label_idx {
                if v != 0.0 && v != 1.0 {
                    return Err(CliError::format("csv", path, format!("row {}: label must be 0 or 1", line + 1)));
                }
                labels.push(v as u8);
            } else {
                values.push(v);
            }
        }
    }
    let x = Matrix::from_vec(labels.len(), names.len(), values)?;
    let kinds = (0..names.len())
        .map(|j| {
            let col = x.col(j);
            if !col.is_empty() && col.iter().all(|&v| v == 0.0 || v == 1.0) {
                FeatureKind::Flag
            } else {
                FeatureKind::Continuous
            }
        })
        .collect();
    Ok(Dataset::new(x, labels, names, kinds)?)
}

/// Writes features with shortest round-trip formatting, label last.
pub fn write_dataset(path: &Path, data: &Dataset, label_column: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header: Vec<&str> = data.feature_names.iter().map(String::as_str).collect();
    header.push(label_column);
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    let mut record = Vec::with_capacity(header.len());
    for (row, &y) in data.x.iter_rows().zip(&data.y) {
        record.clear();
        record.extend(row.iter().map(|v| v.to_string()));
        record.push(y.to_string());
        w.write_record(&record).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::io(path, io),
            _ => unreachable!(),
        },
        _ => CliError::format("csv", path, e.to_string()),
    }
}

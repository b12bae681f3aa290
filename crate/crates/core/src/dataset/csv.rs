use std::path::Path;

use super::{read_file, Dataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Loads a comma-separated numeric matrix. With `has_labels_column` the last
/// column holds non-negative integer labels.
pub fn load_csv(path: &Path, has_labels_column: bool) -> Result<Dataset> {
    let bytes = read_file(path)?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| Error::Format(format!("{}: not UTF-8: {e}", path.display())))?;
    parse_csv(text, has_labels_column)
}

pub fn parse_csv(text: &str, has_labels_column: bool) -> Result<Dataset> {
    let mut width = None;
    let mut data = Vec::new();
    let mut labels = has_labels_column.then(Vec::new);
    let mut rows = 0;

    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let row = i + 1;
        let fields: Vec<&str> = line.split(',').collect();
        let expected = *width.get_or_insert(fields.len());
        if fields.len() != expected {
            return Err(Error::RaggedRow {
                row,
                expected,
                found: fields.len(),
            });
        }
        let n_features = if has_labels_column {
            expected.checked_sub(1).filter(|&n| n > 0).ok_or_else(|| {
                Error::Format("label column present but no feature columns".into())
            })?
        } else {
            expected
        };
        for (j, field) in fields.iter().enumerate() {
            let field = field.trim();
            let parse_err = || Error::Parse {
                row,
                column: j + 1,
                value: field.to_string(),
            };
            if j == n_features {
                let label = parse_label(field).ok_or_else(parse_err)?;
                labels.as_mut().expect("label column").push(label);
            } else {
                data.push(field.parse::<f64>().map_err(|_| parse_err())?);
            }
        }
        rows += 1;
    }

    let Some(width) = width else {
        return Err(Error::EmptyInput);
    };
    let cols = if has_labels_column { width - 1 } else { width };
    Dataset::new(Matrix::new(rows, cols, data)?, labels)
}

/// Accepts `3` as well as `3.0`, since label columns often come out of
/// numeric exporters as floats.
fn parse_label(field: &str) -> Option<usize> {
    if let Ok(v) = field.parse::<usize>() {
        return Some(v);
    }
    let v = field.parse::<f64>().ok()?;
    (v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64).then_some(v as usize)
}

/// Reads a label list: either an IDX1 label file (detected by its magic) or
/// text with one integer per line or comma-separated.
pub fn load_label_file(path: &Path) -> Result<Vec<usize>> {
    let bytes = read_file(path)?;
    if bytes.len() >= 4 && bytes[..4] == super::idx::LABEL_MAGIC.to_be_bytes() {
        return super::idx::parse_idx_labels(&bytes);
    }
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| Error::Format(format!("{}: not UTF-8: {e}", path.display())))?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        for (j, field) in line.split(',').map(str::trim).enumerate() {
            if field.is_empty() {
                continue;
            }
            labels.push(parse_label(field).ok_or_else(|| Error::Parse {
                row: i + 1,
                column: j + 1,
                value: field.to_string(),
            })?);
        }
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(labels)
}

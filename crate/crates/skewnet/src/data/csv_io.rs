//! CSV ingestion and persistence. One flow record per line, numeric feature
//! columns, one label column. Malformed rows are rejected row-by-row and
//! reported, never fatal.

use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Declares how a CSV maps onto a dataset: the label column, which feature
/// columns to keep (default: everything else), columns to drop during
/// `clean`, and an optional pinned class order.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSchema {
    pub label: String,
    /// Explicit feature columns; `None` takes every non-label column.
    pub features: Option<Vec<String>>,
    /// Columns removed by `clean`.
    pub drop: Vec<String>,
    /// Pinned class registry; otherwise first-seen order.
    pub class_order: Option<Vec<String>>,
}

impl DatasetSchema {
    pub fn new(label: &str) -> Self {
        Self {
            label: label.to_string(),
            features: None,
            drop: Vec::new(),
            class_order: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RowReject {
    /// 1-based data line (excluding the header).
    pub line: usize,
    pub reason: String,
}

#[derive(Debug)]
pub struct LoadOutcome {
    pub dataset: Dataset,
    pub rejects: Vec<RowReject>,
}

impl LoadOutcome {
    /// Plain-text reject log, one line per rejected row.
    pub fn reject_log(&self) -> String {
        let mut out = String::new();
        for r in &self.rejects {
            out.push_str(&format!("line {}: {}\n", r.line, r.reason));
        }
        out
    }
}

pub fn load_csv(path: &Path, schema: &DatasetSchema) -> Result<LoadOutcome> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?
        .iter()
        .map(|s| s.to_string())
        .collect();

    let label_col = header
        .iter()
        .position(|h| *h == schema.label)
        .ok_or_else(|| Error::Schema(format!("header missing label column '{}'", schema.label)))?;

    let feature_names: Vec<String> = match &schema.features {
        Some(names) => {
            for name in names {
                if !header.contains(name) {
                    return Err(Error::Schema(format!("header missing column '{name}'")));
                }
            }
            names.clone()
        }
        None => header
            .iter()
            .filter(|h| **h != schema.label)
            .cloned()
            .collect(),
    };
    let feature_cols: Vec<usize> = feature_names
        .iter()
        .map(|name| header.iter().position(|h| h == name).unwrap())
        .collect();

    let mut classes: Vec<String> = schema.class_order.clone().unwrap_or_default();
    let pinned = schema.class_order.is_some();
    let mut data: Vec<f64> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut rejects: Vec<RowReject> = Vec::new();

    for (idx, record) in reader.records().enumerate() {
        let line = idx + 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                rejects.push(RowReject {
                    line,
                    reason: format!("unreadable record: {e}"),
                });
                continue;
            }
        };
        let mut row = Vec::with_capacity(feature_cols.len());
        let mut bad: Option<String> = None;
        for (&col, name) in feature_cols.iter().zip(&feature_names) {
            match record.get(col).map(str::trim) {
                Some(cell) => match cell.parse::<f64>() {
                    Ok(v) => row.push(v),
                    Err(_) => {
                        bad = Some(format!("column '{name}': unparseable value '{cell}'"));
                        break;
                    }
                },
                None => {
                    bad = Some(format!("column '{name}': missing cell"));
                    break;
                }
            }
        }
        if bad.is_none() && record.get(label_col).is_none() {
            bad = Some("missing label cell".into());
        }
        if let Some(reason) = bad {
            rejects.push(RowReject { line, reason });
            continue;
        }
        let label_name = record.get(label_col).unwrap().trim().to_string();
        let label = match classes.iter().position(|c| *c == label_name) {
            Some(i) => i,
            None if pinned => {
                rejects.push(RowReject {
                    line,
                    reason: format!("label '{label_name}' not in pinned class order"),
                });
                continue;
            }
            None => {
                classes.push(label_name);
                classes.len() - 1
            }
        };
        data.extend_from_slice(&row);
        labels.push(label);
    }

    let n = labels.len();
    let d = feature_names.len();
    let dataset = Dataset::new(
        Tensor {
            shape: vec![n, d],
            data,
        },
        labels,
        classes,
        feature_names,
    )?;
    Ok(LoadOutcome { dataset, rejects })
}

/// Writes the same dialect `load_csv` reads: header row of feature names
/// plus the label column, rows with full-precision floats and class names.
pub fn save_csv(path: &Path, dataset: &Dataset, label_column: &str) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut header: Vec<String> = dataset.feature_names.clone();
    header.push(label_column.to_string());
    writer
        .write_record(&header)
        .map_err(|e| Error::Data(e.to_string()))?;
    for i in 0..dataset.n_rows() {
        let mut record: Vec<String> = dataset.row(i).iter().map(|v| format!("{v}")).collect();
        record.push(dataset.classes[dataset.labels[i]].clone());
        writer
            .write_record(&record)
            .map_err(|e| Error::Data(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

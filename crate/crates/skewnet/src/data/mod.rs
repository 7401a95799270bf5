//! Flow-record datasets and the preprocessing pipeline: CSV ingestion,
//! cleaning, per-class subsampling, min-max scaling, stratified splitting,
//! and synthetic benchmark generation.

pub mod csv_io;
pub mod scaler;
pub mod split;
pub mod synth;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use csv_io::{load_csv, save_csv, DatasetSchema, LoadOutcome, RowReject};
pub use scaler::Scaler;
pub use split::{sample_per_class, stratified_split};
pub use synth::{generate_synthetic_benchmark, SynthClass, SynthCluster, SynthSpec};

/// The unit flowing through every pipeline stage: a feature matrix, integer
/// labels, and the class-name registry those labels index.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `[N x d]` feature matrix.
    pub features: Tensor,
    /// One class index per row.
    pub labels: Vec<usize>,
    /// Class registry; labels index into it.
    pub classes: Vec<String>,
    /// Feature column names, length d.
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: Tensor,
        labels: Vec<usize>,
        classes: Vec<String>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if features.rank() != 2 {
            return Err(Error::Dimension(format!(
                "dataset features must be [N x d], got {:?}",
                features.shape
            )));
        }
        if labels.len() != features.rows() {
            return Err(Error::Data(format!(
                "{} labels for {} rows",
                labels.len(),
                features.rows()
            )));
        }
        if feature_names.len() != features.cols() {
            return Err(Error::Data(format!(
                "{} feature names for width {}",
                feature_names.len(),
                features.cols()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes.len()) {
            return Err(Error::Index(format!(
                "label {bad} outside registry of {} classes",
                classes.len()
            )));
        }
        Ok(Self {
            features,
            labels,
            classes,
            feature_names,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn width(&self) -> usize {
        self.features.cols()
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    /// Rows per class, indexed by class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.classes.len()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    /// New dataset holding the given rows, same registry.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let d = self.width();
        let mut data = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            features: Tensor {
                shape: vec![indices.len(), d],
                data,
            },
            labels,
            classes: self.classes.clone(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Appends rows labeled with one class; widths must match.
    pub fn append_rows(&mut self, rows: &Tensor, class: usize) -> Result<()> {
        if rows.rank() != 2 || rows.cols() != self.width() {
            return Err(Error::Dimension(format!(
                "append: rows {:?} vs width {}",
                rows.shape,
                self.width()
            )));
        }
        if class >= self.classes.len() {
            return Err(Error::Index(format!("append: class {class} unknown")));
        }
        self.features.data.extend_from_slice(&rows.data);
        self.features.shape[0] += rows.rows();
        self.labels.extend(std::iter::repeat(class).take(rows.rows()));
        Ok(())
    }

    /// Canonical row order: by label, then lexicographically by feature
    /// values, then by position. Sampling operations shuffle from this
    /// order, which makes their output independent of input row order.
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut indices: Vec<usize> = (0..self.n_rows()).collect();
        indices.sort_by(|&a, &b| {
            self.labels[a]
                .cmp(&self.labels[b])
                .then_with(|| {
                    for (x, y) in self.row(a).iter().zip(self.row(b)) {
                        match x.partial_cmp(y) {
                            Some(std::cmp::Ordering::Equal) | None => continue,
                            Some(order) => return order,
                        }
                    }
                    std::cmp::Ordering::Equal
                })
                .then(a.cmp(&b))
        });
        indices
    }

    /// Re-expresses labels against another registry, matching by name.
    pub fn relabel_to(&self, classes: &[String]) -> Result<Dataset> {
        let mapping: Vec<usize> = self
            .classes
            .iter()
            .map(|name| {
                classes
                    .iter()
                    .position(|c| c == name)
                    .ok_or_else(|| Error::Data(format!("class '{name}' missing from registry")))
            })
            .collect::<Result<_>>()?;
        Ok(Dataset {
            features: self.features.clone(),
            labels: self.labels.iter().map(|&l| mapping[l]).collect(),
            classes: classes.to_vec(),
            feature_names: self.feature_names.clone(),
        })
    }

    /// Content hash of one row (features + class name), for hygiene checks.
    pub fn row_hash(&self, i: usize) -> [u8; 32] {
        let mut h = Sha256::new();
        for v in self.row(i) {
            h.update(v.to_le_bytes());
        }
        h.update(self.classes[self.labels[i]].as_bytes());
        h.finalize().into()
    }

    pub fn row_hashes(&self) -> Vec<[u8; 32]> {
        (0..self.n_rows()).map(|i| self.row_hash(i)).collect()
    }

    /// All values finite?
    pub fn is_finite(&self) -> bool {
        self.features.is_finite()
    }
}

/// Removes rows containing non-finite values and drops the schema's
/// drop-listed columns. Idempotent.
pub fn clean(dataset: &Dataset, schema: &DatasetSchema) -> Dataset {
    let keep_cols: Vec<usize> = dataset
        .feature_names
        .iter()
        .enumerate()
        .filter(|(_, name)| !schema.drop.contains(name))
        .map(|(i, _)| i)
        .collect();
    let d = keep_cols.len();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for i in 0..dataset.n_rows() {
        let row = dataset.row(i);
        let kept: Vec<f64> = keep_cols.iter().map(|&c| row[c]).collect();
        if kept.iter().all(|v| v.is_finite()) {
            data.extend_from_slice(&kept);
            labels.push(dataset.labels[i]);
        }
    }
    Dataset {
        features: Tensor {
            shape: vec![labels.len(), d],
            data,
        },
        labels,
        classes: dataset.classes.clone(),
        feature_names: keep_cols
            .iter()
            .map(|&c| dataset.feature_names[c].clone())
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        Dataset::new(
            Tensor::new(
                vec![4, 2],
                vec![1.0, 2.0, f64::INFINITY, 3.0, 4.0, 5.0, 6.0, f64::NAN],
            )
            .unwrap(),
            vec![0, 0, 1, 1],
            vec!["a".into(), "b".into()],
            vec!["x".into(), "y".into()],
        )
        .unwrap()
    }

    #[test]
    fn clean_removes_non_finite_rows() {
        let ds = toy();
        let schema = DatasetSchema::new("label");
        let cleaned = clean(&ds, &schema);
        assert_eq!(cleaned.n_rows(), 2);
        assert!(cleaned.is_finite());
        assert_eq!(cleaned.labels, vec![0, 1]);
    }

    #[test]
    fn clean_is_idempotent() {
        let ds = toy();
        let schema = DatasetSchema::new("label");
        let once = clean(&ds, &schema);
        let twice = clean(&once, &schema);
        assert_eq!(once, twice);
    }

    #[test]
    fn clean_drops_listed_columns() {
        let ds = toy();
        let mut schema = DatasetSchema::new("label");
        schema.drop = vec!["x".into()];
        let cleaned = clean(&ds, &schema);
        assert_eq!(cleaned.feature_names, vec!["y".to_string()]);
        assert_eq!(cleaned.width(), 1);
        // Row with NaN in y is still removed; inf in x is gone with the column.
        assert_eq!(cleaned.n_rows(), 3);
    }

    #[test]
    fn canonical_order_ignores_input_permutation() {
        let ds = Dataset::new(
            Tensor::new(vec![3, 1], vec![3.0, 1.0, 2.0]).unwrap(),
            vec![0, 0, 0],
            vec!["a".into()],
            vec!["x".into()],
        )
        .unwrap();
        let permuted = ds.subset(&[2, 0, 1]);
        let a: Vec<f64> = ds
            .canonical_order()
            .iter()
            .map(|&i| ds.row(i)[0])
            .collect();
        let b: Vec<f64> = permuted
            .canonical_order()
            .iter()
            .map(|&i| permuted.row(i)[0])
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn relabel_maps_by_name() {
        let ds = toy();
        let relabeled = ds
            .relabel_to(&["b".to_string(), "a".to_string()])
            .unwrap();
        assert_eq!(relabeled.labels, vec![1, 1, 0, 0]);
        assert!(ds.relabel_to(&["a".to_string()]).is_err());
    }

    #[test]
    fn out_of_registry_label_is_rejected() {
        let bad = Dataset::new(
            Tensor::new(vec![1, 1], vec![0.0]).unwrap(),
            vec![5],
            vec!["a".into()],
            vec!["x".into()],
        );
        assert!(matches!(bad, Err(Error::Index(_))));
    }
}

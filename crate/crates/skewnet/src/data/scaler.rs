//! Min-max feature scaling, fitted on training data only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-feature min/max observed on the fitting set. Applying maps each
/// feature to `(x - min) / (max - min)`; constant columns map to 0 and
/// out-of-range values land outside [0, 1] without clipping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl Scaler {
    pub fn fit(features: &Tensor) -> Result<Self> {
        if features.rank() != 2 || features.rows() == 0 {
            return Err(Error::Dimension(format!(
                "scaler: need a nonempty [N x d] matrix, got {:?}",
                features.shape
            )));
        }
        let d = features.cols();
        let mut mins = vec![f64::INFINITY; d];
        let mut maxs = vec![f64::NEG_INFINITY; d];
        for i in 0..features.rows() {
            for (j, &v) in features.row(i).iter().enumerate() {
                if v < mins[j] {
                    mins[j] = v;
                }
                if v > maxs[j] {
                    maxs[j] = v;
                }
            }
        }
        Ok(Self { mins, maxs })
    }

    pub fn apply(&self, features: &Tensor) -> Result<Tensor> {
        if features.rank() != 2 || features.cols() != self.mins.len() {
            return Err(Error::Dimension(format!(
                "scaler: input {:?} vs {} fitted features",
                features.shape,
                self.mins.len()
            )));
        }
        let d = self.mins.len();
        let mut out = features.clone();
        for i in 0..out.rows() {
            for j in 0..d {
                let range = self.maxs[j] - self.mins[j];
                let v = &mut out.data[i * d + j];
                *v = if range == 0.0 {
                    0.0
                } else {
                    (*v - self.mins[j]) / range
                };
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Data(format!("scaler serialize: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("scaler parse: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fitted_set_lands_in_unit_interval() {
        let x = Tensor::new(vec![3, 2], vec![1.0, 10.0, 5.0, 20.0, 3.0, 15.0]).unwrap();
        let scaler = Scaler::fit(&x).unwrap();
        let y = scaler.apply(&x).unwrap();
        assert!(y.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
        // Extremes map exactly to 0 and 1.
        assert_eq!(y.data[0], 0.0);
        assert_eq!(y.data[2], 1.0);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let x = Tensor::new(vec![2, 2], vec![7.0, 1.0, 7.0, 2.0]).unwrap();
        let scaler = Scaler::fit(&x).unwrap();
        let y = scaler.apply(&x).unwrap();
        assert_eq!(y.data[0], 0.0);
        assert_eq!(y.data[2], 0.0);
    }

    #[test]
    fn out_of_range_values_extrapolate_without_clipping() {
        // Fit on [0, max]; a test value at 2 * max maps to 2.0.
        let x = Tensor::new(vec![2, 1], vec![0.0, 4.0]).unwrap();
        let scaler = Scaler::fit(&x).unwrap();
        let t = Tensor::new(vec![1, 1], vec![8.0]).unwrap();
        assert_eq!(scaler.apply(&t).unwrap().data[0], 2.0);
    }

    #[test]
    fn save_load_round_trip() {
        let x = Tensor::new(vec![2, 2], vec![0.0, -1.0, 2.0, 5.0]).unwrap();
        let scaler = Scaler::fit(&x).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scaler.json");
        scaler.save(&path).unwrap();
        assert_eq!(Scaler::load(&path).unwrap(), scaler);
    }
}

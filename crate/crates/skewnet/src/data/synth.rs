//! Synthetic imbalanced benchmarks: per-class Gaussian clusters with exact
//! counts, deterministic under seed. Desk-scale stand-ins for the real
//! multi-million-row traffic datasets.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCluster {
    /// Cluster center, length = spec dim.
    pub center: Vec<f64>,
    /// Isotropic standard deviation.
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthClass {
    pub name: String,
    pub count: usize,
    pub clusters: Vec<SynthCluster>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub dim: usize,
    /// Multiplies every cluster center; 0 collapses all classes onto one
    /// distribution.
    pub separability: f64,
    pub seed: u64,
    pub classes: Vec<SynthClass>,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::Config(
                "synthetic benchmark needs at least 2 classes".into(),
            ));
        }
        if self.dim == 0 {
            return Err(Error::Config("synthetic benchmark needs dim >= 1".into()));
        }
        for class in &self.classes {
            if class.count == 0 {
                return Err(Error::Config(format!(
                    "class '{}' has zero requested rows",
                    class.name
                )));
            }
            if class.clusters.is_empty() {
                return Err(Error::Config(format!(
                    "class '{}' has no clusters",
                    class.name
                )));
            }
            for cluster in &class.clusters {
                if cluster.center.len() != self.dim {
                    return Err(Error::Config(format!(
                        "class '{}': center length {} vs dim {}",
                        class.name,
                        cluster.center.len(),
                        self.dim
                    )));
                }
                if !(cluster.spread.is_finite() && cluster.spread >= 0.0) {
                    return Err(Error::Config(format!(
                        "class '{}': bad spread {}",
                        class.name, cluster.spread
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Draws exactly the requested counts. Cluster shares within a class are as
/// even as integer division allows, earlier clusters taking the remainder.
pub fn generate_synthetic_benchmark(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let root = RngStream::new(spec.seed);
    let d = spec.dim;
    let mut data: Vec<f64> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for (class_idx, class) in spec.classes.iter().enumerate() {
        let mut rng = root.fork(&format!("synth/{}", class.name));
        let k = class.clusters.len();
        for (cluster_idx, cluster) in class.clusters.iter().enumerate() {
            let share = class.count / k + usize::from(cluster_idx < class.count % k);
            for _ in 0..share {
                for j in 0..d {
                    let center = spec.separability * cluster.center[j];
                    data.push(center + cluster.spread * rng.normal());
                }
                labels.push(class_idx);
            }
        }
    }
    let n = labels.len();
    Dataset::new(
        Tensor {
            shape: vec![n, d],
            data,
        },
        labels,
        spec.classes.iter().map(|c| c.name.clone()).collect(),
        (0..d).map(|j| format!("f{j}")).collect(),
    )
}

/// Desk-scale benchmark echoing the Bot-IoT skew: two large flood classes,
/// one mid-sized scan class, and two tiny classes at 0.1% and 0.05% that sit
/// close to the large clusters. 60,000 rows total.
pub fn botiot_mini(seed: u64) -> SynthSpec {
    let dim = 10;
    let z = vec![0.0; dim];
    let center = |entries: &[(usize, f64)]| {
        let mut c = z.clone();
        for &(i, v) in entries {
            c[i] = v;
        }
        c
    };
    SynthSpec {
        dim,
        separability: 1.0,
        seed,
        classes: vec![
            SynthClass {
                name: "c0".into(),
                count: 31_950,
                clusters: vec![
                    SynthCluster {
                        center: center(&[(0, 0.0), (1, 0.0)]),
                        spread: 1.0,
                    },
                    SynthCluster {
                        center: center(&[(0, 1.5), (1, 0.8)]),
                        spread: 1.0,
                    },
                ],
            },
            SynthClass {
                name: "c1".into(),
                count: 27_360,
                clusters: vec![
                    SynthCluster {
                        center: center(&[(0, 7.0), (1, 7.0)]),
                        spread: 1.0,
                    },
                    SynthCluster {
                        center: center(&[(0, 8.0), (1, 6.0), (2, 0.8)]),
                        spread: 1.0,
                    },
                ],
            },
            SynthClass {
                name: "c2".into(),
                count: 600,
                clusters: vec![SynthCluster {
                    center: center(&[(2, 7.0), (3, 7.0)]),
                    spread: 0.9,
                }],
            },
            SynthClass {
                name: "c3".into(),
                count: 60,
                clusters: vec![SynthCluster {
                    center: center(&[(0, 2.2), (1, 2.2), (4, 3.4)]),
                    spread: 0.45,
                }],
            },
            SynthClass {
                name: "c4".into(),
                count: 30,
                clusters: vec![SynthCluster {
                    center: center(&[(0, 7.5), (1, 7.5), (5, 3.4)]),
                    spread: 0.45,
                }],
            },
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(separability: f64) -> SynthSpec {
        SynthSpec {
            dim: 3,
            separability,
            seed: 5,
            classes: vec![
                SynthClass {
                    name: "a".into(),
                    count: 1000,
                    clusters: vec![SynthCluster {
                        center: vec![0.0, 0.0, 0.0],
                        spread: 1.0,
                    }],
                },
                SynthClass {
                    name: "b".into(),
                    count: 10,
                    clusters: vec![SynthCluster {
                        center: vec![4.0, 4.0, 0.0],
                        spread: 1.0,
                    }],
                },
            ],
        }
    }

    #[test]
    fn exact_counts_are_honored() {
        let ds = generate_synthetic_benchmark(&small_spec(1.0)).unwrap();
        assert_eq!(ds.class_counts(), vec![1000, 10]);
        assert_eq!(ds.width(), 3);
    }

    #[test]
    fn zero_separability_collapses_centers() {
        let ds = generate_synthetic_benchmark(&small_spec(0.0)).unwrap();
        // Both classes drawn from N(0, 1): per-class feature means near 0.
        for class in 0..2 {
            let rows: Vec<usize> = (0..ds.n_rows())
                .filter(|&i| ds.labels[i] == class)
                .collect();
            let mean: f64 =
                rows.iter().map(|&i| ds.row(i)[0]).sum::<f64>() / rows.len() as f64;
            assert!(mean.abs() < 1.5, "class {class} mean {mean}");
        }
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let a = generate_synthetic_benchmark(&small_spec(1.0)).unwrap();
        let b = generate_synthetic_benchmark(&small_spec(1.0)).unwrap();
        assert_eq!(a, b);
        for (x, y) in a.features.data.iter().zip(&b.features.data) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let mut spec = small_spec(1.0);
        spec.classes.truncate(1);
        assert!(matches!(
            generate_synthetic_benchmark(&spec),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn botiot_mini_counts_and_size() {
        let spec = botiot_mini(1);
        let total: usize = spec.classes.iter().map(|c| c.count).sum();
        assert_eq!(total, 60_000);
        let counts: Vec<usize> = spec.classes.iter().map(|c| c.count).collect();
        assert_eq!(counts, vec![31_950, 27_360, 600, 60, 30]);
    }
}

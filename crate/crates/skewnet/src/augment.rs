//! Capped minority augmentation: planning how many synthetic rows each
//! class receives and appending generated rows to a dataset. The hard cap —
//! synthetic rows never reach the original class count — is asserted, never
//! silently clamped.

use std::collections::BTreeMap;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::vae::VaeModel;

/// One class's augmentation: strictly fewer synthetic rows than originals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentationPlan {
    pub class_index: usize,
    pub original_count: usize,
    pub synthetic_count: usize,
}

impl AugmentationPlan {
    pub fn new(class_index: usize, original_count: usize, synthetic_count: usize) -> Result<Self> {
        if synthetic_count == 0 {
            return Err(Error::Config(format!(
                "augmentation plan for class {class_index}: zero synthetic rows requested"
            )));
        }
        if synthetic_count >= original_count {
            return Err(Error::Cap(format!(
                "class {class_index}: {synthetic_count} synthetic rows would reach or exceed \
                 the {original_count} originals"
            )));
        }
        Ok(Self {
            class_index,
            original_count,
            synthetic_count,
        })
    }

    pub fn from_fraction(class_index: usize, original_count: usize, fraction: f64) -> Result<Self> {
        let n = plan_from_fraction(original_count, fraction)?;
        Self::new(class_index, original_count, n)
    }
}

/// Rounds `fraction * class_count` half-up to the requested synthetic count;
/// the result must stay strictly below the class count.
pub fn plan_from_fraction(class_count: usize, fraction: f64) -> Result<usize> {
    if !fraction.is_finite() || fraction <= 0.0 {
        return Err(Error::Config(format!(
            "augmentation fraction {fraction} must be positive"
        )));
    }
    if fraction >= 1.0 {
        return Err(Error::Cap(format!(
            "augmentation fraction {fraction} >= 1 would let synthetic rows outnumber originals"
        )));
    }
    let n = (fraction * class_count as f64 + 0.5).floor() as usize;
    if n == 0 {
        return Err(Error::Config(format!(
            "fraction {fraction} of {class_count} rows rounds to zero synthetic rows"
        )));
    }
    if n >= class_count {
        return Err(Error::Cap(format!(
            "{n} synthetic rows would reach the {class_count} originals"
        )));
    }
    Ok(n)
}

/// Appends exactly `plan.synthetic_count` generated rows per plan, leaving
/// every original row untouched. All plans are validated against the
/// dataset's actual counts before any row is generated, so a cap violation
/// leaves the dataset unchanged.
pub fn augment_dataset(
    dataset: &Dataset,
    plans: &[AugmentationPlan],
    vaes: &BTreeMap<usize, VaeModel>,
    rng: &RngStream,
) -> Result<Dataset> {
    let counts = dataset.class_counts();
    for plan in plans {
        if plan.class_index >= dataset.class_count() {
            return Err(Error::Index(format!(
                "augmentation plan for unknown class {}",
                plan.class_index
            )));
        }
        let available = counts[plan.class_index];
        if plan.synthetic_count >= available {
            return Err(Error::Cap(format!(
                "class '{}': plan requests {} synthetic rows against {} originals",
                dataset.classes[plan.class_index], plan.synthetic_count, available
            )));
        }
        if !vaes.contains_key(&plan.class_index) {
            return Err(Error::Config(format!(
                "no trained generator for class '{}'",
                dataset.classes[plan.class_index]
            )));
        }
    }
    let mut out = dataset.clone();
    for plan in plans {
        let vae = &vaes[&plan.class_index];
        let mut class_rng = rng.fork(&format!("gen/{}", dataset.classes[plan.class_index]));
        let rows = vae.generate(plan.synthetic_count, &mut class_rng)?;
        out.append_rows(&rows, plan.class_index)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use crate::vae::{train_vae, VaeConfig};

    #[test]
    fn fraction_rounding_matches_published_counts() {
        // Table-scale checks: 65% of 5,261 and 80% of 1,587.
        assert_eq!(plan_from_fraction(5261, 0.65).unwrap(), 3420);
        assert_eq!(plan_from_fraction(1587, 0.80).unwrap(), 1270);
    }

    #[test]
    fn fraction_of_one_is_a_cap_violation() {
        assert!(matches!(
            plan_from_fraction(100, 1.0),
            Err(Error::Cap(_))
        ));
        assert!(matches!(plan_from_fraction(100, 1.5), Err(Error::Cap(_))));
    }

    #[test]
    fn nonpositive_fraction_is_a_config_error() {
        assert!(matches!(
            plan_from_fraction(100, 0.0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            plan_from_fraction(100, -0.2),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn plan_cap_is_strict() {
        assert!(AugmentationPlan::new(0, 10, 9).is_ok());
        assert!(matches!(
            AugmentationPlan::new(0, 10, 10),
            Err(Error::Cap(_))
        ));
        assert!(matches!(
            AugmentationPlan::new(0, 10, 11),
            Err(Error::Cap(_))
        ));
    }

    fn minority_dataset(seed: u64) -> Dataset {
        let mut rng = RngStream::new(seed);
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..200 {
            data.push(0.2 + 0.05 * rng.normal());
            data.push(0.3 + 0.05 * rng.normal());
            labels.push(0);
        }
        for _ in 0..40 {
            data.push(0.7 + 0.05 * rng.normal());
            data.push(0.6 + 0.05 * rng.normal());
            labels.push(1);
        }
        let data: Vec<f64> = data.into_iter().map(|v: f64| v.clamp(0.0, 1.0)).collect();
        Dataset::new(
            Tensor {
                shape: vec![240, 2],
                data,
            },
            labels,
            vec!["major".into(), "minor".into()],
            vec!["f0".into(), "f1".into()],
        )
        .unwrap()
    }

    fn minority_vae(ds: &Dataset, class: usize) -> VaeModel {
        let rows: Vec<usize> = (0..ds.n_rows()).filter(|&i| ds.labels[i] == class).collect();
        let class_rows = ds.subset(&rows);
        train_vae(
            &class_rows.features,
            &VaeConfig {
                epochs: 30,
                seed: 5,
                ..VaeConfig::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn augment_adds_exactly_the_planned_rows() {
        let ds = minority_dataset(3);
        let mut vaes = BTreeMap::new();
        vaes.insert(1usize, minority_vae(&ds, 1));
        let plans = vec![AugmentationPlan::from_fraction(1, 40, 0.65).unwrap()];
        let rng = RngStream::new(11);
        let out = augment_dataset(&ds, &plans, &vaes, &rng).unwrap();
        assert_eq!(out.class_counts(), vec![200, 40 + 26]);
        assert_eq!(out.n_rows(), 240 + 26);
    }

    #[test]
    fn empty_plan_list_returns_the_dataset_unchanged() {
        let ds = minority_dataset(3);
        let out = augment_dataset(&ds, &[], &BTreeMap::new(), &RngStream::new(1)).unwrap();
        assert_eq!(out, ds);
    }

    #[test]
    fn cap_violation_leaves_no_partial_augmentation() {
        let ds = minority_dataset(3);
        let mut vaes = BTreeMap::new();
        vaes.insert(1usize, minority_vae(&ds, 1));
        // Second plan violates the cap against actual counts (40), so the
        // whole call fails.
        let plans = vec![
            AugmentationPlan {
                class_index: 1,
                original_count: 40,
                synthetic_count: 10,
            },
            AugmentationPlan {
                class_index: 1,
                original_count: 40,
                synthetic_count: 40,
            },
        ];
        let err = augment_dataset(&ds, &plans, &vaes, &RngStream::new(1)).unwrap_err();
        assert!(matches!(err, Error::Cap(_)));
    }

    #[test]
    fn originals_are_preserved_exactly_and_unplanned_classes_untouched() {
        let ds = minority_dataset(9);
        let mut vaes = BTreeMap::new();
        vaes.insert(1usize, minority_vae(&ds, 1));
        let plans = vec![AugmentationPlan::new(1, 40, 13).unwrap()];
        let out = augment_dataset(&ds, &plans, &vaes, &RngStream::new(4)).unwrap();
        // The first 240 rows are bit-identical to the originals.
        for i in 0..ds.n_rows() {
            assert_eq!(ds.labels[i], out.labels[i]);
            for (a, b) in ds.row(i).iter().zip(out.row(i)) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        // Multiset of original row hashes is a subset with exact counts.
        let mut original = ds.row_hashes();
        let mut kept: Vec<[u8; 32]> = out.row_hashes().into_iter().take(ds.n_rows()).collect();
        original.sort_unstable();
        kept.sort_unstable();
        assert_eq!(original, kept);
        assert_eq!(out.class_counts()[0], 200);
    }

    #[test]
    fn augmentation_is_deterministic_per_stream() {
        let ds = minority_dataset(5);
        let mut vaes = BTreeMap::new();
        vaes.insert(1usize, minority_vae(&ds, 1));
        let plans = vec![AugmentationPlan::new(1, 40, 8).unwrap()];
        let a = augment_dataset(&ds, &plans, &vaes, &RngStream::new(21)).unwrap();
        let b = augment_dataset(&ds, &plans, &vaes, &RngStream::new(21)).unwrap();
        assert_eq!(a, b);
    }
}

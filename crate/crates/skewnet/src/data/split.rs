//! Seeded per-class subsampling and stratified train/test splitting.
//! Both shuffle from the dataset's canonical order, so results depend only
//! on (content, seed), never on input row order.

use std::collections::BTreeMap;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::RngStream;

fn per_class_indices(dataset: &Dataset) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); dataset.class_count()];
    for &i in &dataset.canonical_order() {
        by_class[dataset.labels[i]].push(i);
    }
    by_class
}

/// Caps each listed class at `min(cap, available)` rows, sampled uniformly
/// without replacement; classes without a cap are kept whole.
pub fn sample_per_class(
    dataset: &Dataset,
    caps: &BTreeMap<String, usize>,
    seed: u64,
) -> Result<Dataset> {
    for (name, &cap) in caps {
        if cap == 0 {
            return Err(Error::Config(format!("cap for '{name}' must be positive")));
        }
        if dataset.class_index(name).is_none() {
            return Err(Error::Config(format!("cap for unknown class '{name}'")));
        }
    }
    let rng = RngStream::new(seed);
    let mut picked: Vec<usize> = Vec::new();
    for (class, indices) in per_class_indices(dataset).into_iter().enumerate() {
        let name = &dataset.classes[class];
        match caps.get(name) {
            Some(&cap) if cap < indices.len() => {
                let mut class_rng = rng.fork(&format!("sample/{name}"));
                let chosen = class_rng.sample_indices(indices.len(), cap);
                let mut rows: Vec<usize> = chosen.iter().map(|&k| indices[k]).collect();
                rows.sort_unstable();
                picked.extend(rows);
            }
            _ => picked.extend(indices),
        }
    }
    Ok(dataset.subset(&picked))
}

/// Stratified split: per class, `round(fraction * count)` rows go to train
/// (sampled from the seeded stream), the remainder to test.
pub fn stratified_split(
    dataset: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction {train_fraction} must lie in (0, 1)"
        )));
    }
    let counts = dataset.class_counts();
    for (class, &count) in counts.iter().enumerate() {
        if count == 1 {
            return Err(Error::Data(format!(
                "class '{}' has a single row; cannot split",
                dataset.classes[class]
            )));
        }
    }
    let rng = RngStream::new(seed);
    let mut train_rows: Vec<usize> = Vec::new();
    let mut test_rows: Vec<usize> = Vec::new();
    for (class, mut indices) in per_class_indices(dataset).into_iter().enumerate() {
        if indices.is_empty() {
            continue;
        }
        let name = &dataset.classes[class];
        let take = (train_fraction * indices.len() as f64).round() as usize;
        let take = take.min(indices.len());
        let mut class_rng = rng.fork(&format!("split/{name}"));
        class_rng.shuffle(&mut indices);
        train_rows.extend(&indices[..take]);
        test_rows.extend(&indices[take..]);
    }
    Ok((dataset.subset(&train_rows), dataset.subset(&test_rows)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn dataset_with_counts(counts: &[usize]) -> Dataset {
        let mut data = Vec::new();
        let mut labels = Vec::new();
        let mut serial = 0.0;
        for (class, &count) in counts.iter().enumerate() {
            for _ in 0..count {
                data.push(serial);
                data.push(class as f64);
                labels.push(class);
                serial += 1.0;
            }
        }
        let n = labels.len();
        Dataset::new(
            Tensor::new(vec![n, 2], data).unwrap(),
            labels,
            (0..counts.len()).map(|c| format!("c{c}")).collect(),
            vec!["id".into(), "cls".into()],
        )
        .unwrap()
    }

    #[test]
    fn eighty_twenty_split_counts() {
        let ds = dataset_with_counts(&[90, 10]);
        let (train, test) = stratified_split(&ds, 0.8, 7).unwrap();
        assert_eq!(train.class_counts(), vec![72, 8]);
        assert_eq!(test.class_counts(), vec![18, 2]);
    }

    #[test]
    fn split_is_a_partition() {
        let ds = dataset_with_counts(&[25, 13, 4]);
        let (train, test) = stratified_split(&ds, 0.7, 3).unwrap();
        let mut all: Vec<f64> = train
            .row_hashes()
            .iter()
            .chain(test.row_hashes().iter())
            .map(|h| f64::from_le_bytes(h[..8].try_into().unwrap()))
            .collect();
        let mut original: Vec<f64> = ds
            .row_hashes()
            .iter()
            .map(|h| f64::from_le_bytes(h[..8].try_into().unwrap()))
            .collect();
        all.sort_by(f64::total_cmp);
        original.sort_by(f64::total_cmp);
        assert_eq!(all.len(), original.len());
        for (a, b) in all.iter().zip(&original) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        // Disjoint: ids are unique so hash multiset equality implies it,
        // but check intersection explicitly too.
        let train_set: std::collections::BTreeSet<_> = train.row_hashes().into_iter().collect();
        assert!(test.row_hashes().iter().all(|h| !train_set.contains(h)));
    }

    #[test]
    fn split_is_deterministic_and_order_independent() {
        let ds = dataset_with_counts(&[30, 8]);
        let (t1, s1) = stratified_split(&ds, 0.8, 42).unwrap();
        let (t2, s2) = stratified_split(&ds, 0.8, 42).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(s1, s2);
        // Permuted input produces the same row multisets.
        let mut perm: Vec<usize> = (0..ds.n_rows()).rev().collect();
        perm.swap(0, 5);
        let shuffled = ds.subset(&perm);
        let (t3, s3) = stratified_split(&shuffled, 0.8, 42).unwrap();
        let sets = |d: &Dataset| {
            let mut h = d.row_hashes();
            h.sort_unstable();
            h
        };
        assert_eq!(sets(&t1), sets(&t3));
        assert_eq!(sets(&s1), sets(&s3));
    }

    #[test]
    fn single_row_class_is_a_data_error() {
        let ds = dataset_with_counts(&[5, 1]);
        assert!(matches!(
            stratified_split(&ds, 0.8, 1),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn proportions_preserved_within_one_row() {
        let ds = dataset_with_counts(&[97, 41, 11]);
        let (train, _) = stratified_split(&ds, 0.8, 9).unwrap();
        for (class, &count) in ds.class_counts().iter().enumerate() {
            let expected = 0.8 * count as f64;
            let got = train.class_counts()[class] as f64;
            assert!((got - expected).abs() <= 1.0, "class {class}: {got} vs {expected}");
        }
    }

    #[test]
    fn caps_apply_min_rule() {
        let ds = dataset_with_counts(&[100, 40]);
        let mut caps = BTreeMap::new();
        caps.insert("c0".to_string(), 60);
        caps.insert("c1".to_string(), 100);
        let sampled = sample_per_class(&ds, &caps, 5).unwrap();
        assert_eq!(sampled.class_counts(), vec![60, 40]);
    }

    #[test]
    fn sampling_is_deterministic() {
        let ds = dataset_with_counts(&[50, 20]);
        let mut caps = BTreeMap::new();
        caps.insert("c0".to_string(), 10);
        let a = sample_per_class(&ds, &caps, 11).unwrap();
        let b = sample_per_class(&ds, &caps, 11).unwrap();
        assert_eq!(a, b);
        let c = sample_per_class(&ds, &caps, 12).unwrap();
        assert_ne!(a, c);
    }
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DatasetManifest, IngestError, Split};

/// Deterministic train/test split, stratified per class whenever every
/// class has at least two samples. Per-class test counts come from a
/// largest-remainder allocation of `round(test_fraction * n)`.
pub fn split_train_test(
    manifest: &DatasetManifest,
    test_fraction: f64,
    seed: u64,
) -> Result<(DatasetManifest, DatasetManifest), IngestError> {
    if manifest.is_empty() {
        return Err(IngestError::EmptyManifest);
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(IngestError::Config(format!(
            "test_fraction {test_fraction} outside (0, 1)"
        )));
    }
    let n = manifest.len();
    let total_test = if n < 2 {
        0
    } else {
        ((test_fraction * n as f64).round() as usize).clamp(1, n - 1)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let labels = manifest.class_labels.labels();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); labels.len()];
    for (i, s) in manifest.samples.iter().enumerate() {
        let c = manifest.class_labels.index_of(&s.label).ok_or_else(|| {
            IngestError::Manifest(format!("label {:?} not in class list", s.label))
        })?;
        by_class[c].push(i);
    }
    let present: Vec<usize> = (0..labels.len())
        .filter(|&c| !by_class[c].is_empty())
        .collect();
    let stratified = present.iter().all(|&c| by_class[c].len() >= 2);

    let mut is_test = vec![false; n];
    if stratified {
        let mut quota: Vec<usize> = vec![0; labels.len()];
        let mut remainders: Vec<(f64, usize)> = Vec::new();
        for &c in &present {
            let exact = test_fraction * by_class[c].len() as f64;
            quota[c] = exact.floor() as usize;
            remainders.push((exact - exact.floor(), c));
        }
        remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut left = total_test.saturating_sub(quota.iter().sum());
        for &(_, c) in remainders.iter().cycle().take(remainders.len() * 2) {
            if left == 0 {
                break;
            }
            if quota[c] + 1 < by_class[c].len() {
                quota[c] += 1;
                left -= 1;
            }
        }
        // The total wins over keeping every class in train: only reached
        // when the fraction is so high that the capped quotas fall short.
        for &(_, c) in remainders.iter().cycle().take(remainders.len() * 2) {
            if left == 0 {
                break;
            }
            if quota[c] < by_class[c].len() {
                quota[c] += 1;
                left -= 1;
            }
        }
        for &c in &present {
            let mut members = by_class[c].clone();
            members.shuffle(&mut rng);
            for &i in members.iter().take(quota[c]) {
                is_test[i] = true;
            }
        }
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        for &i in all.iter().take(total_test) {
            is_test[i] = true;
        }
    }

    let part = |want_test: bool, split: Split| DatasetManifest {
        category: manifest.category,
        samples: manifest
            .samples
            .iter()
            .zip(&is_test)
            .filter(|(_, t)| **t == want_test)
            .map(|(s, _)| s.clone())
            .collect(),
        class_labels: manifest.class_labels.clone(),
        split,
    };
    Ok((part(false, Split::Train), part(true, Split::Test)))
}

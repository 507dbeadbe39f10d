use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::SequenceRecord;
use crate::error::{Error, Result};

/// Train / validation / test fractions.
pub const DEFAULT_RATIOS: [f64; 3] = [0.70, 0.15, 0.15];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetSplit {
    pub train: Vec<SequenceRecord>,
    pub validation: Vec<SequenceRecord>,
    pub test: Vec<SequenceRecord>,
    pub seed: u64,
    pub ratios: [f64; 3],
}

impl DatasetSplit {
    pub fn sizes(&self) -> [usize; 3] {
        [self.train.len(), self.validation.len(), self.test.len()]
    }
}

/// Stratified, seeded sequence-level split.
///
/// Validation and test sizes are `floor(n * ratio)`; training absorbs the
/// rounding remainder. Each split's size is then apportioned across classes
/// by largest remainder so every split mirrors the global class mix.
pub fn split_dataset(
    sequences: &[SequenceRecord],
    ratios: [f64; 3],
    seed: u64,
) -> Result<DatasetSplit> {
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::Split(format!("invalid ratios {ratios:?}")));
    }
    if (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Split(format!("ratios {ratios:?} do not sum to 1")));
    }

    let mut classes: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, seq) in sequences.iter().enumerate() {
        let label = seq.sequence_label.as_deref().ok_or_else(|| {
            Error::Split(format!("sequence {} has no sequence label", seq.id()))
        })?;
        classes.entry(label).or_default().push(i);
    }
    if classes.len() < 2 {
        return Err(Error::Split(format!(
            "need at least two classes to stratify, found {} across {} sequences",
            classes.len(),
            sequences.len()
        )));
    }

    let n = sequences.len();
    let n_val = (n as f64 * ratios[1] + 1e-9).floor() as usize;
    let n_test = (n as f64 * ratios[2] + 1e-9).floor() as usize;

    let class_sizes: Vec<usize> = classes.values().map(Vec::len).collect();
    let mut remaining = class_sizes.clone();
    let val_quota = apportion(n_val, &class_sizes, &mut remaining);
    let test_quota = apportion(n_test, &class_sizes, &mut remaining);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0u8; n];
    for (c, members) in classes.values().enumerate() {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        for (k, &i) in shuffled.iter().enumerate() {
            assignment[i] = if k < val_quota[c] {
                1
            } else if k < val_quota[c] + test_quota[c] {
                2
            } else {
                0
            };
        }
    }

    let pick = |which: u8| -> Vec<SequenceRecord> {
        sequences
            .iter()
            .zip(&assignment)
            .filter(|(_, &a)| a == which)
            .map(|(s, _)| s.clone())
            .collect()
    };
    Ok(DatasetSplit {
        train: pick(0),
        validation: pick(1),
        test: pick(2),
        seed,
        ratios,
    })
}

/// Largest-remainder apportionment of `total` seats proportional to
/// `weights`, never exceeding `remaining` per class. Decrements `remaining`.
fn apportion(total: usize, weights: &[usize], remaining: &mut [usize]) -> Vec<usize> {
    let sum: usize = weights.iter().sum();
    let mut quota = vec![0usize; weights.len()];
    let mut fractions = Vec::with_capacity(weights.len());
    for (c, &w) in weights.iter().enumerate() {
        let exact = total as f64 * w as f64 / sum as f64;
        quota[c] = (exact.floor() as usize).min(remaining[c]);
        fractions.push((exact - quota[c] as f64, c));
    }
    // largest remainder first, ties toward the earlier class
    fractions.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut left = total.saturating_sub(quota.iter().sum());
    while left > 0 {
        let before = left;
        for &(_, c) in &fractions {
            if left == 0 {
                break;
            }
            if quota[c] < remaining[c] {
                quota[c] += 1;
                left -= 1;
            }
        }
        if left == before {
            break;
        }
    }
    for (r, q) in remaining.iter_mut().zip(&quota) {
        *r -= q;
    }
    quota
}

//! Patient-disjoint train/test splits and cross-validation folds.

use std::collections::{BTreeMap, BTreeSet};
use std::hash::{DefaultHasher, Hash, Hasher};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ClassifyError;
use crate::dataset::{Dataset, GaitClass};

/// Subject-level partition of a dataset. Every trial of a subject falls on one side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub id: String,
    pub seed: u64,
    pub train_fraction_permille: u32,
    /// Subject ids, sorted.
    pub train_subjects: Vec<String>,
    pub test_subjects: Vec<String>,
}

impl Split {
    pub fn is_train(&self, subject_id: &str) -> bool {
        self.train_subjects
            .binary_search_by(|s| s.as_str().cmp(subject_id))
            .is_ok()
    }

    pub fn is_test(&self, subject_id: &str) -> bool {
        self.test_subjects
            .binary_search_by(|s| s.as_str().cmp(subject_id))
            .is_ok()
    }
}

/// Shuffles the subjects of each class with `seed` and sends `round(train_fraction · n)` of
/// them (at least one, at most `n − 1`) to training.
pub fn split_patient_disjoint(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<Split, ClassifyError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(ClassifyError::InvalidConfig(format!(
            "train fraction {train_fraction} must lie in (0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: BTreeMap<GaitClass, Vec<&str>> = BTreeMap::new();
    for s in ds.subjects() {
        by_class.entry(s.class).or_default().push(&s.id);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut ids) in by_class {
        if ids.len() < 2 {
            return Err(ClassifyError::ClassTooSmall {
                class: class.code().to_string(),
                subjects: ids.len(),
            });
        }
        ids.shuffle(&mut rng);
        let n_train = ((train_fraction * ids.len() as f64).round() as usize).clamp(1, ids.len() - 1);
        train.extend(ids[..n_train].iter().map(|s| s.to_string()));
        test.extend(ids[n_train..].iter().map(|s| s.to_string()));
    }
    train.sort();
    test.sort();
    let mut h = DefaultHasher::new();
    train.hash(&mut h);
    let permille = (train_fraction * 1000.0).round() as u32;
    Ok(Split {
        id: format!("seed{seed}-train{permille}-{:016x}", h.finish()),
        seed,
        train_fraction_permille: permille,
        train_subjects: train,
        test_subjects: test,
    })
}

/// Assigns each row to one of `k` folds so that all rows of a subject share a fold.
///
/// Subjects are grouped by the label of their first row, shuffled within each group and dealt
/// round-robin, continuing the deal across groups so fold sizes stay balanced.
pub fn patient_folds(subject_of_row: &[usize], label_of_row: &[usize], k: usize, seed: u64) -> Vec<usize> {
    let mut subject_label: BTreeMap<usize, usize> = BTreeMap::new();
    for (&s, &l) in subject_of_row.iter().zip(label_of_row) {
        subject_label.entry(s).or_insert(l);
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (&s, &l) in &subject_label {
        groups.entry(l).or_default().push(s);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of_subject: BTreeMap<usize, usize> = BTreeMap::new();
    let mut next = 0;
    for subjects in groups.values_mut() {
        subjects.shuffle(&mut rng);
        for &s in subjects.iter() {
            fold_of_subject.insert(s, next % k);
            next += 1;
        }
    }
    subject_of_row.iter().map(|s| fold_of_subject[s]).collect()
}

/// Training and validation row positions of fold `f`.
pub fn fold_rows(folds: &[usize], f: usize) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut valid = Vec::new();
    for (i, &g) in folds.iter().enumerate() {
        if g == f {
            valid.push(i);
        } else {
            train.push(i);
        }
    }
    (train, valid)
}

/// True if no subject appears on both sides.
pub fn is_patient_disjoint(subject_of_row: &[usize], a: &[usize], b: &[usize]) -> bool {
    let sa: BTreeSet<usize> = a.iter().map(|&i| subject_of_row[i]).collect();
    b.iter().all(|&i| !sa.contains(&subject_of_row[i]))
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::GestureDataset;
use crate::error::{Error, Result};

/// Stratified k-fold split; returns `(train, test)` with fold `fold` held out.
///
/// Each class is shuffled with `seed`, the classes are concatenated and
/// positions are dealt round-robin to the folds, so fold sizes differ by at
/// most one and every class is spread evenly.
pub fn split_kfold(
    ds: &GestureDataset,
    k: usize,
    fold: usize,
    seed: u64,
) -> Result<(GestureDataset, GestureDataset)> {
    if k < 2 || fold >= k {
        return Err(Error::Validation(format!(
            "fold {fold} out of range for {k}-fold split"
        )));
    }
    if ds.len() < k {
        return Err(Error::Validation(format!(
            "{k}-fold split needs at least {k} sequences, got {}",
            ds.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ordered = Vec::with_capacity(ds.len());
    for class in 0..ds.class_count {
        let mut idx: Vec<usize> = (0..ds.len())
            .filter(|&i| ds.sequences[i].label == class)
            .collect();
        idx.shuffle(&mut rng);
        ordered.extend(idx);
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (pos, i) in ordered.into_iter().enumerate() {
        if pos % k == fold {
            test.push(i)
        } else {
            train.push(i)
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.subset(&train), ds.subset(&test)))
}

pub fn split_cv5(
    ds: &GestureDataset,
    fold: usize,
    seed: u64,
) -> Result<(GestureDataset, GestureDataset)> {
    split_kfold(ds, 5, fold, seed)
}

/// Leave-one-user-out: every sequence of `held_out_user` goes to the test set.
pub fn split_loocv(
    ds: &GestureDataset,
    held_out_user: u32,
) -> Result<(GestureDataset, GestureDataset)> {
    let (test, train): (Vec<usize>, Vec<usize>) =
        (0..ds.len()).partition(|&i| ds.sequences[i].user_id == held_out_user);
    if test.is_empty() {
        return Err(Error::Validation(format!(
            "user {held_out_user} not present in dataset"
        )));
    }
    if train.is_empty() {
        return Err(Error::Validation(format!(
            "holding out user {held_out_user} leaves no training data"
        )));
    }
    Ok((ds.subset(&train), ds.subset(&test)))
}

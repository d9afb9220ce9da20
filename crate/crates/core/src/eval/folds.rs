use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GmcError, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified partition of labelled rows into `k` folds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// Row indices the labels refer to.
    pub rows: Vec<usize>,
    pub labels: Vec<u8>,
    pub folds: Vec<Fold>,
}

/// Shuffles each class with `seed` and deals its members round-robin.
///
/// `rows[i]` carries `labels[i]`; fold `f` tests the rows dealt to it and
/// trains on every other labelled row. The round-robin for the second class
/// continues where the first stopped, so fold sizes differ by at most one.
pub fn stratified_kfold(rows: &[usize], labels: &[u8], k: usize, seed: u64) -> Result<FoldPlan> {
    if rows.len() != labels.len() {
        return Err(GmcError::dim(
            "eval::stratified_kfold",
            format!("{} rows for {} labels", rows.len(), labels.len()),
        ));
    }
    if k < 2 {
        return Err(GmcError::param(
            "eval::stratified_kfold",
            "k",
            "need at least 2 folds",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tests: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut next = 0;
    for class in [0u8, 1u8] {
        let mut members: Vec<usize> = rows
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == class)
            .map(|(&r, _)| r)
            .collect();
        if members.len() < k {
            return Err(GmcError::param(
                "eval::stratified_kfold",
                "k",
                format!(
                    "class {class} has {} members, fewer than k={k}",
                    members.len()
                ),
            ));
        }
        members.shuffle(&mut rng);
        for r in members {
            tests[next % k].push(r);
            next += 1;
        }
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(GmcError::invalid(
            "eval::stratified_kfold",
            "labels must be 0 or 1",
        ));
    }
    let folds = tests
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let mut train: Vec<usize> = rows
                .iter()
                .copied()
                .filter(|r| test.binary_search(r).is_err())
                .collect();
            train.sort_unstable();
            Fold { train, test }
        })
        .collect();
    Ok(FoldPlan {
        k,
        seed,
        rows: rows.to_vec(),
        labels: labels.to_vec(),
        folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_twenty_rows_give_one_of_each_class_per_fold() {
        let labels: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
        let rows: Vec<usize> = (0..20).collect();
        let plan = stratified_kfold(&rows, &labels, 10, 4).unwrap();
        for f in &plan.folds {
            let pos = f.test.iter().filter(|&&r| labels[r] == 1).count();
            assert_eq!((f.test.len(), pos), (2, 1));
        }
    }

    #[test]
    fn small_class_is_rejected() {
        assert!(stratified_kfold(&[0, 1, 2], &[0, 0, 1], 2, 0).is_err());
    }
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::MaskedDataset;
use crate::error::{GmcError, Result};
use crate::tensor::Tensor;

/// Keeps exactly `count` of the observed cells of `mask`.
///
/// Cells are ranked by one seeded shuffle of the full grid, so for a fixed
/// seed and shape the kept set only grows with `count`: masks produced at
/// decreasing counts are nested.
pub fn nested_keep(mask: &Tensor, count: usize, seed: u64) -> Tensor {
    let mut order: Vec<usize> = (0..mask.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = Tensor::zeros(mask.rows(), mask.cols());
    let mut kept = 0;
    for idx in order {
        if kept == count {
            break;
        }
        if mask.data()[idx] != 0.0 {
            out.data_mut()[idx] = 1.0;
            kept += 1;
        }
    }
    out
}

/// Removes feature observations so that `round(keep_frac * observed)` remain.
///
/// Labels and normalisation statistics are left untouched. Rows may end up
/// with no observed feature at all.
pub fn dropout_features(ds: &MaskedDataset, keep_frac: f64, seed: u64) -> Result<MaskedDataset> {
    if !(keep_frac > 0.0 && keep_frac <= 1.0) {
        return Err(GmcError::param(
            "data::dropout_features",
            "keep_frac",
            format!("must lie in (0, 1], got {keep_frac}"),
        ));
    }
    let observed = ds.omega_a.sum() as usize;
    let count = (keep_frac * observed as f64).round() as usize;
    let omega_a = nested_keep(&ds.omega_a, count, seed);
    let n = ds.n_features();
    let mut z = ds.z.clone();
    for i in 0..ds.rows() {
        for j in 0..n {
            if omega_a.get(i, j) == 0.0 {
                z.set(i, j, 0.0);
            }
        }
    }
    Ok(MaskedDataset {
        z,
        omega_a,
        ..ds.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_count_and_nesting() {
        let mask = Tensor::from_fn(
            40,
            50,
            |i, j| if (i * 7 + j * 3) % 4 == 0 { 0.0 } else { 1.0 },
        );
        let total = mask.sum() as usize;
        let big = nested_keep(&mask, total / 2, 9);
        let small = nested_keep(&mask, total / 5, 9);
        assert_eq!(big.sum() as usize, total / 2);
        assert_eq!(small.sum() as usize, total / 5);
        for k in 0..mask.len() {
            assert!(small.data()[k] <= big.data()[k]);
            assert!(big.data()[k] <= mask.data()[k]);
        }
    }
}

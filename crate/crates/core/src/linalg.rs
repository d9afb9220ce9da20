//! Dense decompositions used by the solvers: thin SVD (backed by
//! `nalgebra`), singular-value soft-thresholding, truncated SVD factors and
//! power iteration for the largest eigenvalue of a symmetric PSD operator.

use nalgebra::SVD;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{GmcError, Result};
use crate::tensor::Tensor;

/// Thin SVD `A = U diag(s) Vᵀ` with singular values sorted descending.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: Tensor,
    pub singular_values: Vec<f64>,
    pub v: Tensor,
}

pub fn svd(a: &Tensor) -> Result<Svd> {
    if a.is_empty() {
        return Err(GmcError::dim("linalg::svd", "empty matrix"));
    }
    if !a.is_finite() {
        return Err(GmcError::numerical(
            "linalg::svd",
            "input contains non-finite entries",
        ));
    }
    let mut dec = SVD::try_new(a.to_dmatrix(), true, true, f64::EPSILON, 10_000)
        .ok_or_else(|| GmcError::numerical("linalg::svd", "SVD did not converge"))?;
    dec.sort_by_singular_values();
    let u = dec
        .u
        .as_ref()
        .ok_or_else(|| GmcError::numerical("linalg::svd", "missing U factor"))?;
    let vt = dec
        .v_t
        .as_ref()
        .ok_or_else(|| GmcError::numerical("linalg::svd", "missing Vᵀ factor"))?;
    Ok(Svd {
        u: Tensor::from_dmatrix(u),
        singular_values: dec.singular_values.iter().copied().collect(),
        v: Tensor::from_dmatrix(&vt.transpose()),
    })
}

impl Svd {
    /// `U diag(f(s)) Vᵀ`
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Tensor {
        let m = self.u.rows();
        let n = self.v.rows();
        let mut out = Tensor::zeros(m, n);
        for (k, &s) in self.singular_values.iter().enumerate() {
            let sk = f(s);
            if sk == 0.0 {
                continue;
            }
            for i in 0..m {
                let ui = self.u.get(i, k) * sk;
                if ui == 0.0 {
                    continue;
                }
                let row = out.row_mut(i);
                for (j, o) in row.iter_mut().enumerate() {
                    *o += ui * self.v.get(j, k);
                }
            }
        }
        out
    }

    /// Count of singular values above `tol * s_max`.
    pub fn numerical_rank(&self, tol: f64) -> usize {
        let smax = self.singular_values.first().copied().unwrap_or(0.0);
        self.singular_values
            .iter()
            .filter(|&&s| s > tol * smax)
            .count()
    }
}

/// Result of one singular-value soft-thresholding step.
#[derive(Clone, Debug)]
pub struct Shrinkage {
    pub matrix: Tensor,
    pub singular_values_before: Vec<f64>,
    pub singular_values_after: Vec<f64>,
}

/// Proximal operator of `threshold · ||X||_*`.
pub fn singular_value_shrink(a: &Tensor, threshold: f64) -> Result<Shrinkage> {
    let dec = svd(a)?;
    let after: Vec<f64> = dec
        .singular_values
        .iter()
        .map(|s| (s - threshold).max(0.0))
        .collect();
    let matrix = {
        let mut shrunk = dec.clone();
        shrunk.singular_values = after.clone();
        shrunk.reconstruct_with(|s| s)
    };
    Ok(Shrinkage {
        matrix,
        singular_values_before: dec.singular_values,
        singular_values_after: after,
    })
}

/// Rank-`r` factors `W = U_r √Σ_r`, `H = V_r √Σ_r` so that `W Hᵀ` is the
/// best rank-`r` approximation of `a`. When `r` exceeds the available
/// rank, the extra columns are filled with `pad_scale`-scaled Gaussian noise
/// drawn from `rng`.
pub fn truncated_factors<R: Rng>(
    a: &Tensor,
    r: usize,
    pad_scale: f64,
    rng: &mut R,
) -> Result<(Tensor, Tensor)> {
    let (m, n) = a.shape();
    let dec = svd(a)?;
    let available = dec.singular_values.len();
    let mut w = Tensor::zeros(m, r);
    let mut h = Tensor::zeros(n, r);
    for k in 0..r {
        if k < available && dec.singular_values[k] > 0.0 {
            let root = dec.singular_values[k].sqrt();
            for i in 0..m {
                w.set(i, k, dec.u.get(i, k) * root);
            }
            for j in 0..n {
                h.set(j, k, dec.v.get(j, k) * root);
            }
        } else {
            for i in 0..m {
                let z: f64 = rng.sample(StandardNormal);
                w.set(i, k, pad_scale * z);
            }
            for j in 0..n {
                let z: f64 = rng.sample(StandardNormal);
                h.set(j, k, pad_scale * z);
            }
        }
    }
    Ok((w, h))
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
///
/// Converged once the eigen-residual `||Av - λv||` drops below `tol`
/// (relative to `max(|λ|, 1)`); the Rayleigh quotient is then accurate to
/// roughly the squared residual over the spectral gap. Returns `None` if
/// that does not happen within `max_iters` iterations.
pub fn power_iteration_max_eigenvalue(a: &Tensor, tol: f64, max_iters: usize) -> Option<f64> {
    let n = a.rows();
    if n == 0 || a.cols() != n {
        return None;
    }
    // Irregular start vector so that it is not orthogonal to the dominant
    // eigenvector of typical Laplacians (e.g. the constant or alternating one).
    let golden = 0.618_033_988_749_894_9_f64;
    let mut v: Vec<f64> = (0..n)
        .map(|i| 0.5 + ((i as f64 + 1.0) * golden).fract())
        .collect();
    normalize(&mut v)?;
    for _ in 0..max_iters {
        let w = matvec(a, &v);
        let lambda: f64 = v.iter().zip(&w).map(|(x, y)| x * y).sum();
        let residual = w
            .iter()
            .zip(&v)
            .map(|(y, x)| (y - lambda * x).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= tol * lambda.abs().max(1.0) {
            return Some(lambda);
        }
        let mut next = w;
        if normalize(&mut next).is_none() {
            // v lies in the nullspace; the operator is zero along it.
            return if a.max_abs() == 0.0 { Some(0.0) } else { None };
        }
        v = next;
    }
    None
}

fn matvec(a: &Tensor, v: &[f64]) -> Vec<f64> {
    (0..a.rows())
        .map(|i| a.row(i).iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

fn normalize(v: &mut [f64]) -> Option<()> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn svd_reconstructs() {
        let a = Tensor::from_fn(5, 3, |i, j| ((i * 3 + j) as f64).sin());
        let d = svd(&a).unwrap();
        assert!(d.singular_values.windows(2).all(|w| w[0] >= w[1]));
        assert!(d.reconstruct_with(|s| s).max_abs_diff(&a) < 1e-12);
    }

    #[test]
    fn shrink_floors_at_zero() {
        let a = Tensor::from_fn(4, 4, |i, j| if i == j { (i + 1) as f64 } else { 0.0 });
        let s = singular_value_shrink(&a, 2.5).unwrap();
        assert_eq!(s.singular_values_after, vec![1.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn truncated_factors_recover_low_rank() {
        let u = Tensor::from_fn(6, 2, |i, j| (i + j) as f64 * 0.3 - 0.5);
        let v = Tensor::from_fn(4, 2, |i, j| (i as f64) - (j as f64) * 0.7);
        let a = u.matmul_nt(&v).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (w, h) = truncated_factors(&a, 2, 0.01, &mut rng).unwrap();
        assert!(w.matmul_nt(&h).unwrap().max_abs_diff(&a) < 1e-10);
        let (w, h) = truncated_factors(&a, 6, 0.0, &mut rng).unwrap();
        assert_eq!(w.shape(), (6, 6));
        assert!(w.matmul_nt(&h).unwrap().max_abs_diff(&a) < 1e-10);
    }

    #[test]
    fn power_iteration_on_diagonal() {
        let a = Tensor::from_fn(3, 3, |i, j| if i == j { [0.5, 3.0, 1.0][i] } else { 0.0 });
        let l = power_iteration_max_eigenvalue(&a, 1e-12, 10_000).unwrap();
        assert!((l - 3.0).abs() < 1e-9);
        assert_eq!(
            power_iteration_max_eigenvalue(&Tensor::zeros(3, 3), 1e-8, 10),
            Some(0.0)
        );
    }
}

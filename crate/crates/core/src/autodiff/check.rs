//! Central finite-difference verification of reverse-mode gradients.

use serde::{Deserialize, Serialize};

use super::{Graph, Var};
use crate::error::{GmcError, Result};
use crate::par::{self, Execution};
use crate::tensor::Tensor;

/// Default probe step.
pub const FD_STEP: f64 = 1e-5;

/// Smallest gradient magnitude ever compared on a relative scale.
pub const MAGNITUDE_FLOOR: f64 = 1e-6;

/// Headroom over the rounding error of a central difference.
pub const ROUNDOFF_MARGIN: f64 = 10.0;

/// `|a - n| / max(|a|, |n|, floor)`
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    if denom == 0.0 {
        return 0.0;
    }
    (analytic - numeric).abs() / denom
}

/// Gradient magnitude below which relative error stops being meaningful.
///
/// A central difference of a loss of size `|L|` carries rounding error of
/// about `ε|L| / step`. Entries smaller than `ROUNDOFF_MARGIN` times that
/// noise divided by `tolerance` are therefore held to an absolute bound of
/// `ROUNDOFF_MARGIN` rounding units instead.
pub fn magnitude_floor(loss: f64, step: f64, tolerance: f64) -> f64 {
    let noise = f64::EPSILON * loss.abs().max(1.0) / step;
    (ROUNDOFF_MARGIN * noise / tolerance).max(MAGNITUDE_FLOOR)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub name: String,
    pub entries: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// Denominator floor used for `max_rel_err`.
    pub magnitude_floor: f64,
}

/// Compares analytic gradients of `build` against central differences.
///
/// `build` receives a fresh graph plus one parameter leaf per input block
/// and must return the scalar loss. It is called once for the analytic pass
/// and twice per input entry for the numeric pass.
pub fn check_gradients<F>(
    inputs: &[(String, Tensor)],
    step: f64,
    tolerance: f64,
    exec: Execution,
    build: F,
) -> Result<Vec<BlockReport>>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var> + Sync,
{
    check_gradients_with(inputs, step, tolerance, exec, build, |_, _| {})
}

/// Like [`check_gradients`], with a hook that may tamper with the analytic
/// gradients before comparison (used to prove the checker can fail).
pub fn check_gradients_with<F, H>(
    inputs: &[(String, Tensor)],
    step: f64,
    tolerance: f64,
    exec: Execution,
    build: F,
    tamper: H,
) -> Result<Vec<BlockReport>>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var> + Sync,
    H: FnOnce(&mut super::Gradients, &[Var]),
{
    let evaluate = |values: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values
            .iter()
            .map(|t| g.try_param(t.clone()))
            .collect::<Result<_>>()?;
        let loss = build(&mut g, &vars)?;
        Ok(g.value(loss).item())
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|(_, t)| g.try_param(t.clone()))
        .collect::<Result<_>>()?;
    let loss = build(&mut g, &vars)?;
    let floor = magnitude_floor(g.value(loss).item(), step, tolerance);
    let mut grads = g.backward(loss)?;
    tamper(&mut grads, &vars);

    let base: Vec<Tensor> = inputs.iter().map(|(_, t)| t.clone()).collect();
    let mut index = Vec::new();
    for (b, (_, t)) in inputs.iter().enumerate() {
        index.extend((0..t.len()).map(|e| (b, e)));
    }

    let numeric = par::try_map_indexed(exec, index.len(), |k| {
        let (b, e) = index[k];
        let mut probe = base.clone();
        let x0 = base[b].data()[e];
        probe[b].data_mut()[e] = x0 + step;
        let up = evaluate(&probe)?;
        probe[b].data_mut()[e] = x0 - step;
        let down = evaluate(&probe)?;
        Ok::<f64, GmcError>((up - down) / (2.0 * step))
    })?;

    let mut reports: Vec<BlockReport> = inputs
        .iter()
        .map(|(name, t)| BlockReport {
            name: name.clone(),
            entries: t.len(),
            max_rel_err: 0.0,
            max_abs_err: 0.0,
            magnitude_floor: floor,
        })
        .collect();
    for (&(b, e), &n) in index.iter().zip(&numeric) {
        let a = grads.get(vars[b]).data()[e];
        let r = &mut reports[b];
        r.max_rel_err = r.max_rel_err.max(relative_error(a, n, floor));
        r.max_abs_err = r.max_abs_err.max((a - n).abs());
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_exact_gradient() {
        let inputs = vec![(
            "w".to_string(),
            Tensor::from_fn(2, 3, |i, j| 0.1 * (i + j) as f64 - 0.2),
        )];
        let reports = check_gradients(&inputs, FD_STEP, 1e-6, Execution::Sequential, |g, v| {
            let t = g.tanh(v[0])?;
            g.frobenius_sq(t)
        })
        .unwrap();
        assert!(reports[0].max_rel_err < 1e-6, "{reports:?}");
    }

    #[test]
    fn detects_tampered_gradient() {
        let inputs = vec![(
            "w".to_string(),
            Tensor::from_fn(2, 2, |i, j| (i + 2 * j) as f64 * 0.3),
        )];
        let reports = check_gradients_with(
            &inputs,
            FD_STEP,
            1e-6,
            Execution::Sequential,
            |g, v| g.frobenius_sq(v[0]),
            |grads, vars| grads.corrupt(vars[0], 1, 0.5),
        )
        .unwrap();
        assert!(reports[0].max_rel_err > 1e-2);
    }

    #[test]
    fn floor_handles_zero_gradients() {
        assert_eq!(relative_error(0.0, 0.0, 0.0), 0.0);
        assert!(relative_error(1e-12, 0.0, MAGNITUDE_FLOOR) < 1e-5);
        assert!((relative_error(2.0, 1.0, MAGNITUDE_FLOOR) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn floor_tracks_loss_scale() {
        let small = magnitude_floor(1.0, FD_STEP, 1e-4);
        let large = magnitude_floor(1e4, FD_STEP, 1e-4);
        assert!(small >= MAGNITUDE_FLOOR);
        assert!((large / small - 1e4).abs() < 1e-6);
    }
}

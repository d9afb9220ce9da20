//! Classic low-rank matrix completion solvers.
//!
//! Exact rank minimisation subject to agreement on the observed entries is
//! intractable, so every solver here works with a convex or factorised
//! surrogate:
//!
//! * [`svt_complete`] minimises `τ||X||_* + (γ/2)||Ω∘(Y−X)||²_F` by proximal
//!   gradient with singular-value soft-thresholding.
//! * [`graph_reg_complete`] adds the Dirichlet energies
//!   `(α_r/2) tr(XᵀL_rX) + (α_c/2) tr(X L_c Xᵀ)` to the smooth part.
//! * [`factorized_complete`] minimises
//!   `½||W||²_F + ½||H||²_F + (γ/2)||Ω∘(WHᵀ−Y)||²_F` over `X = WHᵀ`.
//! * [`factorized_graph_complete`] replaces the Frobenius terms by
//!   Dirichlet energies on the row and column graphs.
//!
//! These serve as baselines and as reference behaviour for the recurrent
//! model in [`crate::srgcnn`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{GmcError, Result};
use crate::linalg::{
    power_iteration_max_eigenvalue, singular_value_shrink, truncated_factors, Shrinkage,
};
use crate::tensor::Tensor;

/// Partially observed matrix. Unobserved entries hold 0.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedMatrix {
    values: Tensor,
    mask: Tensor,
}

impl MaskedMatrix {
    pub fn new(values: Tensor, mask: Tensor) -> Result<Self> {
        if !values.same_shape(&mask) {
            return Err(GmcError::dim(
                "completion::MaskedMatrix",
                format!("values {:?} vs mask {:?}", values.shape(), mask.shape()),
            ));
        }
        if mask.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(GmcError::invalid(
                "completion",
                "mask entries must be 0 or 1",
            ));
        }
        let values = values.hadamard(&mask)?;
        if !values.is_finite() {
            return Err(GmcError::invalid(
                "completion",
                "observed values must be finite",
            ));
        }
        Ok(MaskedMatrix { values, mask })
    }

    /// Observes `full` on the entries selected by `mask`.
    pub fn observe(full: &Tensor, mask: &Tensor) -> Result<Self> {
        Self::new(full.clone(), mask.clone())
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn mask(&self) -> &Tensor {
        &self.mask
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn observed_count(&self) -> usize {
        self.mask.data().iter().filter(|&&v| v != 0.0).count()
    }

    /// `||Ω∘(Y − X)||_F`
    pub fn residual_norm(&self, x: &Tensor) -> f64 {
        let mut s = 0.0;
        for ((&y, &m), &xv) in self
            .values
            .data()
            .iter()
            .zip(self.mask.data())
            .zip(x.data())
        {
            if m != 0.0 {
                s += (y - xv) * (y - xv);
            }
        }
        s.sqrt()
    }
}

/// Rank-`r` factorisation `X = W Hᵀ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Factorization {
    pub w: Tensor,
    pub h: Tensor,
}

impl Factorization {
    pub fn rank(&self) -> usize {
        self.w.cols()
    }

    pub fn reconstruct(&self) -> Tensor {
        self.w
            .matmul_nt(&self.h)
            .expect("factor shapes are consistent by construction")
    }
}

/// Every penalty weight used across the solvers and the recurrent model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyWeights {
    /// Data-fidelity weight of the classic objectives.
    pub gamma: f64,
    /// Row-graph Dirichlet weight.
    pub alpha_r: f64,
    /// Column-graph Dirichlet weight.
    pub alpha_c: f64,
    /// Row-factor Dirichlet weight of the recurrent model loss.
    pub gamma_a: f64,
    /// Row-factor Frobenius weight.
    pub gamma_b: f64,
    /// Column-factor Frobenius weight.
    pub gamma_c: f64,
    /// Feature reconstruction weight.
    pub gamma_d: f64,
    /// Label cross-entropy weight.
    pub gamma_e: f64,
}

impl Default for PenaltyWeights {
    /// Recurrent-model weights as published for the MCI conversion task.
    fn default() -> Self {
        PenaltyWeights {
            gamma: 1.0,
            alpha_r: 1.0,
            alpha_c: 1.0,
            gamma_a: 563.39,
            gamma_b: 248.91,
            gamma_c: 688.85,
            gamma_d: 97.63,
            gamma_e: 890.14,
        }
    }
}

impl PenaltyWeights {
    /// Recurrent-model weights for small synthetic tables, where the
    /// published magnitudes swamp the data term.
    pub fn desk() -> Self {
        PenaltyWeights {
            gamma_a: 1.0,
            gamma_b: 0.1,
            gamma_c: 0.1,
            gamma_d: 1.0,
            gamma_e: 100.0,
            ..PenaltyWeights::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("gamma", self.gamma),
            ("alpha_r", self.alpha_r),
            ("alpha_c", self.alpha_c),
            ("gamma_a", self.gamma_a),
            ("gamma_b", self.gamma_b),
            ("gamma_c", self.gamma_c),
            ("gamma_d", self.gamma_d),
            ("gamma_e", self.gamma_e),
        ];
        for (name, v) in named {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(GmcError::param(
                    "completion::PenaltyWeights",
                    name,
                    format!("must be finite and non-negative, got {v}"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxOptions {
    pub gamma: f64,
    /// Nuclear-norm weight τ.
    pub threshold: f64,
    pub max_iters: usize,
    /// Stop when `||X_{k+1} − X_k||_F / ||X_{k+1}||_F < tol`.
    pub tol: f64,
    /// Gradient step; defaults to the inverse Lipschitz constant of the
    /// smooth part.
    pub step: Option<f64>,
}

impl Default for ProxOptions {
    fn default() -> Self {
        ProxOptions {
            gamma: 1.0,
            threshold: 1e-2,
            max_iters: 2000,
            tol: 1e-6,
            step: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProxResult {
    pub x: Tensor,
    pub iterations: usize,
    pub converged: bool,
    /// `||Ω∘(Y−X_k)||_F` after every iteration.
    pub residual_trace: Vec<f64>,
    /// Soft-thresholding record of the last iteration.
    pub final_shrinkage: Shrinkage,
    /// Pre-prox iterate of the last iteration.
    pub final_pre_prox: Tensor,
    /// Threshold applied to singular values, `τ · step`.
    pub applied_threshold: f64,
    pub step: f64,
}

/// Graph penalty weights for [`graph_reg_complete`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphPenalty {
    pub alpha_r: f64,
    pub alpha_c: f64,
}

pub fn svt_complete(y: &MaskedMatrix, opts: &ProxOptions) -> Result<ProxResult> {
    proximal_gradient(
        y,
        None,
        None,
        GraphPenalty {
            alpha_r: 0.0,
            alpha_c: 0.0,
        },
        opts,
    )
}

pub fn graph_reg_complete(
    y: &MaskedMatrix,
    row_lap: &Tensor,
    col_lap: Option<&Tensor>,
    penalty: GraphPenalty,
    opts: &ProxOptions,
) -> Result<ProxResult> {
    let (m, n) = y.shape();
    check_operator("row_lap", row_lap, m)?;
    if let Some(c) = col_lap {
        check_operator("col_lap", c, n)?;
    }
    proximal_gradient(y, Some(row_lap), col_lap, penalty, opts)
}

fn check_operator(name: &'static str, lap: &Tensor, size: usize) -> Result<()> {
    if lap.shape() != (size, size) {
        return Err(GmcError::dim(
            "completion",
            format!("{name} is {:?}, expected {size}x{size}", lap.shape()),
        ));
    }
    if !lap.is_symmetric(1e-9) {
        return Err(GmcError::invalid(
            "completion",
            format!("{name} is not symmetric"),
        ));
    }
    Ok(())
}

fn spectral_bound(lap: &Tensor) -> f64 {
    let gershgorin = (0..lap.rows())
        .map(|i| lap.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    power_iteration_max_eigenvalue(lap, 1e-10, 5000)
        .map(|l| l.abs())
        .unwrap_or(gershgorin)
}

fn proximal_gradient(
    y: &MaskedMatrix,
    row_lap: Option<&Tensor>,
    col_lap: Option<&Tensor>,
    penalty: GraphPenalty,
    opts: &ProxOptions,
) -> Result<ProxResult> {
    if y.observed_count() == 0 {
        return Err(GmcError::param("completion", "mask", "no observed entries"));
    }
    for (name, v) in [
        ("gamma", opts.gamma),
        ("threshold", opts.threshold),
        ("alpha_r", penalty.alpha_r),
        ("alpha_c", penalty.alpha_c),
    ] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(GmcError::param(
                "completion",
                name,
                format!("must be non-negative, got {v}"),
            ));
        }
    }
    let alpha_r = if row_lap.is_some() {
        penalty.alpha_r
    } else {
        0.0
    };
    let alpha_c = if col_lap.is_some() {
        penalty.alpha_c
    } else {
        0.0
    };
    let lipschitz = opts.gamma
        + row_lap.map_or(0.0, |l| alpha_r * spectral_bound(l))
        + col_lap.map_or(0.0, |l| alpha_c * spectral_bound(l));
    let step = match opts.step {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => {
            return Err(GmcError::param(
                "completion",
                "step",
                format!("must be positive, got {s}"),
            ))
        }
        None if lipschitz > 0.0 => 1.0 / lipschitz,
        None => 1.0,
    };
    let tau = opts.threshold * step;

    let (m, n) = y.shape();
    let mut x = Tensor::zeros(m, n);
    let mut trace = Vec::new();
    let mut last: Option<(Tensor, Shrinkage)> = None;
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..opts.max_iters {
        iterations = it + 1;
        let mut grad = x.sub(y.values())?.hadamard(y.mask())?.scale(opts.gamma);
        if let (Some(l), true) = (row_lap, alpha_r != 0.0) {
            grad.axpy(alpha_r, &l.matmul(&x)?);
        }
        if let (Some(l), true) = (col_lap, alpha_c != 0.0) {
            grad.axpy(alpha_c, &x.matmul(l)?);
        }
        let mut pre = x.clone();
        pre.axpy(-step, &grad);
        let shrink = singular_value_shrink(&pre, tau)?;
        let next = shrink.matrix.clone();
        if !next.is_finite() {
            return Err(GmcError::numerical(
                "completion",
                format!("non-finite iterate at iteration {it}"),
            ));
        }
        let change = next.sub(&x)?.frobenius();
        let scale = next.frobenius().max(x.frobenius());
        x = next;
        trace.push(y.residual_norm(&x));
        last = Some((pre, shrink));
        if change == 0.0 || (scale > 0.0 && change / scale < opts.tol) {
            converged = true;
            break;
        }
    }
    let (final_pre_prox, final_shrinkage) =
        last.ok_or_else(|| GmcError::param("completion", "max_iters", "must be at least 1"))?;
    Ok(ProxResult {
        x,
        iterations,
        converged,
        residual_trace: trace,
        final_shrinkage,
        final_pre_prox,
        applied_threshold: tau,
        step,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorizedOptions {
    pub rank: usize,
    pub gamma: f64,
    pub max_iters: usize,
    /// Relative objective decrease below which the solver stops.
    pub tol: f64,
    pub initial_step: f64,
    pub seed: u64,
}

impl Default for FactorizedOptions {
    fn default() -> Self {
        FactorizedOptions {
            rank: 2,
            gamma: 1.0,
            max_iters: 2000,
            tol: 1e-6,
            initial_step: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FactorizedResult {
    pub factors: Factorization,
    /// Objective before the first step and after every accepted step.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl FactorizedResult {
    pub fn objective(&self) -> f64 {
        *self
            .objective_trace
            .last()
            .expect("trace holds the initial objective")
    }
}

const MAX_HALVINGS: usize = 20;

/// Regulariser applied to one factor.
#[derive(Clone, Copy)]
enum FactorPenalty<'a> {
    Frobenius,
    Dirichlet { lap: &'a Tensor, weight: f64 },
}

impl FactorPenalty<'_> {
    fn add(&self, g: &mut Graph, factor: Var) -> Result<Var> {
        match *self {
            FactorPenalty::Frobenius => {
                let f = g.frobenius_sq(factor)?;
                g.scale(f, 0.5)
            }
            FactorPenalty::Dirichlet { lap, weight } => {
                let d = g.dirichlet(lap, factor)?;
                g.scale(d, 0.5 * weight)
            }
        }
    }
}

fn factorized_loss(
    g: &mut Graph,
    y: &MaskedMatrix,
    w: Var,
    h: Var,
    gamma: f64,
    row: FactorPenalty,
    col: FactorPenalty,
) -> Result<Var> {
    let yv = g.constant(y.values().clone())?;
    let mask = g.constant(y.mask().clone())?;
    let x = g.matmul_nt(w, h)?;
    let diff = g.sub(x, yv)?;
    let masked = g.hadamard(diff, mask)?;
    let fit = g.frobenius_sq(masked)?;
    let fit = g.scale(fit, 0.5 * gamma)?;
    let rw = row.add(g, w)?;
    let rh = col.add(g, h)?;
    let reg = g.add(rw, rh)?;
    g.add(reg, fit)
}

/// `½||W||²_F + ½||H||²_F + (γ/2)||Ω∘(WHᵀ−Y)||²_F`
pub fn factorized_objective(y: &MaskedMatrix, f: &Factorization, gamma: f64) -> Result<f64> {
    let mut g = Graph::new();
    let w = g.constant(f.w.clone())?;
    let h = g.constant(f.h.clone())?;
    let loss = factorized_loss(
        &mut g,
        y,
        w,
        h,
        gamma,
        FactorPenalty::Frobenius,
        FactorPenalty::Frobenius,
    )?;
    Ok(g.value(loss).item())
}

/// Factorised objective with graph regularisers; see
/// [`factorized_graph_complete`] for the handling of a missing column graph.
pub fn factorized_graph_objective(
    y: &MaskedMatrix,
    f: &Factorization,
    gamma: f64,
    row_lap: &Tensor,
    col_lap: Option<&Tensor>,
    penalty: GraphPenalty,
) -> Result<f64> {
    let mut g = Graph::new();
    let w = g.constant(f.w.clone())?;
    let h = g.constant(f.h.clone())?;
    let loss = factorized_loss(
        &mut g,
        y,
        w,
        h,
        gamma,
        FactorPenalty::Dirichlet {
            lap: row_lap,
            weight: penalty.alpha_r,
        },
        col_penalty(col_lap, penalty),
    )?;
    Ok(g.value(loss).item())
}

fn col_penalty(col_lap: Option<&Tensor>, penalty: GraphPenalty) -> FactorPenalty<'_> {
    match col_lap {
        Some(lap) => FactorPenalty::Dirichlet {
            lap,
            weight: penalty.alpha_c,
        },
        None => FactorPenalty::Frobenius,
    }
}

pub fn factorized_complete(y: &MaskedMatrix, opts: &FactorizedOptions) -> Result<FactorizedResult> {
    descend(y, opts, FactorPenalty::Frobenius, FactorPenalty::Frobenius)
}

/// Minimises `(α_r/2) tr(WᵀL_rW) + (α_c/2) tr(HᵀL_cH) + (γ/2)||Ω∘(Y−WHᵀ)||²_F`.
/// Without a column graph the `H` term becomes `½||H||²_F`.
pub fn factorized_graph_complete(
    y: &MaskedMatrix,
    row_lap: &Tensor,
    col_lap: Option<&Tensor>,
    penalty: GraphPenalty,
    opts: &FactorizedOptions,
) -> Result<FactorizedResult> {
    let (m, n) = y.shape();
    check_operator("row_lap", row_lap, m)?;
    if let Some(c) = col_lap {
        check_operator("col_lap", c, n)?;
    }
    descend(
        y,
        opts,
        FactorPenalty::Dirichlet {
            lap: row_lap,
            weight: penalty.alpha_r,
        },
        col_penalty(col_lap, penalty),
    )
}

fn descend(
    y: &MaskedMatrix,
    opts: &FactorizedOptions,
    row: FactorPenalty,
    col: FactorPenalty,
) -> Result<FactorizedResult> {
    if opts.rank == 0 {
        return Err(GmcError::param("completion", "rank", "must be at least 1"));
    }
    if !(opts.initial_step > 0.0) {
        return Err(GmcError::param(
            "completion",
            "initial_step",
            "must be positive",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (w0, h0) = truncated_factors(y.values(), opts.rank, 1e-3, &mut rng)?;
    let mut f = Factorization { w: w0, h: h0 };

    let evaluate = |f: &Factorization| -> Result<(f64, Option<(Tensor, Tensor)>)> {
        let mut g = Graph::new();
        let w = g.param(f.w.clone());
        let h = g.param(f.h.clone());
        let loss = factorized_loss(&mut g, y, w, h, opts.gamma, row, col)?;
        let grads = g.backward(loss)?;
        Ok((
            g.value(loss).item(),
            Some((grads.get(w).clone(), grads.get(h).clone())),
        ))
    };
    let objective_only = |f: &Factorization| -> Option<f64> {
        let mut g = Graph::new();
        let w = g.constant(f.w.clone()).ok()?;
        let h = g.constant(f.h.clone()).ok()?;
        let loss = factorized_loss(&mut g, y, w, h, opts.gamma, row, col).ok()?;
        Some(g.value(loss).item())
    };

    let (mut obj, _) = evaluate(&f).map_err(|e| {
        GmcError::numerical(
            "completion",
            format!("objective not finite at iteration 0: {e}"),
        )
    })?;
    let mut trace = vec![obj];
    let mut step = opts.initial_step;
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..opts.max_iters {
        iterations = it + 1;
        let (_, grads) = evaluate(&f).map_err(|e| {
            GmcError::numerical(
                "completion",
                format!("gradient failed at iteration {it}: {e}"),
            )
        })?;
        let (gw, gh) = grads.expect("gradients requested");
        let mut accepted = None;
        let mut trial = step;
        for _ in 0..=MAX_HALVINGS {
            let mut cand = f.clone();
            cand.w.axpy(-trial, &gw);
            cand.h.axpy(-trial, &gh);
            if let Some(c) = objective_only(&cand) {
                if c <= obj {
                    accepted = Some((cand, c));
                    break;
                }
            }
            trial *= 0.5;
        }
        let Some((cand, c)) = accepted else {
            converged = true;
            break;
        };
        let decrease = obj - c;
        f = cand;
        obj = c;
        trace.push(obj);
        step = trial * 2.0;
        if decrease <= opts.tol * obj.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    Ok(FactorizedResult {
        factors: f,
        objective_trace: trace,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masked_matrix_zeroes_unobserved() {
        let y = MaskedMatrix::new(Tensor::ones(2, 2), Tensor::identity(2)).unwrap();
        assert_eq!(y.values(), &Tensor::identity(2));
        assert!(MaskedMatrix::new(Tensor::ones(2, 2), Tensor::filled(2, 2, 0.5)).is_err());
    }

    #[test]
    fn empty_mask_is_rejected() {
        let y = MaskedMatrix::new(Tensor::ones(2, 2), Tensor::zeros(2, 2)).unwrap();
        assert!(matches!(
            svt_complete(&y, &ProxOptions::default()),
            Err(GmcError::Parameter { .. })
        ));
    }

    #[test]
    fn all_zero_observations_give_zero() {
        let mask = Tensor::from_fn(3, 3, |i, j| ((i + j) % 2) as f64);
        let y = MaskedMatrix::new(Tensor::zeros(3, 3), mask).unwrap();
        let r = svt_complete(&y, &ProxOptions::default()).unwrap();
        assert_eq!(r.x, Tensor::zeros(3, 3));
        assert!(r.converged);
    }

    #[test]
    fn fully_observed_small_threshold_reproduces_data() {
        let full = Tensor::from_fn(4, 3, |i, j| ((i * 3 + j) as f64).cos());
        let y = MaskedMatrix::new(full.clone(), Tensor::ones(4, 3)).unwrap();
        let opts = ProxOptions {
            threshold: 1e-9,
            ..ProxOptions::default()
        };
        let r = svt_complete(&y, &opts).unwrap();
        assert!(r.x.max_abs_diff(&full) < 1e-6);
    }

    #[test]
    fn zero_gamma_shrinks_factors() {
        let full = Tensor::from_fn(5, 4, |i, j| (i as f64 - 2.0) * (j as f64 + 1.0));
        let y = MaskedMatrix::new(full, Tensor::ones(5, 4)).unwrap();
        let opts = FactorizedOptions {
            gamma: 0.0,
            max_iters: 200,
            ..FactorizedOptions::default()
        };
        let r = factorized_complete(&y, &opts).unwrap();
        let start = r.objective_trace[0];
        assert!(r.objective() < 1e-6 * start, "{} vs {start}", r.objective());
        assert!(r.factors.w.max_abs() < 1e-3);
    }
}

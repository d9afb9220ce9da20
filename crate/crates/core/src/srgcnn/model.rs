use crate::autodiff::{Graph, Var};
use crate::completion::PenaltyWeights;
use crate::data::MaskedDataset;
use crate::error::{GmcError, Result};
use crate::graph::chebyshev_stack_var;
use crate::tensor::Tensor;

use super::ModelParams;

#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    pub w: [Var; 4],
    pub u: [Var; 4],
    pub b: [Var; 4],
}

/// Tape handles for every parameter block; gate arrays are ordered
/// input, forget, output, candidate.
#[derive(Clone, Debug)]
pub struct ParamVars {
    pub cheb_coeffs: Vec<Var>,
    pub lstm: LstmVars,
    pub out_proj: Var,
    pub out_bias: Var,
    pub w0: Var,
    pub h: Var,
}

impl ParamVars {
    /// Registers every block of `params` as a trainable leaf.
    pub fn register(g: &mut Graph, params: &ModelParams) -> Result<ParamVars> {
        let vars = params
            .blocks()
            .into_iter()
            .map(|(_, t)| g.try_param(t.clone()))
            .collect::<Result<Vec<_>>>()?;
        ParamVars::from_slice(params.cheb_coeffs.len(), &vars)
    }

    /// Interprets `vars` as blocks in [`ModelParams::blocks`] order.
    pub fn from_slice(cheb_terms: usize, vars: &[Var]) -> Result<ParamVars> {
        if vars.len() != cheb_terms + 16 {
            return Err(GmcError::dim(
                "srgcnn::ParamVars",
                format!("{} variables for {cheb_terms} Chebyshev terms", vars.len()),
            ));
        }
        let rest = &vars[cheb_terms..];
        Ok(ParamVars {
            cheb_coeffs: vars[..cheb_terms].to_vec(),
            lstm: LstmVars {
                w: [rest[0], rest[1], rest[2], rest[3]],
                u: [rest[4], rest[5], rest[6], rest[7]],
                b: [rest[8], rest[9], rest[10], rest[11]],
            },
            out_proj: rest[12],
            out_bias: rest[13],
            w0: rest[14],
            h: rest[15],
        })
    }

    /// All handles in [`ModelParams::blocks`] order.
    pub fn all(&self) -> Vec<Var> {
        let mut out = self.cheb_coeffs.clone();
        out.extend(self.lstm.w);
        out.extend(self.lstm.u);
        out.extend(self.lstm.b);
        out.extend([self.out_proj, self.out_bias, self.w0, self.h]);
        out
    }
}

/// `tanh(Σ_k T_k(L̃) W_t Θ_k)` where `scaled` holds `L̃`.
pub fn gcn_features(g: &mut Graph, scaled: Var, w_t: Var, coeffs: &[Var]) -> Result<Var> {
    let Some(order) = coeffs.len().checked_sub(1) else {
        return Err(GmcError::dim(
            "srgcnn::gcn_features",
            "no Chebyshev coefficients",
        ));
    };
    let (m, r) = g.shape(w_t);
    if g.shape(scaled) != (m, m) {
        return Err(GmcError::dim(
            "srgcnn::gcn_features",
            format!("operator {:?} for {m} rows", g.shape(scaled)),
        ));
    }
    let q = g.shape(coeffs[0]).1;
    for (k, &c) in coeffs.iter().enumerate() {
        if g.shape(c) != (r, q) {
            return Err(GmcError::dim(
                "srgcnn::gcn_features",
                format!("coefficient {k} is {:?}, expected {r}x{q}", g.shape(c)),
            ));
        }
    }
    let stack = chebyshev_stack_var(g, scaled, w_t, order)?;
    let mut acc = g.matmul(stack[0], coeffs[0])?;
    for k in 1..=order {
        let term = g.matmul(stack[k], coeffs[k])?;
        acc = g.add(acc, term)?;
    }
    g.tanh(acc)
}

/// One LSTM update applied to every row with shared weights.
pub fn lstm_step(g: &mut Graph, cell: &LstmVars, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
    let mut gates = [x; 4];
    for (k, gate) in gates.iter_mut().enumerate() {
        let xw = g.matmul(x, cell.w[k])?;
        let hu = g.matmul(h, cell.u[k])?;
        let pre = g.add(xw, hu)?;
        *gate = g.add_row(pre, cell.b[k])?;
    }
    let i = g.sigmoid(gates[0])?;
    let f = g.sigmoid(gates[1])?;
    let o = g.sigmoid(gates[2])?;
    let cand = g.tanh(gates[3])?;
    let keep = g.hadamard(f, c)?;
    let write = g.hadamard(i, cand)?;
    let c_next = g.add(keep, write)?;
    let squashed = g.tanh(c_next)?;
    let h_next = g.hadamard(o, squashed)?;
    Ok((h_next, c_next))
}

fn at_step(t: usize, e: GmcError) -> GmcError {
    match e {
        GmcError::Numerical { module, detail } => GmcError::Numerical {
            module,
            detail: format!("diffusion step {t}: {detail}"),
        },
        other => other,
    }
}

/// Runs `steps` diffusion updates from `W0` and returns `W_T`.
pub fn diffuse(g: &mut Graph, p: &ParamVars, scaled: Var, steps: usize) -> Result<Var> {
    if steps == 0 {
        return Err(GmcError::param(
            "srgcnn::diffuse",
            "steps",
            "must be at least 1",
        ));
    }
    let (m, _) = g.shape(p.w0);
    let hidden = g.shape(p.lstm.u[0]).0;
    let mut h = g.constant(Tensor::zeros(m, hidden))?;
    let mut c = g.constant(Tensor::zeros(m, hidden))?;
    let mut w = p.w0;
    for t in 0..steps {
        let step = |g: &mut Graph| -> Result<(Var, Var, Var)> {
            let x = gcn_features(g, scaled, w, &p.cheb_coeffs)?;
            let (h_next, c_next) = lstm_step(g, &p.lstm, x, h, c)?;
            let proj = g.matmul(h_next, p.out_proj)?;
            let dw = g.add_row(proj, p.out_bias)?;
            let w_next = g.add(w, dw)?;
            Ok((w_next, h_next, c_next))
        };
        (w, h, c) = step(g).map_err(|e| at_step(t, e))?;
    }
    Ok(w)
}

/// The five loss terms, each already multiplied by its weight.
#[derive(Clone, Debug)]
pub struct LossTerms {
    pub total: Var,
    pub dirichlet: Var,
    pub w_norm: Var,
    pub h_norm: Var,
    pub reconstruction: Var,
    /// `None` when the label weight is zero.
    pub classification: Option<Var>,
}

/// `(γa/2) tr(WᵀLW) + (γb/2)||W||² + (γc/2)||H||² + (γd/2)||Ωa∘(Z − WHᵀ)||²
/// + γe · BCE(Ωb)`, with `L` the normalised Laplacian and the logits taken
/// from the label columns of `WHᵀ`.
pub fn loss_eq6(
    g: &mut Graph,
    w: Var,
    h: Var,
    ds: &MaskedDataset,
    lap_norm: &Tensor,
    weights: &PenaltyWeights,
) -> Result<LossTerms> {
    let (n, c) = (ds.n_features(), ds.n_labels());
    let (m, r) = g.shape(w);
    if g.shape(h) != (n + c, r) || m != ds.rows() {
        return Err(GmcError::dim(
            "srgcnn::loss_eq6",
            format!(
                "W {:?}, H {:?} against a {}x{} dataset",
                g.shape(w),
                g.shape(h),
                ds.rows(),
                n + c
            ),
        ));
    }
    let d = g.dirichlet(lap_norm, w)?;
    let dirichlet = g.scale(d, weights.gamma_a / 2.0)?;
    let wn = g.frobenius_sq(w)?;
    let w_norm = g.scale(wn, weights.gamma_b / 2.0)?;
    let hn = g.frobenius_sq(h)?;
    let h_norm = g.scale(hn, weights.gamma_c / 2.0)?;

    let h_feat = g.row_slice(h, 0, n)?;
    let x_feat = g.matmul_nt(w, h_feat)?;
    let omega_a = g.constant(ds.omega_a.clone())?;
    let seen = g.hadamard(x_feat, omega_a)?;
    let targets = g.constant(ds.features())?;
    let resid = g.sub(seen, targets)?;
    let rf = g.frobenius_sq(resid)?;
    let reconstruction = g.scale(rf, weights.gamma_d / 2.0)?;

    let mut total = g.add(dirichlet, w_norm)?;
    total = g.add(total, h_norm)?;
    total = g.add(total, reconstruction)?;
    let classification = if weights.gamma_e != 0.0 {
        let h_lab = g.row_slice(h, n, n + c)?;
        let logits = g.matmul_nt(w, h_lab)?;
        let label_cols: Vec<usize> = (n..n + c).collect();
        let bce = g.masked_bce(logits, &ds.z.select_cols(&label_cols), &ds.omega_b)?;
        let term = g.scale(bce, weights.gamma_e)?;
        total = g.add(total, term)?;
        Some(term)
    } else {
        None
    };
    Ok(LossTerms {
        total,
        dirichlet,
        w_norm,
        h_norm,
        reconstruction,
        classification,
    })
}

use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::data::MaskedDataset;
use crate::error::{GmcError, Result};
use crate::graph::{canonical_row_order, laplacians, LaplacianSet, PopulationGraph};
use crate::tensor::Tensor;

use super::model::{diffuse, loss_eq6, ParamVars};
use super::{ModelParams, TrainConfig};

/// Adaptive-moment optimiser over a fixed list of parameter blocks.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Adam {
    pub fn new(learning_rate: f64, shapes: &[(usize, usize)]) -> Adam {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect(),
            second: shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect(),
        }
    }

    pub fn update(&mut self, params: Vec<&mut Tensor>, grads: &[&Tensor]) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        for (k, p) in params.into_iter().enumerate() {
            let g = grads[k].data();
            let m = self.first[k].data_mut();
            let v = self.second[k].data_mut();
            for (i, x) in p.data_mut().iter_mut().enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                *x -= self.learning_rate * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

/// Loss of one epoch, evaluated before that epoch's update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub total: f64,
    pub dirichlet: f64,
    pub w_norm: f64,
    pub h_norm: f64,
    pub reconstruction: f64,
    pub classification: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    EarlyStopped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
    pub stop: StopReason,
}

impl TrainTrace {
    pub fn initial_loss(&self) -> f64 {
        self.epochs.first().map_or(f64::NAN, |e| e.total)
    }

    pub fn final_loss(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |e| e.total)
    }
}

#[derive(Clone, Debug)]
pub struct Fit {
    pub params: ModelParams,
    pub trace: TrainTrace,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// Normalised features, `m x n`, observed entries passed through.
    pub imputed: Tensor,
    /// Label probabilities, `m x c`.
    pub label_probs: Tensor,
}

impl Prediction {
    /// Probabilities of the first label column.
    pub fn positive_probs(&self) -> Vec<f64> {
        self.label_probs.column(0)
    }
}

/// Dataset, graph and operators laid out in canonical row order.
struct Canonical {
    perm: Vec<usize>,
    ds: MaskedDataset,
    laps: LaplacianSet,
}

fn canonicalize(ds: &MaskedDataset, graph: &PopulationGraph) -> Result<Canonical> {
    if graph.node_count() != ds.rows() {
        return Err(GmcError::dim(
            "srgcnn",
            format!(
                "graph has {} nodes, dataset {} rows",
                graph.node_count(),
                ds.rows()
            ),
        ));
    }
    if ds.n_features() == 0 || ds.n_labels() == 0 {
        return Err(GmcError::invalid(
            "srgcnn",
            "dataset needs at least one feature and one label column",
        ));
    }
    let perm = canonical_row_order(&[&ds.z, &ds.omega_a, &ds.omega_b], graph.adjacency());
    let laps = laplacians(&graph.permuted(&perm))?;
    Ok(Canonical {
        ds: ds.permuted(&perm),
        laps,
        perm,
    })
}

fn check_shapes(params: &ModelParams, cfg: &TrainConfig, ds: &MaskedDataset) -> Result<()> {
    let r = params.rank();
    let expected = [
        ("w0", params.w0.shape(), (ds.rows(), r)),
        ("h", params.h.shape(), (ds.n_features() + ds.n_labels(), r)),
    ];
    for (name, got, want) in expected {
        if got != want {
            return Err(GmcError::dim(
                "srgcnn",
                format!("{name} is {got:?}, expected {want:?}"),
            ));
        }
    }
    if params.cheb_coeffs.len() != cfg.cheb_order + 1 {
        return Err(GmcError::dim(
            "srgcnn",
            format!(
                "{} Chebyshev coefficients for order {}",
                params.cheb_coeffs.len(),
                cfg.cheb_order
            ),
        ));
    }
    Ok(())
}

/// Full-batch training of the recurrent completion model.
///
/// Every row takes part (transductive setting); only labels under
/// `omega_b` enter the loss. Computation runs in a content-derived row
/// order, so permuting the rows of `ds` and the nodes of `graph` together
/// permutes the fitted `W0` and all predictions exactly.
pub fn train(ds: &MaskedDataset, graph: &PopulationGraph, cfg: &TrainConfig) -> Result<Fit> {
    cfg.validate()?;
    let canon = canonicalize(ds, graph)?;
    if cfg.weights.gamma_e != 0.0 && canon.ds.omega_b.sum() == 0.0 {
        return Err(GmcError::invalid(
            "srgcnn::train",
            "no training labels under omega_b",
        ));
    }
    let mut params = ModelParams::init(&canon.ds.z, cfg)?;
    let shapes: Vec<(usize, usize)> = params.blocks().iter().map(|(_, t)| t.shape()).collect();
    let mut adam = Adam::new(cfg.learning_rate, &shapes);

    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    let mut stop = StopReason::Completed;
    for epoch in 0..cfg.epochs {
        let diverged = |detail: String, records: &[EpochRecord]| GmcError::Diverged {
            epoch,
            detail,
            losses: records.iter().map(|r| r.total).collect(),
        };
        let mut g = Graph::new();
        let outcome = (|| -> Result<_> {
            let vars = ParamVars::register(&mut g, &params)?;
            let scaled = g.constant(canon.laps.scaled.clone())?;
            let w = diffuse(&mut g, &vars, scaled, cfg.diffusion_steps)?;
            let terms = loss_eq6(
                &mut g,
                w,
                vars.h,
                &canon.ds,
                &canon.laps.normalized,
                &cfg.weights,
            )?;
            let grads = g.backward(terms.total)?;
            Ok((vars, terms, grads))
        })();
        let (vars, terms, grads) = match outcome {
            Ok(v) => v,
            Err(GmcError::Numerical { detail, .. }) => return Err(diverged(detail, &records)),
            Err(e) => return Err(e),
        };
        let value = |v| g.value(v).item();
        let record = EpochRecord {
            epoch,
            total: value(terms.total),
            dirichlet: value(terms.dirichlet),
            w_norm: value(terms.w_norm),
            h_norm: value(terms.h_norm),
            reconstruction: value(terms.reconstruction),
            classification: terms.classification.map_or(0.0, value),
        };
        records.push(record);

        let grad_refs: Vec<&Tensor> = vars.all().into_iter().map(|v| grads.get(v)).collect();
        if grad_refs.iter().any(|t| !t.is_finite()) {
            return Err(diverged("non-finite gradient".into(), &records));
        }
        adam.update(params.blocks_mut(), &grad_refs);

        if record.total < best - cfg.min_delta {
            best = record.total;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience && epoch + 1 < cfg.epochs {
                log::info!(
                    "early stop at epoch {epoch}: no improvement for {} epochs",
                    cfg.patience
                );
                stop = StopReason::EarlyStopped;
                break;
            }
        }
    }
    if !params.is_finite() {
        return Err(GmcError::Diverged {
            epoch: records.len(),
            detail: "non-finite parameters after the last update".into(),
            losses: records.iter().map(|r| r.total).collect(),
        });
    }
    params.w0 = params.w0.scatter_rows(&canon.perm);
    Ok(Fit {
        params,
        trace: TrainTrace {
            epochs: records,
            stop,
        },
    })
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Completes `ds` with fitted parameters: `X = W_T Hᵀ`.
pub fn predict(
    params: &ModelParams,
    cfg: &TrainConfig,
    ds: &MaskedDataset,
    graph: &PopulationGraph,
) -> Result<Prediction> {
    check_shapes(params, cfg, ds)?;
    let canon = canonicalize(ds, graph)?;
    let mut local = params.clone();
    local.w0 = params.w0.select_rows(&canon.perm);
    let mut g = Graph::new();
    let vars = ParamVars::register(&mut g, &local)?;
    let scaled = g.constant(canon.laps.scaled.clone())?;
    let w = diffuse(&mut g, &vars, scaled, cfg.diffusion_steps)?;
    let x = g.value(w).matmul_nt(&local.h)?.scatter_rows(&canon.perm);

    let n = ds.n_features();
    let imputed = Tensor::from_fn(ds.rows(), n, |i, j| {
        if ds.omega_a.get(i, j) == 1.0 {
            ds.z.get(i, j)
        } else {
            x.get(i, j)
        }
    });
    let label_probs = Tensor::from_fn(ds.rows(), ds.n_labels(), |i, k| sigmoid(x.get(i, n + k)));
    Ok(Prediction {
        imputed,
        label_probs,
    })
}

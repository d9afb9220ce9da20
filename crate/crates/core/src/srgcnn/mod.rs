//! Recurrent graph-convolutional matrix completion.
//!
//! The row factor `W` is refined by a learned diffusion: at every step a
//! Chebyshev graph convolution summarises `W_t` into per-row features, a
//! shared LSTM cell turns them into a hidden state and a linear readout
//! emits the increment `dW_t`. The column factor `H` is a free parameter.
//! Features and labels are recovered together from `X = W_T Hᵀ`.

mod checkpoint;
mod model;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use model::{diffuse, gcn_features, loss_eq6, lstm_step, LossTerms, LstmVars, ParamVars};
pub use train::{predict, train, Adam, EpochRecord, Fit, Prediction, StopReason, TrainTrace};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::completion::PenaltyWeights;
use crate::error::{GmcError, Result};
use crate::linalg::truncated_factors;
use crate::tensor::Tensor;

/// Hyper-parameters of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Factor rank `r`.
    pub rank: usize,
    /// Chebyshev order `p` (the filter has `p + 1` terms).
    pub cheb_order: usize,
    /// Width `q` of the graph-convolution output.
    pub gcn_features: usize,
    /// LSTM hidden size `h`.
    pub hidden_units: usize,
    pub learning_rate: f64,
    /// Number of diffusion steps `T`.
    pub diffusion_steps: usize,
    pub epochs: usize,
    /// Stop once the loss has not improved by `min_delta` for this many epochs.
    pub patience: usize,
    pub min_delta: f64,
    pub weights: PenaltyWeights,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// Published settings for the MCI conversion cohort.
    fn default() -> Self {
        TrainConfig {
            rank: 156,
            cheb_order: 18,
            gcn_features: 36,
            hidden_units: 36,
            learning_rate: 0.00089,
            diffusion_steps: 10,
            epochs: 500,
            patience: 50,
            min_delta: 1e-6,
            weights: PenaltyWeights::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Small model that trains in well under a second on a ~100-row table.
    pub fn desk() -> Self {
        TrainConfig {
            rank: 4,
            cheb_order: 3,
            gcn_features: 8,
            hidden_units: 8,
            learning_rate: 0.01,
            diffusion_steps: 4,
            epochs: 300,
            weights: PenaltyWeights::desk(),
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("rank", self.rank),
            ("gcn_features", self.gcn_features),
            ("hidden_units", self.hidden_units),
            ("diffusion_steps", self.diffusion_steps),
            ("epochs", self.epochs),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(GmcError::param(
                    "srgcnn::TrainConfig",
                    name,
                    "must be positive",
                ));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(GmcError::param(
                "srgcnn::TrainConfig",
                "learning_rate",
                format!("must be positive, got {}", self.learning_rate),
            ));
        }
        if !(self.min_delta >= 0.0) {
            return Err(GmcError::param(
                "srgcnn::TrainConfig",
                "min_delta",
                "must be non-negative",
            ));
        }
        self.weights.validate()
    }
}

/// Weights of the shared LSTM cell. Gate inputs are `x W_* + h U_* + b_*`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub w_i: Tensor,
    pub w_f: Tensor,
    pub w_o: Tensor,
    pub w_g: Tensor,
    pub u_i: Tensor,
    pub u_f: Tensor,
    pub u_o: Tensor,
    pub u_g: Tensor,
    pub b_i: Tensor,
    pub b_f: Tensor,
    pub b_o: Tensor,
    pub b_g: Tensor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// `p + 1` filter matrices, each `r x q`.
    pub cheb_coeffs: Vec<Tensor>,
    pub lstm: LstmParams,
    /// `h x r`
    pub out_proj: Tensor,
    /// `1 x r`
    pub out_bias: Tensor,
    /// Initial row factor, `m x r`, in the row order of the training data.
    pub w0: Tensor,
    /// Column factor, `(n + c) x r`.
    pub h: Tensor,
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize, gain: f64) -> Tensor {
    let bound = gain * (6.0 / (rows + cols) as f64).sqrt();
    Tensor::from_fn(rows, cols, |_, _| rng.gen_range(-bound..bound))
}

impl ModelParams {
    /// Fresh parameters. `W0` and `H` come from the truncated SVD of the
    /// zero-filled `z`; network weights are Glorot-uniform from `seed`.
    pub fn init(z: &Tensor, cfg: &TrainConfig) -> Result<ModelParams> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let (r, q, h) = (cfg.rank, cfg.gcn_features, cfg.hidden_units);
        let (w0, hf) = truncated_factors(z, r, 0.01, &mut rng)?;
        let cheb_gain = 1.0 / (cfg.cheb_order + 1) as f64;
        let cheb_coeffs = (0..=cfg.cheb_order)
            .map(|_| glorot(&mut rng, r, q, cheb_gain))
            .collect();
        let lstm = LstmParams {
            w_i: glorot(&mut rng, q, h, 1.0),
            w_f: glorot(&mut rng, q, h, 1.0),
            w_o: glorot(&mut rng, q, h, 1.0),
            w_g: glorot(&mut rng, q, h, 1.0),
            u_i: glorot(&mut rng, h, h, 1.0),
            u_f: glorot(&mut rng, h, h, 1.0),
            u_o: glorot(&mut rng, h, h, 1.0),
            u_g: glorot(&mut rng, h, h, 1.0),
            b_i: Tensor::zeros(1, h),
            b_f: Tensor::ones(1, h),
            b_o: Tensor::zeros(1, h),
            b_g: Tensor::zeros(1, h),
        };
        let out_proj = glorot(&mut rng, h, r, 0.1);
        Ok(ModelParams {
            cheb_coeffs,
            lstm,
            out_proj,
            out_bias: Tensor::zeros(1, r),
            w0,
            h: hf,
        })
    }

    /// All parameter blocks in a fixed order with stable names.
    pub fn blocks(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = self
            .cheb_coeffs
            .iter()
            .enumerate()
            .map(|(k, t)| (format!("cheb_{k}"), t))
            .collect();
        let l = &self.lstm;
        for (name, t) in [
            ("lstm_w_i", &l.w_i),
            ("lstm_w_f", &l.w_f),
            ("lstm_w_o", &l.w_o),
            ("lstm_w_g", &l.w_g),
            ("lstm_u_i", &l.u_i),
            ("lstm_u_f", &l.u_f),
            ("lstm_u_o", &l.u_o),
            ("lstm_u_g", &l.u_g),
            ("lstm_b_i", &l.b_i),
            ("lstm_b_f", &l.b_f),
            ("lstm_b_o", &l.b_o),
            ("lstm_b_g", &l.b_g),
            ("out_proj", &self.out_proj),
            ("out_bias", &self.out_bias),
            ("w0", &self.w0),
            ("h", &self.h),
        ] {
            out.push((name.to_string(), t));
        }
        out
    }

    /// Mutable blocks in the order of [`ModelParams::blocks`].
    pub fn blocks_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self.cheb_coeffs.iter_mut().collect();
        let l = &mut self.lstm;
        out.extend([
            &mut l.w_i,
            &mut l.w_f,
            &mut l.w_o,
            &mut l.w_g,
            &mut l.u_i,
            &mut l.u_f,
            &mut l.u_o,
            &mut l.u_g,
            &mut l.b_i,
            &mut l.b_f,
            &mut l.b_o,
            &mut l.b_g,
            &mut self.out_proj,
            &mut self.out_bias,
            &mut self.w0,
            &mut self.h,
        ]);
        out
    }

    /// Rebuilds parameters from blocks in [`ModelParams::blocks`] order.
    pub fn from_blocks(cheb_terms: usize, blocks: Vec<Tensor>) -> Result<ModelParams> {
        if blocks.len() != cheb_terms + 16 {
            return Err(GmcError::dim(
                "srgcnn::ModelParams",
                format!("{} blocks for {cheb_terms} Chebyshev terms", blocks.len()),
            ));
        }
        let mut it = blocks.into_iter();
        let cheb_coeffs = it.by_ref().take(cheb_terms).collect();
        let mut next = || it.next().expect("length checked above");
        let lstm = LstmParams {
            w_i: next(),
            w_f: next(),
            w_o: next(),
            w_g: next(),
            u_i: next(),
            u_f: next(),
            u_o: next(),
            u_g: next(),
            b_i: next(),
            b_f: next(),
            b_o: next(),
            b_g: next(),
        };
        Ok(ModelParams {
            cheb_coeffs,
            lstm,
            out_proj: next(),
            out_bias: next(),
            w0: next(),
            h: next(),
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|(_, t)| t.is_finite())
    }

    pub fn rank(&self) -> usize {
        self.w0.cols()
    }
}

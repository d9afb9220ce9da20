use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{assemble, MaskedDataset, RawTable};
use crate::completion::MaskedMatrix;
use crate::error::{GmcError, Result};
use crate::graph::{Edge, PopulationGraph, SubjectMeta};
use crate::tensor::Tensor;

/// Parameters of the planted low-rank generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub m: usize,
    pub n: usize,
    pub rank: usize,
    pub noise: f64,
    pub observed_frac: f64,
    /// Scale of the logit `label_signal * U w` (w has unit norm).
    pub label_signal: f64,
    pub age_base: f64,
    pub age_effect: f64,
    pub age_noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            m: 120,
            n: 20,
            rank: 2,
            noise: 0.1,
            observed_frac: 0.5,
            label_signal: 5.5,
            age_base: 72.0,
            age_effect: 4.0,
            age_noise: 2.0,
            seed: 0,
        }
    }
}

/// Everything the generator knows that a learner must not see.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Complete feature matrix `U V^T + noise`, original units.
    pub features: Tensor,
    pub u: Tensor,
    pub v: Tensor,
    pub w: Vec<f64>,
    /// Conversion probability of every subject.
    pub probabilities: Vec<f64>,
    pub labels: Vec<u8>,
}

#[derive(Clone, Debug)]
pub struct SynthInstance {
    pub config: SynthConfig,
    /// Observed table: masked features, all labels, demographics.
    pub raw: RawTable,
    /// `raw` assembled with every row in the training set.
    pub dataset: MaskedDataset,
    pub truth: GroundTruth,
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Uniform mask with exactly `round(frac * m * n)` ones and at least one
/// observed entry in every row and column.
pub(crate) fn covering_mask(m: usize, n: usize, frac: f64, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let total = m * n;
    let count = (frac * total as f64).round() as usize;
    let cover = m.max(n);
    if count < cover {
        return Err(GmcError::param(
            "data::synth",
            "observed_frac",
            format!("{count} observed entries cannot touch all {m} rows and {n} columns"),
        ));
    }
    let mut rows: Vec<usize> = (0..m).collect();
    let mut cols: Vec<usize> = (0..n).collect();
    rows.shuffle(rng);
    cols.shuffle(rng);
    let mut mask = Tensor::zeros(m, n);
    for t in 0..cover {
        mask.set(rows[t % m], cols[t % n], 1.0);
    }
    let mut rest: Vec<usize> = (0..total).filter(|&k| mask.data()[k] == 0.0).collect();
    rest.shuffle(rng);
    for &k in rest.iter().take(count - cover) {
        mask.data_mut()[k] = 1.0;
    }
    Ok(mask)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Planted instance: `Y = U V^T + noise * E`, labels drawn from
/// `sigmoid(label_signal * U w)` and ages shifted by `age_effect` for
/// converters, so both the features and the population graph carry label
/// information.
pub fn synth_instance(cfg: &SynthConfig) -> Result<SynthInstance> {
    let SynthConfig { m, n, rank, .. } = *cfg;
    if m == 0 || n == 0 {
        return Err(GmcError::param(
            "data::synth",
            "shape",
            "m and n must be positive",
        ));
    }
    if rank == 0 || rank > m.min(n) {
        return Err(GmcError::param(
            "data::synth",
            "rank",
            format!("must lie in 1..={}, got {rank}", m.min(n)),
        ));
    }
    if !(cfg.observed_frac > 0.0 && cfg.observed_frac <= 1.0) {
        return Err(GmcError::param(
            "data::synth",
            "observed_frac",
            format!("must lie in (0, 1], got {}", cfg.observed_frac),
        ));
    }
    if !(cfg.noise >= 0.0 && cfg.age_noise >= 0.0) {
        return Err(GmcError::param(
            "data::synth",
            "noise",
            "must be non-negative",
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let u = gaussian(&mut rng, m, rank);
    let v = gaussian(&mut rng, n, rank);
    let mut w: Vec<f64> = (0..rank).map(|_| rng.sample(StandardNormal)).collect();
    let norm = w
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(f64::MIN_POSITIVE);
    w.iter_mut().for_each(|x| *x /= norm);

    let noise = gaussian(&mut rng, m, n);
    let mut features = u.matmul_nt(&v)?;
    features.axpy(cfg.noise, &noise);

    let mut probabilities = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    for i in 0..m {
        let logit: f64 = u.row(i).iter().zip(&w).map(|(a, b)| a * b).sum();
        let p = sigmoid(cfg.label_signal * logit);
        probabilities.push(p);
        labels.push(u8::from(rng.gen::<f64>() < p));
    }
    let meta: Vec<SubjectMeta> = labels
        .iter()
        .map(|&y| {
            let e: f64 = rng.sample(StandardNormal);
            SubjectMeta {
                age: cfg.age_base + cfg.age_effect * f64::from(y) + cfg.age_noise * e,
                gender: if rng.gen::<bool>() { "F" } else { "M" }.to_string(),
            }
        })
        .collect();
    let mask = covering_mask(m, n, cfg.observed_frac, &mut rng)?;

    let raw = RawTable {
        feature_names: (0..n).map(|j| format!("f{j:02}")).collect(),
        values: (0..m)
            .map(|i| {
                (0..n)
                    .map(|j| (mask.get(i, j) == 1.0).then(|| features.get(i, j)))
                    .collect()
            })
            .collect(),
        labels: labels.iter().map(|&y| Some(y)).collect(),
        meta,
        label_name: "label".into(),
    };
    let all: Vec<usize> = (0..m).collect();
    let dataset = assemble(&raw, &all, &[], cfg.seed)?;
    Ok(SynthInstance {
        config: cfg.clone(),
        raw,
        dataset,
        truth: GroundTruth {
            features,
            u,
            v,
            w,
            probabilities,
            labels,
        },
    })
}

/// A matrix whose columns are smooth signals over a path graph.
#[derive(Clone, Debug)]
pub struct GraphSmoothInstance {
    pub truth: Tensor,
    pub observed: MaskedMatrix,
    /// Path graph over the rows.
    pub graph: PopulationGraph,
}

impl GraphSmoothInstance {
    /// Complement of the observation mask.
    pub fn held_out(&self) -> Tensor {
        self.observed.mask().map(|v| 1.0 - v)
    }

    /// RMSE of `x` against the truth over unobserved entries.
    pub fn held_out_rmse(&self, x: &Tensor) -> f64 {
        let hold = self.held_out();
        let count = hold.sum();
        let mut sq = 0.0;
        for k in 0..x.len() {
            let d = x.data()[k] - self.truth.data()[k];
            sq += hold.data()[k] * d * d;
        }
        (sq / count.max(1.0)).sqrt()
    }
}

/// Rows are samples of `rank` low-frequency cosines on a path of `m` nodes,
/// mixed into `n` columns with Gaussian loadings, plus i.i.d. noise.
pub fn graph_smooth_instance(
    m: usize,
    n: usize,
    rank: usize,
    noise: f64,
    observed_frac: f64,
    seed: u64,
) -> Result<GraphSmoothInstance> {
    if m < 2 || n == 0 || rank == 0 || rank > m.min(n) {
        return Err(GmcError::param(
            "data::graph_smooth_instance",
            "shape",
            format!("need m >= 2 and 1 <= rank <= min(m, n); got m={m}, n={n}, rank={rank}"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = Tensor::from_fn(m, rank, |i, k| {
        (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / m as f64).cos()
    });
    let loadings = gaussian(&mut rng, n, rank);
    let mut truth = basis.matmul_nt(&loadings)?;
    let e = gaussian(&mut rng, m, n);
    truth.axpy(noise, &e);
    let mask = covering_mask(m, n, observed_frac, &mut rng)?;
    let edges: Vec<Edge> = (0..m - 1)
        .map(|i| Edge {
            u: i,
            v: i + 1,
            weight: 1.0,
        })
        .collect();
    Ok(GraphSmoothInstance {
        observed: MaskedMatrix::observe(&truth, &mask)?,
        graph: PopulationGraph::from_edges(m, &edges)?,
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_covers_rows_and_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mask = covering_mask(30, 7, 0.25, &mut rng).unwrap();
        assert_eq!(mask.sum() as usize, (0.25 * 210.0_f64).round() as usize);
        for i in 0..30 {
            assert!(mask.row(i).contains(&1.0));
        }
        for j in 0..7 {
            assert!(mask.column(j).contains(&1.0));
        }
    }

    #[test]
    fn infeasible_mask_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(covering_mask(10, 10, 0.05, &mut rng).is_err());
    }
}

//! Finite-difference verification suite for every differentiable piece of
//! the library: each tape primitive on its own, the Chebyshev stack, and
//! the full recurrent-model loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::check::{check_gradients_with, BlockReport, FD_STEP};
use crate::autodiff::{Graph, Var};
use crate::completion::PenaltyWeights;
use crate::data::{assemble, synth_instance, SynthConfig};
use crate::error::{GmcError, Result};
use crate::graph::{chebyshev_stack_var, laplacians, similarity_graph, PopulationGraph};
use crate::par::Execution;
use crate::srgcnn::{diffuse, loss_eq6, ModelParams, ParamVars, TrainConfig};
use crate::tensor::Tensor;

pub const PRIMITIVE_TOLERANCE: f64 = 1e-6;
pub const MODEL_TOLERANCE: f64 = 1e-4;

/// Name of the end-to-end case.
pub const MODEL_CASE: &str = "model_loss";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradcheckConfig {
    pub seed: u64,
    /// Random instances per primitive case.
    pub trials: usize,
    /// Random instances of the end-to-end case.
    pub model_trials: usize,
    pub step: f64,
    /// Loss weights used by the end-to-end case.
    pub weights: PenaltyWeights,
    /// Test hook: adds 1.0 to one analytic gradient entry of this case.
    pub corrupt: Option<String>,
    pub execution: Execution,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            seed: 0,
            trials: 100,
            model_trials: 3,
            step: FD_STEP,
            weights: PenaltyWeights::default(),
            corrupt: None,
            execution: Execution::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub name: String,
    pub tolerance: f64,
    pub trials: usize,
    /// Worst error per input block over all trials.
    pub blocks: Vec<BlockReport>,
    pub passed: bool,
}

impl CaseReport {
    pub fn max_rel_err(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.max_rel_err)
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub cases: Vec<CaseReport>,
    pub passed: bool,
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

fn random_graph(rng: &mut ChaCha8Rng, m: usize) -> Result<PopulationGraph> {
    let mut a = Tensor::zeros(m, m);
    for i in 0..m {
        for j in i + 1..m {
            if rng.gen_bool(0.5) {
                let w = rng.gen_range(0.1..2.0);
                a.set(i, j, w);
                a.set(j, i, w);
            }
        }
    }
    PopulationGraph::from_adjacency(a)
}

/// `Σ out ∘ C` for a fixed random `C`, turning any node into a scalar.
fn project(g: &mut Graph, out: Var, weights: &Tensor) -> Result<Var> {
    let c = g.constant(weights.clone())?;
    let h = g.hadamard(out, c)?;
    g.sum(h)
}

type Build = Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var> + Sync>;

struct Case {
    inputs: Vec<(String, Tensor)>,
    build: Build,
}

fn named(blocks: Vec<(&str, Tensor)>) -> Vec<(String, Tensor)> {
    blocks
        .into_iter()
        .map(|(n, t)| (n.to_string(), t))
        .collect()
}

fn unary(
    rng: &mut ChaCha8Rng,
    a: (usize, usize),
    out: (usize, usize),
    f: fn(&mut Graph, Var) -> Result<Var>,
) -> Case {
    let c = uniform(rng, out.0, out.1);
    Case {
        inputs: named(vec![("a", uniform(rng, a.0, a.1))]),
        build: Box::new(move |g, v| {
            let out = f(g, v[0])?;
            project(g, out, &c)
        }),
    }
}

fn binary(
    rng: &mut ChaCha8Rng,
    a: (usize, usize),
    b: (usize, usize),
    out: (usize, usize),
    f: fn(&mut Graph, Var, Var) -> Result<Var>,
) -> Case {
    let c = uniform(rng, out.0, out.1);
    Case {
        inputs: named(vec![
            ("a", uniform(rng, a.0, a.1)),
            ("b", uniform(rng, b.0, b.1)),
        ]),
        build: Box::new(move |g, v| {
            let o = f(g, v[0], v[1])?;
            project(g, o, &c)
        }),
    }
}

const PRIMITIVES: [&str; 15] = [
    "matmul",
    "matmul_nt",
    "add",
    "sub",
    "hadamard",
    "sigmoid",
    "tanh",
    "scale",
    "add_row",
    "sum",
    "row_slice",
    "frobenius_sq",
    "dirichlet",
    "masked_bce",
    "chebyshev_stack",
];

fn primitive_case(name: &str, rng: &mut ChaCha8Rng) -> Result<Case> {
    Ok(match name {
        "matmul" => binary(rng, (3, 4), (4, 2), (3, 2), |g, a, b| g.matmul(a, b)),
        "matmul_nt" => binary(rng, (3, 4), (2, 4), (3, 2), |g, a, b| g.matmul_nt(a, b)),
        "add" => binary(rng, (3, 3), (3, 3), (3, 3), |g, a, b| g.add(a, b)),
        "sub" => binary(rng, (3, 3), (3, 3), (3, 3), |g, a, b| g.sub(a, b)),
        "hadamard" => binary(rng, (3, 3), (3, 3), (3, 3), |g, a, b| g.hadamard(a, b)),
        "add_row" => binary(rng, (4, 3), (1, 3), (4, 3), |g, a, b| g.add_row(a, b)),
        "sigmoid" => unary(rng, (5, 5), (5, 5), |g, a| g.sigmoid(a)),
        "tanh" => unary(rng, (5, 5), (5, 5), |g, a| g.tanh(a)),
        "scale" => unary(rng, (3, 4), (3, 4), |g, a| g.scale(a, -1.7)),
        "row_slice" => unary(rng, (5, 3), (3, 3), |g, a| g.row_slice(a, 1, 4)),
        "sum" => Case {
            inputs: named(vec![("a", uniform(rng, 3, 4))]),
            build: Box::new(|g, v| g.sum(v[0])),
        },
        "frobenius_sq" => Case {
            inputs: named(vec![("a", uniform(rng, 4, 3))]),
            build: Box::new(|g, v| g.frobenius_sq(v[0])),
        },
        "dirichlet" => {
            let lap = laplacians(&random_graph(rng, 6)?)?.unnormalized;
            Case {
                inputs: named(vec![("x", uniform(rng, 6, 2))]),
                build: Box::new(move |g, v| g.dirichlet(&lap, v[0])),
            }
        }
        "masked_bce" => {
            let targets = Tensor::from_fn(5, 2, |_, _| f64::from(rng.gen_bool(0.5)));
            let mut mask = Tensor::from_fn(5, 2, |_, _| f64::from(rng.gen_bool(0.6)));
            mask.set(0, 0, 1.0);
            Case {
                inputs: named(vec![("logits", uniform(rng, 5, 2).scale(3.0))]),
                build: Box::new(move |g, v| g.masked_bce(v[0], &targets, &mask)),
            }
        }
        "chebyshev_stack" => {
            let scaled = laplacians(&random_graph(rng, 6)?)?.scaled;
            let weights: Vec<Tensor> = (0..4).map(|_| uniform(rng, 6, 2)).collect();
            Case {
                inputs: named(vec![("x", uniform(rng, 6, 2))]),
                build: Box::new(move |g, v| {
                    let s = g.constant(scaled.clone())?;
                    let stack = chebyshev_stack_var(g, s, v[0], 3)?;
                    let mut total = project(g, stack[0], &weights[0])?;
                    for (t, w) in stack[1..].iter().zip(&weights[1..]) {
                        let p = project(g, *t, w)?;
                        total = g.add(total, p)?;
                    }
                    Ok(total)
                }),
            }
        }
        other => {
            return Err(GmcError::param(
                "gradcheck",
                "case",
                format!("unknown case `{other}`"),
            ))
        }
    })
}

/// Model dimensions of the end-to-end case.
pub fn model_config(seed: u64, weights: PenaltyWeights) -> TrainConfig {
    TrainConfig {
        rank: 3,
        cheb_order: 2,
        gcn_features: 4,
        hidden_units: 4,
        diffusion_steps: 2,
        weights,
        seed,
        ..TrainConfig::desk()
    }
}

/// Full loss through the diffusion on a 12-row table with six features and
/// one label column, a third of the labels hidden.
fn model_case(rng: &mut ChaCha8Rng, weights: PenaltyWeights) -> Result<Case> {
    let seed = rng.gen();
    let inst = synth_instance(&SynthConfig {
        m: 12,
        n: 6,
        rank: 2,
        observed_frac: 0.75,
        seed,
        ..SynthConfig::default()
    })?;
    let rows: Vec<usize> = (0..12).collect();
    let mut ds = assemble(&inst.raw, &rows, &[], seed)?;
    if ds.n_features() != 6 {
        return Err(GmcError::invalid(
            "gradcheck",
            format!("instance kept {} of 6 features", ds.n_features()),
        ));
    }
    // Hide the last third of the labels.
    for i in 8..12 {
        ds.z.set(i, 6, 0.0);
        ds.omega_b.set(i, 0, 0.0);
    }
    let graph = similarity_graph(&inst.raw.meta, 2.0)?;
    let laps = laplacians(&graph)?;
    let cfg = model_config(seed, weights);
    let params = ModelParams::init(&ds.z, &cfg)?;
    let cheb_terms = params.cheb_coeffs.len();
    let inputs: Vec<(String, Tensor)> = params
        .blocks()
        .into_iter()
        .map(|(name, t)| {
            let jitter = Tensor::from_fn(t.rows(), t.cols(), |_, _| rng.gen_range(-0.1..0.1));
            (name, t.add(&jitter).expect("same shape"))
        })
        .collect();
    let steps = cfg.diffusion_steps;
    Ok(Case {
        inputs,
        build: Box::new(move |g, v| {
            let vars = ParamVars::from_slice(cheb_terms, v)?;
            let scaled = g.constant(laps.scaled.clone())?;
            let w = diffuse(g, &vars, scaled, steps)?;
            Ok(loss_eq6(g, w, vars.h, &ds, &laps.normalized, &cfg.weights)?.total)
        }),
    })
}

fn merge(into: &mut Vec<BlockReport>, new: Vec<BlockReport>) {
    if into.is_empty() {
        *into = new;
        return;
    }
    for (a, b) in into.iter_mut().zip(new) {
        a.entries += b.entries;
        a.max_rel_err = a.max_rel_err.max(b.max_rel_err);
        a.max_abs_err = a.max_abs_err.max(b.max_abs_err);
        a.magnitude_floor = a.magnitude_floor.max(b.magnitude_floor);
    }
}

fn run_case(
    name: &str,
    tolerance: f64,
    trials: usize,
    cfg: &GradcheckConfig,
    mut make: impl FnMut(&mut ChaCha8Rng) -> Result<Case>,
) -> Result<CaseReport> {
    let salt = name
        .bytes()
        .fold(0u64, |h, b| h.wrapping_mul(31).wrapping_add(u64::from(b)));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ salt);
    let corrupt = cfg.corrupt.as_deref() == Some(name);
    let mut blocks = Vec::new();
    for _ in 0..trials {
        let case = make(&mut rng)?;
        let report = check_gradients_with(
            &case.inputs,
            cfg.step,
            tolerance,
            cfg.execution,
            |g, v| (case.build)(g, v),
            |grads, vars| {
                if corrupt {
                    grads.corrupt(vars[0], 0, 1.0);
                }
            },
        )?;
        merge(&mut blocks, report);
    }
    let passed = blocks.iter().all(|b| b.max_rel_err < tolerance);
    Ok(CaseReport {
        name: name.to_string(),
        tolerance,
        trials,
        blocks,
        passed,
    })
}

/// Runs every primitive case and the end-to-end model case.
pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    if cfg.trials == 0 || cfg.model_trials == 0 || !(cfg.step > 0.0) {
        return Err(GmcError::param(
            "gradcheck",
            "trials",
            "trial counts and step must be positive",
        ));
    }
    if let Some(name) = &cfg.corrupt {
        if name != MODEL_CASE && !PRIMITIVES.contains(&name.as_str()) {
            return Err(GmcError::param(
                "gradcheck",
                "corrupt",
                format!("unknown case `{name}`"),
            ));
        }
    }
    let mut cases = Vec::with_capacity(PRIMITIVES.len() + 1);
    for name in PRIMITIVES {
        cases.push(run_case(
            name,
            PRIMITIVE_TOLERANCE,
            cfg.trials,
            cfg,
            |rng| primitive_case(name, rng),
        )?);
    }
    let weights = cfg.weights;
    cases.push(run_case(
        MODEL_CASE,
        MODEL_TOLERANCE,
        cfg.model_trials,
        cfg,
        |rng| model_case(rng, weights),
    )?);
    let passed = cases.iter().all(|c| c.passed);
    Ok(GradcheckReport { cases, passed })
}

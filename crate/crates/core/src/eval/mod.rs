//! Metrics, stratified cross-validation, a logistic-regression baseline and
//! the feature-completeness ablation.

mod folds;
mod metrics;

pub use folds::{stratified_kfold, Fold, FoldPlan};
pub use metrics::{accuracy, roc_auc, Summary};

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::data::{assemble, MaskedDataset, RawTable};
use crate::error::{GmcError, Result};
use crate::graph::{
    knn_graph, similarity_graph, PopulationGraph, DEFAULT_AGE_THRESHOLD, DEFAULT_KNN_K,
};
use crate::par::{self, Execution};
use crate::srgcnn::{predict, train, Adam, TrainConfig};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphVariant {
    Similarity,
    Knn,
}

/// How the population graph is built from subject metadata.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    pub variant: GraphVariant,
    /// Neighbours per node for the age kNN graph.
    pub k: usize,
    /// Age difference (years) within which the similarity graph adds weight.
    pub age_threshold: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            variant: GraphVariant::Similarity,
            k: DEFAULT_KNN_K,
            age_threshold: DEFAULT_AGE_THRESHOLD,
        }
    }
}

impl GraphConfig {
    pub fn with_variant(self, variant: GraphVariant) -> Self {
        GraphConfig { variant, ..self }
    }

    pub fn build(&self, raw: &RawTable) -> Result<PopulationGraph> {
        match self.variant {
            GraphVariant::Similarity => similarity_graph(&raw.meta, self.age_threshold),
            GraphVariant::Knn => knn_graph(&raw.ages(), self.k),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "gmc-similarity")]
    GmcSimilarity,
    #[serde(rename = "gmc-knn")]
    GmcKnn,
    #[serde(rename = "logreg")]
    LogReg,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::GmcSimilarity, Method::GmcKnn, Method::LogReg];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::GmcSimilarity => "gmc-similarity",
            Method::GmcKnn => "gmc-knn",
            Method::LogReg => "logreg",
        }
    }

    pub fn graph_variant(self) -> Option<GraphVariant> {
        match self {
            Method::GmcSimilarity => Some(GraphVariant::Similarity),
            Method::GmcKnn => Some(GraphVariant::Knn),
            Method::LogReg => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = GmcError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                GmcError::param("eval::Method", "method", format!("unknown method `{s}`"))
            })
    }
}

/// Logistic regression on mean-imputed features.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogRegConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Weight of `½||w||²`.
    pub l2: f64,
    pub seed: u64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            epochs: 300,
            learning_rate: 0.05,
            l2: 1e-2,
            seed: 0,
        }
    }
}

/// Trains on the rows under `omega_b` and returns a probability per row.
///
/// Missing features are 0 in `ds.z`, which is the column mean after
/// z-scoring, so this is mean imputation followed by logistic regression.
pub fn baseline_logreg(ds: &MaskedDataset, cfg: &LogRegConfig) -> Result<Vec<f64>> {
    if cfg.epochs == 0 || !(cfg.learning_rate > 0.0) || !(cfg.l2 >= 0.0) {
        return Err(GmcError::param(
            "eval::baseline_logreg",
            "config",
            "epochs and learning rate must be positive, l2 non-negative",
        ));
    }
    let n = ds.n_features();
    let x = ds.features();
    let targets = ds.z.select_cols(&[n]);
    let mask = ds.omega_b.select_cols(&[0]);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = Tensor::from_fn(n, 1, |_, _| rng.gen_range(-0.01..0.01));
    let mut b = Tensor::zeros(1, 1);
    let mut adam = Adam::new(cfg.learning_rate, &[(n, 1), (1, 1)]);
    for _ in 0..cfg.epochs {
        let mut g = Graph::new();
        let xv = g.constant(x.clone())?;
        let wv = g.try_param(w.clone())?;
        let bv = g.try_param(b.clone())?;
        let xw = g.matmul(xv, wv)?;
        let logits = g.add_row(xw, bv)?;
        let bce = g.masked_bce(logits, &targets, &mask)?;
        let norm = g.frobenius_sq(wv)?;
        let reg = g.scale(norm, cfg.l2 / 2.0)?;
        let loss = g.add(bce, reg)?;
        let grads = g.backward(loss)?;
        let (gw, gb) = (grads.get(wv).clone(), grads.get(bv).clone());
        adam.update(vec![&mut w, &mut b], &[&gw, &gb]);
    }
    let logits = x.matmul(&w)?;
    Ok((0..ds.rows())
        .map(|i| 1.0 / (1.0 + (-(logits.get(i, 0) + b.item())).exp()))
        .collect())
}

/// Settings shared by cross-validation and ablation runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub folds: usize,
    pub graph: GraphConfig,
    pub train: TrainConfig,
    pub logreg: LogRegConfig,
    pub methods: Vec<Method>,
    pub execution: Execution,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            folds: 10,
            graph: GraphConfig::default(),
            train: TrainConfig::desk(),
            logreg: LogRegConfig::default(),
            methods: Method::ALL.to_vec(),
            execution: Execution::default(),
        }
    }
}

/// One evaluated (method, fraction, seed, fold) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: Method,
    pub fraction: f64,
    pub seed: u64,
    pub fold: usize,
    pub auc: f64,
    pub accuracy: f64,
    /// Feature RMSE (original units) over entries missing from the input
    /// but known to the ground truth; NaN without ground truth.
    pub rmse: f64,
}

impl ResultRow {
    fn key(&self) -> (Method, u64, u64, usize) {
        (self.method, self.fraction.to_bits(), self.seed, self.fold)
    }
}

/// Per-method aggregate of a cross-validation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: Method,
    pub auc: Summary,
    pub accuracy: Summary,
    pub feature_rmse: Summary,
    pub per_fold_auc: Vec<f64>,
    pub per_fold_accuracy: Vec<f64>,
    pub per_fold_rmse: Vec<f64>,
}

impl MetricsReport {
    fn from_rows(method: Method, rows: &[&ResultRow]) -> MetricsReport {
        let auc: Vec<f64> = rows.iter().map(|r| r.auc).collect();
        let acc: Vec<f64> = rows.iter().map(|r| r.accuracy).collect();
        let rmse: Vec<f64> = rows.iter().map(|r| r.rmse).collect();
        MetricsReport {
            method,
            auc: Summary::of(&auc),
            accuracy: Summary::of(&acc),
            feature_rmse: Summary::of(&rmse),
            per_fold_auc: auc,
            per_fold_accuracy: acc,
            per_fold_rmse: rmse,
        }
    }
}

/// Scores one fold with one method.
fn evaluate_cell(
    raw: &RawTable,
    truth: Option<&Tensor>,
    fold: &Fold,
    method: Method,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<(f64, f64, f64)> {
    let test_set: HashSet<usize> = fold.test.iter().copied().collect();
    let unlabeled: Vec<usize> = (0..raw.row_count())
        .filter(|r| !test_set.contains(r) && fold.train.binary_search(r).is_err())
        .collect();
    let mut test_rows = fold.test.clone();
    test_rows.extend(unlabeled);
    let ds = assemble(raw, &fold.train, &test_rows, seed)?;

    let (probs, imputed) = match method.graph_variant() {
        Some(variant) => {
            let graph = cfg.graph.with_variant(variant).build(raw)?;
            let train_cfg = TrainConfig {
                seed,
                ..cfg.train.clone()
            };
            let fit = train(&ds, &graph, &train_cfg)?;
            let pred = predict(&fit.params, &train_cfg, &ds, &graph)?;
            (pred.positive_probs(), pred.imputed)
        }
        None => {
            let lr = LogRegConfig { seed, ..cfg.logreg };
            (baseline_logreg(&ds, &lr)?, ds.features())
        }
    };

    let scores: Vec<f64> = fold.test.iter().map(|&r| probs[r]).collect();
    let labels: Vec<u8> = fold
        .test
        .iter()
        .map(|&r| raw.labels[r].expect("test rows come from labelled rows"))
        .collect();
    let auc = roc_auc(&scores, &labels)?;
    let acc = accuracy(&scores, &labels)?;
    let rmse = match truth {
        Some(t) => {
            let back = ds.denormalize(&imputed)?;
            let mut sq = 0.0;
            let mut count = 0usize;
            for i in 0..raw.row_count() {
                for (k, &j) in ds.feature_index.iter().enumerate() {
                    if raw.values[i][j].is_none() {
                        sq += (back.get(i, k) - t.get(i, j)).powi(2);
                        count += 1;
                    }
                }
            }
            if count == 0 {
                f64::NAN
            } else {
                (sq / count as f64).sqrt()
            }
        }
        None => f64::NAN,
    };
    Ok((auc, acc, rmse))
}

/// `k`-fold stratified cross-validation of every configured method on the
/// same folds. Unlabelled rows stay in every training graph as transductive
/// context but are never scored.
pub fn cross_validate(
    raw: &RawTable,
    truth: Option<&Tensor>,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<Vec<ResultRow>> {
    run_cells(raw, truth, cfg, &[(1.0, seed)], &[])
}

fn run_cells(
    raw: &RawTable,
    truth: Option<&Tensor>,
    cfg: &EvalConfig,
    settings: &[(f64, u64)],
    completed: &[ResultRow],
) -> Result<Vec<ResultRow>> {
    let labeled = raw.labeled_rows();
    let labels: Vec<u8> = labeled
        .iter()
        .map(|&r| raw.labels[r].expect("labelled"))
        .collect();

    let mut tables = Vec::with_capacity(settings.len());
    let mut plans = Vec::with_capacity(settings.len());
    for &(fraction, seed) in settings {
        tables.push(if fraction < 1.0 {
            raw.with_density(fraction, seed)?
        } else {
            raw.clone()
        });
        plans.push(stratified_kfold(&labeled, &labels, cfg.folds, seed)?);
    }

    let done: BTreeMap<_, &ResultRow> = completed.iter().map(|r| (r.key(), r)).collect();
    let mut cells = Vec::new();
    for (s, &(fraction, seed)) in settings.iter().enumerate() {
        for fold in 0..cfg.folds {
            for &method in &cfg.methods {
                cells.push((s, fraction, seed, fold, method));
            }
        }
    }
    par::try_map_indexed(cfg.execution, cells.len(), |c| {
        let (s, fraction, seed, fold, method) = cells[c];
        let key = (method, fraction.to_bits(), seed, fold);
        if let Some(row) = done.get(&key) {
            return Ok((*row).clone());
        }
        let (auc, accuracy, rmse) =
            evaluate_cell(&tables[s], truth, &plans[s].folds[fold], method, cfg, seed)?;
        log::debug!("{method} fraction {fraction} seed {seed} fold {fold}: auc {auc:.4}");
        Ok(ResultRow {
            method,
            fraction,
            seed,
            fold,
            auc,
            accuracy,
            rmse,
        })
    })
}

/// Aggregates rows per method.
pub fn reports(rows: &[ResultRow]) -> Vec<MetricsReport> {
    let mut by_method: BTreeMap<Method, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        by_method.entry(r.method).or_default().push(r);
    }
    by_method
        .into_iter()
        .map(|(m, rs)| MetricsReport::from_rows(m, &rs))
        .collect()
}

/// Feature fractions of the published sweep.
pub const DEFAULT_FRACTIONS: [f64; 6] = [0.4, 0.3, 0.2, 0.15, 0.1, 0.05];

/// Mean and spread of one (method, fraction) cell group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub method: Method,
    pub fraction: f64,
    pub auc: Summary,
    pub accuracy: Summary,
    pub rmse: Summary,
}

/// Feature-completeness sweep.
///
/// For every seed, the table is thinned to each target density with nested
/// masks (a lower fraction keeps a subset of the entries kept at a higher
/// one), then cross-validated on the seed's folds. Rows already present in
/// `completed` are reused instead of recomputed.
pub fn ablation_run(
    raw: &RawTable,
    truth: Option<&Tensor>,
    cfg: &EvalConfig,
    fractions: &[f64],
    seeds: &[u64],
    completed: &[ResultRow],
) -> Result<Vec<ResultRow>> {
    if fractions.is_empty() || seeds.is_empty() {
        return Err(GmcError::param(
            "eval::ablation_run",
            "fractions",
            "need at least one fraction and seed",
        ));
    }
    for w in fractions.windows(2) {
        if w[1] >= w[0] {
            return Err(GmcError::param(
                "eval::ablation_run",
                "fractions",
                "must be strictly descending",
            ));
        }
    }
    if fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
        return Err(GmcError::param(
            "eval::ablation_run",
            "fractions",
            "must lie in (0, 1]",
        ));
    }
    let settings: Vec<(f64, u64)> = fractions
        .iter()
        .flat_map(|&f| seeds.iter().map(move |&s| (f, s)))
        .collect();
    run_cells(raw, truth, cfg, &settings, completed)
}

pub fn summarize_ablation(rows: &[ResultRow]) -> Vec<AblationSummary> {
    let mut groups: BTreeMap<(Method, u64), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.method, r.fraction.to_bits()))
            .or_default()
            .push(r);
    }
    let mut out: Vec<AblationSummary> = groups
        .into_iter()
        .map(|((method, bits), rs)| AblationSummary {
            method,
            fraction: f64::from_bits(bits),
            auc: Summary::of(&rs.iter().map(|r| r.auc).collect::<Vec<_>>()),
            accuracy: Summary::of(&rs.iter().map(|r| r.accuracy).collect::<Vec<_>>()),
            rmse: Summary::of(&rs.iter().map(|r| r.rmse).collect::<Vec<_>>()),
        })
        .collect();
    out.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then(b.fraction.total_cmp(&a.fraction))
    });
    out
}

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use gmc_core::data::{CsvSchema, SynthConfig};
use gmc_core::eval::{GraphConfig, LogRegConfig, Method, DEFAULT_FRACTIONS};
use gmc_core::gradcheck::GradcheckConfig;
use gmc_core::par::Execution;
use gmc_core::srgcnn::TrainConfig;
use serde::{Deserialize, Serialize};

/// Cross-validation settings of `evaluate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub folds: usize,
    /// Number of consecutive seeds starting at the run seed.
    pub repeats: usize,
    pub methods: Vec<Method>,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            folds: 10,
            repeats: 1,
            methods: Method::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateSection {
    pub fractions: Vec<f64>,
    pub repeats: usize,
    pub folds: usize,
    pub methods: Vec<Method>,
}

impl Default for AblateSection {
    fn default() -> Self {
        AblateSection {
            fractions: DEFAULT_FRACTIONS.to_vec(),
            repeats: 10,
            folds: 10,
            methods: Method::ALL.to_vec(),
        }
    }
}

/// Everything a run needs. Every command writes the resolved value as
/// `config.json` next to its outputs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Input table (CSV) for train, evaluate, ablate and impute.
    pub data: Option<PathBuf>,
    /// Complete ground-truth features, used for imputation RMSE.
    pub truth: Option<PathBuf>,
    /// Checkpoint read by impute.
    pub checkpoint: Option<PathBuf>,
    pub schema: CsvSchema,
    pub synth: SynthConfig,
    pub graph: GraphConfig,
    pub train: TrainConfig,
    pub logreg: LogRegConfig,
    pub evaluate: EvaluateSection,
    pub ablate: AblateSection,
    pub gradcheck: GradcheckConfig,
    pub execution: Execution,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn data_path(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .context("no input table: pass --data or set `data` in the config")
    }
}

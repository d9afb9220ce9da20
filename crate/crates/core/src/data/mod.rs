//! Dataset assembly.
//!
//! A [`RawTable`] holds features in their original units with explicit
//! missingness, binary labels (unknown labels are kept, they are the
//! transductive targets) and the demographic fields used to build the
//! population graph. [`assemble`] turns it into a [`MaskedDataset`]: the
//! stacked matrix `Z = [Y | T]` with z-scored features, a feature mask and a
//! label mask that exposes only the training labels.

mod dropout;
mod io;
mod synth;

pub use dropout::{dropout_features, nested_keep};
pub use io::{
    load_csv, read_matrix_csv, read_table, write_matrix_csv, write_snapshot, write_table, CsvSchema,
};
pub use synth::{
    graph_smooth_instance, synth_instance, GraphSmoothInstance, GroundTruth, SynthConfig,
    SynthInstance,
};

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{GmcError, Result};
use crate::graph::SubjectMeta;
use crate::tensor::Tensor;

/// Label value for converters (positive class).
pub const POSITIVE_LABEL: &str = "cMCI";
/// Label value for stable subjects (negative class).
pub const NEGATIVE_LABEL: &str = "sMCI";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawTable {
    pub feature_names: Vec<String>,
    /// Row-major `m x n`; `None` marks a missing cell.
    pub values: Vec<Vec<Option<f64>>>,
    pub labels: Vec<Option<u8>>,
    pub meta: Vec<SubjectMeta>,
    pub label_name: String,
}

impl RawTable {
    pub fn row_count(&self) -> usize {
        self.values.len()
    }

    pub fn feature_count(&self) -> usize {
        self.feature_names.len()
    }

    pub fn observed_count(&self) -> usize {
        self.values.iter().flatten().filter(|v| v.is_some()).count()
    }

    /// Fraction of feature cells that are present.
    pub fn mask_density(&self) -> f64 {
        let total = self.row_count() * self.feature_count();
        if total == 0 {
            return 0.0;
        }
        self.observed_count() as f64 / total as f64
    }

    pub fn observed_mask(&self) -> Tensor {
        Tensor::from_fn(self.row_count(), self.feature_count(), |i, j| {
            if self.values[i][j].is_some() {
                1.0
            } else {
                0.0
            }
        })
    }

    pub fn labeled_rows(&self) -> Vec<usize> {
        (0..self.row_count())
            .filter(|&i| self.labels[i].is_some())
            .collect()
    }

    pub fn ages(&self) -> Vec<f64> {
        self.meta.iter().map(|s| s.age).collect()
    }

    /// Keeps a nested, seed-determined subset of the observed feature cells
    /// so that the overall feature density becomes `density` (or stays put
    /// if it is already lower). Labels and metadata are untouched.
    pub fn with_density(&self, density: f64, seed: u64) -> Result<RawTable> {
        if !(density > 0.0 && density <= 1.0) {
            return Err(GmcError::param(
                "data::with_density",
                "density",
                format!("must lie in (0, 1], got {density}"),
            ));
        }
        let target = (density * (self.row_count() * self.feature_count()) as f64).round() as usize;
        let mask = self.observed_mask();
        let kept = nested_keep(&mask, target.min(self.observed_count()), seed);
        let mut out = self.clone();
        for (i, row) in out.values.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                if kept.get(i, j) == 0.0 {
                    *cell = None;
                }
            }
        }
        Ok(out)
    }

    /// Row `i` of the result is row `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> RawTable {
        RawTable {
            feature_names: self.feature_names.clone(),
            values: perm.iter().map(|&p| self.values[p].clone()).collect(),
            labels: perm.iter().map(|&p| self.labels[p]).collect(),
            meta: perm.iter().map(|&p| self.meta[p].clone()).collect(),
            label_name: self.label_name.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnRole {
    Feature,
    Label,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub role: ColumnRole,
}

/// z-scoring statistics of one kept feature column.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: f64,
    pub std: f64,
    /// Observed training entries the statistics were computed from.
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DroppedColumn {
    pub name: String,
    pub reason: String,
}

/// `Z = [Y | T]` with its masks.
///
/// Invariants: `omega_a` covers the first `n` columns of `Z` and `omega_b`
/// the last `c`; `Z` is zero wherever the corresponding mask is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedDataset {
    pub z: Tensor,
    pub omega_a: Tensor,
    pub omega_b: Tensor,
    pub columns: Vec<ColumnMeta>,
    pub stats: Vec<FeatureStats>,
    /// Index of each kept feature in the source table.
    pub feature_index: Vec<usize>,
    pub dropped: Vec<DroppedColumn>,
    pub seed: u64,
}

/// JSON sidecar of a dataset snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub rows: usize,
    pub features: usize,
    pub labels: usize,
    pub columns: Vec<ColumnMeta>,
    pub stats: Vec<FeatureStats>,
    pub dropped: Vec<DroppedColumn>,
    pub feature_density: f64,
    pub seed: u64,
}

impl MaskedDataset {
    pub fn rows(&self) -> usize {
        self.z.rows()
    }

    pub fn n_features(&self) -> usize {
        self.omega_a.cols()
    }

    pub fn n_labels(&self) -> usize {
        self.omega_b.cols()
    }

    /// Feature mask padded with zeros over the label columns.
    pub fn feature_mask_full(&self) -> Tensor {
        let n = self.n_features();
        Tensor::from_fn(self.rows(), self.z.cols(), |i, j| {
            if j < n {
                self.omega_a.get(i, j)
            } else {
                0.0
            }
        })
    }

    /// Label mask padded with zeros over the feature columns.
    pub fn label_mask_full(&self) -> Tensor {
        let n = self.n_features();
        Tensor::from_fn(self.rows(), self.z.cols(), |i, j| {
            if j < n {
                0.0
            } else {
                self.omega_b.get(i, j - n)
            }
        })
    }

    pub fn feature_density(&self) -> f64 {
        self.omega_a.sum() / self.omega_a.len().max(1) as f64
    }

    pub fn features(&self) -> Tensor {
        let idx: Vec<usize> = (0..self.n_features()).collect();
        self.z.select_cols(&idx)
    }

    /// Maps normalised feature values (`m x n`) back to original units.
    pub fn denormalize(&self, features: &Tensor) -> Result<Tensor> {
        if features.cols() != self.n_features() {
            return Err(GmcError::dim(
                "data::denormalize",
                format!(
                    "{} columns, dataset has {}",
                    features.cols(),
                    self.n_features()
                ),
            ));
        }
        Ok(Tensor::from_fn(features.rows(), features.cols(), |i, j| {
            features.get(i, j) * self.stats[j].std + self.stats[j].mean
        }))
    }

    pub fn metadata(&self) -> DatasetMetadata {
        DatasetMetadata {
            rows: self.rows(),
            features: self.n_features(),
            labels: self.n_labels(),
            columns: self.columns.clone(),
            stats: self.stats.clone(),
            dropped: self.dropped.clone(),
            feature_density: self.feature_density(),
            seed: self.seed,
        }
    }

    /// Row `i` of the result is row `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> MaskedDataset {
        MaskedDataset {
            z: self.z.select_rows(perm),
            omega_a: self.omega_a.select_rows(perm),
            omega_b: self.omega_b.select_rows(perm),
            ..self.clone()
        }
    }
}

fn column_stats(values: impl Iterator<Item = f64>) -> Option<(f64, f64, usize)> {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt(), v.len()))
}

/// Builds `Z = [Y | T]` for one train/test split.
///
/// Feature statistics come from observed entries of training rows only;
/// test-row features are still included (transductive setting) but their
/// labels are hidden from `omega_b`. Columns with no observed training
/// entry or zero spread are dropped and listed in `dropped`.
pub fn assemble(
    raw: &RawTable,
    train_rows: &[usize],
    test_rows: &[usize],
    seed: u64,
) -> Result<MaskedDataset> {
    let m = raw.row_count();
    let mut seen = HashSet::with_capacity(m);
    for &r in train_rows.iter().chain(test_rows) {
        if r >= m {
            return Err(GmcError::param(
                "data::assemble",
                "rows",
                format!("row {r} out of range ({m} rows)"),
            ));
        }
        if !seen.insert(r) {
            return Err(GmcError::param(
                "data::assemble",
                "rows",
                format!("row {r} appears more than once across train/test"),
            ));
        }
    }
    if seen.len() != m {
        return Err(GmcError::param(
            "data::assemble",
            "rows",
            format!("train/test cover {} of {m} rows", seen.len()),
        ));
    }
    let mut is_train = vec![false; m];
    for &r in train_rows {
        if raw.labels[r].is_none() {
            return Err(GmcError::param(
                "data::assemble",
                "train_rows",
                format!("training row {r} has no label"),
            ));
        }
        is_train[r] = true;
    }

    let mut kept = Vec::new();
    let mut stats = Vec::new();
    let mut dropped = Vec::new();
    for (j, name) in raw.feature_names.iter().enumerate() {
        let observed = (0..m)
            .filter(|&i| is_train[i])
            .filter_map(|i| raw.values[i][j]);
        match column_stats(observed) {
            None => dropped.push(DroppedColumn {
                name: name.clone(),
                reason: "no observed training entries".into(),
            }),
            Some((mean, std, _)) if std <= 1e-12 * mean.abs().max(1.0) => {
                dropped.push(DroppedColumn {
                    name: name.clone(),
                    reason: "zero variance over observed training entries".into(),
                })
            }
            Some((mean, std, count)) => {
                kept.push(j);
                stats.push(FeatureStats { mean, std, count });
            }
        }
    }
    for d in &dropped {
        log::warn!("dropping feature column `{}`: {}", d.name, d.reason);
    }
    if kept.is_empty() {
        return Err(GmcError::invalid(
            "data::assemble",
            "no usable feature columns remain",
        ));
    }

    let n = kept.len();
    let mut z = Tensor::zeros(m, n + 1);
    let mut omega_a = Tensor::zeros(m, n);
    let mut omega_b = Tensor::zeros(m, 1);
    for (i, &train) in is_train.iter().enumerate() {
        for (k, &j) in kept.iter().enumerate() {
            if let Some(v) = raw.values[i][j] {
                z.set(i, k, (v - stats[k].mean) / stats[k].std);
                omega_a.set(i, k, 1.0);
            }
        }
        if train {
            z.set(i, n, f64::from(raw.labels[i].expect("checked above")));
            omega_b.set(i, 0, 1.0);
        }
    }
    let mut columns: Vec<ColumnMeta> = kept
        .iter()
        .map(|&j| ColumnMeta {
            name: raw.feature_names[j].clone(),
            role: ColumnRole::Feature,
        })
        .collect();
    columns.push(ColumnMeta {
        name: raw.label_name.clone(),
        role: ColumnRole::Label,
    });
    Ok(MaskedDataset {
        z,
        omega_a,
        omega_b,
        columns,
        stats,
        feature_index: kept,
        dropped,
        seed,
    })
}

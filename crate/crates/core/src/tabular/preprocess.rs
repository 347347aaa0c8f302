//! Imputation, variance filtering and z-scoring. Variances use the
//! population (1/n) convention throughout.

use serde::{Deserialize, Serialize};

use super::FeatureTable;
use crate::error::{Error, Result};

pub const DEFAULT_IMPUTE_NEIGHBORS: usize = 5;
pub const DEFAULT_VARIANCE_THRESHOLD: f64 = 1e-6;

/// Distance over jointly observed columns, scaled by `D/|S|`.
/// `None` when the rows share no observed column.
pub fn nan_euclidean(a: &[Option<f64>], b: &[Option<f64>]) -> Option<f64> {
    let mut sum = 0.0;
    let mut shared = 0usize;
    for (x, y) in a.iter().zip(b) {
        if let (Some(x), Some(y)) = (x, y) {
            sum += (x - y) * (x - y);
            shared += 1;
        }
    }
    (shared > 0).then(|| (a.len() as f64 / shared as f64 * sum).sqrt())
}

/// Fills each missing cell with the mean of its column over the `k`
/// nearest rows observing that column. Distances always come from the
/// original table; ties go to the lower row index.
pub fn knn_impute(t: &FeatureTable, k: usize) -> Result<FeatureTable> {
    if k == 0 {
        return Err(Error::Input("k must be at least 1".into()));
    }
    let n = t.n_rows();
    let d = t.n_cols();
    let mut col_mean = vec![0.0; d];
    for (j, m) in col_mean.iter_mut().enumerate() {
        let obs: Vec<f64> = t.column(j).flatten().collect();
        if obs.is_empty() && n > 0 {
            return Err(Error::UnimputableColumn(t.columns()[j].clone()));
        }
        *m = obs.iter().sum::<f64>() / obs.len().max(1) as f64;
    }

    let mut cells: Vec<Vec<Option<f64>>> = (0..n).map(|i| t.row(i).to_vec()).collect();
    for i in 0..n {
        let row = t.row(i);
        if row.iter().all(Option::is_some) {
            continue;
        }
        let dist: Vec<Option<f64>> = (0..n)
            .map(|r| if r == i { None } else { nan_euclidean(row, t.row(r)) })
            .collect();
        for j in (0..d).filter(|&j| row[j].is_none()) {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter_map(|r| Some((dist[r]?, r)))
                .filter(|&(_, r)| t.cell(r, j).is_some())
                .collect();
            let value = if cand.is_empty() {
                col_mean[j]
            } else {
                cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let take = &cand[..k.min(cand.len())];
                take.iter().map(|&(_, r)| t.cell(r, j).unwrap()).sum::<f64>() / take.len() as f64
            };
            cells[i][j] = Some(value);
        }
    }
    t.with_cells(cells)
}

fn mean_and_var(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

fn complete_column(t: &FeatureTable, j: usize) -> Result<Vec<f64>> {
    t.column(j)
        .map(|c| {
            c.ok_or_else(|| Error::Input(format!("column `{}` still has missing cells", t.columns()[j])))
        })
        .collect()
}

/// Drops columns whose population variance is below `threshold`.
pub fn variance_filter(t: &FeatureTable, threshold: f64) -> Result<FeatureTable> {
    if t.n_rows() == 0 {
        return Err(Error::InsufficientData("variance filter needs at least one row".into()));
    }
    let mut keep = Vec::new();
    for j in 0..t.n_cols() {
        let col = complete_column(t, j)?;
        let (_, var) = mean_and_var(col.iter().copied());
        if var >= threshold {
            keep.push(t.columns()[j].clone());
        } else {
            log::debug!("dropping low-variance column `{}` ({var:.3e})", t.columns()[j]);
        }
    }
    if keep.is_empty() {
        return Err(Error::EmptyFeatureSpace);
    }
    t.select_columns(&keep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub columns: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl StandardizationParams {
    /// Z-scores the named columns of `t` (which must all be present).
    pub fn apply(&self, t: &FeatureTable) -> Result<FeatureTable> {
        let sel = t.select_columns(&self.columns)?;
        let cells = (0..sel.n_rows())
            .map(|i| {
                sel.row(i)
                    .iter()
                    .enumerate()
                    .map(|(j, c)| c.map(|v| (v - self.mean[j]) / self.std[j]))
                    .collect()
            })
            .collect();
        sel.with_cells(cells)
    }

    pub fn invert(&self, t: &FeatureTable) -> Result<FeatureTable> {
        let sel = t.select_columns(&self.columns)?;
        let cells = (0..sel.n_rows())
            .map(|i| {
                sel.row(i)
                    .iter()
                    .enumerate()
                    .map(|(j, c)| c.map(|v| v * self.std[j] + self.mean[j]))
                    .collect()
            })
            .collect();
        sel.with_cells(cells)
    }
}

/// Z-scores every column with its own population mean and std.
pub fn standardize(t: &FeatureTable) -> Result<(FeatureTable, StandardizationParams)> {
    if t.n_rows() == 0 {
        return Err(Error::InsufficientData("standardize needs at least one row".into()));
    }
    let mut params = StandardizationParams {
        columns: t.columns().to_vec(),
        mean: Vec::with_capacity(t.n_cols()),
        std: Vec::with_capacity(t.n_cols()),
    };
    for j in 0..t.n_cols() {
        let col = complete_column(t, j)?;
        let (mean, var) = mean_and_var(col.iter().copied());
        let std = var.sqrt();
        if !(std > 0.0) {
            return Err(Error::ZeroStd(t.columns()[j].clone()));
        }
        params.mean.push(mean);
        params.std.push(std);
    }
    let out = params.apply(t)?;
    Ok((out, params))
}

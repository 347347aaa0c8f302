//! Evaluation of a frozen model on another dataset.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::search::FittedModel;
use super::{sample_weights, weighted_mae, weighted_r2, WeightMode};
use crate::error::Result;
use crate::tabular::{FeatureTable, StandardizationParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferScores {
    pub r2: f64,
    pub mae: f64,
}

/// Scores `model` on `target` (imputed, not yet standardised). The fitted
/// columns are z-scored with the target's own statistics; a column that is
/// constant in the target maps to 0.
pub fn transfer_evaluate(
    model: &FittedModel,
    fit_params: &StandardizationParams,
    target: &FeatureTable,
    mode: WeightMode,
) -> Result<TransferScores> {
    let sel = target.select_columns(&fit_params.columns)?;
    let x0 = sel.to_matrix()?;
    let (n, d) = x0.shape();
    let mut x = DMatrix::zeros(n, d);
    for j in 0..d {
        let col = x0.column(j);
        let mean = col.sum() / n as f64;
        let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        if std > 0.0 {
            for i in 0..n {
                x[(i, j)] = (x0[(i, j)] - mean) / std;
            }
        }
    }
    let y = target.target();
    let w = sample_weights(y, mode)?;
    let pred = model.predict(&x);
    Ok(TransferScores {
        r2: weighted_r2(y, &pred, w.as_slice())?,
        mae: weighted_mae(y, &pred, w.as_slice())?,
    })
}

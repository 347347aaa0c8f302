//! Uncertainty regression: weighted elastic net, OLS and random forests,
//! grid-search cross-validation, repeated-seed importances and transfer
//! of frozen models across datasets.

mod forest;
mod linear;
mod search;
mod transfer;

pub use forest::{
    fit_random_forest, rf_importance, ForestParams, MaxFeatures, RandomForestModel, RegressionTree,
    TreeNode,
};
pub use linear::{
    elastic_net_objective, fit_elastic_net, fit_elastic_net_traced, fit_ols, ElasticNetModel,
    WeightedGram, MAX_SWEEPS, OLS_RIDGE_JITTER,
};
pub use search::{
    grid_search_cv, make_folds, repeated_importance, CvResult, FeatureImportance, FittedModel,
    GridPoint, GridSpec, ImportanceReport, QualitySummary, SeedRecord,
};
pub use transfer::{transfer_evaluate, TransferScores};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Offset keeping zero-uncertainty lesions in the weighted loss.
pub const UNCERTAINTY_WEIGHT_OFFSET: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    Uniform,
    #[default]
    Uncertainty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    ElasticNet,
    Ols,
    RandomForest,
}

/// Positive per-row weights summing to the row count.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleWeights(Vec<f64>);

impl SampleWeights {
    /// Rescales positive weights to sum to their count.
    pub fn normalized(raw: &[f64]) -> Result<Self> {
        if let Some(i) = raw.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Input(format!("weight {i} is not a positive finite number")));
        }
        let s: f64 = raw.iter().sum();
        let n = raw.len() as f64;
        Ok(Self(raw.iter().map(|w| w * n / s).collect()))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Weights of a row subset, renormalised to sum to its size.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let raw: Vec<f64> = rows.iter().map(|&i| self.0[i]).collect();
        Self::normalized(&raw).expect("weights were validated on construction")
    }
}

/// `uniform` → all 1; `uncertainty` → `w_i ∝ 0.1 + y_i`, summing to n.
pub fn sample_weights(y: &[f64], mode: WeightMode) -> Result<SampleWeights> {
    if let Some(i) = y.iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Input(format!("target {i} = {} lies outside [0, 1]", y[i])));
    }
    match mode {
        WeightMode::Uniform => Ok(SampleWeights::uniform(y.len())),
        WeightMode::Uncertainty => {
            let raw: Vec<f64> = y.iter().map(|v| UNCERTAINTY_WEIGHT_OFFSET + v).collect();
            SampleWeights::normalized(&raw)
        }
    }
}

fn check_lengths(y: &[f64], yhat: &[f64], w: &[f64]) -> Result<()> {
    if y.len() != yhat.len() || y.len() != w.len() {
        return Err(Error::Input(format!(
            "length mismatch: y {}, prediction {}, weights {}",
            y.len(),
            yhat.len(),
            w.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::InsufficientData("no rows to score".into()));
    }
    Ok(())
}

/// `1 − Σw(y−ŷ)² / Σw(y−ȳ_w)²`.
pub fn weighted_r2(y: &[f64], yhat: &[f64], w: &[f64]) -> Result<f64> {
    check_lengths(y, yhat, w)?;
    let sw: f64 = w.iter().sum();
    let ybar = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for i in 0..y.len() {
        ss_res += w[i] * (y[i] - yhat[i]).powi(2);
        ss_tot += w[i] * (y[i] - ybar).powi(2);
    }
    if ss_tot == 0.0 {
        return Err(Error::UndefinedScore("target has zero weighted variance".into()));
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// `(1/n) Σ w|y − ŷ|`.
pub fn weighted_mae(y: &[f64], yhat: &[f64], w: &[f64]) -> Result<f64> {
    check_lengths(y, yhat, w)?;
    Ok(y.iter()
        .zip(yhat)
        .zip(w)
        .map(|((a, b), w)| w * (a - b).abs())
        .sum::<f64>()
        / y.len() as f64)
}

/// Column subsets used for ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    #[default]
    All,
    /// Drops whole-prediction and patient-scale columns.
    LesionOnly,
    NoIouAdj,
    OnlyIouAdj,
}

impl FeatureSet {
    pub fn keeps(self, column: &str) -> bool {
        use crate::features::{IOU_ADJ_FEATURE, ROI_PATIENT, ROI_WHOLE_PREDICTION};
        match self {
            FeatureSet::All => true,
            FeatureSet::LesionOnly => {
                let roi = column.split("__").next().unwrap_or("");
                roi != ROI_WHOLE_PREDICTION && roi != ROI_PATIENT
            }
            FeatureSet::NoIouAdj => column != IOU_ADJ_FEATURE,
            FeatureSet::OnlyIouAdj => column == IOU_ADJ_FEATURE,
        }
    }

    pub fn select(self, columns: &[String]) -> Vec<&str> {
        columns.iter().map(String::as_str).filter(|c| self.keeps(c)).collect()
    }
}

//! Grid-search cross-validation and repeated-seed importance reports.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forest::{fit_random_forest, rf_importance, ForestParams, MaxFeatures, RandomForestModel};
use super::linear::{ElasticNetModel, WeightedGram};
use super::{weighted_mae, weighted_r2, ModelKind, SampleWeights};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub alphas: Vec<f64>,
    pub rhos: Vec<f64>,
    pub tols: Vec<f64>,
    pub n_estimators: Vec<usize>,
    pub max_depth: Vec<Option<usize>>,
    pub min_samples_split: Vec<usize>,
    pub min_samples_leaf: Vec<usize>,
    pub max_features: Vec<MaxFeatures>,
    pub folds: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            alphas: (0..9).map(|i| 10f64.powf(-4.0 + 0.75 * i as f64)).collect(),
            rhos: (0..9).map(|i| i as f64 / 8.0).collect(),
            tols: vec![1e-3, 1e-4, 1e-5],
            n_estimators: vec![20, 50, 100],
            max_depth: vec![None, Some(5), Some(10)],
            min_samples_split: vec![2, 5],
            min_samples_leaf: vec![2, 5],
            max_features: vec![MaxFeatures::All, MaxFeatures::Sqrt],
            folds: 5,
        }
    }
}

impl GridSpec {
    fn validate(&self, kind: ModelKind) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Input("cross-validation needs at least two folds".into()));
        }
        let empty = match kind {
            ModelKind::ElasticNet => self.alphas.is_empty() || self.rhos.is_empty() || self.tols.is_empty(),
            ModelKind::Ols => false,
            ModelKind::RandomForest => {
                self.n_estimators.is_empty()
                    || self.max_depth.is_empty()
                    || self.min_samples_split.is_empty()
                    || self.min_samples_leaf.is_empty()
                    || self.max_features.is_empty()
            }
        };
        if empty {
            return Err(Error::Input(format!("empty hyperparameter grid for {kind:?}")));
        }
        Ok(())
    }

    /// Grid points in enumeration order.
    pub fn points(&self, kind: ModelKind) -> Vec<GridPoint> {
        let mut out = Vec::new();
        match kind {
            ModelKind::Ols => out.push(GridPoint::Ols {}),
            ModelKind::ElasticNet => {
                for &alpha in &self.alphas {
                    for &rho in &self.rhos {
                        for &tol in &self.tols {
                            out.push(GridPoint::Linear { alpha, rho, tol });
                        }
                    }
                }
            }
            ModelKind::RandomForest => {
                for &n_estimators in &self.n_estimators {
                    for &max_depth in &self.max_depth {
                        for &min_samples_split in &self.min_samples_split {
                            for &min_samples_leaf in &self.min_samples_leaf {
                                for &max_features in &self.max_features {
                                    out.push(GridPoint::Forest(ForestParams {
                                        n_estimators,
                                        max_depth,
                                        min_samples_split,
                                        min_samples_leaf,
                                        max_features,
                                    }));
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridPoint {
    Linear { alpha: f64, rho: f64, tol: f64 },
    Forest(ForestParams),
    Ols {},
}

impl GridPoint {
    /// `Greater` when `self` is the more conservative choice: stronger
    /// regularisation for linear models, a smaller forest otherwise.
    fn preference(&self, other: &GridPoint) -> Ordering {
        match (self, other) {
            (GridPoint::Linear { alpha: a1, rho: r1, tol: t1 }, GridPoint::Linear { alpha: a2, rho: r2, tol: t2 }) => {
                a1.total_cmp(a2).then(r1.total_cmp(r2)).then(t1.total_cmp(t2))
            }
            (GridPoint::Forest(p), GridPoint::Forest(q)) => {
                let depth = |d: Option<usize>| d.unwrap_or(usize::MAX);
                let mf = |m: MaxFeatures| matches!(m, MaxFeatures::Sqrt) as u8;
                q.n_estimators
                    .cmp(&p.n_estimators)
                    .then(depth(q.max_depth).cmp(&depth(p.max_depth)))
                    .then(p.min_samples_leaf.cmp(&q.min_samples_leaf))
                    .then(p.min_samples_split.cmp(&q.min_samples_split))
                    .then(mf(p.max_features).cmp(&mf(q.max_features)))
            }
            _ => Ordering::Equal,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Linear(ElasticNetModel),
    Forest(RandomForestModel),
}

impl FittedModel {
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        match self {
            FittedModel::Linear(m) => m.predict(x),
            FittedModel::Forest(m) => m.predict(x),
        }
    }

    /// Signed coefficients for linear models, impurity importances for
    /// forests.
    pub fn importances(&self) -> Vec<f64> {
        match self {
            FittedModel::Linear(m) => m.coefs.clone(),
            FittedModel::Forest(m) => rf_importance(m),
        }
    }
}

/// Seeded shuffle, then contiguous split; the first `n % k` folds get one
/// extra row. Each fold's indices are sorted.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || n < k {
        return Err(Error::InsufficientData(format!("{n} rows cannot form {k} folds")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = n / k + usize::from(f < n % k);
        let mut fold = perm[start..start + size].to_vec();
        fold.sort_unstable();
        out.push(fold);
        start += size;
    }
    Ok(out)
}

fn forest_seed(seed: u64, unit: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ unit.wrapping_add(1).wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

fn rows_of(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |r, c| x[(rows[r], c)])
}

struct Fold {
    x_train: DMatrix<f64>,
    y_train: Vec<f64>,
    w_train: Vec<f64>,
    x_val: DMatrix<f64>,
    y_val: Vec<f64>,
    w_val: Vec<f64>,
}

fn fold_data(x: &DMatrix<f64>, y: &[f64], w: &SampleWeights, val: &[usize]) -> Fold {
    let mut in_val = vec![false; y.len()];
    for &i in val {
        in_val[i] = true;
    }
    let train: Vec<usize> = (0..y.len()).filter(|&i| !in_val[i]).collect();
    Fold {
        x_train: rows_of(x, &train),
        y_train: train.iter().map(|&i| y[i]).collect(),
        w_train: w.subset(&train).as_slice().to_vec(),
        x_val: rows_of(x, val),
        y_val: val.iter().map(|&i| y[i]).collect(),
        w_val: w.subset(val).as_slice().to_vec(),
    }
}

fn score(f: &Fold, pred: &[f64]) -> Result<(f64, f64)> {
    Ok((weighted_r2(&f.y_val, pred, &f.w_val)?, weighted_mae(&f.y_val, pred, &f.w_val)?))
}

/// Scores of every grid point on one fold, in grid order.
fn fold_scores(f: &Fold, grid: &GridSpec, points: &[GridPoint], kind: ModelKind, seed: u64, fold: usize) -> Result<Vec<(f64, f64)>> {
    match kind {
        ModelKind::Ols => {
            let m = WeightedGram::new(&f.x_train, &f.y_train, &f.w_train)?.solve_ols()?;
            Ok(vec![score(f, &m.predict(&f.x_val))?])
        }
        ModelKind::ElasticNet => {
            let gram = WeightedGram::new(&f.x_train, &f.y_train, &f.w_train)?;
            let (na, nr, nt) = (grid.alphas.len(), grid.rhos.len(), grid.tols.len());
            // Alpha paths per (rho, tol), strongest penalty first, each
            // warm-started from the previous solution.
            let mut by_alpha: Vec<usize> = (0..na).collect();
            by_alpha.sort_by(|&a, &b| grid.alphas[b].total_cmp(&grid.alphas[a]));
            let paths: Vec<Vec<(usize, (f64, f64))>> = (0..nr * nt)
                .into_par_iter()
                .map(|rt| {
                    let (ri, ti) = (rt / nt, rt % nt);
                    let mut warm: Option<Vec<f64>> = None;
                    let mut out = Vec::with_capacity(na);
                    for &ai in &by_alpha {
                        let m = gram.solve(grid.alphas[ai], grid.rhos[ri], grid.tols[ti], warm.as_deref(), None)?;
                        out.push(((ai * nr + ri) * nt + ti, score(f, &m.predict(&f.x_val))?));
                        warm = Some(m.coefs);
                    }
                    Ok(out)
                })
                .collect::<Result<_>>()?;
            let mut scores = vec![(0.0, 0.0); points.len()];
            for (i, s) in paths.into_iter().flatten() {
                scores[i] = s;
            }
            Ok(scores)
        }
        ModelKind::RandomForest => points
            .par_iter()
            .map(|p| {
                let GridPoint::Forest(params) = p else { unreachable!() };
                let m = fit_random_forest(&f.x_train, &f.y_train, &f.w_train, *params, forest_seed(seed, fold as u64))?;
                score(f, &m.predict(&f.x_val))
            })
            .collect(),
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.iter().all(|x| *x == v[0]) {
        return (v[0], 0.0);
    }
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let s = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    (m, s)
}

/// Outcome of one seeded grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub seed: u64,
    pub point: GridPoint,
    pub cv_r2_mean: f64,
    pub cv_r2_std: f64,
    pub cv_mae_mean: f64,
    pub cv_mae_std: f64,
    pub folds_used: usize,
    /// Best point refitted on all rows.
    pub model: FittedModel,
    pub fit_r2: f64,
    pub fit_mae: f64,
}

/// Seeded k-fold grid search maximising mean validation weighted R².
pub fn grid_search_cv(
    x: &DMatrix<f64>,
    y: &[f64],
    w: &SampleWeights,
    grid: &GridSpec,
    kind: ModelKind,
    seed: u64,
) -> Result<CvResult> {
    grid.validate(kind)?;
    if x.nrows() != y.len() || w.len() != y.len() {
        return Err(Error::Input("design, target and weights disagree in length".into()));
    }
    let folds = make_folds(y.len(), grid.folds, seed)?;
    let points = grid.points(kind);

    let per_fold: Vec<Option<Vec<(f64, f64)>>> = folds
        .par_iter()
        .enumerate()
        .map(|(k, val)| {
            let f = fold_data(x, y, w, val);
            match fold_scores(&f, grid, &points, kind, seed, k) {
                Ok(s) => Ok(Some(s)),
                Err(Error::UndefinedScore(_)) => {
                    log::warn!("fold {k} (seed {seed}) has a constant target; skipped");
                    Ok(None)
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let used: Vec<&Vec<(f64, f64)>> = per_fold.iter().flatten().collect();
    if used.is_empty() {
        return Err(Error::UndefinedScore("every validation fold has a constant target".into()));
    }

    let summary: Vec<[f64; 4]> = (0..points.len())
        .map(|p| {
            let r2: Vec<f64> = used.iter().map(|f| f[p].0).collect();
            let mae: Vec<f64> = used.iter().map(|f| f[p].1).collect();
            let (a, b) = mean_std(&r2);
            let (c, d) = mean_std(&mae);
            [a, b, c, d]
        })
        .collect();
    let mut best = 0;
    for p in 1..points.len() {
        let (s, b) = (summary[p][0], summary[best][0]);
        if s > b || (s == b && points[p].preference(&points[best]) == Ordering::Greater) {
            best = p;
        }
    }
    if !summary[best][0].is_finite() {
        return Err(Error::Numeric("cross-validated R² is not finite".into()));
    }

    let point = points[best];
    let model = match point {
        GridPoint::Ols {} => FittedModel::Linear(WeightedGram::new(x, y, w.as_slice())?.solve_ols()?),
        GridPoint::Linear { alpha, rho, tol } => {
            FittedModel::Linear(WeightedGram::new(x, y, w.as_slice())?.solve(alpha, rho, tol, None, None)?)
        }
        GridPoint::Forest(p) => {
            FittedModel::Forest(fit_random_forest(x, y, w.as_slice(), p, forest_seed(seed, folds.len() as u64))?)
        }
    };
    let pred = model.predict(x);
    Ok(CvResult {
        seed,
        point,
        cv_r2_mean: summary[best][0],
        cv_r2_std: summary[best][1],
        cv_mae_mean: summary[best][2],
        cv_mae_std: summary[best][3],
        folds_used: used.len(),
        fit_r2: weighted_r2(y, &pred, w.as_slice())?,
        fit_mae: weighted_mae(y, &pred, w.as_slice())?,
        model,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualitySummary {
    pub r2_mean: f64,
    pub r2_std: f64,
    pub mae_mean: f64,
    pub mae_std: f64,
}

impl QualitySummary {
    fn from_pairs(r2: &[f64], mae: &[f64]) -> Self {
        let (r2_mean, r2_std) = mean_std(r2);
        let (mae_mean, mae_std) = mean_std(mae);
        Self { r2_mean, r2_std, mae_mean, mae_std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedRecord {
    pub seed: u64,
    #[serde(flatten)]
    pub params: GridPoint,
    pub cv_r2: f64,
    pub cv_mae: f64,
}

/// Importances and fit quality averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceReport {
    pub model_kind: ModelKind,
    pub seeds: Vec<u64>,
    /// Cross-validated scores of the selected point, over seeds.
    pub quality: QualitySummary,
    /// Scores of the refitted model on all rows, over seeds.
    pub fit_quality: QualitySummary,
    /// Post-filter feature order.
    pub importances: Vec<FeatureImportance>,
    pub per_seed: Vec<SeedRecord>,
}

impl ImportanceReport {
    pub fn from_runs(kind: ModelKind, features: &[String], runs: &[CvResult]) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::Input("no seeded runs to summarise".into()));
        }
        let imps: Vec<Vec<f64>> = runs.iter().map(|r| r.model.importances()).collect();
        if imps.iter().any(|v| v.len() != features.len()) {
            return Err(Error::Schema("importance length differs from the feature list".into()));
        }
        let importances = features
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let v: Vec<f64> = imps.iter().map(|i| i[j]).collect();
                let (mean, std) = mean_std(&v);
                FeatureImportance { feature: name.clone(), mean, std }
            })
            .collect();
        let col = |f: fn(&CvResult) -> f64| runs.iter().map(f).collect::<Vec<_>>();
        Ok(Self {
            model_kind: kind,
            seeds: runs.iter().map(|r| r.seed).collect(),
            quality: QualitySummary::from_pairs(&col(|r| r.cv_r2_mean), &col(|r| r.cv_mae_mean)),
            fit_quality: QualitySummary::from_pairs(&col(|r| r.fit_r2), &col(|r| r.fit_mae)),
            importances,
            per_seed: runs
                .iter()
                .map(|r| SeedRecord { seed: r.seed, params: r.point, cv_r2: r.cv_r2_mean, cv_mae: r.cv_mae_mean })
                .collect(),
        })
    }

    /// Indices of `importances` ordered by decreasing `|mean|`, ties by
    /// feature order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.importances.len()).collect();
        idx.sort_by(|&a, &b| {
            self.importances[b].mean.abs().total_cmp(&self.importances[a].mean.abs()).then(a.cmp(&b))
        });
        idx
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Runs [`grid_search_cv`] once per seed.
pub fn repeated_importance(
    x: &DMatrix<f64>,
    y: &[f64],
    w: &SampleWeights,
    grid: &GridSpec,
    kind: ModelKind,
    seeds: &[u64],
) -> Result<Vec<CvResult>> {
    if seeds.is_empty() {
        return Err(Error::Input("at least one seed is required".into()));
    }
    seeds
        .par_iter()
        .map(|&s| grid_search_cv(x, y, w, grid, kind, s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explainer::{sample_weights, WeightMode};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn standardized(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        for mut c in x.column_iter_mut() {
            let m = c.mean();
            c.add_scalar_mut(-m);
            let s = (c.norm_squared() / n as f64).sqrt();
            c /= s;
        }
        x
    }

    #[test]
    fn default_grid_is_exact() {
        let g = GridSpec::default();
        assert_eq!(g.alphas.len(), 9);
        assert!((g.alphas[0] - 1e-4).abs() < 1e-18 && (g.alphas[8] - 100.0).abs() < 1e-12);
        assert_eq!(g.rhos, vec![0.0, 0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875, 1.0]);
        assert_eq!(g.points(ModelKind::ElasticNet).len(), 243);
        assert_eq!(g.points(ModelKind::RandomForest).len(), 72);
        assert_eq!(g.folds, 5);
    }

    #[test]
    fn folds_partition_rows() {
        let f = make_folds(23, 5, 4).unwrap();
        assert_eq!(f.iter().map(Vec::len).collect::<Vec<_>>(), vec![5, 5, 5, 4, 4]);
        let mut all: Vec<usize> = f.concat();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert_eq!(f, make_folds(23, 5, 4).unwrap());
        assert_ne!(f, make_folds(23, 5, 5).unwrap());
        assert!(make_folds(3, 5, 0).is_err());
    }

    #[test]
    fn single_point_grid_and_determinism() {
        let x = standardized(40, 3, 1);
        let y: Vec<f64> = (0..40).map(|i| (0.5 + 0.1 * x[(i, 0)]).clamp(0.0, 1.0)).collect();
        let w = sample_weights(&y, WeightMode::Uncertainty).unwrap();
        let g = GridSpec { alphas: vec![0.01], rhos: vec![0.5], tols: vec![1e-4], ..Default::default() };
        let a = grid_search_cv(&x, &y, &w, &g, ModelKind::ElasticNet, 3).unwrap();
        assert_eq!(a.point, GridPoint::Linear { alpha: 0.01, rho: 0.5, tol: 1e-4 });
        let b = grid_search_cv(&x, &y, &w, &g, ModelKind::ElasticNet, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn planted_linear_selection() {
        let x = standardized(300, 10, 2);
        let y: Vec<f64> = (0..300).map(|i| (0..10).map(|j| (j as f64 + 1.0) * 0.1 * x[(i, j)]).sum()).collect();
        let w = SampleWeights::uniform(300);
        let r = grid_search_cv(&x, &y, &w, &GridSpec::default(), ModelKind::ElasticNet, 0).unwrap();
        let GridPoint::Linear { alpha, .. } = r.point else { panic!() };
        assert!(alpha <= 1e-2, "alpha {alpha}");
        assert!(r.fit_r2 >= 0.999, "{}", r.fit_r2);
    }

    #[test]
    fn planted_signs_and_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 200;
        let x = standardized(n, 6, 5);
        let y: Vec<f64> = (0..n)
            .map(|i| 2.0 * x[(i, 0)] - x[(i, 1)] + 0.05 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let w = SampleWeights::uniform(n);
        let seeds: Vec<u64> = (0..10).collect();
        let runs = repeated_importance(&x, &y, &w, &GridSpec::default(), ModelKind::ElasticNet, &seeds).unwrap();
        for r in &runs {
            let c = r.model.importances();
            assert!(c[0] > 0.0 && c[1] < 0.0);
        }
        let names: Vec<String> = (0..6).map(|j| format!("f{j}")).collect();
        let rep = ImportanceReport::from_runs(ModelKind::ElasticNet, &names, &runs).unwrap();
        for imp in &rep.importances[2..] {
            assert!(imp.mean.abs() < 0.05, "{imp:?}");
        }
        assert_eq!(rep.ranking()[..2], [0, 1]);
        assert!(rep.importances.iter().all(|i| i.std >= 0.0));
        let json: serde_json::Value = serde_json::from_str(&rep.to_json().unwrap()).unwrap();
        assert!(json["per_seed"][0]["alpha"].is_number());
        assert_eq!(json["model_kind"], "elastic_net");
    }

    #[test]
    fn identical_seeds_have_zero_std() {
        let x = standardized(30, 3, 9);
        let y: Vec<f64> = (0..30).map(|i| 0.4 + 0.1 * x[(i, 2)]).collect();
        let w = SampleWeights::uniform(30);
        let g = GridSpec { alphas: vec![1e-3, 1e-1], rhos: vec![0.0, 1.0], tols: vec![1e-4], ..Default::default() };
        let runs = repeated_importance(&x, &y, &w, &g, ModelKind::ElasticNet, &[4, 4, 4]).unwrap();
        let names: Vec<String> = (0..3).map(|j| format!("f{j}")).collect();
        let rep = ImportanceReport::from_runs(ModelKind::ElasticNet, &names, &runs).unwrap();
        assert!(rep.importances.iter().all(|i| i.std == 0.0));
        assert_eq!(rep.quality.r2_std, 0.0);
    }

    #[test]
    fn constant_fold_targets_skipped_or_rejected() {
        let x = standardized(20, 2, 3);
        let y = vec![0.2; 20];
        let w = SampleWeights::uniform(20);
        assert!(matches!(
            grid_search_cv(&x, &y, &w, &GridSpec::default(), ModelKind::Ols, 0),
            Err(Error::UndefinedScore(_))
        ));
    }

    #[test]
    fn forest_and_ols_kinds() {
        let x = standardized(60, 3, 6);
        let y: Vec<f64> = (0..60).map(|i| (0.5 + 0.2 * x[(i, 0)].tanh()).clamp(0.0, 1.0)).collect();
        let w = SampleWeights::uniform(60);
        let g = GridSpec {
            n_estimators: vec![10],
            max_depth: vec![Some(3), None],
            min_samples_split: vec![2],
            min_samples_leaf: vec![2],
            max_features: vec![MaxFeatures::Sqrt],
            ..Default::default()
        };
        let r = grid_search_cv(&x, &y, &w, &g, ModelKind::RandomForest, 1).unwrap();
        let imp = r.model.importances();
        assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(imp[0] > imp[1] && imp[0] > imp[2]);
        let o = grid_search_cv(&x, &y, &w, &g, ModelKind::Ols, 1).unwrap();
        assert_eq!(o.point, GridPoint::Ols {});
    }

    #[test]
    fn ties_prefer_conservative_points() {
        let a = GridPoint::Linear { alpha: 1.0, rho: 0.5, tol: 1e-4 };
        let b = GridPoint::Linear { alpha: 0.1, rho: 1.0, tol: 1e-4 };
        assert_eq!(a.preference(&b), Ordering::Greater);
        let small = GridPoint::Forest(ForestParams { n_estimators: 20, ..Default::default() });
        let big = GridPoint::Forest(ForestParams { n_estimators: 100, ..Default::default() });
        assert_eq!(small.preference(&big), Ordering::Greater);
    }
}

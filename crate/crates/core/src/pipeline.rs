//! End-to-end orchestration over the train / test_in / test_out roles.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{aggregate, lsu_all, EnsemblePrediction, DEFAULT_THRESHOLD};
use crate::error::{Error, Result};
use crate::explainer::{
    repeated_importance, sample_weights, transfer_evaluate, CvResult, FeatureSet, GridSpec,
    ImportanceReport, ModelKind, WeightMode,
};
use crate::features::{extract_lesion_features, Atlas, FeatureConfig, RoiContext, DEFAULT_GLCM_BINS, DEFAULT_SHELL_WIDTH};
use crate::manifest::{Dataset, PatientTable, SubjectEntry};
use crate::metrics::iou_adj_all;
use crate::novelty::{NoveltyScorer, DEFAULT_EXPLAINED_VARIANCE};
use crate::tabular::{
    knn_impute, standardize, variance_filter, FeatureTable, RowId, StandardizationParams,
    DEFAULT_IMPUTE_NEIGHBORS, DEFAULT_VARIANCE_THRESHOLD,
};
use crate::volume::{connected_components, read_bundle, Connectivity};

/// Number of features listed per role in `summary.txt`.
pub const SUMMARY_TOP_K: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Train,
    TestIn,
    TestOut,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Train, Role::TestIn, Role::TestOut];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::TestIn => "test_in",
            Role::TestOut => "test_out",
        }
    }
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Manifest path (file or directory) per role.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRoles {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_in: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_out: Option<PathBuf>,
}

impl DatasetRoles {
    pub fn get(&self, role: Role) -> Option<&PathBuf> {
        match role {
            Role::Train => self.train.as_ref(),
            Role::TestIn => self.test_in.as_ref(),
            Role::TestOut => self.test_out.as_ref(),
        }
    }

    fn get_mut(&mut self, role: Role) -> Option<&mut PathBuf> {
        match role {
            Role::Train => self.train.as_mut(),
            Role::TestIn => self.test_in.as_mut(),
            Role::TestOut => self.test_out.as_mut(),
        }
    }

    pub fn present(&self) -> Vec<(Role, &PathBuf)> {
        Role::ALL.iter().filter_map(|&r| self.get(r).map(|p| (r, p))).collect()
    }
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}
fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}
fn default_true() -> bool {
    true
}
fn default_glcm_bins() -> usize {
    DEFAULT_GLCM_BINS
}
fn default_shell_width() -> usize {
    DEFAULT_SHELL_WIDTH
}
fn default_variance_threshold() -> f64 {
    DEFAULT_VARIANCE_THRESHOLD
}
fn default_neighbors() -> usize {
    DEFAULT_IMPUTE_NEIGHBORS
}
fn default_explained() -> f64 {
    DEFAULT_EXPLAINED_VARIANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub datasets: DatasetRoles,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub feature_set: FeatureSet,
    #[serde(default)]
    pub model_kind: ModelKind,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub weight_mode: WeightMode,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_glcm_bins")]
    pub glcm_bins: usize,
    #[serde(default = "default_shell_width")]
    pub shell_width: usize,
    #[serde(default = "default_variance_threshold")]
    pub variance_threshold: f64,
    #[serde(default = "default_neighbors")]
    pub impute_neighbors: usize,
    #[serde(default = "default_explained")]
    pub explained_variance: f64,
    /// Append the two novelty columns, fitted on the train role.
    #[serde(default = "default_true")]
    pub novelty: bool,
    #[serde(default = "default_true")]
    pub explain: bool,
    /// Evaluate every role's models on every other role.
    #[serde(default = "default_true")]
    pub transfer: bool,
    /// Size of a dedicated worker pool; the global pool when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn new(datasets: DatasetRoles, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            datasets,
            output_dir: output_dir.into(),
            feature_set: FeatureSet::default(),
            model_kind: ModelKind::default(),
            grid: GridSpec::default(),
            seeds: default_seeds(),
            weight_mode: WeightMode::default(),
            threshold: DEFAULT_THRESHOLD,
            glcm_bins: DEFAULT_GLCM_BINS,
            shell_width: DEFAULT_SHELL_WIDTH,
            variance_threshold: DEFAULT_VARIANCE_THRESHOLD,
            impute_neighbors: DEFAULT_IMPUTE_NEIGHBORS,
            explained_variance: DEFAULT_EXPLAINED_VARIANCE,
            novelty: true,
            explain: true,
            transfer: true,
            threads: None,
        }
    }

    /// Reads a JSON config; relative paths are taken from the config's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read(path)
            .map_err(|e| Error::Input(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_slice(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for role in Role::ALL {
            if let Some(p) = cfg.datasets.get_mut(role) {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.present().is_empty() {
            return Err(Error::Input("no dataset roles configured".into()));
        }
        if self.novelty && self.datasets.train.is_none() {
            return Err(Error::Input("novelty scores need a train role".into()));
        }
        if self.transfer && self.datasets.train.is_none() {
            return Err(Error::Input("the transfer matrix needs a train role".into()));
        }
        if self.explain && self.seeds.is_empty() {
            return Err(Error::Input("at least one seed is required".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Input(format!("threshold must lie in (0,1), got {}", self.threshold)));
        }
        if self.threads == Some(0) {
            return Err(Error::Input("threads must be positive".into()));
        }
        Ok(())
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            feature_set: self.feature_set,
            model_kind: self.model_kind,
            grid: self.grid.clone(),
            seeds: self.seeds.clone(),
            weight_mode: self.weight_mode,
            variance_threshold: self.variance_threshold,
            impute_neighbors: self.impute_neighbors,
        }
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig { glcm_bins: self.glcm_bins, shell_width: self.shell_width }
    }
}

/// One row of `lsu_<role>.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsuRecord {
    pub dataset_id: String,
    pub subject_id: String,
    pub lesion_id: u32,
    pub voxels: usize,
    pub lsu: f64,
}

/// Per-lesion feature rows of one subject, in label order.
#[derive(Debug, Clone)]
pub struct SubjectLesions {
    pub subject_id: String,
    pub columns: Vec<String>,
    pub lesions: Vec<(u32, usize, f64, Vec<Option<f64>>)>,
}

/// aggregate → LSU → ground-truth matching → features, for one subject.
pub fn process_subject(
    ds: &Dataset,
    entry: &SubjectEntry,
    regions: &[crate::features::AtlasRegion],
    patients: &PatientTable,
    cfg: &FeatureConfig,
    threshold: f64,
) -> Result<SubjectLesions> {
    let members = entry
        .members
        .iter()
        .map(|m| read_bundle(ds.resolve(m))?.into_volume())
        .collect::<Result<Vec<_>>>()?;
    let ens = EnsemblePrediction::new(members)?;
    let agg = aggregate(&ens, threshold)?;
    let lsu = lsu_all(&agg, &ens)?;
    drop(ens);
    let mut out = SubjectLesions { subject_id: entry.subject_id.clone(), columns: Vec::new(), lesions: Vec::new() };
    if lsu.is_empty() {
        return Ok(out);
    }
    let image = read_bundle(ds.resolve(&entry.image))?.into_volume()?;
    let gt = read_bundle(ds.resolve(&entry.ground_truth))?.into_mask()?;
    let gm = read_bundle(ds.resolve(&entry.gm))?.into_mask()?;
    let atlas = Atlas::new(read_bundle(ds.resolve(&entry.atlas))?.into_labels()?, regions.to_vec())?;
    let gt_labels = connected_components(&gt, Connectivity::TwentySix);
    let iou = iou_adj_all(&agg.labels, &gt_labels)?;
    let patient = patients.features_for(&entry.subject_id)?;
    for (&label, &(voxels, score)) in &lsu {
        let ctx = RoiContext::new(&image, agg.labels.mask_of(label), &agg.mask, &gm, &atlas, cfg.shell_width)?;
        let fv = extract_lesion_features(&ctx, cfg, iou[&label], &patient)?;
        let names: Vec<String> = fv.names().map(str::to_string).collect();
        if out.columns.is_empty() {
            out.columns = names;
        } else if out.columns != names {
            return Err(Error::Schema(format!("feature layout changed within subject {}", entry.subject_id)));
        }
        out.lesions.push((label, voxels, score, fv.values().collect()));
    }
    Ok(out)
}

/// Feature table and LSU records of one dataset; subjects run in parallel.
pub fn extract_dataset(ds: &Dataset, cfg: &FeatureConfig, threshold: f64) -> Result<(FeatureTable, Vec<LsuRecord>)> {
    let regions = ds.atlas_regions()?;
    let patients = ds.patients()?;
    let dataset_id = &ds.manifest.dataset_id;
    let subjects: Vec<SubjectLesions> = ds
        .manifest
        .subjects
        .par_iter()
        .map(|e| {
            process_subject(ds, e, &regions, &patients, cfg, threshold)
                .map_err(|err| Error::stage(format!("subject {}", e.subject_id), err))
        })
        .collect::<Result<_>>()?;

    let mut columns: Option<Vec<String>> = None;
    let (mut rows, mut cells, mut target, mut records) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for s in subjects {
        if s.lesions.is_empty() {
            continue;
        }
        match &columns {
            None => columns = Some(s.columns.clone()),
            Some(c) if *c != s.columns => {
                return Err(Error::Schema(format!("subject {} has a different feature layout", s.subject_id)));
            }
            Some(_) => {}
        }
        for (label, voxels, lsu, values) in s.lesions {
            rows.push(RowId { dataset_id: dataset_id.clone(), subject_id: s.subject_id.clone(), lesion_id: label });
            cells.push(values);
            target.push(lsu);
            records.push(LsuRecord {
                dataset_id: dataset_id.clone(),
                subject_id: s.subject_id.clone(),
                lesion_id: label,
                voxels,
                lsu,
            });
        }
    }
    let table = match columns {
        Some(c) => FeatureTable::new(rows, c, cells, target)?,
        None => FeatureTable::empty(Vec::new())?,
    };
    Ok((table, records))
}

pub fn write_lsu_csv(records: &[LsuRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["dataset_id", "subject_id", "lesion_id", "voxels", "lsu"])?;
    for r in records {
        w.write_record([
            r.dataset_id.clone(),
            r.subject_id.clone(),
            r.lesion_id.to_string(),
            r.voxels.to_string(),
            r.lsu.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Feature-set selection, imputation, variance filter and z-scoring.
#[derive(Debug, Clone)]
pub struct PreparedRole {
    /// Selected and imputed, before filtering; what transfer evaluation reads.
    pub imputed: FeatureTable,
    pub standardized: FeatureTable,
    pub params: StandardizationParams,
}

pub fn prepare_role(t: &FeatureTable, fc: &FitConfig) -> Result<PreparedRole> {
    let cols = fc.feature_set.select(t.columns());
    let selected = t.select_columns(&cols)?;
    if selected.n_cols() == 0 {
        return Err(Error::EmptyFeatureSpace);
    }
    let imputed = knn_impute(&selected, fc.impute_neighbors)?;
    let filtered = variance_filter(&imputed, fc.variance_threshold)?;
    let (standardized, params) = standardize(&filtered)?;
    Ok(PreparedRole { imputed, standardized, params })
}

/// Explainer settings for a single feature table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub feature_set: FeatureSet,
    pub model_kind: ModelKind,
    pub grid: GridSpec,
    pub seeds: Vec<u64>,
    pub weight_mode: WeightMode,
    pub variance_threshold: f64,
    pub impute_neighbors: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            feature_set: FeatureSet::default(),
            model_kind: ModelKind::default(),
            grid: GridSpec::default(),
            seeds: default_seeds(),
            weight_mode: WeightMode::default(),
            variance_threshold: DEFAULT_VARIANCE_THRESHOLD,
            impute_neighbors: DEFAULT_IMPUTE_NEIGHBORS,
        }
    }
}

/// A prepared table with its seeded searches and their report.
#[derive(Debug, Clone)]
pub struct FittedTable {
    pub prepared: PreparedRole,
    pub runs: Vec<CvResult>,
    pub report: ImportanceReport,
}

pub fn fit_table(t: &FeatureTable, fc: &FitConfig) -> Result<FittedTable> {
    let prepared = tag("preprocess", prepare_role(t, fc))?;
    let x = tag("explain", prepared.standardized.to_matrix())?;
    let y = prepared.standardized.target();
    let w = tag("explain", sample_weights(y, fc.weight_mode))?;
    let runs = tag("explain", repeated_importance(&x, y, &w, &fc.grid, fc.model_kind, &fc.seeds))?;
    let report = tag("explain", ImportanceReport::from_runs(fc.model_kind, &prepared.params.columns, &runs))?;
    Ok(FittedTable { prepared, runs, report })
}

/// Scores of one (fit role, evaluation role) pair over seeds. The diagonal
/// holds cross-validated scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferCell {
    pub fit: Role,
    pub eval: Role,
    pub cross_validated: bool,
    pub r2_mean: f64,
    pub r2_std: f64,
    pub mae_mean: f64,
    pub mae_std: f64,
    pub r2: Vec<f64>,
    pub mae: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub seeds: Vec<u64>,
    pub cells: Vec<TransferCell>,
}

impl TransferMatrix {
    pub fn cell(&self, fit: Role, eval: Role) -> Option<&TransferCell> {
        self.cells.iter().find(|c| c.fit == fit && c.eval == eval)
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let finite: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
    if finite.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = finite.len() as f64;
    if finite.iter().all(|&x| x == finite[0]) {
        return (finite[0], 0.0);
    }
    let m = finite.iter().sum::<f64>() / n;
    if finite.len() < 2 {
        return (m, 0.0);
    }
    (m, (finite.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleSummary {
    pub role: Role,
    pub dataset_id: String,
    pub n_subjects: usize,
    pub n_lesions: usize,
    pub n_features: usize,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub roles: Vec<RoleSummary>,
    pub tables: BTreeMap<Role, FeatureTable>,
    pub importance: BTreeMap<Role, ImportanceReport>,
    pub runs: BTreeMap<Role, Vec<CvResult>>,
    pub transfer: Option<TransferMatrix>,
}

impl PipelineOutput {
    pub fn is_empty(&self) -> bool {
        self.tables.values().all(|t| t.n_rows() == 0)
    }
}

fn tag<T>(stage: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Stage { .. } => Error::stage(stage, e),
        other => Error::stage(stage, other),
    })
}

/// Sizes the process-wide worker pool; only the first call can succeed.
pub fn init_global_pool(threads: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Input(format!("cannot size the worker pool: {e}")))
}

/// Runs every configured stage and writes the artifacts to `output_dir`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    match cfg.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Input(format!("cannot build a {n}-thread pool: {e}")))?;
            pool.install(|| run_stages(cfg))
        }
        None => run_stages(cfg),
    }
}

fn run_stages(cfg: &RunConfig) -> Result<PipelineOutput> {
    let out_dir = &cfg.output_dir;
    tag("output", std::fs::create_dir_all(out_dir).map_err(Error::from))?;
    let fcfg = cfg.feature_config();

    let mut roles = Vec::new();
    let mut tables: BTreeMap<Role, FeatureTable> = BTreeMap::new();
    let mut lsu_records = BTreeMap::new();
    for (role, path) in cfg.datasets.present() {
        let stage = format!("load {role}");
        let ds = tag(&stage, Dataset::open(path))?;
        let (t, recs) = tag(&format!("extract {role}"), extract_dataset(&ds, &fcfg, cfg.threshold))?;
        log::info!("{role}: {} subjects, {} lesions", ds.manifest.subjects.len(), t.n_rows());
        roles.push(RoleSummary {
            role,
            dataset_id: ds.manifest.dataset_id.clone(),
            n_subjects: ds.manifest.subjects.len(),
            n_lesions: t.n_rows(),
            n_features: t.n_cols(),
        });
        tables.insert(role, t);
        lsu_records.insert(role, recs);
    }

    let mut output = PipelineOutput {
        roles,
        tables,
        importance: BTreeMap::new(),
        runs: BTreeMap::new(),
        transfer: None,
    };
    if output.is_empty() {
        log::warn!("no predicted lesions in any dataset; writing an empty report");
        for (role, recs) in &lsu_records {
            tag("write", write_lsu_csv(recs, out_dir.join(format!("lsu_{role}.csv"))))?;
        }
        tag("write", std::fs::write(out_dir.join("summary.txt"), summary_text(&output)).map_err(Error::from))?;
        return Ok(output);
    }

    if cfg.novelty {
        let train = &output.tables[&Role::Train];
        if train.n_rows() == 0 {
            return Err(Error::stage("novelty", Error::InsufficientData("the train role has no lesions".into())));
        }
        let scorer = tag("novelty", NoveltyScorer::fit(train, cfg.explained_variance))?;
        for t in output.tables.values_mut() {
            if t.n_rows() > 0 {
                *t = tag("novelty", scorer.append(t))?;
            }
        }
    }

    for (role, t) in &output.tables {
        tag("write", t.write_csv_file(out_dir.join(format!("features_{role}.csv"))))?;
        tag("write", write_lsu_csv(&lsu_records[role], out_dir.join(format!("lsu_{role}.csv"))))?;
    }

    if !cfg.explain {
        tag("write", std::fs::write(out_dir.join("summary.txt"), summary_text(&output)).map_err(Error::from))?;
        return Ok(output);
    }

    let fc = cfg.fit_config();
    let mut prepared = BTreeMap::new();
    for (&role, t) in &output.tables {
        if t.n_rows() == 0 {
            log::warn!("{role} has no lesions; skipped");
            continue;
        }
        let fitted = tag(role.as_str(), fit_table(t, &fc))?;
        tag("write", fitted.report.to_json().and_then(|j| {
            std::fs::write(out_dir.join(format!("importance_{role}.json")), j).map_err(Error::from)
        }))?;
        output.importance.insert(role, fitted.report);
        output.runs.insert(role, fitted.runs);
        prepared.insert(role, fitted.prepared);
    }

    if cfg.transfer {
        let m = tag("transfer", transfer_matrix(cfg, &output.runs, &prepared))?;
        tag("write", serde_json::to_string_pretty(&m).map_err(Error::from).and_then(|j| {
            std::fs::write(out_dir.join("transfer_matrix.json"), j).map_err(Error::from)
        }))?;
        output.transfer = Some(m);
    }
    tag("write", std::fs::write(out_dir.join("summary.txt"), summary_text(&output)).map_err(Error::from))?;
    Ok(output)
}

fn transfer_matrix(
    cfg: &RunConfig,
    runs: &BTreeMap<Role, Vec<CvResult>>,
    prepared: &BTreeMap<Role, PreparedRole>,
) -> Result<TransferMatrix> {
    let mut cells = Vec::new();
    for (&fit, fit_runs) in runs {
        let params = &prepared[&fit].params;
        for (&eval, target) in prepared {
            let (r2, mae): (Vec<f64>, Vec<f64>) = if fit == eval {
                fit_runs.iter().map(|r| (r.cv_r2_mean, r.cv_mae_mean)).unzip()
            } else {
                let scores = fit_runs
                    .par_iter()
                    .map(|r| transfer_evaluate(&r.model, params, &target.imputed, cfg.weight_mode))
                    .collect::<Result<Vec<_>>>()?;
                scores.iter().map(|s| (s.r2, s.mae)).unzip()
            };
            let (r2_mean, r2_std) = mean_std(&r2);
            let (mae_mean, mae_std) = mean_std(&mae);
            cells.push(TransferCell {
                fit,
                eval,
                cross_validated: fit == eval,
                r2_mean,
                r2_std,
                mae_mean,
                mae_std,
                r2,
                mae,
            });
        }
    }
    Ok(TransferMatrix { seeds: cfg.seeds.clone(), cells })
}

/// Plain-text digest: role sizes, fit quality, top features, transfer grid.
pub fn summary_text(out: &PipelineOutput) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "datasets");
    for r in &out.roles {
        let _ = writeln!(
            s,
            "  {:<9} {:<12} subjects {:>4}  lesions {:>5}  features {:>4}",
            r.role.as_str(),
            r.dataset_id,
            r.n_subjects,
            r.n_lesions,
            r.n_features
        );
    }
    if out.is_empty() {
        let _ = writeln!(s, "\nno predicted lesions; nothing to explain");
        return s;
    }
    for (role, rep) in &out.importance {
        let q = &rep.quality;
        let _ = writeln!(
            s,
            "\n{role}: {:?} over {} seeds, cv R2 {:.4} ± {:.4}, cv MAE {:.4} ± {:.4}",
            rep.model_kind,
            rep.seeds.len(),
            q.r2_mean,
            q.r2_std,
            q.mae_mean,
            q.mae_std
        );
        for (rank, &j) in rep.ranking().iter().take(SUMMARY_TOP_K).enumerate() {
            let f = &rep.importances[j];
            let _ = writeln!(s, "  {:>2}. {:<55} {:>+10.5} ± {:.5}", rank + 1, f.feature, f.mean, f.std);
        }
    }
    if let Some(m) = &out.transfer {
        let _ = writeln!(s, "\ntransfer R2 (rows fit, columns eval; diagonal cross-validated)");
        let evals: Vec<Role> = Role::ALL.iter().copied().filter(|&e| m.cells.iter().any(|c| c.eval == e)).collect();
        let _ = write!(s, "  {:<9}", "");
        for e in &evals {
            let _ = write!(s, " {:>18}", e.as_str());
        }
        let _ = writeln!(s);
        for fit in Role::ALL {
            if !m.cells.iter().any(|c| c.fit == fit) {
                continue;
            }
            let _ = write!(s, "  {:<9}", fit.as_str());
            for &e in &evals {
                match m.cell(fit, e) {
                    Some(c) => {
                        let _ = write!(s, " {:>9.4} ± {:<6.4}", c.r2_mean, c.r2_std);
                    }
                    None => {
                        let _ = write!(s, " {:>18}", "-");
                    }
                }
            }
            let _ = writeln!(s);
        }
    }
    s
}

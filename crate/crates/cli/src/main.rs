//! `uqx`: command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use uqx_core::ensemble::{aggregate, lsu_all, EnsemblePrediction, DEFAULT_THRESHOLD};
use uqx_core::explainer::{FeatureSet, GridSpec, ModelKind, WeightMode};
use uqx_core::manifest::{Dataset, DatasetManifest, SubjectEntry};
use uqx_core::metrics::{detection_scores, dice, iou_adj_all, match_lesions, ndsc, NDSC_REFERENCE_FRACTION};
use uqx_core::novelty::{NoveltyScorer, DEFAULT_EXPLAINED_VARIANCE};
use uqx_core::pipeline::{extract_dataset, fit_table, run_pipeline, FitConfig, RunConfig};
use uqx_core::synth::{generate_cohort, CohortSpec};
use uqx_core::tabular::FeatureTable;
use uqx_core::volume::{connected_components, read_bundle, Connectivity};
use uqx_core::{Error, Result};

#[derive(Parser)]
#[command(name = "uqx", version, about = "Lesion-wise ensemble uncertainty and its explanation")]
struct Cli {
    /// Worker threads (defaults to one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort.
    Synth(SynthArgs),
    /// Voxel and lesion scores of a prediction against ground truth.
    Metrics(MetricsArgs),
    /// Per-lesion uncertainty of an ensemble.
    Lsu(LsuArgs),
    /// Lesion feature table of one subject or a whole manifest.
    Features(FeaturesArgs),
    /// Append novelty scores fitted on a training table.
    Novelty(NoveltyArgs),
    /// Repeated grid search and importances on one feature table.
    Fit(FitArgs),
    /// Full pipeline without the transfer matrix.
    Explain(ConfigArgs),
    /// Full pipeline including the transfer matrix.
    Crossfit(ConfigArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Cohort spec JSON; omitted fields take their defaults.
    #[arg(long, conflicts_with = "roles")]
    spec: Option<PathBuf>,
    /// Write train, test_in and test_out cohorts under OUT instead.
    #[arg(long)]
    roles: bool,
    /// Subjects per role with --roles.
    #[arg(long, default_value_t = 15)]
    subjects: usize,
    /// Overrides the spec seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    /// Binary prediction bundle (non-zero is foreground).
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = NDSC_REFERENCE_FRACTION)]
    ndsc_r: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LsuArgs {
    /// Member probability bundle; repeat once per member.
    #[arg(long = "member", required = true)]
    members: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FeaturesArgs {
    /// Dataset manifest (file or directory); replaces the per-subject inputs.
    #[arg(long, conflicts_with_all = ["image", "gt", "gm", "atlas", "members"])]
    manifest: Option<PathBuf>,
    #[arg(long)]
    image: Option<PathBuf>,
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    gm: Option<PathBuf>,
    #[arg(long)]
    atlas: Option<PathBuf>,
    /// Atlas region table JSON.
    #[arg(long)]
    atlas_regions: Option<PathBuf>,
    #[arg(long = "member")]
    members: Vec<PathBuf>,
    /// Patients CSV keyed by subject_id.
    #[arg(long)]
    patients: Option<PathBuf>,
    #[arg(long, default_value = "subject")]
    subject_id: String,
    #[arg(long, default_value = "dataset")]
    dataset_id: String,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the `lesion_id,voxels,lsu` table.
    #[arg(long)]
    lsu_out: Option<PathBuf>,
}

#[derive(Args)]
struct NoveltyArgs {
    /// Training FeatureTable CSV.
    #[arg(long)]
    train: PathBuf,
    /// Table to score; the training table itself when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_EXPLAINED_VARIANCE)]
    explained_variance: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    ElasticNet,
    Ols,
    RandomForest,
}

#[derive(Clone, Copy, ValueEnum)]
enum FeatureSetArg {
    All,
    LesionOnly,
    NoIouAdj,
    OnlyIouAdj,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightArg {
    Uniform,
    Uncertainty,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    features: PathBuf,
    /// FitConfig JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// GridSpec JSON.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long, value_enum)]
    model_kind: Option<KindArg>,
    #[arg(long, value_enum)]
    feature_set: Option<FeatureSetArg>,
    #[arg(long, value_enum)]
    weight_mode: Option<WeightArg>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let specs = if a.roles {
        CohortSpec::role_presets(a.subjects, a.seed.unwrap_or(0)).to_vec()
    } else {
        let mut s: CohortSpec = match &a.spec {
            Some(p) => read_json(p)?,
            None => CohortSpec::default(),
        };
        if let Some(seed) = a.seed {
            s.seed = seed;
        }
        vec![s]
    };
    for s in &specs {
        let dir = if a.roles { a.out.join(&s.dataset_id) } else { a.out.clone() };
        let m = generate_cohort(s, &dir)?;
        log::info!("{}: {} subjects in {}", m.dataset_id, m.subjects.len(), dir.display());
    }
    Ok(())
}

fn metrics(a: MetricsArgs) -> Result<()> {
    let pred = read_bundle(&a.pred)?.into_mask()?;
    let gt = read_bundle(&a.gt)?.into_mask()?;
    let pl = connected_components(&pred, Connectivity::TwentySix);
    let gl = connected_components(&gt, Connectivity::TwentySix);
    let det = detection_scores(&match_lesions(&pl, &gl)?);
    let per_lesion: Vec<_> = iou_adj_all(&pl, &gl)?
        .into_iter()
        .map(|(label, v)| serde_json::json!({"label": label, "iou_adj": v}))
        .collect();
    let ndsc = match ndsc(&pred, &gt, a.ndsc_r) {
        Ok(v) => Some(v),
        Err(Error::DegenerateRatio(m)) => {
            log::warn!("nDSC undefined: {m}");
            None
        }
        Err(e) => return Err(e),
    };
    let doc = serde_json::json!({
        "dsc": dice(&pred, &gt)?,
        "ndsc": ndsc,
        "lf1": det.lf1,
        "lppv": det.lppv,
        "ltpr": det.ltpr,
        "per_lesion": per_lesion,
    });
    emit(a.out.as_deref(), &format!("{}\n", serde_json::to_string_pretty(&doc)?))
}

fn lsu(a: LsuArgs) -> Result<()> {
    let members = a
        .members
        .iter()
        .map(|p| read_bundle(p)?.into_volume())
        .collect::<Result<Vec<_>>>()?;
    let ens = EnsemblePrediction::new(members)?;
    let agg = aggregate(&ens, a.threshold)?;
    let mut text = String::from("lesion_id,voxels,lsu\n");
    for (label, (voxels, v)) in lsu_all(&agg, &ens)? {
        text.push_str(&format!("{label},{voxels},{v}\n"));
    }
    emit(a.out.as_deref(), &text)
}

fn abs_string(p: &Path) -> Result<String> {
    Ok(std::path::absolute(p)?.to_string_lossy().into_owned())
}

fn features(a: FeaturesArgs, fcfg: &uqx_core::features::FeatureConfig) -> Result<()> {
    let ds = match &a.manifest {
        Some(m) => Dataset::open(m)?,
        None => {
            fn need<'a>(p: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
                p.as_deref().ok_or_else(|| Error::Input(format!("--{name} is required without --manifest")))
            }
            if a.members.len() < 2 {
                return Err(Error::Input("at least two --member bundles are required".into()));
            }
            let entry = SubjectEntry {
                subject_id: a.subject_id.clone(),
                image: abs_string(need(&a.image, "image")?)?,
                ground_truth: abs_string(need(&a.gt, "gt")?)?,
                gm: abs_string(need(&a.gm, "gm")?)?,
                atlas: abs_string(need(&a.atlas, "atlas")?)?,
                members: a.members.iter().map(|m| abs_string(m)).collect::<Result<_>>()?,
            };
            Dataset {
                root: PathBuf::new(),
                manifest: DatasetManifest {
                    dataset_id: a.dataset_id.clone(),
                    atlas_regions: abs_string(need(&a.atlas_regions, "atlas-regions")?)?,
                    patients: a.patients.as_deref().map(abs_string).transpose()?,
                    subjects: vec![entry],
                },
            }
        }
    };
    let (table, records) = extract_dataset(&ds, fcfg, a.threshold)?;
    if table.n_rows() == 0 {
        log::warn!("no predicted lesions; the table is empty");
    }
    table.write_csv_file(&a.out)?;
    if let Some(p) = &a.lsu_out {
        let mut text = String::from("lesion_id,voxels,lsu\n");
        for r in &records {
            text.push_str(&format!("{},{},{}\n", r.lesion_id, r.voxels, r.lsu));
        }
        std::fs::write(p, text)?;
    }
    Ok(())
}

fn novelty(a: NoveltyArgs) -> Result<()> {
    let train = FeatureTable::read_csv_file(&a.train)?;
    let scorer = NoveltyScorer::fit(&train, a.explained_variance)?;
    let target = match &a.input {
        Some(p) => FeatureTable::read_csv_file(p)?,
        None => train,
    };
    scorer.append(&target)?.write_csv_file(&a.out)
}

fn fit(a: FitArgs) -> Result<()> {
    let mut fc: FitConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => FitConfig::default(),
    };
    if let Some(p) = &a.grid {
        fc.grid = read_json::<GridSpec>(p)?;
    }
    if let Some(k) = a.model_kind {
        fc.model_kind = match k {
            KindArg::ElasticNet => ModelKind::ElasticNet,
            KindArg::Ols => ModelKind::Ols,
            KindArg::RandomForest => ModelKind::RandomForest,
        };
    }
    if let Some(f) = a.feature_set {
        fc.feature_set = match f {
            FeatureSetArg::All => FeatureSet::All,
            FeatureSetArg::LesionOnly => FeatureSet::LesionOnly,
            FeatureSetArg::NoIouAdj => FeatureSet::NoIouAdj,
            FeatureSetArg::OnlyIouAdj => FeatureSet::OnlyIouAdj,
        };
    }
    if let Some(w) = a.weight_mode {
        fc.weight_mode = match w {
            WeightArg::Uniform => WeightMode::Uniform,
            WeightArg::Uncertainty => WeightMode::Uncertainty,
        };
    }
    if let Some(s) = a.seeds {
        fc.seeds = s;
    }
    let table = FeatureTable::read_csv_file(&a.features)?;
    let fitted = fit_table(&table, &fc)?;
    std::fs::write(&a.out, fitted.report.to_json()?)?;
    Ok(())
}

fn pipeline(a: ConfigArgs, transfer: bool, threads: Option<usize>) -> Result<()> {
    let mut cfg = RunConfig::from_file(&a.config)?;
    cfg.transfer = transfer;
    if let Some(o) = a.out {
        cfg.output_dir = o;
    }
    if threads.is_some() {
        cfg.threads = threads;
    }
    let out = run_pipeline(&cfg)?;
    if out.is_empty() {
        log::warn!("no predicted lesions in any dataset");
    }
    log::info!("reports written to {}", cfg.output_dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Input("--threads must be positive".into()));
        }
        uqx_core::pipeline::init_global_pool(n)?;
    }
    let fcfg = uqx_core::features::FeatureConfig::default();
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Metrics(a) => metrics(a),
        Command::Lsu(a) => lsu(a),
        Command::Features(a) => features(a, &fcfg),
        Command::Novelty(a) => novelty(a),
        Command::Fit(a) => fit(a),
        Command::Explain(a) => pipeline(a, false, cli.threads),
        Command::Crossfit(a) => pipeline(a, true, cli.threads),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

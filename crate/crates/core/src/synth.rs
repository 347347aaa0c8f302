//! Synthetic cohorts for desk-scale runs: a spherical brain with a grey
//! matter shell, planted ellipsoidal lesions and a K-member ensemble whose
//! disagreement per lesion has magnitude
//! `c_sv·(S/V) + c_gm·ambiguity + σ·ξ`, where ambiguity is
//! `1 − |2·f_gm − 1|` for the lesion's grey-matter fraction `f_gm`.

use std::path::Path;

use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::shape::volume_and_surface;
use crate::features::{AtlasRegion, Hemisphere};
use crate::manifest::{DatasetManifest, PatientTable, SubjectEntry};
use crate::volume::{write_bundle, BinaryMask, BundleDtype, Grid};

pub const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

pub const ATLAS_STRUCTURES: [&str; 9] = [
    "caudate",
    "cerebellum",
    "frontal",
    "insula",
    "occipital",
    "parietal",
    "putamen",
    "temporal",
    "thalamus",
];
pub const MIDLINE_REGION: u32 = 19;

pub const IQM_NAMES: [&str; 13] = [
    "cjv", "cnr", "efc", "fber", "fwhm_avg", "inu_med", "qi_1", "qi_2", "snr_csf", "snr_gm",
    "snr_total", "snr_wm", "wm2max",
];
pub const DEMOGRAPHIC_NAMES: [&str; 5] = ["age", "sex_male", "sex_female", "ms_duration", "edss"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TissueIntensities {
    pub wm: f64,
    pub gm: f64,
    pub csf: f64,
    pub lesion: f64,
    /// Standard deviation of additive Gaussian noise.
    pub noise: f64,
}

impl Default for TissueIntensities {
    fn default() -> Self {
        Self { wm: 1.0, gm: 0.7, csf: 0.2, lesion: 0.4, noise: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortSpec {
    pub dataset_id: String,
    pub n_subjects: usize,
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    /// Inclusive range.
    pub lesions_per_subject: [usize; 2],
    /// Range of the two minor semi-axes.
    pub semi_axis_mm: [f64; 2],
    /// Range of major / minor semi-axis ratio.
    pub elongation: [f64; 2],
    pub brain_radius_mm: f64,
    pub gm_inner_mm: f64,
    pub gm_outer_mm: f64,
    /// Share of lesions centred on the white/grey boundary.
    pub cortical_fraction: f64,
    /// Minimum clearance between lesion bounding spheres.
    pub min_gap_mm: f64,
    pub ensemble_size: usize,
    pub c_sv: f64,
    pub c_gm: f64,
    pub noise_sigma: f64,
    /// Steepness of member probability maps at the lesion boundary.
    pub sharpness: f64,
    pub intensity: TissueIntensities,
    pub missing_demographic_rate: f64,
    pub seed: u64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            dataset_id: "train".into(),
            n_subjects: 15,
            dims: [64, 64, 64],
            spacing_mm: [1.0, 1.0, 1.0],
            lesions_per_subject: [7, 10],
            semi_axis_mm: [1.2, 4.5],
            elongation: [1.0, 2.0],
            brain_radius_mm: 29.0,
            gm_inner_mm: 22.0,
            gm_outer_mm: 26.0,
            cortical_fraction: 0.4,
            min_gap_mm: 2.0,
            ensemble_size: 5,
            c_sv: 0.15,
            c_gm: 0.06,
            noise_sigma: 0.02,
            sharpness: 6.0,
            intensity: TissueIntensities::default(),
            missing_demographic_rate: 0.1,
            seed: 0,
        }
    }
}

impl CohortSpec {
    /// Train, in-domain test and shifted test cohorts. The shifted cohort
    /// changes image contrast and lets disagreement follow grey-matter
    /// ambiguity more than shape.
    pub fn role_presets(n_subjects: usize, seed: u64) -> [CohortSpec; 3] {
        let base = CohortSpec { n_subjects, ..Default::default() };
        let train = CohortSpec { dataset_id: "train".into(), seed, ..base.clone() };
        let test_in = CohortSpec { dataset_id: "test_in".into(), seed: seed.wrapping_add(1), ..base.clone() };
        let test_out = CohortSpec {
            dataset_id: "test_out".into(),
            seed: seed.wrapping_add(2),
            c_sv: 0.02,
            c_gm: 0.35,
            noise_sigma: 0.05,
            intensity: TissueIntensities { wm: 0.9, gm: 0.75, csf: 0.3, lesion: 0.6, noise: 0.1 },
            ..base
        };
        [train, test_in, test_out]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Input(format!("invalid cohort spec: {m}")));
        if self.n_subjects == 0 {
            return bad("n_subjects must be positive");
        }
        if self.ensemble_size < 2 {
            return bad("ensemble_size must be at least 2");
        }
        if self.lesions_per_subject[0] > self.lesions_per_subject[1] {
            return bad("lesions_per_subject range is reversed");
        }
        for (name, r) in [("semi_axis_mm", self.semi_axis_mm), ("elongation", self.elongation)] {
            if !(r[0] > 0.0 && r[0] <= r[1]) {
                return bad(&format!("{name} must be a positive, ordered range"));
            }
        }
        if self.elongation[0] < 1.0 {
            return bad("elongation must be at least 1");
        }
        if !(0.0 < self.gm_inner_mm && self.gm_inner_mm < self.gm_outer_mm && self.gm_outer_mm <= self.brain_radius_mm) {
            return bad("need 0 < gm_inner < gm_outer <= brain_radius");
        }
        if !(0.0..=1.0).contains(&self.cortical_fraction) || !(0.0..=1.0).contains(&self.missing_demographic_rate) {
            return bad("fractions must lie in [0, 1]");
        }
        if self.c_sv < 0.0 || self.c_gm < 0.0 || self.noise_sigma < 0.0 || self.sharpness <= 0.0 {
            return bad("law coefficients must be non-negative and sharpness positive");
        }
        let extent = (0..3).map(|a| self.dims[a] as f64 * self.spacing_mm[a]).fold(f64::INFINITY, f64::min);
        if 2.0 * self.brain_radius_mm > extent {
            return bad("brain does not fit in the volume");
        }
        Grid::new(self.dims, self.spacing_mm)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Ellipsoid {
    center: Vector3<f64>,
    axes: Vector3<f64>,
    rot: Rotation3<f64>,
}

impl Ellipsoid {
    fn radius(&self, p: &Vector3<f64>) -> f64 {
        let v = self.rot.inverse_transform_vector(&(p - self.center));
        (0..3).map(|i| (v[i] / self.axes[i]).powi(2)).sum::<f64>().sqrt()
    }

    fn bounding(&self) -> f64 {
        self.axes.max()
    }
}

/// Ground-truth description of one planted lesion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedLesion {
    pub center_mm: [f64; 3],
    pub semi_axes_mm: [f64; 3],
    pub cortical: bool,
    pub voxels: usize,
    pub surface_to_volume: f64,
    pub gm_fraction: f64,
    /// Disagreement magnitude applied to the members.
    pub magnitude: f64,
}

/// One generated subject, all volumes on the cohort grid.
#[derive(Debug, Clone)]
pub struct SyntheticSubject {
    pub subject_id: String,
    pub image: Vec<f64>,
    pub ground_truth: Vec<f64>,
    pub members: Vec<Vec<f64>>,
    pub lesions: Vec<PlantedLesion>,
    pub patient: Vec<Option<f64>>,
}

/// Anatomy shared by every subject of a cohort.
#[derive(Debug, Clone)]
pub struct Anatomy {
    pub grid: Grid,
    /// 0 background, 1 WM, 2 GM, 3 CSF.
    pub tissue: Vec<u8>,
    pub gm: BinaryMask,
    pub atlas: Vec<u32>,
}

fn center_mm(grid: &Grid) -> Vector3<f64> {
    Vector3::from_fn(|a, _| grid.dims[a] as f64 * grid.spacing_mm[a] / 2.0)
}

fn position(grid: &Grid, x: usize, y: usize, z: usize) -> Vector3<f64> {
    Vector3::new(
        (x as f64 + 0.5) * grid.spacing_mm[0],
        (y as f64 + 0.5) * grid.spacing_mm[1],
        (z as f64 + 0.5) * grid.spacing_mm[2],
    )
}

pub fn atlas_regions() -> Vec<AtlasRegion> {
    let mut out = Vec::with_capacity(19);
    for (s, name) in ATLAS_STRUCTURES.iter().enumerate() {
        for (h, hemisphere) in [Hemisphere::Left, Hemisphere::Right].into_iter().enumerate() {
            out.push(AtlasRegion { id: (2 * s + h + 1) as u32, name: (*name).into(), hemisphere });
        }
    }
    out.push(AtlasRegion { id: MIDLINE_REGION, name: "midline".into(), hemisphere: Hemisphere::None });
    out
}

fn atlas_label(d: &Vector3<f64>, brain_radius: f64) -> u32 {
    let r = d.norm();
    if r >= brain_radius {
        return 0;
    }
    if d.x.abs() < 1.0 {
        return MIDLINE_REGION;
    }
    let (dy, dz) = (d.y, d.z);
    let structure = if r < 10.0 {
        match (dz >= 0.0, dy >= 0.0) {
            (true, true) => "caudate",
            (true, false) => "thalamus",
            (false, true) => "putamen",
            (false, false) => "insula",
        }
    } else if dz < -8.0 && dy < -4.0 {
        "cerebellum"
    } else if dz < -4.0 {
        "temporal"
    } else if dy > 8.0 {
        "frontal"
    } else if dy < -8.0 {
        "occipital"
    } else {
        "parietal"
    };
    let s = ATLAS_STRUCTURES.iter().position(|n| *n == structure).unwrap() as u32;
    2 * s + 1 + u32::from(d.x > 0.0)
}

pub fn build_anatomy(spec: &CohortSpec) -> Result<Anatomy> {
    spec.validate()?;
    let grid = Grid::new(spec.dims, spec.spacing_mm)?;
    let c = center_mm(&grid);
    let mut tissue = Vec::with_capacity(grid.len());
    let mut atlas = Vec::with_capacity(grid.len());
    for z in 0..grid.dims[2] {
        for y in 0..grid.dims[1] {
            for x in 0..grid.dims[0] {
                let d = position(&grid, x, y, z) - c;
                let r = d.norm();
                tissue.push(if r < spec.gm_inner_mm {
                    1
                } else if r < spec.gm_outer_mm {
                    2
                } else if r < spec.brain_radius_mm {
                    3
                } else {
                    0
                });
                atlas.push(atlas_label(&d, spec.brain_radius_mm));
            }
        }
    }
    let gm = BinaryMask::new(grid, tissue.iter().map(|&t| t == 2).collect())?;
    Ok(Anatomy { grid, tissue, gm, atlas })
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

fn normal3(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.sample(StandardNormal))
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Voxel index range covering a sphere of `radius` mm around `c`.
fn bbox(grid: &Grid, c: &Vector3<f64>, radius: f64) -> [std::ops::Range<usize>; 3] {
    std::array::from_fn(|a| {
        let lo = ((c[a] - radius) / grid.spacing_mm[a]).floor().max(0.0) as usize;
        let hi = (((c[a] + radius) / grid.spacing_mm[a]).ceil() as usize + 1).min(grid.dims[a]);
        lo..hi
    })
}

fn sample_lesion(spec: &CohortSpec, grid: &Grid, rng: &mut ChaCha8Rng) -> Option<(Ellipsoid, bool)> {
    let a = uniform(rng, spec.semi_axis_mm);
    let e = uniform(rng, spec.elongation);
    let axes = Vector3::new(a * e, a, a);
    let rot = Rotation3::from_euler_angles(
        rng.random_range(0.0..std::f64::consts::TAU),
        rng.random_range(0.0..std::f64::consts::PI),
        rng.random_range(0.0..std::f64::consts::TAU),
    );
    let cortical = rng.random::<f64>() < spec.cortical_fraction;
    let dir = normal3(rng);
    let norm = dir.norm();
    if norm == 0.0 {
        return None;
    }
    let bound = axes.max();
    let r = if cortical {
        spec.gm_inner_mm + rng.random_range(-1.0..1.0)
    } else {
        let hi = spec.gm_inner_mm - bound - 1.5;
        if hi <= 4.0 {
            return None;
        }
        rng.random_range(4.0..hi)
    };
    if r + bound > spec.brain_radius_mm - 1.0 {
        return None;
    }
    Some((Ellipsoid { center: center_mm(grid) + dir / norm * r, axes, rot }, cortical))
}

/// Generates one subject in memory. Subject `index` draws from stream
/// `index + 1` of the cohort seed.
pub fn synthesize_subject(spec: &CohortSpec, anatomy: &Anatomy, index: usize) -> Result<SyntheticSubject> {
    let grid = anatomy.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64 + 1);
    let n_lesions = rng.random_range(spec.lesions_per_subject[0]..=spec.lesions_per_subject[1]);

    let mut placed: Vec<(Ellipsoid, bool)> = Vec::with_capacity(n_lesions);
    // Members may stretch a lesion, so clearance uses a padded radius.
    let pad = |e: &Ellipsoid| 1.5 * e.bounding();
    for l in 0..n_lesions {
        let mut ok = false;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let Some((cand, cortical)) = sample_lesion(spec, &grid, &mut rng) else {
                continue;
            };
            if placed
                .iter()
                .all(|(o, _)| (o.center - cand.center).norm() > pad(o) + pad(&cand) + spec.min_gap_mm)
            {
                placed.push((cand, cortical));
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(Error::SpecInfeasible(format!(
                "could not place lesion {l} of subject {index} after {MAX_PLACEMENT_ATTEMPTS} attempts"
            )));
        }
    }

    let n = grid.len();
    let mut gt = vec![0.0; n];
    let mut soft = vec![0.0f64; n];
    let mut lesions = Vec::with_capacity(placed.len());
    let mut member_shapes: Vec<Vec<Ellipsoid>> = vec![Vec::new(); spec.ensemble_size];
    for (ell, cortical) in &placed {
        let [xr, yr, zr] = bbox(&grid, &ell.center, 1.6 * ell.bounding() + 2.0);
        let mut voxels = Vec::new();
        for z in zr.clone() {
            for y in yr.clone() {
                for x in xr.clone() {
                    let i = grid.index(x, y, z);
                    let rad = ell.radius(&position(&grid, x, y, z));
                    soft[i] = soft[i].max(sigmoid(spec.sharpness * (1.0 - rad)));
                    if rad <= 1.0 {
                        voxels.push(i);
                    }
                }
            }
        }
        if voxels.is_empty() {
            // Too thin to show up on the grid; keep the centre voxel.
            let v: [usize; 3] = std::array::from_fn(|a| {
                ((ell.center[a] / grid.spacing_mm[a]) as usize).min(grid.dims[a] - 1)
            });
            voxels.push(grid.index(v[0], v[1], v[2]));
        }
        for &i in &voxels {
            gt[i] = 1.0;
        }
        let mask = BinaryMask::from_indices(grid, voxels.iter().copied());
        let (vol, surf) = volume_and_surface(&mask);
        let sv = surf / vol;
        let f_gm = voxels.iter().filter(|&&i| anatomy.gm.contains(i)).count() as f64 / voxels.len() as f64;
        let ambiguity = 1.0 - (2.0 * f_gm - 1.0).abs();
        let xi: f64 = rng.sample(StandardNormal);
        let magnitude = (spec.c_sv * sv + spec.c_gm * ambiguity + spec.noise_sigma * xi).max(0.0);
        let mean_axis = ell.axes.sum() / 3.0;
        for shapes in member_shapes.iter_mut() {
            let g = normal3(&mut rng);
            let h = normal3(&mut rng);
            let axes = Vector3::from_fn(|a, _| ell.axes[a] * (1.0 + magnitude * g[a]).max(0.25));
            let center = ell.center + h * (0.5 * magnitude * mean_axis);
            shapes.push(Ellipsoid { center, axes, rot: ell.rot });
        }
        lesions.push(PlantedLesion {
            center_mm: [ell.center.x, ell.center.y, ell.center.z],
            semi_axes_mm: [ell.axes.x, ell.axes.y, ell.axes.z],
            cortical: *cortical,
            voxels: voxels.len(),
            surface_to_volume: sv,
            gm_fraction: f_gm,
            magnitude,
        });
    }

    let members: Vec<Vec<f64>> = member_shapes
        .iter()
        .map(|shapes| {
            let mut p = vec![0.0f64; n];
            for ell in shapes {
                let [xr, yr, zr] = bbox(&grid, &ell.center, 1.6 * ell.bounding() + 2.0);
                for z in zr.clone() {
                    for y in yr.clone() {
                        for x in xr.clone() {
                            let i = grid.index(x, y, z);
                            let v = sigmoid(spec.sharpness * (1.0 - ell.radius(&position(&grid, x, y, z))));
                            p[i] = p[i].max(v);
                        }
                    }
                }
            }
            // Far tails carry no information and would bloat comparisons.
            for v in p.iter_mut() {
                if *v < 1e-6 {
                    *v = 0.0;
                }
            }
            p
        })
        .collect();

    let it = spec.intensity;
    let image: Vec<f64> = (0..n)
        .map(|i| {
            let base = match anatomy.tissue[i] {
                1 => it.wm,
                2 => it.gm,
                3 => it.csf,
                _ => 0.0,
            };
            let v = base + (it.lesion - base) * soft[i];
            let noise: f64 = rng.sample(StandardNormal);
            if anatomy.tissue[i] == 0 {
                (0.2 * it.noise * noise).abs()
            } else {
                v + it.noise * noise
            }
        })
        .collect();

    let patient = patient_row(spec, &mut rng);
    Ok(SyntheticSubject {
        subject_id: subject_id(index),
        image,
        ground_truth: gt,
        members,
        lesions,
        patient,
    })
}

fn patient_row(spec: &CohortSpec, rng: &mut ChaCha8Rng) -> Vec<Option<f64>> {
    let it = spec.intensity;
    let snr = it.wm / it.noise.max(1e-6);
    let mut row: Vec<Option<f64>> = IQM_NAMES
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let jitter = 1.0 + 0.05 * rng.sample::<f64, _>(StandardNormal);
            let base = match *name {
                "cjv" => 1.0 / snr,
                "cnr" => (it.wm - it.gm) / it.noise.max(1e-6),
                "snr_csf" => it.csf / it.noise.max(1e-6),
                "snr_gm" => it.gm / it.noise.max(1e-6),
                "snr_wm" | "snr_total" => snr,
                _ => 0.5 + 0.1 * k as f64,
            };
            Some(base * jitter)
        })
        .collect();
    let male = rng.random::<f64>() < 0.35;
    let maybe = |v: f64, rng: &mut ChaCha8Rng| (rng.random::<f64>() >= spec.missing_demographic_rate).then_some(v);
    let age = rng.random_range(20.0..65.0);
    let duration = rng.random_range(0.0..25.0);
    let edss = (rng.random_range(0.0..7.0f64) * 2.0).round() / 2.0;
    row.push(Some(age));
    row.push(Some(f64::from(u8::from(male))));
    row.push(Some(f64::from(u8::from(!male))));
    let d = maybe(duration, rng);
    row.push(d);
    let e = maybe(edss, rng);
    row.push(e);
    row
}

pub fn subject_id(index: usize) -> String {
    format!("sub-{index:03}")
}

pub fn patient_columns() -> Vec<String> {
    IQM_NAMES
        .iter()
        .map(|n| format!("iqm__{n}"))
        .chain(DEMOGRAPHIC_NAMES.iter().map(|n| format!("demographic__{n}")))
        .collect()
}

/// Writes a cohort under `out`: `manifest.json`, `atlas_regions.json`,
/// `patients.csv` and one directory of bundles per subject.
pub fn generate_cohort(spec: &CohortSpec, out: impl AsRef<Path>) -> Result<DatasetManifest> {
    let out = out.as_ref();
    let anatomy = build_anatomy(spec)?;
    std::fs::create_dir_all(out)?;
    let grid = anatomy.grid;
    let rows: Vec<(SubjectEntry, Vec<Option<f64>>)> = (0..spec.n_subjects)
        .into_par_iter()
        .map(|s| {
            let subj = synthesize_subject(spec, &anatomy, s)?;
            let id = subj.subject_id.clone();
            std::fs::create_dir_all(out.join(&id))?;
            let rel = |name: &str| format!("{id}/{name}");
            write_bundle(out.join(rel("image")), &grid, &subj.image, BundleDtype::F32)?;
            write_bundle(out.join(rel("gt")), &grid, &subj.ground_truth, BundleDtype::U8)?;
            let gm: Vec<f64> = anatomy.gm.data().iter().map(|&b| f64::from(u8::from(b))).collect();
            write_bundle(out.join(rel("gm")), &grid, &gm, BundleDtype::U8)?;
            let atlas: Vec<f64> = anatomy.atlas.iter().map(|&l| f64::from(l)).collect();
            write_bundle(out.join(rel("atlas")), &grid, &atlas, BundleDtype::U8)?;
            let mut members = Vec::with_capacity(subj.members.len());
            for (k, m) in subj.members.iter().enumerate() {
                let name = rel(&format!("member_{k}"));
                write_bundle(out.join(&name), &grid, m, BundleDtype::F32)?;
                members.push(name);
            }
            std::fs::write(out.join(rel("lesions.json")), serde_json::to_vec_pretty(&subj.lesions)?)?;
            Ok((
                SubjectEntry {
                    subject_id: id.clone(),
                    image: rel("image"),
                    ground_truth: rel("gt"),
                    gm: rel("gm"),
                    atlas: rel("atlas"),
                    members,
                },
                subj.patient,
            ))
        })
        .collect::<Result<_>>()?;

    let patients = PatientTable {
        columns: patient_columns(),
        rows: rows.iter().map(|(e, p)| (e.subject_id.clone(), p.clone())).collect(),
    };
    patients.write_csv_file(out.join("patients.csv"))?;
    std::fs::write(out.join("atlas_regions.json"), serde_json::to_vec_pretty(&atlas_regions())?)?;
    let manifest = DatasetManifest {
        dataset_id: spec.dataset_id.clone(),
        atlas_regions: "atlas_regions.json".into(),
        patients: Some("patients.csv".into()),
        subjects: rows.into_iter().map(|(e, _)| e).collect(),
    };
    std::fs::write(out.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    std::fs::write(out.join("cohort_spec.json"), serde_json::to_vec_pretty(spec)?)?;
    Ok(manifest)
}

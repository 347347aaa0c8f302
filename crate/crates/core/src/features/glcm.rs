//! Grey-level co-occurrence matrix over the 13 unique 3D unit offsets.

use super::first_order::bin_index;
use super::FeatureVector;
use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Volume};

pub const DEFAULT_GLCM_BINS: usize = 32;

/// Names of the texture features, in output order. Each is a closed form
/// over the normalised matrix `p(i, j)` with grey levels `i, j = 1..=bins`:
///
/// | name | definition |
/// |---|---|
/// | contrast | Σ (i−j)² p |
/// | correlation | (Σ ij p − μx μy) / (σx σy), 1 if σx σy = 0 |
/// | joint_energy | Σ p² |
/// | joint_entropy | −Σ p log₂ p |
/// | homogeneity | Σ p / (1 + (i−j)²) |
/// | cluster_prominence | Σ (i + j − μx − μy)⁴ p |
/// | cluster_shade | Σ (i + j − μx − μy)³ p |
/// | cluster_tendency | Σ (i + j − μx − μy)² p |
/// | autocorrelation | Σ ij p |
/// | difference_entropy | −Σ_k p_{x−y}(k) log₂ p_{x−y}(k), k = \|i−j\| |
/// | sum_entropy | −Σ_k p_{x+y}(k) log₂ p_{x+y}(k), k = i+j |
/// | maximum_probability | max p |
pub const GLCM_FEATURE_NAMES: [&str; 12] = [
    "contrast",
    "correlation",
    "joint_energy",
    "joint_entropy",
    "homogeneity",
    "cluster_prominence",
    "cluster_shade",
    "cluster_tendency",
    "autocorrelation",
    "difference_entropy",
    "sum_entropy",
    "maximum_probability",
];

/// The 13 offsets covering each undirected 26-neighbour pair once.
pub fn unique_offsets() -> Vec<[isize; 3]> {
    let mut out = Vec::with_capacity(13);
    for dz in -1..=1isize {
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                if dz > 0 || (dz == 0 && dy > 0) || (dz == 0 && dy == 0 && dx > 0) {
                    out.push([dx, dy, dz]);
                }
            }
        }
    }
    out
}

/// Symmetric, normalised co-occurrence matrix, row-major `bins × bins`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlcmMatrix {
    bins: usize,
    p: Vec<f64>,
}

impl GlcmMatrix {
    /// Builds a matrix from raw counts and normalises it.
    pub fn from_counts(bins: usize, counts: Vec<f64>) -> Result<Self> {
        if bins == 0 || counts.len() != bins * bins {
            return Err(Error::Input("GLCM counts must be a non-empty square matrix".into()));
        }
        let total: f64 = counts.iter().sum();
        if total <= 0.0 {
            return Err(Error::DegenerateTexture("no co-occurring pairs".into()));
        }
        Ok(Self {
            bins,
            p: counts.into_iter().map(|c| c / total).collect(),
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.bins + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }
}

/// Co-occurrences of quantised intensities for in-ROI voxel pairs at
/// distance 1, accumulated symmetrically over the 13 unique directions.
pub fn glcm(image: &Volume, roi: &BinaryMask, bins: usize) -> Result<GlcmMatrix> {
    if bins == 0 {
        return Err(Error::Input("GLCM needs at least one bin".into()));
    }
    image.grid().ensure_same(roi.grid(), "glcm")?;
    let grid = *roi.grid();
    let data = image.data();
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in roi.indices() {
        min = min.min(data[i]);
        max = max.max(data[i]);
    }
    if !min.is_finite() {
        return Err(Error::DegenerateTexture("empty region".into()));
    }
    let offsets = unique_offsets();
    let mut counts = vec![0.0; bins * bins];
    let mut pairs = 0usize;
    for i in roi.indices() {
        let a = bin_index(data[i], min, max, bins);
        for &off in &offsets {
            if let Some(j) = grid.offset(i, off) {
                if roi.contains(j) {
                    let b = bin_index(data[j], min, max, bins);
                    counts[a * bins + b] += 1.0;
                    counts[b * bins + a] += 1.0;
                    pairs += 1;
                }
            }
        }
    }
    if pairs == 0 {
        return Err(Error::DegenerateTexture(
            "region has no neighbouring voxel pair".into(),
        ));
    }
    GlcmMatrix::from_counts(bins, counts)
}

fn entropy_bits(p: impl IntoIterator<Item = f64>) -> f64 {
    let h: f64 = p
        .into_iter()
        .filter(|&v| v > 0.0)
        .map(|v| -v * v.log2())
        .sum();
    h.max(0.0)
}

pub fn glcm_features(m: &GlcmMatrix) -> FeatureVector {
    let n = m.bins();
    let level = |i: usize| (i + 1) as f64;
    let mut px = vec![0.0; n];
    let mut py = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            px[i] += m.get(i, j);
            py[j] += m.get(i, j);
        }
    }
    let mu_x: f64 = (0..n).map(|i| level(i) * px[i]).sum();
    let mu_y: f64 = (0..n).map(|j| level(j) * py[j]).sum();
    let var_x: f64 = (0..n).map(|i| (level(i) - mu_x).powi(2) * px[i]).sum();
    let var_y: f64 = (0..n).map(|j| (level(j) - mu_y).powi(2) * py[j]).sum();

    let mut contrast = 0.0;
    let mut joint_energy = 0.0;
    let mut homogeneity = 0.0;
    let mut prominence = 0.0;
    let mut shade = 0.0;
    let mut tendency = 0.0;
    let mut autocorr = 0.0;
    let mut max_p: f64 = 0.0;
    let mut p_diff = vec![0.0; n];
    let mut p_sum = vec![0.0; 2 * n - 1];
    for i in 0..n {
        for j in 0..n {
            let p = m.get(i, j);
            if p == 0.0 {
                continue;
            }
            let (li, lj) = (level(i), level(j));
            let d = li - lj;
            let s = li + lj - mu_x - mu_y;
            contrast += d * d * p;
            joint_energy += p * p;
            homogeneity += p / (1.0 + d * d);
            prominence += s.powi(4) * p;
            shade += s.powi(3) * p;
            tendency += s * s * p;
            autocorr += li * lj * p;
            max_p = max_p.max(p);
            p_diff[i.abs_diff(j)] += p;
            p_sum[i + j] += p;
        }
    }
    let denom = (var_x * var_y).sqrt();
    let correlation = if denom > 1e-15 {
        ((autocorr - mu_x * mu_y) / denom).clamp(-1.0, 1.0)
    } else {
        1.0
    };
    let values = [
        contrast,
        correlation,
        joint_energy,
        entropy_bits(m.as_slice().iter().copied()),
        homogeneity,
        prominence,
        shade,
        tendency,
        autocorr,
        entropy_bits(p_diff),
        entropy_bits(p_sum),
        max_p,
    ];
    let mut fv = FeatureVector::new();
    for (name, v) in GLCM_FEATURE_NAMES.iter().zip(values) {
        fv.push(*name, Some(v));
    }
    fv
}

/// The texture names with every value missing.
pub fn missing_glcm_features() -> FeatureVector {
    let mut fv = FeatureVector::new();
    for name in GLCM_FEATURE_NAMES {
        fv.push(name, None);
    }
    fv
}

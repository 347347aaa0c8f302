//! Deep-ensemble aggregation and lesion structural uncertainty (LSU).
//!
//! The aggregated lesion `L` is a 26-connected component of the thresholded
//! mean probability map. For ensemble member `k`, `L^k` is the union of that
//! member's own components (thresholded at the same τ) that touch `L`; a
//! member with nothing inside `L` contributes an empty prediction. LSU is
//! `1 - mean_k IoU(L, L^k)` with `IoU(L, ∅) = 0`.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::error::{structural, Error, Result};
use crate::volume::{connected_components, BinaryMask, Connectivity, Grid, LabelMap, Volume};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_ENSEMBLE_SIZE: usize = 5;

/// Probability maps of `K >= 2` ensemble members on one grid.
#[derive(Debug, Clone)]
pub struct EnsemblePrediction {
    members: Vec<Volume>,
}

impl EnsemblePrediction {
    pub fn new(members: Vec<Volume>) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::Input(format!(
                "an ensemble needs at least 2 members, got {}",
                members.len()
            )));
        }
        let grid = *members[0].grid();
        for (k, m) in members.iter().enumerate() {
            m.grid().ensure_same(&grid, &format!("ensemble member {k}"))?;
            if let Some(v) = m.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::Input(format!(
                    "member {k} holds probability {v} outside [0, 1]"
                )));
            }
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[Volume] {
        &self.members
    }

    pub fn k(&self) -> usize {
        self.members.len()
    }

    pub fn grid(&self) -> &Grid {
        self.members[0].grid()
    }
}

#[derive(Debug, Clone)]
pub struct AggregatedPrediction {
    pub mean_prob: Volume,
    pub tau: f64,
    pub mask: BinaryMask,
    pub labels: LabelMap,
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::Input(format!("threshold must lie in (0,1), got {tau}")))
    }
}

/// Voxel-wise mean of the member maps, thresholded at `tau` and labelled
/// with 26-connectivity.
pub fn aggregate(ens: &EnsemblePrediction, tau: f64) -> Result<AggregatedPrediction> {
    check_tau(tau)?;
    let grid = *ens.grid();
    let k = ens.k();
    let mut buf = vec![0.0; k];
    let mut mean = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        for (slot, m) in buf.iter_mut().zip(ens.members()) {
            *slot = m.data()[i];
        }
        // sorted summation keeps the mean independent of member order
        buf.sort_by(f64::total_cmp);
        // unanimous members give their value exactly
        mean.push(if buf[0] == buf[k - 1] { buf[0] } else { buf.iter().sum::<f64>() / k as f64 });
    }
    let mean_prob = Volume::new(grid, mean)?;
    let mask = mean_prob.threshold(tau);
    let labels = connected_components(&mask, Connectivity::TwentySix);
    Ok(AggregatedPrediction {
        mean_prob,
        tau,
        mask,
        labels,
    })
}

/// One member's thresholded prediction split into components.
#[derive(Debug, Clone)]
struct MemberComponents {
    labels: LabelMap,
    sizes: Vec<usize>,
}

/// Reusable per-member labelling, so LSU for many lesions labels each
/// member only once.
#[derive(Debug, Clone)]
pub struct LsuEvaluator {
    members: Vec<MemberComponents>,
    tau: f64,
}

impl LsuEvaluator {
    pub fn new(ens: &EnsemblePrediction, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        let members = ens
            .members()
            .par_iter()
            .map(|m| {
                let labels = connected_components(&m.threshold(tau), Connectivity::TwentySix);
                let sizes = labels.sizes();
                MemberComponents { labels, sizes }
            })
            .collect();
        Ok(Self { members, tau })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// LSU of the region given by `voxels`.
    pub fn lsu_of_voxels(&self, voxels: &[usize]) -> f64 {
        let size = voxels.len();
        let mut ious: Vec<f64> = self
            .members
            .iter()
            .map(|m| {
                let mut touched = BTreeSet::new();
                let mut inter = 0usize;
                for &i in voxels {
                    let l = m.labels.label(i);
                    if l > 0 {
                        touched.insert(l);
                        inter += 1;
                    }
                }
                if inter == 0 {
                    return 0.0;
                }
                let member_size: usize = touched.iter().map(|&l| m.sizes[l as usize]).sum();
                inter as f64 / (size + member_size - inter) as f64
            })
            .collect();
        ious.sort_by(f64::total_cmp);
        1.0 - ious.iter().sum::<f64>() / ious.len() as f64
    }
}

/// LSU of one aggregated lesion.
pub fn lsu(
    lesion_label: u32,
    agg: &AggregatedPrediction,
    ens: &EnsemblePrediction,
    tau: f64,
) -> Result<f64> {
    agg.mask.grid().ensure_same(ens.grid(), "lsu")?;
    let voxels: Vec<usize> = agg
        .labels
        .data()
        .iter()
        .enumerate()
        .filter_map(|(i, &l)| (l == lesion_label && l > 0).then_some(i))
        .collect();
    if voxels.is_empty() {
        return Err(Error::UnknownLabel(lesion_label));
    }
    Ok(LsuEvaluator::new(ens, tau)?.lsu_of_voxels(&voxels))
}

/// LSU and voxel count for every aggregated lesion, keyed by label.
pub fn lsu_all(
    agg: &AggregatedPrediction,
    ens: &EnsemblePrediction,
) -> Result<BTreeMap<u32, (usize, f64)>> {
    if agg.labels.grid() != ens.grid() {
        return Err(structural("aggregate and ensemble grids differ"));
    }
    let eval = LsuEvaluator::new(ens, agg.tau)?;
    let per_label = agg.labels.voxels_by_label();
    let scores: Vec<(u32, (usize, f64))> = per_label
        .par_iter()
        .enumerate()
        .filter(|(_, v)| !v.is_empty())
        .map(|(l, v)| (l as u32 + 1, (v.len(), eval.lsu_of_voxels(v))))
        .collect();
    Ok(scores.into_iter().collect())
}

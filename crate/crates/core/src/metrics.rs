//! Voxel-wise overlap scores, lesion detection scores and adjusted IoU.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, LabelMap};

/// Default reference lesion load for nDSC.
pub const NDSC_REFERENCE_FRACTION: f64 = 2e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn from_masks(pred: &BinaryMask, gt: &BinaryMask) -> Result<Self> {
        pred.grid().ensure_same(gt.grid(), "confusion counts")?;
        let mut c = Self::default();
        for (&p, &g) in pred.data().iter().zip(gt.data()) {
            match (p, g) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                _ => {}
            }
        }
        Ok(c)
    }

    /// 2TP / (2TP + FP + FN); 1 when all three are zero.
    pub fn f1(&self) -> f64 {
        ratio_or_one(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    pub fn precision(&self) -> f64 {
        ratio_or_one(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio_or_one(self.tp, self.tp + self.fn_)
    }
}

fn ratio_or_one(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Dice similarity score. Two empty masks score 1.
pub fn dice(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    Ok(ConfusionCounts::from_masks(pred, gt)?.f1())
}

/// Class-ratio correction used by the normalised Dice score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NdscParams {
    pub r: f64,
    /// Positive-to-negative voxel ratio of the ground truth.
    pub h: f64,
    pub kappa: f64,
}

impl NdscParams {
    pub fn from_ground_truth(gt: &BinaryMask, r: f64) -> Result<Self> {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::Input(format!("reference fraction r must be in (0,1), got {r}")));
        }
        let pos = gt.count();
        let neg = gt.data().len() - pos;
        if pos == 0 || neg == 0 {
            return Err(Error::DegenerateRatio(format!(
                "ground truth has {pos} positive and {neg} negative voxels"
            )));
        }
        let h = pos as f64 / neg as f64;
        Ok(Self {
            r,
            h,
            kappa: h * (1.0 / r - 1.0),
        })
    }
}

/// Normalised Dice: false positives are reweighted by κ = h (1/r − 1).
pub fn ndsc(pred: &BinaryMask, gt: &BinaryMask, r: f64) -> Result<f64> {
    let params = NdscParams::from_ground_truth(gt, r)?;
    let c = ConfusionCounts::from_masks(pred, gt)?;
    Ok(ndsc_from_counts(&c, params.kappa))
}

pub fn ndsc_from_counts(c: &ConfusionCounts, kappa: f64) -> f64 {
    let tp2 = 2.0 * c.tp as f64;
    let den = tp2 + kappa * c.fp as f64 + c.fn_ as f64;
    if den == 0.0 {
        1.0
    } else {
        tp2 / den
    }
}

/// Lesion-level correspondence between predicted and ground-truth components.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LesionMatchResult {
    pub tp_pred_labels: BTreeSet<u32>,
    pub fp_pred_labels: BTreeSet<u32>,
    pub fn_gt_labels: BTreeSet<u32>,
    /// Shared voxel count per (predicted label, ground-truth label).
    pub overlap_table: BTreeMap<(u32, u32), usize>,
}

impl LesionMatchResult {
    pub fn counts(&self) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp_pred_labels.len(),
            fp: self.fp_pred_labels.len(),
            fn_: self.fn_gt_labels.len(),
        }
    }
}

pub fn match_lesions(pred: &LabelMap, gt: &LabelMap) -> Result<LesionMatchResult> {
    pred.grid().ensure_same(gt.grid(), "match_lesions")?;
    let mut overlap_table = BTreeMap::new();
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        if p > 0 && g > 0 {
            *overlap_table.entry((p, g)).or_insert(0usize) += 1;
        }
    }
    let pred_labels = present_labels(pred);
    let gt_labels = present_labels(gt);
    let touched_pred: BTreeSet<u32> = overlap_table.keys().map(|&(p, _)| p).collect();
    let touched_gt: BTreeSet<u32> = overlap_table.keys().map(|&(_, g)| g).collect();
    Ok(LesionMatchResult {
        fp_pred_labels: pred_labels.difference(&touched_pred).copied().collect(),
        tp_pred_labels: touched_pred,
        fn_gt_labels: gt_labels.difference(&touched_gt).copied().collect(),
        overlap_table,
    })
}

fn present_labels(map: &LabelMap) -> BTreeSet<u32> {
    map.sizes()
        .iter()
        .enumerate()
        .skip(1)
        .filter_map(|(l, &n)| (n > 0).then_some(l as u32))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectionScores {
    pub lf1: f64,
    pub lppv: f64,
    pub ltpr: f64,
}

/// Lesion F1, precision and recall. A ratio whose denominator is zero
/// has no errors to count and scores 1.
pub fn detection_scores(m: &LesionMatchResult) -> DetectionScores {
    let c = m.counts();
    DetectionScores {
        lf1: c.f1(),
        lppv: c.precision(),
        ltpr: c.recall(),
    }
}

/// Adjusted IoU for every predicted label, keyed by label.
///
/// For a predicted component `k`, K' is the union of the ground-truth
/// components it touches and Q the predicted components touching K'. The
/// score is |k ∩ K'| / |k ∪ (K' \ Q)|. Every predicted voxel inside K'
/// belongs to Q, so K' \ Q is exactly the part of K' that no prediction
/// covers.
pub fn iou_adj_all(pred: &LabelMap, gt: &LabelMap) -> Result<BTreeMap<u32, f64>> {
    pred.grid().ensure_same(gt.grid(), "iou_adj")?;
    let pred_sizes = pred.sizes();
    let mut uncovered_gt = vec![0usize; gt.n_labels() as usize + 1];
    let mut touching: Vec<BTreeMap<u32, usize>> = vec![BTreeMap::new(); pred_sizes.len()];
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        if g == 0 {
            continue;
        }
        if p == 0 {
            uncovered_gt[g as usize] += 1;
        } else {
            *touching[p as usize].entry(g).or_insert(0) += 1;
        }
    }
    let mut out = BTreeMap::new();
    for (label, &size) in pred_sizes.iter().enumerate().skip(1) {
        if size == 0 {
            continue;
        }
        let gts = &touching[label];
        if gts.is_empty() {
            out.insert(label as u32, 0.0);
            continue;
        }
        let inter: usize = gts.values().sum();
        let uncovered: usize = gts.keys().map(|&g| uncovered_gt[g as usize]).sum();
        out.insert(label as u32, inter as f64 / (size + uncovered) as f64);
    }
    Ok(out)
}

pub fn iou_adj(k: u32, pred: &LabelMap, gt: &LabelMap) -> Result<f64> {
    iou_adj_all(pred, gt)?
        .get(&k)
        .copied()
        .ok_or(Error::UnknownLabel(k))
}

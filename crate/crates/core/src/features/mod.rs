//! Interpretable per-lesion feature bank.
//!
//! Every feature is named `<roi>__<group>__<stat>`, where `<roi>` is one of
//! `lesion`, `perilesion`, `wholepred` or `patient`. Column order is fixed
//! by the extraction order below and never depends on the data.

pub mod first_order;
pub mod glcm;
pub mod location;
pub mod shape;

pub use first_order::{first_order_stats, FIRST_ORDER_NAMES};
pub use glcm::{glcm, glcm_features, GlcmMatrix, DEFAULT_GLCM_BINS, GLCM_FEATURE_NAMES};
pub use location::{location_features, Atlas, AtlasRegion, Hemisphere};
pub use shape::{shape_features, SHAPE_NAMES};

use crate::error::{Error, Result};
use crate::volume::{perilesional_shell, BinaryMask, Volume};

pub const ROI_LESION: &str = "lesion";
pub const ROI_PERILESION: &str = "perilesion";
pub const ROI_WHOLE_PREDICTION: &str = "wholepred";
pub const ROI_PATIENT: &str = "patient";

pub const IOU_ADJ_FEATURE: &str = "lesion__quality__iou_adj";
pub const SURFACE_TO_VOLUME_FEATURE: &str = "lesion__shape__surface_to_volume_ratio";
pub const GM_OVERLAP_FEATURE: &str = "lesion__location__gm_overlap";
pub const MAHALANOBIS_FEATURE: &str = "lesion__novelty__mahalanobis";
pub const SMALLEST_DISTANCE_FEATURE: &str = "lesion__novelty__smallest_distance";

pub const DEFAULT_SHELL_WIDTH: usize = 4;

pub fn feature_name(roi: &str, group: &str, stat: &str) -> String {
    format!("{roi}__{group}__{stat}")
}

/// Ordered named values; `None` marks a missing value.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureVector {
    entries: Vec<(String, Option<f64>)>,
}

impl FeatureVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an entry. Panics on a duplicate name: names come from fixed
    /// registries, so a duplicate is a programming error.
    pub fn push(&mut self, name: impl Into<String>, value: Option<f64>) {
        let name = name.into();
        assert!(
            self.entries.iter().all(|(n, _)| *n != name),
            "duplicate feature name `{name}`"
        );
        self.entries.push((name, value));
    }

    /// Appends all of `other` with names rewritten to `<roi>__<group>__<name>`.
    pub fn extend_prefixed(&mut self, roi: &str, group: &str, other: FeatureVector) {
        for (name, v) in other.entries {
            self.push(feature_name(roi, group, &name), v);
        }
    }

    pub fn extend(&mut self, other: FeatureVector) {
        for (name, v) in other.entries {
            self.push(name, v);
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .and_then(|(_, v)| *v)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn values(&self) -> impl Iterator<Item = Option<f64>> + '_ {
        self.entries.iter().map(|(_, v)| *v)
    }

    pub fn entries(&self) -> &[(String, Option<f64>)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn all_missing(names: impl IntoIterator<Item = impl Into<String>>) -> Self {
        let mut fv = Self::new();
        for n in names {
            fv.push(n, None);
        }
        fv
    }
}

/// Everything needed to describe one predicted lesion.
#[derive(Debug, Clone)]
pub struct RoiContext<'a> {
    pub image: &'a Volume,
    pub lesion: BinaryMask,
    pub perilesional: BinaryMask,
    pub whole_pred: &'a BinaryMask,
    pub gm: &'a BinaryMask,
    pub atlas: &'a Atlas,
}

impl<'a> RoiContext<'a> {
    pub fn new(
        image: &'a Volume,
        lesion: BinaryMask,
        whole_pred: &'a BinaryMask,
        gm: &'a BinaryMask,
        atlas: &'a Atlas,
        shell_width: usize,
    ) -> Result<Self> {
        let g = image.grid();
        g.ensure_same(lesion.grid(), "lesion mask")?;
        g.ensure_same(whole_pred.grid(), "prediction mask")?;
        g.ensure_same(gm.grid(), "grey-matter mask")?;
        g.ensure_same(atlas.labels.grid(), "atlas")?;
        let perilesional = perilesional_shell(&lesion, shell_width)?;
        Ok(Self {
            image,
            lesion,
            perilesional,
            whole_pred,
            gm,
            atlas,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureConfig {
    pub glcm_bins: usize,
    pub shell_width: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            glcm_bins: DEFAULT_GLCM_BINS,
            shell_width: DEFAULT_SHELL_WIDTH,
        }
    }
}

fn is_roi_failure(e: &Error) -> bool {
    matches!(e, Error::EmptyRoi(_) | Error::DegenerateTexture(_))
}

/// Runs `f`, turning a region failure into a group of missing values.
fn group_or_missing(
    names: &[&str],
    f: impl FnOnce() -> Result<FeatureVector>,
) -> Result<FeatureVector> {
    match f() {
        Ok(fv) => Ok(fv),
        Err(e) if is_roi_failure(&e) => Ok(FeatureVector::all_missing(names.iter().copied())),
        Err(e) => Err(e),
    }
}

/// Full lesion feature vector: intensity statistics for the three ROIs,
/// texture for lesion and surrounding, shape, location, prediction quality,
/// then the patient columns unchanged. LSU is not part of the vector.
pub fn extract_lesion_features(
    ctx: &RoiContext<'_>,
    cfg: &FeatureConfig,
    iou_adj: f64,
    patient_cols: &FeatureVector,
) -> Result<FeatureVector> {
    let mut fv = FeatureVector::new();
    for (roi, mask) in [
        (ROI_LESION, &ctx.lesion),
        (ROI_PERILESION, &ctx.perilesional),
        (ROI_WHOLE_PREDICTION, ctx.whole_pred),
    ] {
        let group = group_or_missing(&FIRST_ORDER_NAMES, || first_order_stats(ctx.image, mask))?;
        fv.extend_prefixed(roi, "firstorder", group);
    }
    for (roi, mask) in [(ROI_LESION, &ctx.lesion), (ROI_PERILESION, &ctx.perilesional)] {
        let group = group_or_missing(&GLCM_FEATURE_NAMES, || {
            glcm(ctx.image, mask, cfg.glcm_bins).map(|m| glcm_features(&m))
        })?;
        fv.extend_prefixed(roi, "glcm", group);
    }
    fv.extend_prefixed(ROI_LESION, "shape", shape_features(&ctx.lesion)?);
    fv.extend_prefixed(
        ROI_LESION,
        "location",
        location_features(&ctx.lesion, ctx.atlas, ctx.gm)?,
    );
    fv.push(IOU_ADJ_FEATURE, Some(iou_adj));
    for (name, v) in patient_cols.entries() {
        if !name.starts_with("patient__") {
            return Err(Error::Schema(format!(
                "patient column `{name}` must be named patient__<group>__<stat>"
            )));
        }
        fv.push(name.clone(), *v);
    }
    Ok(fv)
}

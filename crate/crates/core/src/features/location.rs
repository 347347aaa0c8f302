//! Atlas-region and grey-matter overlap fractions.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FeatureVector;
use crate::error::{Error, Result};
use crate::volume::{BinaryMask, LabelMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hemisphere {
    Left,
    Right,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtlasRegion {
    pub id: u32,
    pub name: String,
    pub hemisphere: Hemisphere,
}

impl AtlasRegion {
    /// Feature stem, e.g. `frontal_left`.
    pub fn feature_name(&self) -> String {
        match self.hemisphere {
            Hemisphere::Left => format!("{}_left", self.name),
            Hemisphere::Right => format!("{}_right", self.name),
            Hemisphere::None => self.name.clone(),
        }
    }
}

/// Region label map with its region table.
#[derive(Debug, Clone)]
pub struct Atlas {
    pub labels: LabelMap,
    pub regions: Vec<AtlasRegion>,
}

impl Atlas {
    pub fn new(labels: LabelMap, regions: Vec<AtlasRegion>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for r in &regions {
            if r.id == 0 {
                return Err(Error::Input("atlas region id 0 is reserved for background".into()));
            }
            if !seen.insert(r.feature_name()) || regions.iter().filter(|o| o.id == r.id).count() > 1 {
                return Err(Error::Input(format!("duplicate atlas region `{}`", r.feature_name())));
            }
        }
        Ok(Self { labels, regions })
    }

    pub fn read_regions(path: impl AsRef<Path>) -> Result<Vec<AtlasRegion>> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

pub const GM_OVERLAP_NAME: &str = "gm_overlap";

/// One overlap fraction per atlas region (table order), then `gm_overlap`.
pub fn location_features(roi: &BinaryMask, atlas: &Atlas, gm: &BinaryMask) -> Result<FeatureVector> {
    roi.grid().ensure_same(atlas.labels.grid(), "location features")?;
    roi.grid().ensure_same(gm.grid(), "location features")?;
    let mut size = 0usize;
    let mut in_gm = 0usize;
    let mut per_id: BTreeMap<u32, usize> = BTreeMap::new();
    for i in roi.indices() {
        size += 1;
        if gm.contains(i) {
            in_gm += 1;
        }
        *per_id.entry(atlas.labels.label(i)).or_default() += 1;
    }
    if size == 0 {
        return Err(Error::EmptyRoi("location features".into()));
    }
    let mut fv = FeatureVector::new();
    for r in &atlas.regions {
        let c = per_id.get(&r.id).copied().unwrap_or(0);
        fv.push(r.feature_name(), Some(c as f64 / size as f64));
    }
    fv.push(GM_OVERLAP_NAME, Some(in_gm as f64 / size as f64));
    Ok(fv)
}

//! On-disk dataset layout: a `manifest.json` listing subjects and their
//! volume bundles, an atlas region table and an optional patients table.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{AtlasRegion, FeatureVector, ROI_PATIENT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectEntry {
    pub subject_id: String,
    pub image: String,
    pub ground_truth: String,
    pub gm: String,
    pub atlas: String,
    pub members: Vec<String>,
}

/// Paths inside are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_id: String,
    pub atlas_regions: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patients: Option<String>,
    pub subjects: Vec<SubjectEntry>,
}

/// A manifest together with the directory its paths are relative to.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
}

impl Dataset {
    /// Accepts either the manifest file or its directory.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let p = path.as_ref();
        let file = if p.is_dir() { p.join("manifest.json") } else { p.to_path_buf() };
        let manifest: DatasetManifest = serde_json::from_slice(&std::fs::read(&file).map_err(|e| {
            Error::Input(format!("cannot read manifest {}: {e}", file.display()))
        })?)?;
        let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { root, manifest })
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn atlas_regions(&self) -> Result<Vec<AtlasRegion>> {
        crate::features::Atlas::read_regions(self.resolve(&self.manifest.atlas_regions))
    }

    pub fn patients(&self) -> Result<PatientTable> {
        match &self.manifest.patients {
            Some(p) => PatientTable::read_csv_file(self.resolve(p)),
            None => Ok(PatientTable::default()),
        }
    }
}

/// Per-subject patient-scale columns (`<group>__<stat>` in the file,
/// `patient__<group>__<stat>` once attached to lesions).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PatientTable {
    pub columns: Vec<String>,
    pub rows: BTreeMap<String, Vec<Option<f64>>>,
}

impl PatientTable {
    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        if header.first().map(String::as_str) != Some("subject_id") {
            return Err(Error::Schema("patients table must start with subject_id".into()));
        }
        let columns = header[1..].to_vec();
        let mut rows = BTreeMap::new();
        for rec in rd.records() {
            let rec = rec?;
            let mut vals = Vec::with_capacity(columns.len());
            for s in rec.iter().skip(1) {
                let s = s.trim();
                vals.push(if s.is_empty() {
                    None
                } else {
                    Some(s.parse::<f64>().map_err(|_| {
                        Error::Schema(format!("patients table: `{s}` is not a number"))
                    })?)
                });
            }
            if rows.insert(rec[0].to_string(), vals).is_some() {
                return Err(Error::Schema(format!("duplicate patient row `{}`", &rec[0])));
            }
        }
        Ok(Self { columns, rows })
    }

    pub fn read_csv_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["subject_id".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (id, vals) in &self.rows {
            let mut rec = vec![id.clone()];
            rec.extend(vals.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Prefixed patient columns for one subject.
    pub fn features_for(&self, subject_id: &str) -> Result<FeatureVector> {
        let mut fv = FeatureVector::new();
        if self.columns.is_empty() {
            return Ok(fv);
        }
        let vals = self
            .rows
            .get(subject_id)
            .ok_or_else(|| Error::Input(format!("subject `{subject_id}` has no patients row")))?;
        for (c, v) in self.columns.iter().zip(vals) {
            fv.push(format!("{ROI_PATIENT}__{c}"), *v);
        }
        Ok(fv)
    }
}

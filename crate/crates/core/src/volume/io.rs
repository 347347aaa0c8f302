//! Volume bundles (`<name>.json` sidecar + `<name>.raw`) and a minimal
//! uncompressed NIfTI-1 reader.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BinaryMask, Grid, LabelMap, Volume};
use crate::error::{structural, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BundleDtype {
    F32,
    U8,
}

impl BundleDtype {
    fn width(self) -> usize {
        match self {
            Self::F32 => 4,
            Self::U8 => 1,
        }
    }
}

/// JSON sidecar describing the companion `.raw` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleHeader {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub dtype: BundleDtype,
    pub order: String,
    pub byte_order: String,
}

impl BundleHeader {
    pub fn new(grid: &Grid, dtype: BundleDtype) -> Self {
        Self {
            dims: grid.dims,
            spacing_mm: grid.spacing_mm,
            dtype,
            order: "x-fastest".into(),
            byte_order: "little".into(),
        }
    }

    fn validate(&self) -> Result<Grid> {
        if self.order != "x-fastest" {
            return Err(Error::Schema(format!("unsupported axis order `{}`", self.order)));
        }
        if self.byte_order != "little" {
            return Err(Error::Schema(format!(
                "unsupported byte order `{}`",
                self.byte_order
            )));
        }
        Grid::new(self.dims, self.spacing_mm)
    }
}

/// Decoded volume values plus the grid they live on.
#[derive(Debug, Clone, PartialEq)]
pub struct RawVolume {
    pub grid: Grid,
    pub dtype: BundleDtype,
    pub values: Vec<f64>,
}

impl RawVolume {
    pub fn into_volume(self) -> Result<Volume> {
        Volume::new(self.grid, self.values)
    }

    /// Non-zero voxels are foreground.
    pub fn into_mask(self) -> Result<BinaryMask> {
        BinaryMask::new(self.grid, self.values.iter().map(|&v| v != 0.0).collect())
    }

    pub fn into_labels(self) -> Result<LabelMap> {
        let mut data = Vec::with_capacity(self.values.len());
        for v in self.values {
            if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
                return Err(Error::Input(format!("label value {v} is not a non-negative integer")));
            }
            data.push(v as u32);
        }
        LabelMap::new(self.grid, data)
    }
}

fn bundle_paths(path: &Path) -> (PathBuf, PathBuf) {
    let base = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("raw") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut json = base.clone().into_os_string();
    json.push(".json");
    let mut raw = base.into_os_string();
    raw.push(".raw");
    (json.into(), raw.into())
}

/// Reads a bundle given its base path, `.json` or `.raw` path. Paths ending
/// in `.nii` are routed to [`read_nifti`].
pub fn read_bundle(path: impl AsRef<Path>) -> Result<RawVolume> {
    let path = path.as_ref();
    if path.extension().and_then(|e| e.to_str()) == Some("nii") {
        return read_nifti(path);
    }
    let (json_path, raw_path) = bundle_paths(path);
    let read = |p: &Path| {
        fs::read(p).map_err(|e| Error::Input(format!("cannot read {}: {e}", p.display())))
    };
    let header: BundleHeader = serde_json::from_slice(&read(&json_path)?)?;
    let grid = header.validate()?;
    let bytes = read(&raw_path)?;
    let expected = grid.len() * header.dtype.width();
    if bytes.len() != expected {
        return Err(structural(format!(
            "{}: {} bytes, expected {expected}",
            raw_path.display(),
            bytes.len()
        )));
    }
    let values = decode(&bytes, header.dtype);
    Ok(RawVolume {
        grid,
        dtype: header.dtype,
        values,
    })
}

fn decode(bytes: &[u8], dtype: BundleDtype) -> Vec<f64> {
    match dtype {
        BundleDtype::U8 => bytes.iter().map(|&b| b as f64).collect(),
        BundleDtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
    }
}

/// Writes `<base>.json` and `<base>.raw`. Values are cast to `dtype`;
/// `u8` values must already be integers in `0..=255`.
pub fn write_bundle(
    base: impl AsRef<Path>,
    grid: &Grid,
    values: &[f64],
    dtype: BundleDtype,
) -> Result<()> {
    if values.len() != grid.len() {
        return Err(structural("bundle values do not match grid"));
    }
    let (json_path, raw_path) = bundle_paths(base.as_ref());
    let mut bytes = Vec::with_capacity(values.len() * dtype.width());
    match dtype {
        BundleDtype::U8 => {
            for &v in values {
                if !(0.0..=255.0).contains(&v) || v.fract() != 0.0 {
                    return Err(Error::Input(format!("value {v} does not fit in u8")));
                }
                bytes.push(v as u8);
            }
        }
        BundleDtype::F32 => {
            for &v in values {
                bytes.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    let header = serde_json::to_vec_pretty(&BundleHeader::new(grid, dtype))?;
    fs::write(json_path, header)?;
    fs::write(raw_path, bytes)?;
    Ok(())
}

const NIFTI_HEADER_LEN: usize = 348;

/// Reads a single-file little-endian NIfTI-1 image with datatype 2 (uint8)
/// or 16 (float32). Only `dim[0..3]`, `datatype`, `pixdim[1..3]` and
/// `vox_offset` are interpreted; scaling and orientation are ignored.
pub fn read_nifti(path: impl AsRef<Path>) -> Result<RawVolume> {
    let bytes = fs::read(path.as_ref())?;
    if bytes.len() < NIFTI_HEADER_LEN {
        return Err(Error::Schema("file shorter than a NIfTI-1 header".into()));
    }
    let i32_at = |o: usize| i32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let i16_at = |o: usize| i16::from_le_bytes(bytes[o..o + 2].try_into().unwrap());
    let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());

    if i32_at(0) != NIFTI_HEADER_LEN as i32 {
        return Err(Error::Schema(
            "sizeof_hdr is not 348 (big-endian or not NIfTI-1)".into(),
        ));
    }
    let ndim = i16_at(40);
    if !(1..=7).contains(&ndim) {
        return Err(Error::Schema(format!("invalid dim[0] = {ndim}")));
    }
    let mut dims = [1usize; 3];
    for (a, d) in dims.iter_mut().enumerate().take((ndim as usize).min(3)) {
        let v = i16_at(42 + 2 * a);
        if v < 1 {
            return Err(Error::Schema(format!("invalid dim[{}] = {v}", a + 1)));
        }
        *d = v as usize;
    }
    for a in 3..ndim as usize {
        if i16_at(42 + 2 * a) > 1 {
            return Err(Error::Schema("only 3D NIfTI volumes are supported".into()));
        }
    }
    let dtype = match i16_at(70) {
        2 => BundleDtype::U8,
        16 => BundleDtype::F32,
        other => {
            return Err(Error::Schema(format!("unsupported NIfTI datatype {other}")));
        }
    };
    let mut spacing = [1.0f64; 3];
    for (a, s) in spacing.iter_mut().enumerate() {
        let v = f32_at(80 + 4 * a).abs() as f64;
        if v > 0.0 {
            *s = v;
        }
    }
    let vox_offset = f32_at(108);
    let offset = if vox_offset >= NIFTI_HEADER_LEN as f32 {
        vox_offset as usize
    } else {
        352
    };
    let grid = Grid::new(dims, spacing)?;
    let n_bytes = grid.len() * dtype.width();
    if bytes.len() < offset + n_bytes {
        return Err(structural(format!(
            "NIfTI payload truncated: need {} bytes after offset {offset}",
            n_bytes
        )));
    }
    Ok(RawVolume {
        grid,
        dtype,
        values: decode(&bytes[offset..offset + n_bytes], dtype),
    })
}

//! 3D containers sharing one voxel grid.
//!
//! All fields are stored in x-fastest raster order: the voxel `(x, y, z)`
//! lives at `x + nx * (y + ny * z)`.

mod io;
mod morphology;

pub use io::{read_bundle, read_nifti, write_bundle, BundleDtype, BundleHeader, RawVolume};
pub use morphology::{connected_components, dilate, overlap_fraction, perilesional_shell};

use serde::{Deserialize, Serialize};

use crate::error::{structural, Error, Result};

/// Dimensions and physical voxel size of a volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
}

impl Grid {
    pub fn new(dims: [usize; 3], spacing_mm: [f64; 3]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(structural(format!("dims must be positive, got {dims:?}")));
        }
        if spacing_mm.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(structural(format!(
                "spacing must be strictly positive, got {spacing_mm:?}"
            )));
        }
        Ok(Self { dims, spacing_mm })
    }

    /// Isotropic 1 mm grid.
    pub fn isotropic(dims: [usize; 3]) -> Result<Self> {
        Self::new(dims, [1.0; 3])
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, i: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [i % nx, (i / nx) % ny, i / (nx * ny)]
    }

    /// Neighbour of `i` shifted by `offset`, or `None` outside the grid.
    #[inline]
    pub fn offset(&self, i: usize, offset: [isize; 3]) -> Option<usize> {
        let c = self.coords(i);
        let mut out = [0usize; 3];
        for a in 0..3 {
            let v = c[a] as isize + offset[a];
            if v < 0 || v >= self.dims[a] as isize {
                return None;
            }
            out[a] = v as usize;
        }
        Some(self.index(out[0], out[1], out[2]))
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing_mm.iter().product()
    }

    /// Physical coordinates of voxel centre `i` in mm.
    pub fn position_mm(&self, i: usize) -> [f64; 3] {
        let c = self.coords(i);
        [
            c[0] as f64 * self.spacing_mm[0],
            c[1] as f64 * self.spacing_mm[1],
            c[2] as f64 * self.spacing_mm[2],
        ]
    }

    pub(crate) fn ensure_same(&self, other: &Grid, what: &str) -> Result<()> {
        if self.dims != other.dims || self.spacing_mm != other.spacing_mm {
            return Err(structural(format!(
                "{what}: grid mismatch ({:?} @ {:?} vs {:?} @ {:?})",
                self.dims, self.spacing_mm, other.dims, other.spacing_mm
            )));
        }
        Ok(())
    }
}

/// Neighbourhood used by component labelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    /// Face neighbours.
    Six,
    /// Face and edge neighbours.
    Eighteen,
    /// Face, edge and corner neighbours.
    #[default]
    TwentySix,
}

impl Connectivity {
    pub fn from_count(n: u32) -> Result<Self> {
        match n {
            6 => Ok(Self::Six),
            18 => Ok(Self::Eighteen),
            26 => Ok(Self::TwentySix),
            other => Err(Error::Input(format!(
                "connectivity must be 6, 18 or 26, got {other}"
            ))),
        }
    }

    pub fn count(self) -> u32 {
        match self {
            Self::Six => 6,
            Self::Eighteen => 18,
            Self::TwentySix => 26,
        }
    }

    /// All non-zero offsets in the neighbourhood.
    pub fn offsets(self) -> Vec<[isize; 3]> {
        let max_nonzero = match self {
            Self::Six => 1,
            Self::Eighteen => 2,
            Self::TwentySix => 3,
        };
        let mut out = Vec::with_capacity(26);
        for dz in -1..=1isize {
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let nz = [dx, dy, dz].iter().filter(|&&d| d != 0).count();
                    if nz >= 1 && nz <= max_nonzero {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

/// Scalar intensity or probability field.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    grid: Grid,
    data: Vec<f64>,
}

impl Volume {
    pub fn new(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(structural(format!(
                "volume data has {} values, dims {:?} need {}",
                data.len(),
                grid.dims,
                grid.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite value at voxel {i}")));
        }
        Ok(Self { grid, data })
    }

    pub fn filled(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            data: vec![value; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(grid.len());
        for z in 0..grid.dims[2] {
            for y in 0..grid.dims[1] {
                for x in 0..grid.dims[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        Self::new(grid, data)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.grid.index(x, y, z)]
    }

    /// Voxels with value `>= tau`.
    pub fn threshold(&self, tau: f64) -> BinaryMask {
        BinaryMask {
            grid: self.grid,
            data: self.data.iter().map(|&v| v >= tau).collect(),
        }
    }

    /// Values at the foreground voxels of `roi`, in raster order.
    pub fn values_in(&self, roi: &BinaryMask) -> Result<Vec<f64>> {
        self.grid.ensure_same(roi.grid(), "values_in")?;
        Ok(roi.indices().map(|i| self.data[i]).collect())
    }
}

/// Boolean field.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    grid: Grid,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(grid: Grid, data: Vec<bool>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(structural(format!(
                "mask data has {} values, dims {:?} need {}",
                data.len(),
                grid.dims,
                grid.len()
            )));
        }
        Ok(Self { grid, data })
    }

    pub fn empty(grid: Grid) -> Self {
        Self {
            grid,
            data: vec![false; grid.len()],
        }
    }

    pub fn from_indices(grid: Grid, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut m = Self::empty(grid);
        for i in indices {
            m.data[i] = true;
        }
        m
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for z in 0..grid.dims[2] {
            for y in 0..grid.dims[1] {
                for x in 0..grid.dims[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        Self { grid, data }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        self.data[i]
    }

    pub fn set(&mut self, i: usize, value: bool) {
        self.data[i] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// Foreground voxel indices in raster order.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn intersection_count(&self, other: &BinaryMask) -> Result<usize> {
        self.grid.ensure_same(&other.grid, "intersection")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .filter(|(&a, &b)| a && b)
            .count())
    }

    pub fn and(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn or(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a || b)
    }

    /// Voxels in `self` but not in `other`.
    pub fn minus(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a && !b)
    }

    fn zip_with(&self, other: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> Result<BinaryMask> {
        self.grid.ensure_same(&other.grid, "mask combination")?;
        Ok(BinaryMask {
            grid: self.grid,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }
}

/// Integer field: 0 is background, positive values are component or region ids.
///
/// Maps produced by [`connected_components`] use the contiguous range
/// `1..=n_labels` with each label connected; region maps such as an atlas
/// only need non-negative ids.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    grid: Grid,
    data: Vec<u32>,
    n_labels: u32,
}

impl LabelMap {
    pub fn new(grid: Grid, data: Vec<u32>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(structural(format!(
                "label data has {} values, dims {:?} need {}",
                data.len(),
                grid.dims,
                grid.len()
            )));
        }
        let n_labels = data.iter().copied().max().unwrap_or(0);
        Ok(Self {
            grid,
            data,
            n_labels,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &[u32] {
        &self.data
    }

    /// Largest label value.
    pub fn n_labels(&self) -> u32 {
        self.n_labels
    }

    #[inline]
    pub fn label(&self, i: usize) -> u32 {
        self.data[i]
    }

    /// Voxel count per label; index 0 holds the background count.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.n_labels as usize + 1];
        for &l in &self.data {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// Voxel indices per label, position `l - 1` for label `l`.
    pub fn voxels_by_label(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_labels as usize];
        for (i, &l) in self.data.iter().enumerate() {
            if l > 0 {
                out[l as usize - 1].push(i);
            }
        }
        out
    }

    pub fn mask_of(&self, label: u32) -> BinaryMask {
        BinaryMask {
            grid: self.grid,
            data: self.data.iter().map(|&l| l == label).collect(),
        }
    }

    pub fn foreground(&self) -> BinaryMask {
        BinaryMask {
            grid: self.grid,
            data: self.data.iter().map(|&l| l > 0).collect(),
        }
    }

    pub fn contains_label(&self, label: u32) -> bool {
        label > 0 && self.data.contains(&label)
    }
}

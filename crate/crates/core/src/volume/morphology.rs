use super::{BinaryMask, Connectivity, LabelMap};
use crate::error::{Error, Result};

/// Labels the connected foreground components of `mask`.
///
/// Components are numbered in the raster order of their first voxel, so
/// the output is fully determined by the input.
pub fn connected_components(mask: &BinaryMask, conn: Connectivity) -> LabelMap {
    let grid = *mask.grid();
    let offsets = conn.offsets();
    let mut labels = vec![0u32; grid.len()];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for seed in 0..grid.len() {
        if !mask.contains(seed) || labels[seed] != 0 {
            continue;
        }
        next += 1;
        labels[seed] = next;
        stack.push(seed);
        while let Some(i) = stack.pop() {
            for &off in &offsets {
                if let Some(j) = grid.offset(i, off) {
                    if mask.contains(j) && labels[j] == 0 {
                        labels[j] = next;
                        stack.push(j);
                    }
                }
            }
        }
    }
    LabelMap::new(grid, labels).expect("label buffer matches grid")
}

/// Grows `mask` by `iterations` steps of the full 3x3x3 structuring element.
///
/// Equivalent to keeping every voxel within Chebyshev distance `iterations`
/// of the foreground. Nothing grows past the volume border.
pub fn dilate(mask: &BinaryMask, iterations: usize) -> Result<BinaryMask> {
    if iterations == 0 {
        return Err(Error::Input("dilation needs at least one iteration".into()));
    }
    let grid = *mask.grid();
    let mut data = mask.data().to_vec();
    // The Chebyshev ball is a box, so three 1D passes give the same result.
    for axis in 0..3 {
        data = dilate_axis(&data, grid.dims, axis, iterations);
    }
    BinaryMask::new(grid, data)
}

fn dilate_axis(data: &[bool], dims: [usize; 3], axis: usize, radius: usize) -> Vec<bool> {
    let stride = match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    };
    let n = dims[axis];
    let mut out = vec![false; data.len()];
    let mut prefix = vec![0usize; n + 1];
    for start in 0..data.len() {
        // visit each line once, from its first voxel
        if (start / stride) % n != 0 {
            continue;
        }
        for k in 0..n {
            prefix[k + 1] = prefix[k] + data[start + k * stride] as usize;
        }
        for k in 0..n {
            let lo = k.saturating_sub(radius);
            let hi = (k + radius).min(n - 1);
            out[start + k * stride] = prefix[hi + 1] > prefix[lo];
        }
    }
    out
}

/// Ring of `width` voxels around `lesion`, excluding the lesion itself.
pub fn perilesional_shell(lesion: &BinaryMask, width: usize) -> Result<BinaryMask> {
    if lesion.is_empty() {
        return Err(Error::EmptyRoi("perilesional shell of an empty lesion".into()));
    }
    dilate(lesion, width)?.minus(lesion)
}

/// Fraction of lesion voxels that fall inside `region`.
pub fn overlap_fraction(lesion: &BinaryMask, region: &BinaryMask) -> Result<f64> {
    let size = lesion.count();
    if size == 0 {
        return Err(Error::EmptyRoi("overlap fraction of an empty lesion".into()));
    }
    Ok(lesion.intersection_count(region)? as f64 / size as f64)
}

//! 3D shape descriptors of a binary region.
//!
//! Surface area counts exposed voxel faces (each weighted by its physical
//! area) instead of meshing the boundary, so it is exact for the voxel
//! solid and never smaller than the mesh estimate.

use std::f64::consts::PI;

use nalgebra::{Matrix3, SymmetricEigen};

use super::FeatureVector;
use crate::error::{Error, Result};
use crate::volume::BinaryMask;

pub const SHAPE_NAMES: [&str; 14] = [
    "volume",
    "surface_area",
    "surface_to_volume_ratio",
    "sphericity",
    "compactness",
    "maximum_3d_diameter",
    "maximum_2d_diameter_axial",
    "maximum_2d_diameter_coronal",
    "maximum_2d_diameter_sagittal",
    "major_axis_length",
    "minor_axis_length",
    "least_axis_length",
    "elongation",
    "flatness",
];

const FACES: [([isize; 3], usize); 6] = [
    ([1, 0, 0], 0),
    ([-1, 0, 0], 0),
    ([0, 1, 0], 1),
    ([0, -1, 0], 1),
    ([0, 0, 1], 2),
    ([0, 0, -1], 2),
];

/// Volume (mm³) and exposed surface area (mm²) of the voxel solid.
pub fn volume_and_surface(roi: &BinaryMask) -> (f64, f64) {
    let grid = *roi.grid();
    let s = grid.spacing_mm;
    let face_area = [s[1] * s[2], s[0] * s[2], s[0] * s[1]];
    let mut n = 0usize;
    let mut area = 0.0;
    for i in roi.indices() {
        n += 1;
        for (off, axis) in FACES {
            let exposed = match grid.offset(i, off) {
                Some(j) => !roi.contains(j),
                None => true,
            };
            if exposed {
                area += face_area[axis];
            }
        }
    }
    (n as f64 * grid.voxel_volume(), area)
}

/// Largest centre-to-centre distance, optionally only between points that
/// share their coordinate along `plane_axis`.
fn max_distance(points: &[[f64; 3]], keys: &[[usize; 3]], plane_axis: Option<usize>) -> f64 {
    let mut best = 0.0f64;
    for a in 0..points.len() {
        for b in a + 1..points.len() {
            if let Some(ax) = plane_axis {
                if keys[a][ax] != keys[b][ax] {
                    continue;
                }
            }
            let d2 = (0..3).map(|k| (points[a][k] - points[b][k]).powi(2)).sum::<f64>();
            best = best.max(d2);
        }
    }
    best.sqrt()
}

pub fn shape_features(roi: &BinaryMask) -> Result<FeatureVector> {
    if roi.is_empty() {
        return Err(Error::EmptyRoi("shape features".into()));
    }
    let grid = *roi.grid();
    let (volume, area) = volume_and_surface(roi);
    let sphericity = PI.cbrt() * (6.0 * volume).powf(2.0 / 3.0) / area;
    let compactness = 36.0 * PI * volume * volume / area.powi(3);

    // boundary voxels: at least one face neighbour outside the region
    let mut boundary = Vec::new();
    let mut keys = Vec::new();
    for i in roi.indices() {
        let on_edge = FACES.iter().any(|&(off, _)| match grid.offset(i, off) {
            Some(j) => !roi.contains(j),
            None => true,
        });
        if on_edge {
            boundary.push(grid.position_mm(i));
            keys.push(grid.coords(i));
        }
    }
    let d3 = max_distance(&boundary, &keys, None);
    let d_axial = max_distance(&boundary, &keys, Some(2));
    let d_coronal = max_distance(&boundary, &keys, Some(1));
    let d_sagittal = max_distance(&boundary, &keys, Some(0));

    let pts: Vec<[f64; 3]> = roi.indices().map(|i| grid.position_mm(i)).collect();
    let n = pts.len() as f64;
    let mut mean = [0.0; 3];
    for p in &pts {
        for k in 0..3 {
            mean[k] += p[k] / n;
        }
    }
    let mut cov = Matrix3::<f64>::zeros();
    for p in &pts {
        for r in 0..3 {
            for c in 0..3 {
                cov[(r, c)] += (p[r] - mean[r]) * (p[c] - mean[c]) / n;
            }
        }
    }
    let mut eig: Vec<f64> = SymmetricEigen::new(cov)
        .eigenvalues
        .iter()
        .map(|&l| l.max(0.0))
        .collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let (major, minor, least) = (eig[0], eig[1], eig[2]);
    let (elongation, flatness) = if major > 0.0 {
        ((minor / major).sqrt(), (least / major).sqrt())
    } else {
        (1.0, 1.0)
    };

    let values = [
        volume,
        area,
        area / volume,
        sphericity,
        compactness,
        d3,
        d_axial,
        d_coronal,
        d_sagittal,
        4.0 * major.sqrt(),
        4.0 * minor.sqrt(),
        4.0 * least.sqrt(),
        elongation,
        flatness,
    ];
    let mut fv = FeatureVector::new();
    for (name, v) in SHAPE_NAMES.iter().zip(values) {
        fv.push(*name, Some(v));
    }
    Ok(fv)
}

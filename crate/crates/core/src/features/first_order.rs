//! First-order intensity statistics of a region.

use super::FeatureVector;
use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Volume};

pub const HISTOGRAM_BINS: usize = 32;

/// Statistic names in output order.
pub const FIRST_ORDER_NAMES: [&str; 18] = [
    "mean",
    "median",
    "variance",
    "std",
    "skewness",
    "kurtosis",
    "minimum",
    "maximum",
    "range",
    "p10",
    "p90",
    "interquartile_range",
    "energy",
    "entropy",
    "mean_absolute_deviation",
    "robust_mean_absolute_deviation",
    "rms",
    "uniformity",
];

/// Linear-interpolation percentile of sorted values, `q` in [0, 1].
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Equal-width bin index over `[min, max]`; a constant region uses bin 0.
pub(crate) fn bin_index(v: f64, min: f64, max: f64, bins: usize) -> usize {
    if max <= min {
        return 0;
    }
    let b = ((v - min) / (max - min) * bins as f64).floor() as usize;
    b.min(bins - 1)
}

/// The 18 statistics of `image` restricted to `roi`.
///
/// Variance is the population variance; skewness and excess kurtosis are 0
/// for a region without spread. Entropy (bits) and uniformity use a
/// 32-bin histogram over the region's own range.
pub fn first_order_stats(image: &Volume, roi: &BinaryMask) -> Result<FeatureVector> {
    let mut values = image.values_in(roi)?;
    if values.is_empty() {
        return Err(Error::EmptyRoi("first-order statistics".into()));
    }
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    let (skewness, kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    let min = values[0];
    let max = values[values.len() - 1];
    let p10 = percentile_sorted(&values, 0.10);
    let p25 = percentile_sorted(&values, 0.25);
    let p75 = percentile_sorted(&values, 0.75);
    let p90 = percentile_sorted(&values, 0.90);
    let energy = values.iter().map(|v| v * v).sum::<f64>();

    let mut hist = [0usize; HISTOGRAM_BINS];
    for &v in &values {
        hist[bin_index(v, min, max, HISTOGRAM_BINS)] += 1;
    }
    let mut entropy = 0.0;
    let mut uniformity = 0.0;
    for &c in &hist {
        if c > 0 {
            let p = c as f64 / n;
            entropy -= p * p.log2();
            uniformity += p * p;
        }
    }

    let mad = values.iter().map(|v| (v - mean).abs()).sum::<f64>() / n;
    let robust: Vec<f64> = values
        .iter()
        .copied()
        .filter(|&v| v >= p10 && v <= p90)
        .collect();
    // Two-voxel regions have no value strictly inside the percentile band.
    let robust_mad = if robust.is_empty() {
        0.0
    } else {
        let robust_mean = robust.iter().sum::<f64>() / robust.len() as f64;
        robust.iter().map(|v| (v - robust_mean).abs()).sum::<f64>() / robust.len() as f64
    };

    let stats = [
        mean,
        percentile_sorted(&values, 0.5),
        m2,
        m2.sqrt(),
        skewness,
        kurtosis,
        min,
        max,
        max - min,
        p10,
        p90,
        p75 - p25,
        energy,
        entropy.max(0.0),
        mad,
        robust_mad,
        (energy / n).sqrt(),
        uniformity,
    ];
    let mut fv = FeatureVector::new();
    for (name, v) in FIRST_ORDER_NAMES.iter().zip(stats) {
        fv.push(*name, Some(v));
    }
    Ok(fv)
}

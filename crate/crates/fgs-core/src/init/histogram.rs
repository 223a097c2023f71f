//! Sparse 3D histogram over a point cloud.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::CoreError;

/// Default bin width in world units, sized for scenes that fit roughly
/// in a [-1, 1] box.
pub const DEFAULT_INTERVAL: f64 = 0.026;

/// Default symmetric widening of the data bounds before binning.
pub const DEFAULT_EXPAND: f64 = 1.2;

/// Points per parallel accumulation chunk; fixed so the merge order (and
/// thus the color sums) never depends on thread count.
const CHUNK: usize = 8192;

/// A sparse count grid over an axis-aligned box.
///
/// The box is the data bounding box widened symmetrically about its
/// center, cut into cubic bins of width `interval` starting at `min`.
/// Only occupied bins are stored. When the source cloud carries colors,
/// per-bin color sums are kept alongside the counts.
#[derive(Debug, Clone)]
pub struct HistogramGrid {
    /// Lower corner of the widened box.
    pub min: [f64; 3],
    /// Upper corner of the widened box.
    pub max: [f64; 3],
    /// Bin width (cubic bins).
    pub interval: f64,
    /// Number of bins along each axis.
    pub bins_per_axis: [u32; 3],
    /// Occupied bins: index triple -> point count.
    pub counts: BTreeMap<[u32; 3], u32>,
    color_sums: Option<BTreeMap<[u32; 3], [f64; 3]>>,
}

impl HistogramGrid {
    /// Total number of binned points.
    pub fn total(&self) -> u64 {
        self.counts.values().map(|&c| u64::from(c)).sum()
    }

    /// Number of occupied bins.
    pub fn occupied(&self) -> usize {
        self.counts.len()
    }

    /// World-space bounds of a bin (lower corner, upper corner).
    pub fn bin_bounds(&self, bin: [u32; 3]) -> ([f64; 3], [f64; 3]) {
        let lo = [
            self.min[0] + f64::from(bin[0]) * self.interval,
            self.min[1] + f64::from(bin[1]) * self.interval,
            self.min[2] + f64::from(bin[2]) * self.interval,
        ];
        (lo, [lo[0] + self.interval, lo[1] + self.interval, lo[2] + self.interval])
    }

    /// Mean color of the points in a bin, when colors were supplied.
    pub fn mean_color(&self, bin: [u32; 3]) -> Option<[f32; 3]> {
        let sums = self.color_sums.as_ref()?;
        let sum = sums.get(&bin)?;
        let count = f64::from(*self.counts.get(&bin)?);
        Some([
            (sum[0] / count) as f32,
            (sum[1] / count) as f32,
            (sum[2] / count) as f32,
        ])
    }
}

/// Builds the histogram for a point cloud.
///
/// Bounds are the data min/max widened symmetrically about the center by
/// `expand`; the bin count per axis is `ceil(expand * raw_extent /
/// interval)`, at least one. A point on a bin boundary goes to the lower
/// bin and the last bin is closed on the right, so every point lands in
/// exactly one bin. Optional colors must match the points one to one.
pub fn build_histogram(
    points: &[[f32; 3]],
    colors: Option<&[[f32; 3]]>,
    interval: f64,
    expand: f64,
) -> Result<HistogramGrid, CoreError> {
    if points.is_empty() {
        return Err(CoreError::EmptyPointSet);
    }
    if !(interval > 0.0 && interval.is_finite()) {
        return Err(CoreError::InvalidArgument(format!(
            "histogram interval must be positive and finite, got {interval}"
        )));
    }
    if !(expand > 0.0 && expand.is_finite()) {
        return Err(CoreError::InvalidArgument(format!(
            "bound expansion factor must be positive and finite, got {expand}"
        )));
    }
    if let Some(colors) = colors {
        if colors.len() != points.len() {
            return Err(CoreError::ShapeMismatch(format!(
                "{} colors for {} points",
                colors.len(),
                points.len()
            )));
        }
    }
    let mut raw_min = [f64::INFINITY; 3];
    let mut raw_max = [f64::NEG_INFINITY; 3];
    for p in points {
        for a in 0..3 {
            let v = f64::from(p[a]);
            if !v.is_finite() {
                return Err(CoreError::NonFinite("point cloud contains non-finite coordinates".into()));
            }
            raw_min[a] = raw_min[a].min(v);
            raw_max[a] = raw_max[a].max(v);
        }
    }
    let mut min = [0.0; 3];
    let mut max = [0.0; 3];
    let mut bins_per_axis = [0u32; 3];
    for a in 0..3 {
        let center = 0.5 * (raw_min[a] + raw_max[a]);
        let half = 0.5 * (raw_max[a] - raw_min[a]);
        min[a] = center - expand * half;
        max[a] = center + expand * half;
        bins_per_axis[a] = ((expand * (raw_max[a] - raw_min[a]) / interval).ceil() as u32).max(1);
    }

    let bin_of = |p: &[f32; 3]| -> [u32; 3] {
        let mut bin = [0u32; 3];
        for a in 0..3 {
            // Boundary points go to the lower bin: ceil((x - min)/w) - 1,
            // clamped into the grid (which also closes the last bin).
            let t = ((f64::from(p[a]) - min[a]) / interval).ceil() - 1.0;
            bin[a] = (t.max(0.0) as u32).min(bins_per_axis[a] - 1);
        }
        bin
    };

    // Accumulate per fixed-size chunk in parallel, then merge in chunk
    // order so the floating-point color sums are reproducible.
    let partials: Vec<(BTreeMap<[u32; 3], u32>, BTreeMap<[u32; 3], [f64; 3]>)> = points
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(chunk_idx, chunk)| {
            let mut counts = BTreeMap::new();
            let mut sums = BTreeMap::new();
            for (offset, p) in chunk.iter().enumerate() {
                let bin = bin_of(p);
                *counts.entry(bin).or_insert(0u32) += 1;
                if let Some(colors) = colors {
                    let c = colors[chunk_idx * CHUNK + offset];
                    let sum = sums.entry(bin).or_insert([0.0f64; 3]);
                    for ch in 0..3 {
                        sum[ch] += f64::from(c[ch]);
                    }
                }
            }
            (counts, sums)
        })
        .collect();
    let mut counts = BTreeMap::new();
    let mut sums = BTreeMap::new();
    for (part_counts, part_sums) in partials {
        for (bin, c) in part_counts {
            *counts.entry(bin).or_insert(0u32) += c;
        }
        for (bin, s) in part_sums {
            let sum = sums.entry(bin).or_insert([0.0f64; 3]);
            for ch in 0..3 {
                sum[ch] += s[ch];
            }
        }
    }
    Ok(HistogramGrid {
        min,
        max,
        interval,
        bins_per_axis,
        counts,
        color_sums: colors.map(|_| sums),
    })
}

//! Fitting factorized coordinates to a point cloud by Chamfer descent.
//!
//! This is a rendering-free exercise of the coordinate factorization: a
//! fixed budget of blocks is seeded over the densest histogram bins and
//! their axis coordinates are optimized with Adam so the expanded grids
//! cover the target cloud.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adam::AdamState;
use crate::error::CoreError;
use crate::factor::{coordinate_adjoint, expand_cp_coordinates, CpBlock};
use crate::init::histogram::build_histogram;
use crate::init::seed::{even_span, seed_attributes};
use crate::init::{chamfer_distance_grad, HistogramGrid};

/// Result of a Chamfer fit.
pub struct FitReport {
    /// Optimized blocks, coordinates fitted, attributes as seeded.
    pub blocks: Vec<CpBlock>,
    /// Chamfer distance before each step plus one final value, so
    /// `losses.len() == steps + 1`.
    pub losses: Vec<f64>,
}

/// Shrinks the bin width until at least `wanted` bins are occupied (or
/// the width search bottoms out) and returns the histogram.
fn histogram_with_bins(
    target: &[[f32; 3]],
    wanted: usize,
) -> Result<HistogramGrid, CoreError> {
    let mut lo = [f32::INFINITY; 3];
    let mut hi = [f32::NEG_INFINITY; 3];
    for p in target {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let extent = (0..3).map(|a| f64::from(hi[a]) - f64::from(lo[a])).fold(0.0, f64::max);
    let mut interval = if extent > 0.0 { 0.5 * extent } else { 1.0 };
    let mut hist = build_histogram(target, None, interval, 1.0)?;
    for _ in 0..48 {
        if hist.occupied() >= wanted {
            break;
        }
        interval *= 0.6;
        hist = build_histogram(target, None, interval, 1.0)?;
    }
    Ok(hist)
}

/// Seeds exactly `block_count` blocks for a Chamfer fit.
///
/// The histogram interval is shrunk until enough bins are occupied, bins
/// are ranked by point count (ties by bin index), and blocks go to the
/// top bins one each; with fewer occupied bins than blocks, allocation
/// wraps around and the repeat blocks get a small seeded coordinate
/// jitter so coincident grids can separate during descent.
pub fn seed_fit_blocks(
    target: &[[f32; 3]],
    block_count: usize,
    resolution: usize,
    seed: u64,
) -> Result<Vec<CpBlock>, CoreError> {
    if block_count == 0 || resolution == 0 {
        return Err(CoreError::InvalidArgument(
            "block count and resolution must be >= 1".into(),
        ));
    }
    let hist = histogram_with_bins(target, block_count)?;
    let mut ranked: Vec<([u32; 3], u32)> = hist.counts.iter().map(|(&b, &c)| (b, c)).collect();
    ranked.sort_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(&y.0)));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks = Vec::with_capacity(block_count);
    for slot in 0..block_count {
        let (bin, _) = ranked[slot % ranked.len()];
        let repeat = slot / ranked.len() > 0;
        let (lo, hi) = hist.bin_bounds(bin);
        let mut coords = [
            even_span(lo[0], hi[0], resolution),
            even_span(lo[1], hi[1], resolution),
            even_span(lo[2], hi[2], resolution),
        ];
        if repeat {
            for axis in &mut coords {
                for v in axis.iter_mut() {
                    *v += (hist.interval * 0.25) as f32 * (rng.gen::<f32>() - 0.5);
                }
            }
        }
        let [cx, cy, cz] = coords;
        let mut block = CpBlock::from_coords(cx, cy, cz, 1)?;
        seed_attributes(&mut block, hist.interval, None, &mut rng);
        blocks.push(block);
    }
    Ok(blocks)
}

/// Seeds `block_count` blocks of the given resolution and runs `steps`
/// Adam updates of their coordinates against the symmetric Chamfer
/// distance to `target`. Attribute factors are seeded but not touched.
/// A zero learning rate leaves the seeded coordinates exactly unchanged.
pub fn fit_coordinates_chamfer(
    target: &[[f32; 3]],
    block_count: usize,
    resolution: usize,
    steps: usize,
    lr: f32,
    seed: u64,
) -> Result<FitReport, CoreError> {
    if target.is_empty() {
        return Err(CoreError::EmptyPointSet);
    }
    if !lr.is_finite() || lr < 0.0 {
        return Err(CoreError::InvalidArgument(format!(
            "learning rate must be finite and non-negative, got {lr}"
        )));
    }
    let mut blocks = seed_fit_blocks(target, block_count, resolution, seed)?;
    let n = resolution;
    let cells = n * n * n;
    let mut optimizers: Vec<[AdamState; 3]> = blocks
        .iter()
        .map(|_| std::array::from_fn(|_| AdamState::new(n)))
        .collect();
    let mut losses = Vec::with_capacity(steps + 1);

    let expand_all = |blocks: &[CpBlock]| -> Vec<[f32; 3]> {
        let mut out = Vec::with_capacity(blocks.len() * cells);
        for b in blocks {
            out.extend(expand_cp_coordinates(b));
        }
        out
    };

    for _ in 0..steps {
        let positions = expand_all(&blocks);
        let (value, grad) = chamfer_distance_grad(&positions, target)?;
        if !value.is_finite() {
            return Err(CoreError::NumericalFailure(format!(
                "chamfer distance became non-finite ({value})"
            )));
        }
        losses.push(value);
        for (b, block) in blocks.iter_mut().enumerate() {
            let slice = &grad[b * cells..(b + 1) * cells];
            let [gx, gy, gz] = coordinate_adjoint(n, slice);
            let [ox, oy, oz] = &mut optimizers[b];
            ox.step(&mut block.coord_x, &gx, lr)?;
            oy.step(&mut block.coord_y, &gy, lr)?;
            oz.step(&mut block.coord_z, &gz, lr)?;
        }
    }
    let positions = expand_all(&blocks);
    let (final_value, _) = chamfer_distance_grad(&positions, target)?;
    losses.push(final_value);
    Ok(FitReport {
        blocks,
        losses,
    })
}

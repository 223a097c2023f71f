//! Factor-block allocation from an occupied histogram.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::CoreError;
use crate::factor::{CpBlock, VmBlock};
use crate::init::HistogramGrid;

/// Default occupancy threshold: bins holding at most this many points
/// produce no blocks.
pub const DEFAULT_LAMBDA: u32 = 5;

/// Spread of the random feature-factor seeding.
const FEATURE_SIGMA: f64 = 0.2;

/// Off-identity value for the x/y/z rotation factor lanes. Exact zeros
/// would make the three-factor products insensitive to every lane, so a
/// small value keeps the rotation trainable while the expanded
/// quaternion still normalizes to (almost) the identity.
const ROT_EPSILON: f32 = 0.1;

/// Draws a standard normal variate (Box-Muller).
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// `N` evenly spaced values spanning `[lo, hi]` inclusive; the interval
/// center when `N == 1`.
pub(crate) fn even_span(lo: f64, hi: f64, n: usize) -> Vec<f32> {
    if n == 1 {
        return vec![(0.5 * (lo + hi)) as f32];
    }
    (0..n)
        .map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64) as f32)
        .collect()
}

/// Fills a freshly allocated block's attribute factors in place.
///
/// * scales: every lane gets `cbrt(extent / (2N))`, so the expanded
///   per-axis scale is `extent / (2N)` — Gaussians about half a
///   coordinate step wide;
/// * rotations: `(1, eps, eps, eps)` rows whose product normalizes to
///   nearly the identity while keeping all four lanes trainable;
/// * features: seeded normal noise, with the first three channels set to
///   the cube root of the bin's mean color when one is available, so the
///   expanded feature starts at the color itself.
pub(crate) fn seed_attributes(
    block: &mut CpBlock,
    extent: f64,
    mean_color: Option<[f32; 3]>,
    rng: &mut ChaCha8Rng,
) {
    let n = block.resolution;
    let d = block.feature_dim;
    let scale = (extent / (2.0 * n as f64)).cbrt() as f32;
    for arr in [&mut block.scale_x, &mut block.scale_y, &mut block.scale_z] {
        arr.fill(scale);
    }
    for arr in [&mut block.rot_x, &mut block.rot_y, &mut block.rot_z] {
        for i in 0..n {
            arr[i * 4] = 1.0;
            for lane in 1..4 {
                arr[i * 4 + lane] = ROT_EPSILON;
            }
        }
    }
    for arr in [&mut block.feat_x, &mut block.feat_y, &mut block.feat_z] {
        for v in arr.iter_mut() {
            *v = (FEATURE_SIGMA * standard_normal(rng)) as f32;
        }
    }
    if let Some(color) = mean_color {
        for (k, &c) in color.iter().enumerate().take(d.min(3)) {
            let factor = f64::from(c.max(1e-3)).cbrt() as f32;
            for arr in [&mut block.feat_x, &mut block.feat_y, &mut block.feat_z] {
                for i in 0..n {
                    arr[i * d + k] = factor;
                }
            }
        }
    }
}

/// Allocates CP blocks for every histogram bin holding more than
/// `lambda` points: `ceil(count / N^3)` blocks per such bin, each with
/// coordinates spread evenly across the bin and attributes seeded by
/// [`seed_attributes`]. Blocks are emitted in ascending bin order;
/// sibling blocks of one bin share the same coordinate span.
pub fn seed_blocks(
    hist: &HistogramGrid,
    resolution: usize,
    lambda: u32,
    feature_dim: usize,
    seed: u64,
) -> Result<Vec<CpBlock>, CoreError> {
    if resolution == 0 {
        return Err(CoreError::InvalidArgument("block resolution must be >= 1".into()));
    }
    let cells = (resolution * resolution * resolution) as u32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks = Vec::new();
    for (&bin, &count) in &hist.counts {
        if count <= lambda {
            continue;
        }
        let per_bin = count.div_ceil(cells);
        let (lo, hi) = hist.bin_bounds(bin);
        let mean_color = hist.mean_color(bin);
        for _ in 0..per_bin {
            let mut block = CpBlock::from_coords(
                even_span(lo[0], hi[0], resolution),
                even_span(lo[1], hi[1], resolution),
                even_span(lo[2], hi[2], resolution),
                feature_dim,
            )?;
            seed_attributes(&mut block, hist.interval, mean_color, &mut rng);
            blocks.push(block);
        }
    }
    Ok(blocks)
}

/// Allocates `block_count` CP blocks with axis coordinates drawn
/// uniformly inside the given box, sorted ascending per axis, and
/// attributes seeded as in [`seed_blocks`]. The scale extent assumes the
/// blocks tile the box evenly, so more blocks start smaller.
pub fn random_blocks(
    lo: [f32; 3],
    hi: [f32; 3],
    block_count: usize,
    resolution: usize,
    feature_dim: usize,
    seed: u64,
) -> Result<Vec<CpBlock>, CoreError> {
    if block_count == 0 || resolution == 0 {
        return Err(CoreError::InvalidArgument(
            "block count and resolution must be >= 1".into(),
        ));
    }
    for axis in 0..3 {
        if !lo[axis].is_finite() || !hi[axis].is_finite() || hi[axis] < lo[axis] {
            return Err(CoreError::InvalidArgument(format!(
                "bad bounds on axis {axis}: [{}, {}]",
                lo[axis], hi[axis]
            )));
        }
    }
    let mean_extent = (0..3)
        .map(|a| f64::from(hi[a]) - f64::from(lo[a]))
        .sum::<f64>()
        / 3.0;
    let extent = if mean_extent > 0.0 {
        mean_extent / (block_count as f64).cbrt()
    } else {
        1.0
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks = Vec::with_capacity(block_count);
    for _ in 0..block_count {
        let [cx, cy, cz]: [Vec<f32>; 3] = std::array::from_fn(|a| {
            let mut vals: Vec<f32> = (0..resolution)
                .map(|_| {
                    if hi[a] > lo[a] {
                        rng.gen_range(lo[a]..hi[a])
                    } else {
                        lo[a]
                    }
                })
                .collect();
            vals.sort_by(f32::total_cmp);
            vals
        });
        let mut block = CpBlock::from_coords(cx, cy, cz, feature_dim)?;
        seed_attributes(&mut block, extent, None, &mut rng);
        blocks.push(block);
    }
    Ok(blocks)
}

/// Converts CP-seeded blocks into VM blocks covering the same grid.
///
/// Plane cells take their coordinate pairs from the CP axis vectors
/// (`plane_xy` at `(i, j)` gets `(coord_x[i], coord_y[j])` and so on),
/// lines copy the remaining axis, so the expanded positions match the CP
/// expansion exactly. Line features copy the CP feature factors; plane
/// features get fresh seeded noise; scales and rotations carry over
/// unchanged.
pub fn vm_blocks_from_cp(cp_blocks: &[CpBlock], seed: u64) -> Result<Vec<VmBlock>, CoreError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks = Vec::with_capacity(cp_blocks.len());
    for cp in cp_blocks {
        cp.validate()?;
        let n = cp.resolution;
        let d = cp.feature_dim;
        let mut vm = VmBlock::new(n, d)?;
        for a in 0..n {
            for b in 0..n {
                let cell = (a * n + b) * 2;
                vm.plane_xy[cell] = cp.coord_x[a];
                vm.plane_xy[cell + 1] = cp.coord_y[b];
                vm.plane_yz[cell] = cp.coord_y[a];
                vm.plane_yz[cell + 1] = cp.coord_z[b];
                vm.plane_xz[cell] = cp.coord_x[a];
                vm.plane_xz[cell + 1] = cp.coord_z[b];
            }
        }
        vm.line_x.copy_from_slice(&cp.coord_x);
        vm.line_y.copy_from_slice(&cp.coord_y);
        vm.line_z.copy_from_slice(&cp.coord_z);
        vm.feat_x.copy_from_slice(&cp.feat_x);
        vm.feat_y.copy_from_slice(&cp.feat_y);
        vm.feat_z.copy_from_slice(&cp.feat_z);
        for arr in [&mut vm.feat_xy, &mut vm.feat_yz, &mut vm.feat_xz] {
            for v in arr.iter_mut() {
                *v = (FEATURE_SIGMA * standard_normal(&mut rng)) as f32;
            }
        }
        vm.scale_x.copy_from_slice(&cp.scale_x);
        vm.scale_y.copy_from_slice(&cp.scale_y);
        vm.scale_z.copy_from_slice(&cp.scale_z);
        vm.rot_x.copy_from_slice(&cp.rot_x);
        vm.rot_y.copy_from_slice(&cp.rot_y);
        vm.rot_z.copy_from_slice(&cp.rot_z);
        vm.validate()?;
        blocks.push(vm);
    }
    Ok(blocks)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::factor::{expand_cp_coordinates, expand_vm_shared_coordinates};
    use crate::init::build_histogram;

    fn cluster(center: [f32; 3], count: usize, rng: &mut ChaCha8Rng) -> Vec<[f32; 3]> {
        (0..count)
            .map(|_| {
                [
                    center[0] + 0.01 * rng.gen::<f32>(),
                    center[1] + 0.01 * rng.gen::<f32>(),
                    center[2] + 0.01 * rng.gen::<f32>(),
                ]
            })
            .collect()
    }

    #[test]
    fn sparse_bins_allocate_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // 5 points in one corner, 6 well inside a far bin (off the bin
        // boundaries): only the second bin clears the lambda = 5
        // threshold.
        let mut points = cluster([0.0, 0.0, 0.0], 5, &mut rng);
        points.extend(cluster([10.3, 10.3, 10.3], 6, &mut rng));
        let hist = build_histogram(&points, None, 1.0, 1.0).unwrap();
        let blocks = seed_blocks(&hist, 3, DEFAULT_LAMBDA, 4, 7).unwrap();
        assert_eq!(blocks.len(), 1);
    }

    #[test]
    fn allocation_is_count_over_cells_rounded_up() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // 6 -> 1 block, 60 -> 3 blocks at N = 3 (27 cells).
        let mut points = cluster([0.0, 0.0, 0.0], 6, &mut rng);
        points.extend(cluster([10.3, 10.3, 10.3], 60, &mut rng));
        let hist = build_histogram(&points, None, 1.0, 1.0).unwrap();
        let blocks = seed_blocks(&hist, 3, 5, 4, 7).unwrap();
        assert_eq!(blocks.len(), 4);

        let brute: u32 = hist
            .counts
            .values()
            .filter(|&&c| c > 5)
            .map(|&c| c.div_ceil(27))
            .sum();
        assert_eq!(blocks.len() as u32, brute);
    }

    #[test]
    fn coordinates_span_the_bin_evenly() {
        let points = vec![[0.5f32, 0.5, 0.5]; 10];
        let hist = build_histogram(&points, None, 2.0, 1.0).unwrap();
        let blocks = seed_blocks(&hist, 3, 5, 4, 7).unwrap();
        assert_eq!(blocks.len(), 1);
        let b = &blocks[0];
        let (lo, hi) = hist.bin_bounds([0, 0, 0]);
        assert_eq!(b.coord_x[0], lo[0] as f32);
        assert_eq!(b.coord_x[2], hi[0] as f32);
        let mid = (0.5 * (lo[0] + hi[0])) as f32;
        assert!((b.coord_x[1] - mid).abs() < 1e-6);

        let one = seed_blocks(&hist, 1, 5, 4, 7).unwrap();
        assert!((one[0].coord_y[0] - mid).abs() < 1e-6);
    }

    #[test]
    fn attributes_expand_to_sane_gaussians() {
        let points = vec![[0.0f32, 0.0, 0.0]; 10];
        let colors = vec![[0.8f32, 0.2, 0.5]; 10];
        let hist = build_histogram(&points, Some(&colors), 0.5, 1.0).unwrap();
        let blocks = seed_blocks(&hist, 2, 5, 8, 9).unwrap();
        let b = &blocks[0];
        // Expanded scale = product of the three equal factors = extent/(2N).
        let expanded = f64::from(b.scale_x[0]) * f64::from(b.scale_y[0]) * f64::from(b.scale_z[0]);
        assert!((expanded - 0.5 / 4.0).abs() < 1e-6);
        // Rotation product normalizes close to the identity.
        let w = b.rot_x[0] * b.rot_y[0] * b.rot_z[0];
        let x = b.rot_x[1] * b.rot_y[1] * b.rot_z[1];
        assert_eq!(w, 1.0);
        assert!((x - 0.001).abs() < 1e-7);
        // First three feature channels multiply back to the bin color.
        for (k, want) in [0.8f64, 0.2, 0.5].into_iter().enumerate() {
            let f = f64::from(b.feat_x[k]) * f64::from(b.feat_y[k]) * f64::from(b.feat_z[k]);
            assert!((f - want).abs() < 1e-5, "channel {k}: {f} vs {want}");
        }
        // Remaining channels look like noise, not constants.
        assert!(b.feat_x[3] != b.feat_x[8 + 3]);
    }

    #[test]
    fn seeding_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let points = cluster([0.0, 0.0, 0.0], 40, &mut rng);
        let hist = build_histogram(&points, None, 0.1, 1.2).unwrap();
        let a = seed_blocks(&hist, 3, 5, 4, 42).unwrap();
        let b = seed_blocks(&hist, 3, 5, 4, 42).unwrap();
        assert_eq!(a, b);
        let c = seed_blocks(&hist, 3, 5, 4, 43).unwrap();
        assert!(a.iter().zip(&c).any(|(x, y)| x.feat_x != y.feat_x));
    }

    #[test]
    fn random_blocks_stay_inside_their_box() {
        let lo = [-1.0f32, 0.5, -3.0];
        let hi = [2.0f32, 0.5, -1.0];
        let blocks = random_blocks(lo, hi, 6, 4, 2, 9).unwrap();
        assert_eq!(blocks.len(), 6);
        for b in &blocks {
            b.validate().unwrap();
            for (axis, coords) in
                [&b.coord_x, &b.coord_y, &b.coord_z].into_iter().enumerate()
            {
                for pair in coords.windows(2) {
                    assert!(pair[0] <= pair[1], "axis {axis} not sorted");
                }
                for &v in coords.iter() {
                    assert!(v >= lo[axis] && v <= hi[axis], "axis {axis}: {v}");
                }
            }
            // The degenerate y axis collapses to its single value.
            assert!(b.coord_y.iter().all(|&v| v == 0.5));
        }

        let again = random_blocks(lo, hi, 6, 4, 2, 9).unwrap();
        assert_eq!(blocks, again);
        assert!(random_blocks(lo, hi, 0, 4, 2, 9).is_err());
        assert!(random_blocks(hi, lo, 2, 4, 2, 9).is_err());
    }

    #[test]
    fn vm_conversion_preserves_positions() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let points = cluster([1.0, -2.0, 0.5], 30, &mut rng);
        let hist = build_histogram(&points, None, 0.05, 1.2).unwrap();
        let cp = seed_blocks(&hist, 3, 5, 4, 11).unwrap();
        let vm = vm_blocks_from_cp(&cp, 12).unwrap();
        assert_eq!(cp.len(), vm.len());
        for (c, v) in cp.iter().zip(&vm) {
            let cp_pos = expand_cp_coordinates(c);
            let vm_pos = expand_vm_shared_coordinates(v);
            assert_eq!(cp_pos, vm_pos);
            assert_eq!(c.scale_x, v.scale_x);
            assert_eq!(c.feat_z, v.feat_z);
        }
    }
}

//! Exact nearest-neighbor queries and the symmetric Chamfer distance.
//!
//! Distances are accumulated in f64 from the f32 coordinates, queries
//! run in index order, and ties pick the lower point index, so results
//! are reproducible and match a brute-force scan bit for bit.

use rayon::prelude::*;

use crate::error::CoreError;

/// Cells per axis never exceed this, keeping the dense cell table small.
const MAX_CELLS_PER_AXIS: usize = 64;

/// A uniform spatial hash over a fixed point set for exact
/// nearest-neighbor lookups.
///
/// Points are bucketed into a dense cubic cell grid (CSR layout). A
/// query walks cells ring by ring outward from the query's cell and
/// stops once no farther ring can beat the best squared distance found,
/// so the result is exact, not approximate.
pub struct PointGrid {
    points: Vec<[f32; 3]>,
    min: [f64; 3],
    cell: f64,
    dims: [usize; 3],
    cell_start: Vec<u32>,
    order: Vec<u32>,
}

fn dist2(a: [f32; 3], b: [f32; 3]) -> f64 {
    let dx = f64::from(a[0]) - f64::from(b[0]);
    let dy = f64::from(a[1]) - f64::from(b[1]);
    let dz = f64::from(a[2]) - f64::from(b[2]);
    dx * dx + dy * dy + dz * dz
}

impl PointGrid {
    pub fn new(points: Vec<[f32; 3]>) -> Result<Self, CoreError> {
        if points.is_empty() {
            return Err(CoreError::EmptyPointSet);
        }
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        for p in &points {
            for a in 0..3 {
                let v = f64::from(p[a]);
                if !v.is_finite() {
                    return Err(CoreError::NonFinite(
                        "point set contains non-finite coordinates".into(),
                    ));
                }
                min[a] = min[a].min(v);
                max[a] = max[a].max(v);
            }
        }
        let per_axis = ((points.len() as f64).cbrt().ceil() as usize).clamp(1, MAX_CELLS_PER_AXIS);
        let extent = (0..3).map(|a| max[a] - min[a]).fold(0.0f64, f64::max);
        let cell = if extent > 0.0 { extent / per_axis as f64 } else { 1.0 };
        let dims = [per_axis; 3];

        let cell_of = |p: &[f32; 3]| -> usize {
            let mut idx = [0usize; 3];
            for a in 0..3 {
                let t = ((f64::from(p[a]) - min[a]) / cell).floor();
                idx[a] = (t.max(0.0) as usize).min(dims[a] - 1);
            }
            (idx[0] * dims[1] + idx[1]) * dims[2] + idx[2]
        };

        // Counting sort into CSR: cell_start[c]..cell_start[c+1] indexes
        // `order`, which lists point indices ascending within each cell.
        let n_cells = dims[0] * dims[1] * dims[2];
        let mut counts = vec![0u32; n_cells + 1];
        for p in &points {
            counts[cell_of(p) + 1] += 1;
        }
        for c in 0..n_cells {
            counts[c + 1] += counts[c];
        }
        let cell_start = counts.clone();
        let mut cursor = counts;
        let mut order = vec![0u32; points.len()];
        for (idx, p) in points.iter().enumerate() {
            let c = cell_of(p);
            order[cursor[c] as usize] = idx as u32;
            cursor[c] += 1;
        }
        Ok(Self {
            points,
            min,
            cell,
            dims,
            cell_start,
            order,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f32; 3]] {
        &self.points
    }

    /// Index of and squared distance to the nearest stored point; ties
    /// resolve to the lowest index.
    pub fn nearest(&self, query: [f32; 3]) -> (usize, f64) {
        // The query's cell in unclamped grid coordinates; it may lie
        // outside the table when the query is outside the indexed box.
        let home: [i64; 3] = std::array::from_fn(|a| {
            ((f64::from(query[a]) - self.min[a]) / self.cell).floor() as i64
        });
        // Beyond this ring every cell has been visited.
        let last_ring = (0..3)
            .map(|a| home[a].max(self.dims[a] as i64 - 1 - home[a]))
            .fold(0i64, i64::max)
            .max(0) as usize;

        let mut best = (f64::INFINITY, usize::MAX);
        let scan = |cx: i64, cy: i64, cz: i64, best: &mut (f64, usize)| {
            debug_assert!(cx >= 0 && cy >= 0 && cz >= 0);
            let c = (cx as usize * self.dims[1] + cy as usize) * self.dims[2] + cz as usize;
            let lo = self.cell_start[c] as usize;
            let hi = self.cell_start[c + 1] as usize;
            for &idx in &self.order[lo..hi] {
                let idx = idx as usize;
                let d2 = dist2(query, self.points[idx]);
                if d2 < best.0 || (d2 == best.0 && idx < best.1) {
                    *best = (d2, idx);
                }
            }
        };
        // Per-axis offset range that keeps `home + offset` inside the
        // grid; empty when ring r misses the grid along that axis.
        let lo = |a: usize, r: i64| (-r).max(-home[a]);
        let hi = |a: usize, r: i64| r.min(self.dims[a] as i64 - 1 - home[a]);

        for r in 0..=last_ring as i64 {
            for dx in lo(0, r)..=hi(0, r) {
                for dy in lo(1, r)..=hi(1, r) {
                    if dx.abs() == r || dy.abs() == r {
                        for dz in lo(2, r)..=hi(2, r) {
                            scan(home[0] + dx, home[1] + dy, home[2] + dz, &mut best);
                        }
                    } else {
                        for dz in [-r, r] {
                            if dz >= lo(2, r) && dz <= hi(2, r) {
                                scan(home[0] + dx, home[1] + dy, home[2] + dz, &mut best);
                            }
                        }
                    }
                }
            }
            // Cells on ring r+1 and beyond hold points at least r cells
            // away. The strict comparison keeps scanning while an exact
            // tie (which must resolve to the lowest index) is possible.
            let bound = r as f64 * self.cell;
            if best.0 < bound * bound {
                break;
            }
        }
        (best.1, best.0)
    }
}

/// Nearest-neighbor assignment of every query against the grid,
/// parallel over queries with the output in query order.
fn assignments(grid: &PointGrid, queries: &[[f32; 3]]) -> Vec<(usize, f64)> {
    queries.par_iter().map(|&q| grid.nearest(q)).collect()
}

fn mean_of(pairs: &[(usize, f64)]) -> f64 {
    let sum: f64 = pairs.iter().map(|&(_, d2)| d2).sum();
    sum / pairs.len() as f64
}

/// Symmetric squared Chamfer distance: the mean squared distance from
/// each point of `a` to its nearest neighbor in `b`, plus the same with
/// the roles swapped.
pub fn chamfer_distance(a: &[[f32; 3]], b: &[[f32; 3]]) -> Result<f64, CoreError> {
    let grid_b = PointGrid::new(b.to_vec())?;
    let grid_a = PointGrid::new(a.to_vec())?;
    Ok(mean_of(&assignments(&grid_b, a)) + mean_of(&assignments(&grid_a, b)))
}

/// Chamfer distance plus its gradient with respect to `a` (`b` is held
/// fixed). Both directions contribute: the a-to-b term moves each `a`
/// point toward its neighbor, and the b-to-a term moves whichever `a`
/// point is nearest to each `b` point. Nearest-neighbor assignments are
/// treated as locally constant.
pub fn chamfer_distance_grad(
    a: &[[f32; 3]],
    b: &[[f32; 3]],
) -> Result<(f64, Vec<[f32; 3]>), CoreError> {
    let grid_b = PointGrid::new(b.to_vec())?;
    let grid_a = PointGrid::new(a.to_vec())?;
    let a_to_b = assignments(&grid_b, a);
    let b_to_a = assignments(&grid_a, b);
    let value = mean_of(&a_to_b) + mean_of(&b_to_a);

    let mut grad = vec![[0.0f64; 3]; a.len()];
    let inv_a = 1.0 / a.len() as f64;
    for (ai, &(bi, _)) in a_to_b.iter().enumerate() {
        for c in 0..3 {
            grad[ai][c] += 2.0 * (f64::from(a[ai][c]) - f64::from(b[bi][c])) * inv_a;
        }
    }
    let inv_b = 1.0 / b.len() as f64;
    for (bi, &(ai, _)) in b_to_a.iter().enumerate() {
        for c in 0..3 {
            grad[ai][c] += 2.0 * (f64::from(a[ai][c]) - f64::from(b[bi][c])) * inv_b;
        }
    }
    let grad = grad
        .into_iter()
        .map(|g| [g[0] as f32, g[1] as f32, g[2] as f32])
        .collect();
    Ok((value, grad))
}

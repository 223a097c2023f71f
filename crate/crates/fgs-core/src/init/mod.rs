//! Seeding factor blocks from point clouds.
//!
//! A sparse 3D histogram over the cloud picks out dense regions; every
//! sufficiently populated bin contributes one factor block per `N^3`
//! points (rounding up), with coordinates spread evenly across the bin.
//! The module also carries an exact nearest-neighbor Chamfer distance
//! and a small Adam fitter that optimizes factorized coordinates against
//! a target cloud directly, without any rendering.

mod chamfer;
mod fit;
mod histogram;
mod seed;

pub use chamfer::{chamfer_distance, chamfer_distance_grad, PointGrid};
pub use fit::{fit_coordinates_chamfer, seed_fit_blocks, FitReport};
pub use histogram::{build_histogram, HistogramGrid, DEFAULT_EXPAND, DEFAULT_INTERVAL};
pub use seed::{random_blocks, seed_blocks, vm_blocks_from_cp, DEFAULT_LAMBDA};

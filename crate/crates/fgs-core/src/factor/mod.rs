//! Factorized blocks and their expansion into dense Gaussian grids.
//!
//! Two factorizations are supported:
//!
//! * CP blocks ([`CpBlock`]): one coordinate/attribute vector per axis; the
//!   cartesian product of the three axis vectors addresses `N^3` grid cells.
//! * VM blocks ([`VmBlock`]): three plane/line pairs. Depending on
//!   [`VmMode`], either each plane-line term spawns its own `N^3` grid with
//!   product features, or all three terms share one coordinate grid and
//!   their features are summed.
//!
//! Grid cells are linearized row-major as `(i * N + j) * N + k`, i.e. the
//! z index varies fastest. All expansion and gradient accumulation loops
//! iterate in this order so results are bit-for-bit reproducible.

mod adjoint;
mod cp;
mod expand;
mod vm;

pub use adjoint::{
    backprop_cp_expansion, backprop_vm_expansion, coordinate_adjoint, triple_product_adjoint,
    CpBlockGrads, ExpansionGrads, VmBlockGrads,
};
pub use cp::CpBlock;
pub use expand::{
    expand_cp_coordinates, expand_cp_features, expand_cp_rotations_raw, expand_cp_scales_raw,
    expand_multi_set, expand_vm_coordinates, expand_vm_features, expand_vm_multi_set,
    expand_vm_rotations_raw, expand_vm_scales_raw, expand_vm_shared_coordinates,
    expand_vm_shared_features, expand_vm_term_coordinates, expand_vm_term_features, grid_index,
};
pub use vm::{VmBlock, VmMode};

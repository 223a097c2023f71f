//! Real spherical harmonics up to degree 3 for view-dependent color.
//!
//! Colors are stored as 16 coefficient triples per Gaussian (48 scalars,
//! layout `sh[basis * 3 + channel]`). Evaluation follows the usual
//! splatting convention: `rgb = clamp(0.5 + sum_k sh_k * basis_k(dir), 0, 1)`.

use crate::error::CoreError;

/// Number of basis functions (degrees 0 through 3).
pub const SH_BASIS: usize = 16;
/// Stored color coefficients per Gaussian: 16 basis functions x 3 channels.
pub const SH_COEFFS: usize = 48;

#[allow(clippy::excessive_precision)]
pub const SH_C0: f32 = 0.28209479177387814;
#[allow(clippy::excessive_precision)]
pub const SH_C1: f32 = 0.4886025119029199;
#[allow(clippy::excessive_precision)]
pub const SH_C2: [f32; 5] = [
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
];
#[allow(clippy::excessive_precision)]
pub const SH_C3: [f32; 7] = [
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
];

/// Evaluates the 16 basis functions at a direction vector. The polynomials
/// accept any vector; callers wanting spherical semantics must pass a unit
/// vector.
pub fn sh_basis(dir: [f32; 3]) -> [f32; SH_BASIS] {
    let [x, y, z] = dir;
    let (xx, yy, zz) = (x * x, y * y, z * z);
    [
        SH_C0,
        -SH_C1 * y,
        SH_C1 * z,
        -SH_C1 * x,
        SH_C2[0] * x * y,
        SH_C2[1] * y * z,
        SH_C2[2] * (2.0 * zz - xx - yy),
        SH_C2[3] * x * z,
        SH_C2[4] * (xx - yy),
        SH_C3[0] * y * (3.0 * xx - yy),
        SH_C3[1] * x * y * z,
        SH_C3[2] * y * (4.0 * zz - xx - yy),
        SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
        SH_C3[4] * x * (4.0 * zz - xx - yy),
        SH_C3[5] * z * (xx - yy),
        SH_C3[6] * x * (xx - 3.0 * yy),
    ]
}

/// Basis values together with their derivatives with respect to the three
/// direction components (treated as free variables).
pub fn sh_basis_grad(dir: [f32; 3]) -> ([f32; SH_BASIS], [[f32; 3]; SH_BASIS]) {
    let [x, y, z] = dir;
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let basis = sh_basis(dir);
    let grads = [
        [0.0, 0.0, 0.0],
        [0.0, -SH_C1, 0.0],
        [0.0, 0.0, SH_C1],
        [-SH_C1, 0.0, 0.0],
        [SH_C2[0] * y, SH_C2[0] * x, 0.0],
        [0.0, SH_C2[1] * z, SH_C2[1] * y],
        [-2.0 * SH_C2[2] * x, -2.0 * SH_C2[2] * y, 4.0 * SH_C2[2] * z],
        [SH_C2[3] * z, 0.0, SH_C2[3] * x],
        [2.0 * SH_C2[4] * x, -2.0 * SH_C2[4] * y, 0.0],
        [SH_C3[0] * 6.0 * x * y, SH_C3[0] * 3.0 * (xx - yy), 0.0],
        [SH_C3[1] * y * z, SH_C3[1] * x * z, SH_C3[1] * x * y],
        [
            -2.0 * SH_C3[2] * x * y,
            SH_C3[2] * (4.0 * zz - xx - 3.0 * yy),
            8.0 * SH_C3[2] * y * z,
        ],
        [
            -6.0 * SH_C3[3] * x * z,
            -6.0 * SH_C3[3] * y * z,
            SH_C3[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy),
        ],
        [
            SH_C3[4] * (4.0 * zz - 3.0 * xx - yy),
            -2.0 * SH_C3[4] * x * y,
            8.0 * SH_C3[4] * x * z,
        ],
        [2.0 * SH_C3[5] * x * z, -2.0 * SH_C3[5] * y * z, SH_C3[5] * (xx - yy)],
        [SH_C3[6] * 3.0 * (xx - yy), -6.0 * SH_C3[6] * x * y, 0.0],
    ];
    (basis, grads)
}

/// Color for a free direction vector: `clamp(0.5 + sum sh * basis, 0, 1)`
/// per channel. No unit-norm validation; the renderer passes directions it
/// normalized itself.
pub fn sh_color_free(sh: &[f32], dir: [f32; 3]) -> [f32; 3] {
    debug_assert_eq!(sh.len(), SH_COEFFS);
    let basis = sh_basis(dir);
    let mut rgb = [0.0f32; 3];
    for (ch, out) in rgb.iter_mut().enumerate() {
        let mut v = 0.5f32;
        for (k, b) in basis.iter().enumerate() {
            v += sh[k * 3 + ch] * b;
        }
        *out = v.clamp(0.0, 1.0);
    }
    rgb
}

/// Validating color evaluation. Directions within 1e-6 of unit norm pass
/// through; deviations below 1e-3 are normalized with a logged warning;
/// anything farther from the sphere is rejected.
pub fn eval_sh_color(sh: &[f32], dir: [f32; 3]) -> Result<[f32; 3], CoreError> {
    if sh.len() != SH_COEFFS {
        return Err(CoreError::ShapeMismatch(format!(
            "expected {SH_COEFFS} color coefficients, got {}",
            sh.len()
        )));
    }
    let norm = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
    if !norm.is_finite() {
        return Err(CoreError::NonFinite("view direction".into()));
    }
    let dev = (norm - 1.0).abs();
    let dir = if dev <= 1e-6 {
        dir
    } else if dev < 1e-3 {
        log::warn!("view direction norm {norm} off unit sphere; normalizing");
        [dir[0] / norm, dir[1] / norm, dir[2] / norm]
    } else {
        return Err(CoreError::InvalidArgument(format!(
            "view direction norm {norm} too far from 1"
        )));
    };
    Ok(sh_color_free(sh, dir))
}

/// Backward pass of [`sh_color_free`]: gradients for the 48 coefficients
/// and the free direction vector. Channels clamped in the forward pass
/// (strictly below 0 or above 1 before clamping) receive zero gradient.
pub fn sh_color_backward(sh: &[f32], dir: [f32; 3], grad_rgb: [f32; 3]) -> ([f32; SH_COEFFS], [f32; 3]) {
    debug_assert_eq!(sh.len(), SH_COEFFS);
    let (basis, basis_grads) = sh_basis_grad(dir);
    let mut grad_sh = [0.0f32; SH_COEFFS];
    let mut grad_dir = [0.0f32; 3];
    for ch in 0..3 {
        let mut v = 0.5f32;
        for (k, b) in basis.iter().enumerate() {
            v += sh[k * 3 + ch] * b;
        }
        if !(0.0..=1.0).contains(&v) {
            continue;
        }
        let g = grad_rgb[ch];
        for k in 0..SH_BASIS {
            grad_sh[k * 3 + ch] = g * basis[k];
            for a in 0..3 {
                grad_dir[a] += g * sh[k * 3 + ch] * basis_grads[k][a];
            }
        }
    }
    (grad_sh, grad_dir)
}

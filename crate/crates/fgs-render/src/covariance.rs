//! 3D covariance assembly from per-Gaussian scale and rotation.
//!
//! A Gaussian's covariance is `R * diag(s)^2 * R^T` with `R` the
//! rotation of a unit quaternion `(w, x, y, z)`. The backward pass
//! pushes a covariance gradient onto the scale and the unit quaternion;
//! chaining through quaternion normalization is the caller's job.

/// Row-major rotation matrix of a unit quaternion `(w, x, y, z)`.
pub fn rotation_matrix(q: [f32; 4]) -> [[f32; 3]; 3] {
    let [w, x, y, z] = q;
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

/// Covariance `R * diag(scale)^2 * R^T`, exactly symmetric.
pub fn build_covariance(scale: [f32; 3], rot: [f32; 4]) -> [[f32; 3]; 3] {
    let r = rotation_matrix(rot);
    // a[i][k] = R[i][k] * s[k], covariance = a * a^T.
    let a: [[f32; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|k| r[i][k] * scale[k]));
    let mut cov = [[0.0f32; 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let v = a[i][0] * a[j][0] + a[i][1] * a[j][1] + a[i][2] * a[j][2];
            cov[i][j] = v;
            cov[j][i] = v;
        }
    }
    cov
}

/// Backward of [`build_covariance`] for a symmetric covariance gradient.
///
/// Returns `(grad_scale, grad_rot)` where `grad_rot` is with respect to
/// the unit quaternion.
pub fn covariance_backward(
    scale: [f32; 3],
    rot: [f32; 4],
    grad_cov: [[f32; 3]; 3],
) -> ([f32; 3], [f32; 4]) {
    let r = rotation_matrix(rot);
    let a: [[f32; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|k| r[i][k] * scale[k]));
    // cov = a * a^T with grad_cov symmetric, so dL/da = 2 * grad_cov * a.
    let mut grad_a = [[0.0f32; 3]; 3];
    for i in 0..3 {
        for k in 0..3 {
            grad_a[i][k] =
                2.0 * (grad_cov[i][0] * a[0][k] + grad_cov[i][1] * a[1][k] + grad_cov[i][2] * a[2][k]);
        }
    }
    // a[i][k] = R[i][k] * s[k].
    let mut grad_scale = [0.0f32; 3];
    let mut grad_r = [[0.0f32; 3]; 3];
    for i in 0..3 {
        for k in 0..3 {
            grad_scale[k] += grad_a[i][k] * r[i][k];
            grad_r[i][k] = grad_a[i][k] * scale[k];
        }
    }
    let [w, x, y, z] = rot;
    // Entry-wise derivatives of the rotation matrix in each quaternion
    // component, times two (every entry of R is linear or quadratic).
    let dr_dq: [[[f32; 3]; 3]; 4] = [
        [[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]],
        [[0.0, y, z], [y, -2.0 * x, -w], [z, w, -2.0 * x]],
        [[-2.0 * y, x, w], [x, 0.0, z], [-w, z, -2.0 * y]],
        [[-2.0 * z, -w, x], [w, -2.0 * z, y], [x, y, 0.0]],
    ];
    let mut grad_rot = [0.0f32; 4];
    for (c, dr) in dr_dq.iter().enumerate() {
        let mut acc = 0.0f32;
        for i in 0..3 {
            for j in 0..3 {
                acc += grad_r[i][j] * 2.0 * dr[i][j];
            }
        }
        grad_rot[c] = acc;
    }
    (grad_scale, grad_rot)
}

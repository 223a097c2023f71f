//! Small numeric helpers shared across the crate.

/// Numerically stable logistic function.
pub fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Derivative of the logistic function, `s(x) * (1 - s(x))`.
pub fn sigmoid_grad(x: f32) -> f32 {
    let s = sigmoid(x);
    s * (1.0 - s)
}

/// Inverse of [`sigmoid`]; input must lie strictly in (0, 1).
pub fn logit(p: f32) -> f32 {
    (p / (1.0 - p)).ln()
}

/// Normalizes a quaternion stored as `(w, x, y, z)`. The all-zero quaternion
/// maps to the identity rotation `(1, 0, 0, 0)`.
pub fn quat_normalize(q: [f32; 4]) -> [f32; 4] {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    if n == 0.0 {
        [1.0, 0.0, 0.0, 0.0]
    } else {
        [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
    }
}

/// Backpropagates through [`quat_normalize`]: given the gradient with respect
/// to the unit quaternion, returns the gradient with respect to the raw input.
/// At the degenerate all-zero input the gradient is zero.
pub fn quat_normalize_backward(raw: [f32; 4], grad_unit: [f32; 4]) -> [f32; 4] {
    let n2 = raw[0] * raw[0] + raw[1] * raw[1] + raw[2] * raw[2] + raw[3] * raw[3];
    let n = n2.sqrt();
    if n == 0.0 {
        return [0.0; 4];
    }
    // d(q/|q|)/dq = (I - u u^T) / |q| with u = q/|q|.
    let mut dot = 0.0;
    for c in 0..4 {
        dot += grad_unit[c] * raw[c];
    }
    let mut out = [0.0; 4];
    for c in 0..4 {
        out[c] = grad_unit[c] / n - raw[c] * dot / (n2 * n);
    }
    out
}

/// Relative error used by gradient checks: absolute difference scaled by
/// `max(1, |reference|)` so tiny gradients are compared absolutely.
pub fn rel_err(actual: f64, reference: f64) -> f64 {
    (actual - reference).abs() / reference.abs().max(1.0)
}

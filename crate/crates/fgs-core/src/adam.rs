//! Adam optimizer state for one parameter array.

use crate::error::CoreError;

/// Adam with bias correction. One instance tracks the first and second
/// moment for a single flat parameter array; the trainer keeps one per
/// factor array, decoder array and mask grid.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    m: Vec<f32>,
    v: Vec<f32>,
    t: u64,
}

impl AdamState {
    /// Fresh state with the usual defaults: beta1 0.9, beta2 0.999,
    /// eps 1e-8, zero moments.
    pub fn new(len: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Steps taken so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update in place. Gradients must be finite; a NaN or Inf
    /// gradient aborts with the offending index so the caller can surface
    /// which parameter diverged.
    pub fn step(&mut self, params: &mut [f32], grads: &[f32], lr: f32) -> Result<(), CoreError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(CoreError::ShapeMismatch(format!(
                "optimizer holds {} slots, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(idx) = grads.iter().position(|g| !g.is_finite()) {
            return Err(CoreError::NumericalFailure(format!(
                "non-finite gradient at index {idx}: {}",
                grads[idx]
            )));
        }
        self.t += 1;
        let bc1 = 1.0 - f64::from(self.beta1).powi(self.t as i32);
        let bc2 = 1.0 - f64::from(self.beta2).powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1 as f32;
            let v_hat = self.v[i] / bc2 as f32;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

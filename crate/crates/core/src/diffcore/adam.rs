use super::{ParamSet, Real};
use crate::error::{ensure, Result};

/// Adam moments and step counter for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize) -> Self {
        Self::with_constants(len, 0.9, 0.999, 1e-8)
    }

    pub fn with_constants(len: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { m: vec![T::zero(); len], v: vec![T::zero(); len], t: 0, beta1, beta2, eps }
    }

    /// One bias-corrected Adam update. Refuses the step on non-finite gradients.
    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &[T], lr: f64) -> Result<()> {
        ensure!(
            grads.len() == params.len() && self.m.len() == params.len(),
            Shape,
            "gradient/state/parameter lengths disagree"
        );
        ensure!(lr > 0.0, Range, "learning rate must be positive, got {lr}");
        ensure!(grads.iter().all(|g| g.is_finite()), Numeric, "non-finite gradient, step refused");

        self.t += 1;
        let b1 = T::of(self.beta1);
        let b2 = T::of(self.beta2);
        let c1 = T::of(1.0 - self.beta1);
        let c2 = T::of(1.0 - self.beta2);
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        // p -= lr * (m / bc1) / (sqrt(v / bc2) + eps)
        let step = T::of(lr / bc1);
        let inv_bc2 = T::of(1.0 / bc2);
        let eps = T::of(self.eps);
        let p = params.values_mut();
        for i in 0..p.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + c1 * g;
            self.v[i] = b2 * self.v[i] + c2 * g * g;
            p[i] -= step * self.m[i] / ((self.v[i] * inv_bc2).sqrt() + eps);
        }
        Ok(())
    }
}

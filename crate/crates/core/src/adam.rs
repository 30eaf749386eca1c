//! Bias-corrected Adam.

use ndarray::Array4;

use crate::autograd::Tensor;
use crate::error::{DeconvError, Result};

/// Optimizer state: per-parameter first and second moment estimates
/// plus the shared step counter.
#[derive(Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Array4<f64>>,
    v: Vec<Array4<f64>>,
}

impl AdamState {
    /// Fresh state with the usual coefficients (0.9, 0.999, 1e-8).
    pub fn new(lr: f64, params: &[Tensor]) -> AdamState {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: params.iter().map(|p| Array4::zeros(p.data().raw_dim())).collect(),
            v: params.iter().map(|p| Array4::zeros(p.data().raw_dim())).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One in-place update from the gradients currently stored on the
    /// parameters. Deterministic given inputs.
    pub fn step(&mut self, params: &[Tensor]) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(DeconvError::Config(format!(
                "adam state holds {} parameters, got {}",
                self.m.len(),
                params.len()
            )));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (idx, p) in params.iter().enumerate() {
            let g = p.grad();
            if g.raw_dim() != self.m[idx].raw_dim() {
                return Err(DeconvError::ShapeMismatch(format!(
                    "parameter {idx} shape changed under the optimizer"
                )));
            }
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            ndarray::Zip::from(&mut *m).and(&*g).for_each(|mi, &gi| {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
            });
            ndarray::Zip::from(&mut *v).and(&*g).for_each(|vi, &gi| {
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
            });
            drop(g);
            let mut data = p.data_mut();
            ndarray::Zip::from(&mut *data)
                .and(&*m)
                .and(&*v)
                .for_each(|w, &mi, &vi| {
                    let mhat = mi / bc1;
                    let vhat = vi / bc2;
                    *w -= self.lr * mhat / (vhat.sqrt() + self.eps);
                });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::{backward, mse_loss, sum_all, Tensor};

    fn scalar_param(v: f64) -> Tensor {
        Tensor::parameter(Array4::from_elem((1, 1, 1, 1), v))
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let p = scalar_param(0.3);
        let mut adam = AdamState::new(0.1, std::slice::from_ref(&p));
        adam.step(std::slice::from_ref(&p)).unwrap();
        assert_eq!(p.data()[[0, 0, 0, 0]], 0.3);
    }

    #[test]
    fn first_step_magnitude_is_lr() {
        // With constant gradient g, the bias-corrected first step is
        // lr * g / (|g| + eps) = lr * sign(g) (up to eps).
        let p = scalar_param(1.0);
        {
            let loss = sum_all(&p);
            backward(&loss).unwrap();
        }
        let mut adam = AdamState::new(0.05, std::slice::from_ref(&p));
        adam.step(std::slice::from_ref(&p)).unwrap();
        let moved = 1.0 - p.data()[[0, 0, 0, 0]];
        assert!((moved - 0.05).abs() < 1e-8, "moved {moved}");
    }

    #[test]
    fn quadratic_bowl_converges() {
        // f(w) = w^2 from w0 = 1, lr = 0.1, 500 steps.
        let p = scalar_param(1.0);
        let target = Tensor::constant(Array4::zeros((1, 1, 1, 1)));
        let mut adam = AdamState::new(0.1, std::slice::from_ref(&p));
        for _ in 0..500 {
            p.zero_grad();
            let loss = mse_loss(&p, &target).unwrap();
            backward(&loss).unwrap();
            adam.step(std::slice::from_ref(&p)).unwrap();
        }
        assert!(p.data()[[0, 0, 0, 0]].abs() < 1e-3);
    }

    #[test]
    fn param_count_mismatch_rejected() {
        let p = scalar_param(0.0);
        let q = scalar_param(0.0);
        let mut adam = AdamState::new(0.1, std::slice::from_ref(&p));
        assert!(adam.step(&[p, q]).is_err());
    }
}

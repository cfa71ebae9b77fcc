//! Adam with linear learning-rate warmup (constant afterwards).

use serde::{Deserialize, Serialize};

use super::real::Real;
use super::{KernelError, Result};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub warmup_steps: u64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            warmup_steps: 1000,
        }
    }
}

impl AdamHyper {
    /// Effective learning rate at a step: `lr * min(1, step / warmup)`.
    pub fn effective_lr(&self, step: u64) -> f64 {
        if self.warmup_steps == 0 {
            return self.lr;
        }
        self.lr * (step as f64 / self.warmup_steps as f64).min(1.0)
    }
}

/// First/second moment buffers plus the update counter.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
        }
    }

    /// One Adam update. `step` is the global step counter used by the warmup
    /// ramp; the bias correction uses the internal update count.
    pub fn step(
        &mut self,
        params: &mut [T],
        grad: &[T],
        hyper: &AdamHyper,
        step: u64,
    ) -> Result<()> {
        if params.len() != grad.len() || params.len() != self.m.len() {
            return Err(KernelError::Shape(format!(
                "adam buffers: params {}, grad {}, moments {}",
                params.len(),
                grad.len(),
                self.m.len()
            )));
        }
        for &g in grad {
            if !g.is_finite() {
                return Err(KernelError::NonFinite {
                    what: "gradient".into(),
                    step,
                });
            }
        }
        self.t += 1;
        let lr = hyper.effective_lr(step);
        let b1 = T::from_f64(hyper.beta1);
        let b2 = T::from_f64(hyper.beta2);
        let one_b1 = T::from_f64(1.0 - hyper.beta1);
        let one_b2 = T::from_f64(1.0 - hyper.beta2);
        let bc1 = 1.0 - hyper.beta1.powi(self.t as i32);
        let bc2 = 1.0 - hyper.beta2.powi(self.t as i32);
        let alpha = T::from_f64(lr / bc1);
        let bc2_inv = T::from_f64(1.0 / bc2);
        let eps = T::from_f64(hyper.eps);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + one_b1 * g;
            self.v[i] = b2 * self.v[i] + one_b2 * g * g;
            let vhat = self.v[i] * bc2_inv;
            params[i] -= alpha * self.m[i] / (vhat.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_ramp() {
        let h = AdamHyper::default();
        assert_eq!(h.effective_lr(0), 0.0);
        assert!((h.effective_lr(500) - 5e-4).abs() < 1e-15);
        assert!((h.effective_lr(1000) - 1e-3).abs() < 1e-15);
        assert!((h.effective_lr(50_000) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn zero_grad_leaves_params_fixed_but_decays_moments() {
        let h = AdamHyper::default();
        let mut st: AdamState<f64> = AdamState::new(3);
        st.m = vec![0.5, -0.5, 0.1];
        st.v = vec![0.2, 0.2, 0.2];
        let mut p = vec![1.0, 2.0, 3.0];
        let p0 = p.clone();
        let m0 = st.m.clone();
        st.step(&mut p, &[0.0, 0.0, 0.0], &h, 0).unwrap();
        // step 0 has zero effective lr, so parameters are untouched even
        // though the moments decay.
        assert_eq!(p, p0);
        assert!(st.m.iter().zip(m0.iter()).all(|(a, b)| a.abs() < b.abs()));
    }

    #[test]
    fn non_finite_grad_aborts() {
        let h = AdamHyper::default();
        let mut st: AdamState<f64> = AdamState::new(1);
        let mut p = vec![1.0];
        let err = st.step(&mut p, &[f64::NAN], &h, 7).unwrap_err();
        assert!(matches!(err, KernelError::NonFinite { step: 7, .. }));
    }

    #[test]
    fn converges_on_quadratic() {
        // Minimise (x - 3)^2 with warmup disabled.
        let h = AdamHyper {
            lr: 0.05,
            warmup_steps: 0,
            ..AdamHyper::default()
        };
        let mut st: AdamState<f64> = AdamState::new(1);
        let mut p = vec![0.0];
        for step in 0..2000 {
            let g = 2.0 * (p[0] - 3.0);
            st.step(&mut p, &[g], &h, step).unwrap();
        }
        assert!((p[0] - 3.0).abs() < 1e-3, "{}", p[0]);
    }
}

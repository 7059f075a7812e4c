use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// Moment estimates for bias-corrected Adam.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self { step: 0, m: vec![0.0; len], v: vec![0.0; len], config }
    }

    /// Applies one update to `params` in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() || self.m.len() != self.v.len() {
            return Err(Error::invalid(format!(
                "adam length mismatch: params {}, grads {}, state {}",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.step += 1;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = vec![1.0, -2.0, 0.5];
        let g = vec![3.0, -0.25, 1e-3];
        let mut s = AdamState::new(3, AdamConfig::with_lr(0.1));
        s.step(&mut p, &g).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] - (-1.9)).abs() < 1e-6);
        assert!((p[2] - 0.4).abs() < 1e-4);
        assert_eq!(s.step, 1);
    }

    /// Reference Adam written out longhand for two steps on f(w) = w².
    fn scripted_adam_two_steps() -> [f64; 2] {
        let (lr, b1, b2, eps) = (0.1f64, 0.9f64, 0.999f64, 1e-8f64);
        let mut w = 1.0f64;
        let mut m = 0.0f64;
        let mut v = 0.0f64;
        let mut out = [0.0; 2];
        for (k, slot) in out.iter_mut().enumerate() {
            let t = (k + 1) as i32;
            let g = 2.0 * w;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            w -= lr * mh / (vh.sqrt() + eps);
            *slot = w;
        }
        out
    }

    #[test]
    fn matches_scripted_reference() {
        let expected = scripted_adam_two_steps();
        let mut w = vec![1.0];
        let mut s = AdamState::new(1, AdamConfig::with_lr(0.1));
        for e in expected {
            let g = vec![2.0 * w[0]];
            s.step(&mut w, &g).unwrap();
            assert!((w[0] - e).abs() < 1e-12, "{} vs {}", w[0], e);
        }
        // First step is lr * g/|g| up to eps.
        assert!((expected[0] - 0.9).abs() < 1e-8);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let mut s = AdamState::new(2, AdamConfig::default());
        assert!(s.step(&mut [0.0, 0.0], &[1.0]).is_err());
        assert!(s.step(&mut [0.0], &[1.0]).is_err());
        assert_eq!(s.step, 0);
    }

    proptest! {
        #[test]
        fn zero_gradient_is_identity(p in prop::collection::vec(-10.0f64..10.0, 1..20)) {
            let mut q = p.clone();
            let mut s = AdamState::new(p.len(), AdamConfig::default());
            s.step(&mut q, &vec![0.0; p.len()]).unwrap();
            prop_assert_eq!(p, q);
        }
    }
}

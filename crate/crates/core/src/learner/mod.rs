//! Gated recurrent learner model: predicts a subject's next action from its
//! history, trained by backpropagation through time.
//!
//! Cell convention (fixed):
//!
//! ```text
//! z  = σ(W_z x + U_z h + b_z)
//! r  = σ(W_r x + U_r h + b_r)
//! h̃  = tanh(W_c x + U_c (r ∘ h) + b_c)
//! h' = (1 − z) ∘ h + z ∘ h̃
//! π  = softmax(W_o h' + b_o)
//! ```

mod bptt;
mod params;
mod train;

pub use bptt::{sequence_loss, sequence_nll, sequence_stats, SequenceStats};
pub use params::{LearnerDims, LearnerParams};
pub use train::{train_learner, EpochReport, LearnerConfig, TrainingReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sigmoid, softmax_in_place};

/// Recurrent state of the learner model. All zeros at episode start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HiddenState(pub Vec<f64>);

impl HiddenState {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Predicted next-action distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyDistribution(pub Vec<f64>);

/// Intermediate values of one cell step, kept for the backward pass.
#[derive(Clone, Debug, Default)]
pub(crate) struct StepCache {
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub c: Vec<f64>,
    pub rh: Vec<f64>,
}

/// Recurrence only; fills `cache` when given.
pub(crate) fn cell(p: &LearnerParams, h: &[f64], x: &[f64], cache: Option<&mut StepCache>) -> Vec<f64> {
    let n = p.dims.hidden_dim;
    let mut z = p.b_z.clone();
    p.w_z.matvec_acc(x, &mut z);
    p.u_z.matvec_acc(h, &mut z);
    z.iter_mut().for_each(|v| *v = sigmoid(*v));

    let mut r = p.b_r.clone();
    p.w_r.matvec_acc(x, &mut r);
    p.u_r.matvec_acc(h, &mut r);
    r.iter_mut().for_each(|v| *v = sigmoid(*v));

    let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
    let mut c = p.b_c.clone();
    p.w_c.matvec_acc(x, &mut c);
    p.u_c.matvec_acc(&rh, &mut c);
    c.iter_mut().for_each(|v| *v = v.tanh());

    let next: Vec<f64> = (0..n).map(|i| (1.0 - z[i]) * h[i] + z[i] * c[i]).collect();
    if let Some(cache) = cache {
        *cache = StepCache { z, r, c, rh };
    }
    next
}

pub(crate) fn policy_head(p: &LearnerParams, h: &[f64]) -> Vec<f64> {
    let mut logits = p.b_out.clone();
    p.w_out.matvec_acc(h, &mut logits);
    softmax_in_place(&mut logits);
    logits
}

fn check_dims(p: &LearnerParams, h: &HiddenState, features: &[f64]) -> Result<()> {
    if features.len() != p.dims.input_dim {
        return Err(Error::invalid(format!(
            "feature length {} but the learner expects {}",
            features.len(),
            p.dims.input_dim
        )));
    }
    if h.0.len() != p.dims.hidden_dim {
        return Err(Error::invalid(format!(
            "hidden state length {} but the learner has {}",
            h.0.len(),
            p.dims.hidden_dim
        )));
    }
    if features.iter().chain(&h.0).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite learner input"));
    }
    Ok(())
}

/// One recurrent step followed by the softmax head.
pub fn gru_forward_step(
    p: &LearnerParams,
    h: &HiddenState,
    features: &[f64],
) -> Result<(HiddenState, PolicyDistribution)> {
    check_dims(p, h, features)?;
    let next = cell(p, &h.0, features, None);
    let pi = policy_head(p, &next);
    Ok((HiddenState(next), PolicyDistribution(pi)))
}

/// Observer mode: advances the recurrence on the subject's realised
/// outcome without producing a prediction.
pub fn observe_action(p: &LearnerParams, h: &HiddenState, features: &[f64]) -> Result<HiddenState> {
    check_dims(p, h, features)?;
    Ok(HiddenState(cell(p, &h.0, features, None)))
}

/// Policy for the current hidden state.
pub fn policy(p: &LearnerParams, h: &HiddenState) -> Result<PolicyDistribution> {
    if h.0.len() != p.dims.hidden_dim {
        return Err(Error::invalid("hidden state has the wrong length"));
    }
    Ok(PolicyDistribution(policy_head(p, &h.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn zero(hidden: usize) -> LearnerParams {
        LearnerParams::zeros(LearnerDims { input_dim: 3, hidden_dim: hidden, action_dim: 2 })
    }

    #[test]
    fn zero_params_halve_the_state() {
        let p = zero(1);
        let (h, pi) = gru_forward_step(&p, &HiddenState(vec![0.4]), &[1.0, 0.0, 1.0]).unwrap();
        assert_eq!(h.0, vec![0.2]);
        assert_eq!(pi.0, vec![0.5, 0.5]);
    }

    #[test]
    fn zero_state_is_a_fixed_point() {
        let p = zero(4);
        let (h, pi) = gru_forward_step(&p, &HiddenState::zeros(4), &[0.0; 3]).unwrap();
        assert_eq!(h, HiddenState::zeros(4));
        assert_eq!(pi.0, vec![0.5, 0.5]);
    }

    #[test]
    fn observer_matches_forward_step() {
        let mut rng = Rng::new(2);
        let p = LearnerParams::init(LearnerDims { input_dim: 3, hidden_dim: 5, action_dim: 2 }, &mut rng);
        let h0 = HiddenState(vec![0.1, -0.2, 0.3, 0.0, 0.5]);
        let x = [0.0, 1.0, 1.0];
        let (h1, _) = gru_forward_step(&p, &h0, &x).unwrap();
        assert_eq!(observe_action(&p, &h0, &x).unwrap(), h1);
        let (again, _) = gru_forward_step(&p, &h0, &x).unwrap();
        assert_eq!(again, h1);
    }

    #[test]
    fn observer_zero_params_three_steps() {
        let p = zero(1);
        let mut h = HiddenState(vec![0.8]);
        for _ in 0..3 {
            h = observe_action(&p, &h, &[0.0, 1.0, 0.0]).unwrap();
        }
        assert_eq!(h.0, vec![0.1]);
    }

    #[test]
    fn dimension_mismatch() {
        let p = zero(2);
        assert!(gru_forward_step(&p, &HiddenState::zeros(2), &[0.0; 2]).is_err());
        assert!(gru_forward_step(&p, &HiddenState::zeros(3), &[0.0; 3]).is_err());
        assert!(observe_action(&p, &HiddenState::zeros(2), &[f64::NAN, 0.0, 0.0]).is_err());
    }
}

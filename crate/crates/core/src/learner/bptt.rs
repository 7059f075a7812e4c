use crate::episode::TrainingSequence;
use crate::error::{Error, Result};
use crate::learner::{cell, policy_head, LearnerParams, StepCache};
use crate::numerics::argmax;

fn validate(p: &LearnerParams, seq: &TrainingSequence) -> Result<()> {
    if seq.is_empty() {
        return Err(Error::invalid("empty episode"));
    }
    if seq.inputs.len() != seq.actions.len() {
        return Err(Error::invalid("inputs and actions differ in length"));
    }
    if let Some(bad) = seq.inputs.iter().find(|x| x.len() != p.dims.input_dim) {
        return Err(Error::invalid(format!(
            "feature length {} but the learner expects {}",
            bad.len(),
            p.dims.input_dim
        )));
    }
    if let Some(&a) = seq.actions.iter().find(|&&a| a >= p.dims.action_dim) {
        return Err(Error::DataCorruption(format!("action {a} outside the learner's {} actions", p.dims.action_dim)));
    }
    Ok(())
}

/// Mean negative log-likelihood of the observed actions (forward pass only).
pub fn sequence_loss(p: &LearnerParams, seq: &TrainingSequence) -> Result<f64> {
    Ok(sequence_stats(p, seq)?.nll)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SequenceStats {
    /// Mean NLL per trial.
    pub nll: f64,
    /// Trials where the most probable action was the one taken.
    pub correct: usize,
    pub trials: usize,
}

pub fn sequence_stats(p: &LearnerParams, seq: &TrainingSequence) -> Result<SequenceStats> {
    validate(p, seq)?;
    let mut h = vec![0.0; p.dims.hidden_dim];
    let mut total = 0.0;
    let mut correct = 0;
    for (x, &a) in seq.inputs.iter().zip(&seq.actions) {
        h = cell(p, &h, x, None);
        let pi = policy_head(p, &h);
        total -= pi[a].ln();
        correct += usize::from(argmax(&pi) == a);
    }
    Ok(SequenceStats { nll: total / seq.len() as f64, correct, trials: seq.len() })
}

/// Mean negative log-likelihood and its gradient by backpropagation
/// through time over the whole episode.
pub fn sequence_nll(p: &LearnerParams, seq: &TrainingSequence) -> Result<(f64, LearnerParams)> {
    validate(p, seq)?;
    let n = p.dims.hidden_dim;
    let steps = seq.len();
    let inv_t = 1.0 / steps as f64;

    // Forward, keeping every state and gate activation.
    let mut states = Vec::with_capacity(steps + 1);
    states.push(vec![0.0; n]);
    let mut caches = vec![StepCache::default(); steps];
    let mut policies = Vec::with_capacity(steps);
    let mut loss = 0.0;
    for t in 0..steps {
        let next = cell(p, &states[t], &seq.inputs[t], Some(&mut caches[t]));
        let pi = policy_head(p, &next);
        loss -= pi[seq.actions[t]].ln();
        policies.push(pi);
        states.push(next);
    }
    loss *= inv_t;

    let mut g = LearnerParams::zeros(p.dims);
    let mut dh_next = vec![0.0; n];
    for t in (0..steps).rev() {
        let x = &seq.inputs[t];
        let h_prev = &states[t];
        let h = &states[t + 1];
        let StepCache { z, r, c, rh } = &caches[t];

        let mut dlogits = policies[t].clone();
        dlogits[seq.actions[t]] -= 1.0;
        dlogits.iter_mut().for_each(|v| *v *= inv_t);
        g.w_out.add_outer(&dlogits, h);
        for (b, d) in g.b_out.iter_mut().zip(&dlogits) {
            *b += d;
        }
        let mut dh = dh_next.clone();
        p.w_out.t_matvec_acc(&dlogits, &mut dh);

        let mut dh_prev: Vec<f64> = (0..n).map(|i| dh[i] * (1.0 - z[i])).collect();
        let dz_pre: Vec<f64> = (0..n).map(|i| dh[i] * (c[i] - h_prev[i]) * z[i] * (1.0 - z[i])).collect();
        let dc_pre: Vec<f64> = (0..n).map(|i| dh[i] * z[i] * (1.0 - c[i] * c[i])).collect();

        // candidate
        g.w_c.add_outer(&dc_pre, x);
        g.u_c.add_outer(&dc_pre, rh);
        for (b, d) in g.b_c.iter_mut().zip(&dc_pre) {
            *b += d;
        }
        let mut drh = vec![0.0; n];
        p.u_c.t_matvec_acc(&dc_pre, &mut drh);
        let dr_pre: Vec<f64> = (0..n).map(|i| drh[i] * h_prev[i] * r[i] * (1.0 - r[i])).collect();
        for i in 0..n {
            dh_prev[i] += drh[i] * r[i];
        }

        // update gate
        g.w_z.add_outer(&dz_pre, x);
        g.u_z.add_outer(&dz_pre, h_prev);
        for (b, d) in g.b_z.iter_mut().zip(&dz_pre) {
            *b += d;
        }
        p.u_z.t_matvec_acc(&dz_pre, &mut dh_prev);

        // reset gate
        g.w_r.add_outer(&dr_pre, x);
        g.u_r.add_outer(&dr_pre, h_prev);
        for (b, d) in g.b_r.iter_mut().zip(&dr_pre) {
            *b += d;
        }
        p.u_r.t_matvec_acc(&dr_pre, &mut dh_prev);

        dh.clear();
        dh_next = dh_prev;
    }
    Ok((loss, g))
}

use crate::adversary::qnet::QNetParams;
use crate::adversary::replay::Transition;
use crate::error::{Error, Result};
use crate::numerics::{clip_grad_norm, AdamState, Rng};

/// Epsilon-greedy choice restricted to legal actions. Greedy ties go to
/// the lowest index.
pub fn select_masked_action(qvals: &[f64], legal: &[bool], epsilon: f64, rng: &mut Rng) -> Result<usize> {
    if qvals.len() != legal.len() {
        return Err(Error::invalid("q-values and legality mask differ in length"));
    }
    let allowed: Vec<usize> = (0..legal.len()).filter(|&i| legal[i]).collect();
    if allowed.is_empty() {
        return Err(Error::ConstraintViolation("no legal adversary action".into()));
    }
    if epsilon > 0.0 && rng.uniform() < epsilon {
        return Ok(allowed[rng.below(allowed.len())]);
    }
    Ok(masked_argmax(qvals, legal).expect("non-empty legal set"))
}

pub(crate) fn masked_argmax(qvals: &[f64], legal: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for i in 0..qvals.len() {
        if legal[i] && best.is_none_or(|b| qvals[i] > qvals[b]) {
            best = Some(i);
        }
    }
    best
}

pub(crate) fn huber(d: f64) -> f64 {
    if d.abs() <= 1.0 {
        0.5 * d * d
    } else {
        d.abs() - 0.5
    }
}

/// Bootstrapped regression target for one transition.
pub fn td_target(target: &QNetParams, t: &Transition, gamma: f64) -> Result<f64> {
    if t.terminal || gamma == 0.0 {
        return Ok(t.reward);
    }
    let q = target.forward(&t.next_state);
    let best = masked_argmax(&q, &t.next_legal)
        .ok_or_else(|| Error::ConstraintViolation("non-terminal transition without legal actions".into()))?;
    Ok(t.reward + gamma * q[best])
}

/// One Adam step on the mean Huber loss between `Q(s, a)` and the
/// bootstrapped target. `target` is not modified. Returns the loss before
/// the step.
pub fn dqn_update(
    params: &mut QNetParams,
    target: &QNetParams,
    batch: &[&Transition],
    gamma: f64,
    optimizer: &mut AdamState,
    grad_clip: f64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("empty transition batch"));
    }
    let inv_b = 1.0 / batch.len() as f64;
    let mut grad = QNetParams::zeros(params.dims.clone());
    let mut loss = 0.0;
    for t in batch {
        let y = td_target(target, t, gamma)?;
        if !y.is_finite() {
            return Err(Error::Divergence(format!("non-finite target {y}")));
        }
        let trace = params.forward_trace(&t.state);
        let d = y - trace.output[t.action];
        loss += huber(d) * inv_b;
        let mut dout = vec![0.0; trace.output.len()];
        dout[t.action] = -d.clamp(-1.0, 1.0) * inv_b;
        params.backward(&trace, &dout, &mut grad);
    }
    if !loss.is_finite() {
        return Err(Error::Divergence(format!("non-finite loss {loss}")));
    }
    let mut flat_grad = grad.to_flat();
    clip_grad_norm(&mut flat_grad, grad_clip);
    let mut flat = params.to_flat();
    optimizer.step(&mut flat, &flat_grad)?;
    params.set_flat(&flat)?;
    Ok(loss)
}

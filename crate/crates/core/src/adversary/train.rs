use serde::{Deserialize, Serialize};

use crate::adversary::dqn::{dqn_update, select_masked_action};
use crate::adversary::env::AdversaryEnv;
use crate::adversary::qnet::{QNetDims, QNetParams};
use crate::adversary::replay::{ReplayBuffer, Transition};
use crate::error::{Error, Result};
use crate::numerics::{AdamConfig, AdamState, Rng, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DqnConfig {
    pub hidden: Vec<usize>,
    pub episodes: usize,
    pub gamma: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    /// Target network is copied from the online network every this many updates.
    pub target_sync: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of training episodes over which epsilon decays linearly.
    pub epsilon_decay_fraction: f64,
    pub lr: f64,
    /// Environment steps between gradient updates.
    pub update_every: usize,
    /// Transitions collected before the first update.
    pub learning_starts: usize,
    pub grad_clip: f64,
    /// Episodes per point of the training curve.
    pub curve_window: usize,
    pub seed: u64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            episodes: 20_000,
            gamma: 1.0,
            buffer_capacity: 50_000,
            batch_size: 64,
            target_sync: 500,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.5,
            lr: 1e-3,
            update_every: 4,
            learning_starts: 1_000,
            grad_clip: 10.0,
            curve_window: 1_000,
            seed: 0,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 || self.batch_size == 0 || self.buffer_capacity == 0 {
            return Err(Error::invalid("episodes, batch size and buffer capacity must be positive"));
        }
        if self.target_sync == 0 || self.update_every == 0 || self.curve_window == 0 {
            return Err(Error::invalid("target sync, update interval and curve window must be positive"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::invalid("hidden layer widths must be positive"));
        }
        if !(0.0..=1.0).contains(&self.gamma)
            || self.lr.is_nan()
            || self.lr <= 0.0
            || self.grad_clip.is_nan()
            || self.grad_clip <= 0.0
        {
            return Err(Error::invalid("gamma must lie in [0, 1]; lr and grad_clip must be positive"));
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return Err(Error::invalid("epsilon bounds must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn epsilon(&self, episode: usize) -> f64 {
        let decay = (self.epsilon_decay_fraction * self.episodes as f64).max(1.0);
        let frac = episode as f64 / decay;
        if frac >= 1.0 {
            return self.epsilon_end;
        }
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Episodes completed when the point was recorded.
    pub episodes: usize,
    pub mean_return: f64,
}

#[derive(Clone, Debug)]
pub struct DqnRun {
    pub params: QNetParams,
    pub curve: Vec<CurvePoint>,
    pub updates: usize,
    /// Set when training stopped on a non-finite target or loss.
    pub diverged: Option<String>,
}

/// Trains a Q-network on `env`. Single-threaded; the result depends only on
/// the environment and `config.seed`.
pub fn train_dqn(env: &mut dyn AdversaryEnv, input_dim: usize, actions: usize, config: &DqnConfig) -> Result<DqnRun> {
    config.validate()?;
    let dims = QNetDims { input_dim, hidden: config.hidden.clone(), actions };
    let mut params = QNetParams::init(dims, &mut Rng::stream(config.seed, Stream::Init, 1));
    let mut target = params.clone();
    let mut optimizer = AdamState::new(params.num_params(), AdamConfig::with_lr(config.lr));
    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let mut explore = Rng::stream(config.seed, Stream::Exploration, 0);
    let mut env_rng = Rng::stream(config.seed, Stream::Environment, 0);

    let mut curve = Vec::new();
    let mut window_sum = 0.0;
    let mut window_len = 0usize;
    let mut steps = 0usize;
    let mut updates = 0usize;

    for episode in 0..config.episodes {
        let epsilon = config.epsilon(episode);
        env.reset(&mut env_rng)?;
        let mut state = env.state();
        let mut legal = env.legal();
        let mut ret = 0.0;
        loop {
            let q = params.forward(&state);
            let action = select_masked_action(&q, &legal, epsilon, &mut explore)?;
            let out = env.step(action, &mut env_rng)?;
            ret += out.reward;
            let next_state = env.state();
            let next_legal = env.legal();
            buffer.push(Transition {
                state,
                action,
                reward: out.reward,
                next_state: next_state.clone(),
                next_legal: next_legal.clone(),
                terminal: out.done,
            });
            steps += 1;
            if buffer.len() >= config.learning_starts.max(1) && steps.is_multiple_of(config.update_every) {
                let batch = buffer.sample(config.batch_size, &mut explore);
                match dqn_update(&mut params, &target, &batch, config.gamma, &mut optimizer, config.grad_clip) {
                    Ok(_) => {}
                    Err(Error::Divergence(msg)) => {
                        return Ok(DqnRun { params, curve, updates, diverged: Some(msg) });
                    }
                    Err(e) => return Err(e),
                }
                updates += 1;
                if updates.is_multiple_of(config.target_sync) {
                    target = params.clone();
                }
            }
            if out.done {
                break;
            }
            state = next_state;
            legal = next_legal;
        }
        window_sum += ret;
        window_len += 1;
        if window_len == config.curve_window || episode + 1 == config.episodes {
            curve.push(CurvePoint { episodes: episode + 1, mean_return: window_sum / window_len as f64 });
            window_sum = 0.0;
            window_len = 0;
        }
    }
    if !params.is_finite() {
        return Ok(DqnRun { params, curve, updates, diverged: Some("non-finite weights".into()) });
    }
    Ok(DqnRun { params, curve, updates, diverged: None })
}

/// Per-episode returns of the greedy policy. Episode `i` draws from its own
/// environment stream.
pub fn evaluate_policy(
    env: &mut dyn AdversaryEnv,
    params: &QNetParams,
    episodes: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut no_explore = Rng::new(0);
    let mut returns = Vec::with_capacity(episodes);
    for i in 0..episodes {
        let mut rng = Rng::stream(seed, Stream::Environment, i as u64);
        env.reset(&mut rng)?;
        let mut ret = 0.0;
        loop {
            let q = params.forward(&env.state());
            let action = select_masked_action(&q, &env.legal(), 0.0, &mut no_explore)?;
            let out = env.step(action, &mut rng)?;
            ret += out.reward;
            if out.done {
                break;
            }
        }
        returns.push(ret);
    }
    Ok(returns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::env::StepResult;

    /// Two-step chain: action 1 at step 0 unlocks a reward of 1 at step 1
    /// (only action 0 legal there); action 0 pays 0.3 immediately.
    struct Chain {
        step: usize,
        unlocked: bool,
    }

    impl AdversaryEnv for Chain {
        fn reset(&mut self, _: &mut Rng) -> Result<()> {
            self.step = 0;
            self.unlocked = false;
            Ok(())
        }
        fn state(&self) -> Vec<f64> {
            vec![self.step as f64, f64::from(u8::from(self.unlocked))]
        }
        fn legal(&self) -> Vec<bool> {
            if self.step == 0 {
                vec![true, true]
            } else {
                vec![true, false]
            }
        }
        fn step(&mut self, action: usize, _: &mut Rng) -> Result<StepResult> {
            if self.step == 0 {
                self.step = 1;
                self.unlocked = action == 1;
                Ok(StepResult { reward: if action == 0 { 0.3 } else { 0.0 }, done: false })
            } else {
                Ok(StepResult { reward: if self.unlocked { 1.0 } else { 0.0 }, done: true })
            }
        }
    }

    fn small_config() -> DqnConfig {
        DqnConfig {
            hidden: vec![16],
            episodes: 1_500,
            learning_starts: 64,
            batch_size: 32,
            update_every: 1,
            target_sync: 50,
            curve_window: 100,
            lr: 5e-3,
            ..Default::default()
        }
    }

    #[test]
    fn learns_delayed_reward() {
        let mut env = Chain { step: 0, unlocked: false };
        let run = train_dqn(&mut env, 2, 2, &small_config()).unwrap();
        assert!(run.diverged.is_none());
        assert_eq!(run.curve.len(), 15);
        let returns = evaluate_policy(&mut env, &run.params, 5, 0).unwrap();
        assert!(returns.iter().all(|&r| r == 1.0), "{returns:?}");
    }

    #[test]
    fn training_is_seed_deterministic() {
        let cfg = DqnConfig { episodes: 300, ..small_config() };
        let a = train_dqn(&mut Chain { step: 0, unlocked: false }, 2, 2, &cfg).unwrap();
        let b = train_dqn(&mut Chain { step: 0, unlocked: false }, 2, 2, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.curve, b.curve);
    }

    #[test]
    fn epsilon_schedule() {
        let cfg = DqnConfig { episodes: 100, ..Default::default() };
        assert_eq!(cfg.epsilon(0), 1.0);
        assert!((cfg.epsilon(25) - 0.525).abs() < 1e-12);
        assert_eq!(cfg.epsilon(50), 0.05);
        assert_eq!(cfg.epsilon(99), 0.05);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(DqnConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(DqnConfig { gamma: 1.5, ..Default::default() }.validate().is_err());
    }
}

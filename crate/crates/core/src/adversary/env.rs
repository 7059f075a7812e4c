use crate::adversary::{
    bandit_action_to_allocation, bandit_adv_state, fair_reward, legal_bandit_actions, max_reward, trust_adv_state,
    Objective,
};
use crate::error::{Error, Result};
use crate::learner::{observe_action, policy, HiddenState, LearnerParams};
use crate::numerics::Rng;
use crate::tasks::{encode_step_features, BanditState, Feedback, TaskSpec, TrustState};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepResult {
    pub reward: f64,
    pub done: bool,
}

/// Episodic environment seen by the adversary.
pub trait AdversaryEnv {
    fn reset(&mut self, rng: &mut Rng) -> Result<()>;
    fn state(&self) -> Vec<f64>;
    fn legal(&self) -> Vec<bool>;
    fn step(&mut self, action: usize, rng: &mut Rng) -> Result<StepResult>;
}

/// The learner model standing in for the subject: it samples its own
/// actions from its predicted policy while the adversary sets rewards.
#[derive(Clone, Debug)]
pub struct LearnerModelEnv {
    task: TaskSpec,
    objective: Objective,
    learner: LearnerParams,
    hidden: HiddenState,
    bandit: BanditState,
    trust: TrustState,
    /// Investment already sampled for the current trust round.
    pending_investment: u32,
}

impl LearnerModelEnv {
    pub fn new(task: TaskSpec, objective: Objective, learner: LearnerParams) -> Result<Self> {
        task.validate()?;
        if objective.task() != task.kind() {
            return Err(Error::Validation(format!("objective {objective} does not apply to task {}", task.kind())));
        }
        if learner.dims.action_dim != task.action_dim() {
            return Err(Error::Validation("learner action count does not match the task".into()));
        }
        let hidden = HiddenState::zeros(learner.dims.hidden_dim);
        Ok(Self {
            task,
            objective,
            learner,
            hidden,
            bandit: BanditState::new(),
            trust: TrustState::new(),
            pending_investment: 0,
        })
    }

    pub fn hidden(&self) -> &HiddenState {
        &self.hidden
    }

    pub fn bandit_state(&self) -> &BanditState {
        &self.bandit
    }

    pub fn trust_state(&self) -> &TrustState {
        &self.trust
    }

    fn advance(&mut self, prev: Option<&Feedback>, completed: usize) -> Result<()> {
        let x = encode_step_features(&self.task, prev, completed)?;
        self.hidden = observe_action(&self.learner, &self.hidden, &x)?;
        Ok(())
    }

    fn sample_action(&self, rng: &mut Rng) -> Result<usize> {
        Ok(rng.categorical(&policy(&self.learner, &self.hidden)?.0))
    }
}

impl AdversaryEnv for LearnerModelEnv {
    fn reset(&mut self, rng: &mut Rng) -> Result<()> {
        self.hidden = HiddenState::zeros(self.learner.dims.hidden_dim);
        self.bandit = BanditState::new();
        self.trust = TrustState::new();
        self.advance(None, 0)?;
        if matches!(self.task, TaskSpec::Trust(_)) {
            self.pending_investment = self.sample_action(rng)? as u32;
        }
        Ok(())
    }

    fn state(&self) -> Vec<f64> {
        match &self.task {
            TaskSpec::Bandit(cfg) => bandit_adv_state(&self.hidden.0, &self.bandit, cfg),
            TaskSpec::Trust(cfg) => trust_adv_state(&self.hidden.0, &self.trust, cfg, self.pending_investment),
        }
    }

    fn legal(&self) -> Vec<bool> {
        match &self.task {
            TaskSpec::Bandit(cfg) => legal_bandit_actions(&self.bandit, cfg),
            TaskSpec::Trust(cfg) => vec![true; cfg.repay_actions()],
        }
    }

    fn step(&mut self, action: usize, rng: &mut Rng) -> Result<StepResult> {
        let task = self.task.clone();
        match &task {
            TaskSpec::Bandit(cfg) => {
                if action >= super::BANDIT_ACTIONS || !self.legal()[action] {
                    return Err(Error::ConstraintViolation(format!("illegal allocation action {action}")));
                }
                let alloc = bandit_action_to_allocation(action, cfg);
                let arm = self.sample_action(rng)?;
                let out = self.bandit.step(cfg, alloc, arm)?;
                let reward = if arm == cfg.target_arm { 1.0 } else { 0.0 };
                let done = self.bandit.is_done(cfg);
                if !done {
                    let fb = Feedback { action: arm, reward: f64::from(out.reward), observation: out.observation };
                    self.advance(Some(&fb), self.bandit.t)?;
                }
                Ok(StepResult { reward, done })
            }
            TaskSpec::Trust(cfg) => {
                let investment = self.pending_investment;
                let out = self.trust.step(cfg, investment, action)?;
                let done = self.trust.is_done(cfg);
                let reward = match self.objective {
                    Objective::Max => max_reward(cfg, out.trustee_gain_q),
                    Objective::Fair if done => {
                        fair_reward(cfg, self.trust.investor_total_q, self.trust.trustee_total_q)
                    }
                    _ => 0.0,
                };
                if !done {
                    let fb = Feedback {
                        action: investment as usize,
                        reward: out.investor_gain_q as f64 / 4.0,
                        observation: out.observation,
                    };
                    self.advance(Some(&fb), self.trust.round)?;
                    self.pending_investment = self.sample_action(rng)? as u32;
                }
                Ok(StepResult { reward, done })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::LearnerDims;
    use crate::tasks::{BanditConfig, TaskKind};

    fn zero_learner(task: &TaskSpec) -> LearnerParams {
        LearnerParams::zeros(LearnerDims { input_dim: 3, hidden_dim: 4, action_dim: task.action_dim() })
    }

    #[test]
    fn random_legal_play_consumes_full_budget() {
        let task = TaskSpec::default_for(TaskKind::Bandit);
        let mut env = LearnerModelEnv::new(task.clone(), Objective::Target, zero_learner(&task)).unwrap();
        let mut rng = Rng::new(3);
        for _ in 0..20 {
            env.reset(&mut rng).unwrap();
            let mut steps = 0;
            loop {
                let legal = env.legal();
                let choices: Vec<usize> = (0..4).filter(|&a| legal[a]).collect();
                let a = choices[rng.below(choices.len())];
                steps += 1;
                if env.step(a, &mut rng).unwrap().done {
                    break;
                }
            }
            assert_eq!(steps, 100);
            assert_eq!(env.bandit_state().used, [25, 25]);
        }
    }

    #[test]
    fn illegal_action_is_rejected() {
        let cfg = BanditConfig { trials: 4, budget_per_arm: 0, ..Default::default() };
        let task = TaskSpec::Bandit(cfg);
        let mut env = LearnerModelEnv::new(task.clone(), Objective::Target, zero_learner(&task)).unwrap();
        let mut rng = Rng::new(0);
        env.reset(&mut rng).unwrap();
        assert_eq!(env.legal(), vec![true, false, false, false]);
        assert!(matches!(env.step(1, &mut rng), Err(Error::ConstraintViolation(_))));
    }

    #[test]
    fn fair_pays_only_at_the_end() {
        let task = TaskSpec::default_for(TaskKind::Trust);
        let mut env = LearnerModelEnv::new(task.clone(), Objective::Fair, zero_learner(&task)).unwrap();
        let mut rng = Rng::new(5);
        env.reset(&mut rng).unwrap();
        for round in 1..=10 {
            let r = env.step(2, &mut rng).unwrap();
            assert_eq!(r.done, round == 10);
            if !r.done {
                assert_eq!(r.reward, 0.0);
            }
        }
    }

    #[test]
    fn objective_must_match_task() {
        let task = TaskSpec::default_for(TaskKind::Bandit);
        assert!(LearnerModelEnv::new(task.clone(), Objective::Max, zero_learner(&task)).is_err());
    }
}

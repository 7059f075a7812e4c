//! Deep Q-learning adversary acting on the learner model's hidden state,
//! plus an exhaustive-search oracle for tiny bandit instances.

mod dqn;
mod env;
mod oracle;
mod qnet;
mod replay;
mod train;

pub use dqn::{dqn_update, select_masked_action, td_target};
pub use env::{AdversaryEnv, LearnerModelEnv, StepResult};
pub use oracle::{brute_force_oracle, OracleResult};
pub use qnet::{q_values, Dense, QNetDims, QNetParams};
pub use replay::{ReplayBuffer, Transition};
pub use train::{evaluate_policy, train_dqn, CurvePoint, DqnConfig, DqnRun};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{HiddenState, LearnerParams};
use crate::tasks::{ArmStatus, BanditConfig, BanditState, TaskKind, TaskSpec, TrustConfig, TrustState};

/// What the adversary is rewarded for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Bandit: +1 whenever the subject picks the target arm.
    Target,
    /// Trust: trustee's net gain each round.
    Max,
    /// Trust: joint earnings minus twice the earnings gap, paid at the end.
    Fair,
}

impl Objective {
    pub fn task(self) -> TaskKind {
        match self {
            Objective::Target => TaskKind::Bandit,
            Objective::Max | Objective::Fair => TaskKind::Trust,
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Target => "target",
            Objective::Max => "max",
            Objective::Fair => "fair",
        })
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "target" => Ok(Objective::Target),
            "max" => Ok(Objective::Max),
            "fair" => Ok(Objective::Fair),
            other => Err(Error::invalid(format!("unknown objective {other:?}"))),
        }
    }
}

/// Bandit adversary actions, indexed relative to the target arm:
/// bit 0 allocates the target, bit 1 the other arm.
pub const BANDIT_ACTIONS: usize = 4;
pub const BANDIT_AUX: usize = 3;
pub const TRUST_AUX: usize = 4;

pub fn bandit_action_to_allocation(action: usize, cfg: &BanditConfig) -> [bool; 2] {
    let mut alloc = [false; 2];
    alloc[cfg.target_arm] = action & 1 != 0;
    alloc[cfg.other_arm()] = action & 2 != 0;
    alloc
}

pub fn allocation_to_bandit_action(alloc: [bool; 2], cfg: &BanditConfig) -> usize {
    usize::from(alloc[cfg.target_arm]) | (usize::from(alloc[cfg.other_arm()]) << 1)
}

/// Which of the four allocation actions the budget mask permits.
pub fn legal_bandit_actions(state: &BanditState, cfg: &BanditConfig) -> Vec<bool> {
    let mask: [ArmStatus; 2] = state.allocation_mask(cfg);
    (0..BANDIT_ACTIONS)
        .map(|a| {
            let alloc = bandit_action_to_allocation(a, cfg);
            mask[0].allows(alloc[0]) && mask[1].allows(alloc[1])
        })
        .collect()
}

/// Adversary input for the bandit: hidden state, then remaining target
/// budget, remaining other budget and remaining trials, each normalised.
pub fn bandit_adv_state(hidden: &[f64], state: &BanditState, cfg: &BanditConfig) -> Vec<f64> {
    let mut s = hidden.to_vec();
    let budget = cfg.budget_per_arm.max(1) as f64;
    s.push(state.remaining_budget(cfg, cfg.target_arm) as f64 / budget);
    s.push(state.remaining_budget(cfg, cfg.other_arm()) as f64 / budget);
    s.push((cfg.trials - state.t) as f64 / cfg.trials as f64);
    s
}

/// Adversary input for the trust task: hidden state, rounds completed,
/// both running totals, and the investment the trustee is responding to.
pub fn trust_adv_state(hidden: &[f64], state: &TrustState, cfg: &TrustConfig, investment: u32) -> Vec<f64> {
    let scale = 4.0 * (cfg.rounds as f64) * f64::from(cfg.endowment) * f64::from(cfg.multiplier);
    let mut s = hidden.to_vec();
    s.push(state.round as f64 / cfg.rounds as f64);
    s.push(state.investor_total_q as f64 / scale);
    s.push(state.trustee_total_q as f64 / scale);
    s.push(f64::from(investment) / f64::from(cfg.endowment));
    s
}

pub fn adversary_actions(task: &TaskSpec) -> usize {
    match task {
        TaskSpec::Bandit(_) => BANDIT_ACTIONS,
        TaskSpec::Trust(c) => c.repay_actions(),
    }
}

pub fn adversary_input_dim(task: &TaskSpec, hidden_dim: usize) -> usize {
    hidden_dim
        + match task {
            TaskSpec::Bandit(_) => BANDIT_AUX,
            TaskSpec::Trust(_) => TRUST_AUX,
        }
}

/// Per-round MAX reward: trustee net gain, in units of the largest amount
/// the trustee could receive in one round.
pub(crate) fn max_reward(cfg: &TrustConfig, trustee_gain_q: i64) -> f64 {
    trustee_gain_q as f64 / (4.0 * f64::from(cfg.endowment) * f64::from(cfg.multiplier))
}

/// Terminal FAIR reward: `(E_inv + E_tr) − 2·|E_inv − E_tr|`, both totals
/// in units of `rounds · endowment`.
pub fn fair_reward(cfg: &TrustConfig, investor_q: i64, trustee_q: i64) -> f64 {
    let scale = 4.0 * cfg.rounds as f64 * f64::from(cfg.endowment);
    let inv = investor_q as f64 / scale;
    let tr = trustee_q as f64 / scale;
    (inv + tr) - 2.0 * (inv - tr).abs()
}

/// A trained adversary bundled with the learner model it was trained against.
#[derive(Clone, Debug, PartialEq)]
pub struct AdversaryHandle {
    pub task: TaskSpec,
    pub objective: Objective,
    pub learner: LearnerParams,
    pub qnet: QNetParams,
}

impl AdversaryHandle {
    pub fn new(task: TaskSpec, objective: Objective, learner: LearnerParams, qnet: QNetParams) -> Result<Self> {
        if objective.task() != task.kind() {
            return Err(Error::Validation(format!("objective {objective} does not apply to task {}", task.kind())));
        }
        if learner.dims.action_dim != task.action_dim() {
            return Err(Error::Validation("learner action count does not match the task".into()));
        }
        if qnet.dims.input_dim != adversary_input_dim(&task, learner.dims.hidden_dim)
            || qnet.dims.actions != adversary_actions(&task)
        {
            return Err(Error::Validation("q-network dimensions do not match learner and task".into()));
        }
        Ok(Self { task, objective, learner, qnet })
    }

    /// Greedy allocation for the upcoming bandit trial.
    pub fn allocate(&self, hidden: &HiddenState, state: &BanditState) -> Result<[bool; 2]> {
        let TaskSpec::Bandit(cfg) = &self.task else {
            return Err(Error::invalid("bandit decision requested from a trust adversary"));
        };
        let s = bandit_adv_state(hidden.as_slice(), state, cfg);
        let q = q_values(&self.qnet, &s)?;
        let legal = legal_bandit_actions(state, cfg);
        let a =
            dqn::masked_argmax(&q, &legal).ok_or_else(|| Error::ConstraintViolation("no legal allocation".into()))?;
        Ok(bandit_action_to_allocation(a, cfg))
    }

    /// Greedy repayment option in response to `investment`.
    pub fn repay(&self, hidden: &HiddenState, state: &TrustState, investment: u32) -> Result<usize> {
        let TaskSpec::Trust(cfg) = &self.task else {
            return Err(Error::invalid("trust decision requested from a bandit adversary"));
        };
        let s = trust_adv_state(hidden.as_slice(), state, cfg, investment);
        let q = q_values(&self.qnet, &s)?;
        Ok(crate::numerics::argmax(&q))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn allocation_mapping_round_trips() {
        for target_arm in 0..2 {
            let cfg = BanditConfig { target_arm, ..Default::default() };
            for a in 0..BANDIT_ACTIONS {
                assert_eq!(allocation_to_bandit_action(bandit_action_to_allocation(a, &cfg), &cfg), a);
            }
            assert!(bandit_action_to_allocation(1, &cfg)[target_arm]);
            assert!(!bandit_action_to_allocation(1, &cfg)[1 - target_arm]);
        }
    }

    #[test]
    fn legal_actions_follow_the_mask() {
        let cfg = BanditConfig::default();
        assert_eq!(legal_bandit_actions(&BanditState::new(), &cfg), vec![true; 4]);
        let s = BanditState { t: 97, used: [22, 25], history: vec![] };
        // target forced, other forbidden: only "target only"
        assert_eq!(legal_bandit_actions(&s, &cfg), vec![false, true, false, false]);
        let s = BanditState { t: 10, used: [25, 3], history: vec![] };
        assert_eq!(legal_bandit_actions(&s, &cfg), vec![true, false, true, false]);
    }

    #[test]
    fn adv_state_layout() {
        let cfg = BanditConfig::default();
        let s = BanditState { t: 40, used: [5, 20], history: vec![] };
        assert_eq!(bandit_adv_state(&[0.5], &s, &cfg), vec![0.5, 0.8, 0.2, 0.6]);
        let tc = TrustConfig::default();
        let ts = TrustState { round: 2, investor_total_q: 4 * 120, trustee_total_q: 4 * 60, history: vec![] };
        assert_eq!(trust_adv_state(&[], &ts, &tc, 10), vec![0.2, 0.2, 0.1, 0.5]);
    }

    #[test]
    fn fair_reward_prefers_balanced_and_large() {
        let cfg = TrustConfig::default();
        // everyone keeps everything: 200 vs 0
        assert_eq!(fair_reward(&cfg, 800, 0), 1.0 - 2.0);
        // balanced 200/200
        assert_eq!(fair_reward(&cfg, 800, 800), 2.0);
        assert!(fair_reward(&cfg, 4 * 300, 4 * 300) > fair_reward(&cfg, 800, 800));
    }

    #[test]
    fn objective_parsing() {
        assert_eq!("MAX".parse::<Objective>().unwrap(), Objective::Max);
        assert!("greedy".parse::<Objective>().is_err());
        assert_eq!(Objective::Fair.task(), TaskKind::Trust);
    }
}

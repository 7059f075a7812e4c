use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::tasks::Observation;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BanditConfig {
    pub trials: usize,
    /// Potential rewards each arm must receive over an episode.
    pub budget_per_arm: usize,
    /// Arm the adversary steers towards ("Planet X").
    pub target_arm: usize,
    /// Per-arm allocation probability of the random adversary.
    pub reward_prob_random: f64,
}

impl Default for BanditConfig {
    fn default() -> Self {
        Self { trials: 100, budget_per_arm: 25, target_arm: 0, reward_prob_random: 0.25 }
    }
}

impl BanditConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("bandit needs at least one trial"));
        }
        if 2 * self.budget_per_arm > self.trials {
            return Err(Error::invalid(format!(
                "budget {} per arm does not fit in {} trials",
                self.budget_per_arm, self.trials
            )));
        }
        if self.target_arm > 1 {
            return Err(Error::invalid("target arm must be 0 or 1"));
        }
        if !(0.0..=1.0).contains(&self.reward_prob_random) {
            return Err(Error::invalid("random reward probability must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn other_arm(&self) -> usize {
        1 - self.target_arm
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArmStatus {
    Free,
    /// Budget exhausted; the arm may not be allocated.
    Forbidden,
    /// Remaining budget equals remaining trials; the arm must be allocated.
    Forced,
}

impl ArmStatus {
    pub fn allows(self, allocated: bool) -> bool {
        match self {
            ArmStatus::Free => true,
            ArmStatus::Forbidden => !allocated,
            ArmStatus::Forced => allocated,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BanditRecord {
    pub allocation: [bool; 2],
    pub action: usize,
    pub reward: u8,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BanditState {
    /// Trials completed so far.
    pub t: usize,
    /// Allocations made per arm index.
    pub used: [usize; 2],
    pub history: Vec<BanditRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BanditStepOutcome {
    pub reward: u8,
    pub observation: Observation,
}

impl BanditState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_done(&self, cfg: &BanditConfig) -> bool {
        self.t >= cfg.trials
    }

    pub fn remaining_budget(&self, cfg: &BanditConfig, arm: usize) -> usize {
        cfg.budget_per_arm - self.used[arm]
    }

    /// Allocation status of each arm for the upcoming trial.
    ///
    /// Forbidden when the arm's budget is spent; forced when its remaining
    /// budget equals the trials left. A finished episode forbids both.
    pub fn allocation_mask(&self, cfg: &BanditConfig) -> [ArmStatus; 2] {
        if self.is_done(cfg) {
            return [ArmStatus::Forbidden; 2];
        }
        let left = cfg.trials - self.t;
        let mut mask = [ArmStatus::Free; 2];
        for (arm, status) in mask.iter_mut().enumerate() {
            let remaining = self.remaining_budget(cfg, arm);
            if remaining == 0 {
                *status = ArmStatus::Forbidden;
            } else if remaining >= left {
                *status = ArmStatus::Forced;
            }
        }
        mask
    }

    /// Plays one trial. The state is left untouched on error.
    pub fn step(&mut self, cfg: &BanditConfig, allocation: [bool; 2], action: usize) -> Result<BanditStepOutcome> {
        if action > 1 {
            return Err(Error::invalid(format!("bandit action {action} out of range")));
        }
        if self.is_done(cfg) {
            return Err(Error::invalid("bandit episode already finished"));
        }
        let mask = self.allocation_mask(cfg);
        for arm in 0..2 {
            if !mask[arm].allows(allocation[arm]) {
                return Err(Error::ConstraintViolation(format!(
                    "allocation {allocation:?} violates {:?} on arm {arm} at trial {} (used {:?})",
                    mask[arm],
                    self.t + 1,
                    self.used
                )));
            }
        }
        for (used, &given) in self.used.iter_mut().zip(allocation.iter()) {
            *used += usize::from(given);
        }
        let reward = u8::from(allocation[action]);
        self.t += 1;
        self.history.push(BanditRecord { allocation, action, reward });
        Ok(BanditStepOutcome { reward, observation: Observation::Bandit { rewarded: reward == 1 } })
    }
}

/// Random-adversary allocation: an independent Bernoulli draw per arm,
/// overridden by the budget mask.
pub fn random_allocation(state: &BanditState, cfg: &BanditConfig, rng: &mut Rng) -> [bool; 2] {
    let mask = state.allocation_mask(cfg);
    let mut alloc = [false; 2];
    for arm in 0..2 {
        let draw = rng.bernoulli(cfg.reward_prob_random);
        alloc[arm] = match mask[arm] {
            ArmStatus::Free => draw,
            ArmStatus::Forbidden => false,
            ArmStatus::Forced => true,
        };
    }
    alloc
}

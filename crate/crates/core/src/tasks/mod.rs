//! Task state machines: the budget-constrained two-armed bandit and the
//! multi-round trust task (MRTT), plus the per-step feature encoding fed
//! to the learner model.

mod bandit;
mod trust;

pub use bandit::{random_allocation, ArmStatus, BanditConfig, BanditRecord, BanditState, BanditStepOutcome};
pub use trust::{format_units, TrustConfig, TrustRecord, TrustState, TrustStepOutcome};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Length of every step feature vector.
pub const FEATURE_DIM: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Bandit,
    Trust,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Bandit => "bandit",
            TaskKind::Trust => "trust",
        })
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bandit" => Ok(TaskKind::Bandit),
            "trust" | "mrtt" => Ok(TaskKind::Trust),
            other => Err(Error::invalid(format!("unknown task tag {other:?}"))),
        }
    }
}

/// A fully configured task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum TaskSpec {
    Bandit(BanditConfig),
    Trust(TrustConfig),
}

impl TaskSpec {
    pub fn default_for(kind: TaskKind) -> Self {
        match kind {
            TaskKind::Bandit => TaskSpec::Bandit(BanditConfig::default()),
            TaskKind::Trust => TaskSpec::Trust(TrustConfig::default()),
        }
    }

    pub fn kind(&self) -> TaskKind {
        match self {
            TaskSpec::Bandit(_) => TaskKind::Bandit,
            TaskSpec::Trust(_) => TaskKind::Trust,
        }
    }

    /// Trials (bandit) or rounds (trust) per episode.
    pub fn horizon(&self) -> usize {
        match self {
            TaskSpec::Bandit(c) => c.trials,
            TaskSpec::Trust(c) => c.rounds,
        }
    }

    /// Number of subject actions: two arms, or investments `0..=endowment`.
    pub fn action_dim(&self) -> usize {
        match self {
            TaskSpec::Bandit(_) => 2,
            TaskSpec::Trust(c) => c.endowment as usize + 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TaskSpec::Bandit(c) => c.validate(),
            TaskSpec::Trust(c) => c.validate(),
        }
    }
}

/// What the subject sees after a step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Observation {
    Bandit {
        rewarded: bool,
    },
    Trust {
        /// Repayment in quarter-units.
        repay_q: i64,
        /// Repayment as a fraction of the amount the trustee received
        /// (0 when nothing was invested).
        fraction: f64,
    },
}

/// Outcome of one completed step, as consumed by subjects and the encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct Feedback {
    /// Arm index (bandit) or investment in units (trust).
    pub action: usize,
    /// Learner reward: 0/1 (bandit) or the investor's round gain in units.
    pub reward: f64,
    pub observation: Observation,
}

/// Input features for the step following `prev`.
///
/// `completed` is the number of steps already played; `prev` is the last of
/// them (`None` on the first step, which is zero-padded).
///
/// * bandit: `[prev arm one-hot (2), prev reward]`
/// * trust: `[prev investment / endowment, prev repayment fraction, completed / rounds]`
pub fn encode_step_features(task: &TaskSpec, prev: Option<&Feedback>, completed: usize) -> Result<[f64; FEATURE_DIM]> {
    let Some(fb) = prev else {
        return Ok([0.0; FEATURE_DIM]);
    };
    match (task, &fb.observation) {
        (TaskSpec::Bandit(_), Observation::Bandit { .. }) => {
            if fb.action > 1 {
                return Err(Error::invalid(format!("bandit action {} out of range", fb.action)));
            }
            let mut x = [0.0; FEATURE_DIM];
            x[fb.action] = 1.0;
            x[2] = fb.reward;
            Ok(x)
        }
        (TaskSpec::Trust(cfg), Observation::Trust { fraction, .. }) => {
            Ok([fb.action as f64 / cfg.endowment as f64, *fraction, completed as f64 / cfg.rounds as f64])
        }
        _ => Err(Error::invalid(format!("observation does not belong to task {}", task.kind()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bandit_features() {
        let task = TaskSpec::default_for(TaskKind::Bandit);
        assert_eq!(encode_step_features(&task, None, 0).unwrap(), [0.0, 0.0, 0.0]);
        let fb = Feedback { action: 0, reward: 1.0, observation: Observation::Bandit { rewarded: true } };
        assert_eq!(encode_step_features(&task, Some(&fb), 1).unwrap(), [1.0, 0.0, 1.0]);
        let fb = Feedback { action: 1, reward: 0.0, observation: Observation::Bandit { rewarded: false } };
        assert_eq!(encode_step_features(&task, Some(&fb), 5).unwrap(), [0.0, 1.0, 0.0]);
    }

    #[test]
    fn trust_features() {
        let task = TaskSpec::default_for(TaskKind::Trust);
        // invest 10 of 20, 7.5 of 30 returned, 3 of 10 rounds done.
        let fb = Feedback { action: 10, reward: 17.5, observation: Observation::Trust { repay_q: 30, fraction: 0.25 } };
        assert_eq!(encode_step_features(&task, Some(&fb), 3).unwrap(), [0.5, 0.25, 0.3]);
    }

    #[test]
    fn mismatched_task_and_unknown_tag() {
        let task = TaskSpec::default_for(TaskKind::Bandit);
        let fb = Feedback { action: 3, reward: 0.0, observation: Observation::Trust { repay_q: 0, fraction: 0.0 } };
        assert!(encode_step_features(&task, Some(&fb), 1).is_err());
        assert!("chess".parse::<TaskKind>().is_err());
        assert_eq!("MRTT".parse::<TaskKind>().unwrap(), TaskKind::Trust);
    }

    #[test]
    fn observation_json_shape() {
        let o = serde_json::to_string(&Observation::Bandit { rewarded: true }).unwrap();
        assert_eq!(o, r#"{"rewarded":true}"#);
        let o = serde_json::to_string(&Observation::Trust { repay_q: 30, fraction: 0.25 }).unwrap();
        assert_eq!(o, r#"{"repay_q":30,"fraction":0.25}"#);
        let back: Observation = serde_json::from_str(&o).unwrap();
        assert_eq!(back, Observation::Trust { repay_q: 30, fraction: 0.25 });
    }
}

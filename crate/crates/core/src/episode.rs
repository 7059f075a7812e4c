//! Per-trial episode records shared by collection, training, metrics and
//! persistence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tasks::{encode_step_features, BanditState, Feedback, Observation, TaskKind, TaskSpec, TrustState};

/// What the adversary (or random baseline) did on a trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum AdversaryMove {
    /// Potential reward per arm index.
    Allocation([bool; 2]),
    /// Repayment option index and the resulting repayment in quarter-units.
    Repay { action: usize, repay_q: i64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    /// 1-based trial index.
    pub t: usize,
    /// Arm (bandit) or investment in units (trust).
    pub action: usize,
    /// Learner reward: 0/1 for the bandit, investor round gain in units for trust.
    pub reward: f64,
    pub observation: Observation,
    pub adversary: AdversaryMove,
    /// Learner-model hidden state the adversary acted on, when one was used.
    pub hidden: Option<Vec<f64>>,
}

impl TrialRecord {
    pub fn feedback(&self) -> Feedback {
        Feedback { action: self.action, reward: self.reward, observation: self.observation.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub task: TaskKind,
    pub subject: String,
    pub seed: u64,
    /// Episode index within its run.
    pub episode: usize,
    pub records: Vec<TrialRecord>,
    /// Reason the subject stopped early, if it did.
    pub aborted: Option<String>,
}

/// Inputs and targets for one episode, ready for the learner.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSequence {
    pub inputs: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
}

impl TrainingSequence {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

impl EpisodeLog {
    pub fn new(task: TaskKind, subject: impl Into<String>, seed: u64, episode: usize) -> Self {
        Self { task, subject: subject.into(), seed, episode, records: Vec::new(), aborted: None }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn actions(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.action).collect()
    }

    /// Step features: zeros for the first trial, then the encoding of each
    /// previous trial's outcome.
    pub fn to_sequence(&self, task: &TaskSpec) -> Result<TrainingSequence> {
        if task.kind() != self.task {
            return Err(Error::invalid(format!("episode is {} but the task is {}", self.task, task.kind())));
        }
        let mut inputs = Vec::with_capacity(self.records.len());
        let mut prev: Option<Feedback> = None;
        for (i, r) in self.records.iter().enumerate() {
            inputs.push(encode_step_features(task, prev.as_ref(), i)?.to_vec());
            prev = Some(r.feedback());
        }
        Ok(TrainingSequence { inputs, actions: self.actions() })
    }

    /// Replays the log through the task rules and checks every logged
    /// reward and observation. Returns the replayed final state.
    pub fn replay(&self, task: &TaskSpec) -> Result<ReplayedState> {
        if task.kind() != self.task {
            return Err(Error::invalid("episode and task differ"));
        }
        for (i, r) in self.records.iter().enumerate() {
            if r.t != i + 1 {
                return Err(Error::DataCorruption(format!(
                    "episode {}: trial index {} at position {}",
                    self.episode,
                    r.t,
                    i + 1
                )));
            }
        }
        match task {
            TaskSpec::Bandit(cfg) => {
                let mut s = BanditState::new();
                for r in &self.records {
                    let AdversaryMove::Allocation(alloc) = r.adversary else {
                        return Err(Error::DataCorruption("trust move in a bandit log".into()));
                    };
                    let out = s
                        .step(cfg, alloc, r.action)
                        .map_err(|e| Error::DataCorruption(format!("episode {} trial {}: {e}", self.episode, r.t)))?;
                    if f64::from(out.reward) != r.reward || out.observation != r.observation {
                        return Err(Error::DataCorruption(format!(
                            "episode {} trial {}: logged reward {} but rules give {}",
                            self.episode, r.t, r.reward, out.reward
                        )));
                    }
                }
                Ok(ReplayedState::Bandit(s))
            }
            TaskSpec::Trust(cfg) => {
                let mut s = TrustState::new();
                for r in &self.records {
                    let AdversaryMove::Repay { action, repay_q } = r.adversary else {
                        return Err(Error::DataCorruption("bandit move in a trust log".into()));
                    };
                    let investment =
                        u32::try_from(r.action).map_err(|_| Error::DataCorruption("investment does not fit".into()))?;
                    let out = s
                        .step(cfg, investment, action)
                        .map_err(|e| Error::DataCorruption(format!("episode {} round {}: {e}", self.episode, r.t)))?;
                    if out.repay_q != repay_q
                        || out.investor_gain_q as f64 / 4.0 != r.reward
                        || out.observation != r.observation
                    {
                        return Err(Error::DataCorruption(format!(
                            "episode {} round {}: logged repayment/gain disagree with the rules",
                            self.episode, r.t
                        )));
                    }
                }
                Ok(ReplayedState::Trust(s))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ReplayedState {
    Bandit(BanditState),
    Trust(TrustState),
}

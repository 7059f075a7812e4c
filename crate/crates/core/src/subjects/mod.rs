//! Decision-making subjects: reproducible synthetic agents for desk-scale
//! verification and an LLM-backed subject that plays through a chat API.

mod llm;
mod synthetic;

pub use llm::{
    build_llm_prompt, compliant_reply, parse_llm_reply, ChatBackend, ChatMessage, ChatRole, LlmSettings, LlmSubject,
    LlmSubjectFactory, PromptTemplates, PromptTranscript, TranscriptTurn,
};
pub use synthetic::SyntheticSubject;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::tasks::{Feedback, TaskKind, TaskSpec};

/// Something that chooses actions trial by trial.
pub trait Subject: Send {
    fn label(&self) -> String;

    /// Chooses the next action given the outcome of the previous step
    /// (`None` on the first step).
    fn act(&mut self, prev: Option<&Feedback>, rng: &mut Rng) -> Result<usize>;

    /// True when `act` never consumes randomness.
    fn is_deterministic(&self) -> bool {
        false
    }
}

/// Creates a fresh subject for each episode.
pub trait SubjectFactory: Sync {
    fn label(&self) -> String;

    fn spawn(&self, task: &TaskSpec, episode: u64) -> Result<Box<dyn Subject>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubjectKind {
    Wsls,
    RwSoftmax,
    Sticky,
    Llm,
    HumanProxy,
}

/// Parameters of a subject.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SubjectPolicy {
    /// Win-stay/lose-shift. `start` is the first arm (bandit) or first
    /// investment (trust).
    Wsls {
        start: usize,
    },
    /// Rescorla-Wagner values with softmax choice.
    RwSoftmax {
        alpha: f64,
        beta: f64,
        initial_value: f64,
    },
    /// Uniform exploration for `explore_trials`, then sticks to its anchor
    /// with probability `stickiness`.
    Sticky {
        explore_trials: usize,
        stickiness: f64,
    },
    Llm(LlmSettings),
    /// Actions arrive through the session service.
    HumanProxy,
}

impl SubjectPolicy {
    pub fn kind(&self) -> SubjectKind {
        match self {
            SubjectPolicy::Wsls { .. } => SubjectKind::Wsls,
            SubjectPolicy::RwSoftmax { .. } => SubjectKind::RwSoftmax,
            SubjectPolicy::Sticky { .. } => SubjectKind::Sticky,
            SubjectPolicy::Llm(_) => SubjectKind::Llm,
            SubjectPolicy::HumanProxy => SubjectKind::HumanProxy,
        }
    }

    /// Win-stay/lose-shift starting on the target arm (bandit) or at half
    /// the endowment (trust).
    pub fn wsls(task: &TaskSpec) -> Self {
        let start = match task {
            TaskSpec::Bandit(c) => c.target_arm,
            TaskSpec::Trust(c) => c.endowment as usize / 2,
        };
        SubjectPolicy::Wsls { start }
    }

    /// Flexible learner: alpha 0.3, beta 3. Trust values start at the
    /// normalised profit of keeping the whole endowment.
    pub fn rw_softmax(task: &TaskSpec) -> Self {
        let initial_value = match task.kind() {
            TaskKind::Bandit => 0.0,
            TaskKind::Trust => 1.0,
        };
        SubjectPolicy::RwSoftmax { alpha: 0.3, beta: 3.0, initial_value }
    }

    /// Rigid exploiter: 5 exploration trials, stickiness 0.98.
    pub fn sticky() -> Self {
        SubjectPolicy::Sticky { explore_trials: 5, stickiness: 0.98 }
    }

    pub fn label(&self) -> String {
        match self {
            SubjectPolicy::Wsls { .. } => "wsls".into(),
            SubjectPolicy::RwSoftmax { .. } => "rw_softmax".into(),
            SubjectPolicy::Sticky { .. } => "sticky".into(),
            SubjectPolicy::Llm(s) => format!("llm:{}", s.model),
            SubjectPolicy::HumanProxy => "human".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SubjectPolicy::RwSoftmax { alpha, beta, initial_value } => {
                if !(alpha > 0.0 && alpha <= 1.0) {
                    return Err(Error::invalid(format!("alpha {alpha} outside (0, 1]")));
                }
                if beta.is_nan() || beta < 0.0 || !initial_value.is_finite() {
                    return Err(Error::invalid("beta must be non-negative and values finite"));
                }
            }
            SubjectPolicy::Sticky { stickiness, .. } if !(0.0..=1.0).contains(&stickiness) => {
                return Err(Error::invalid(format!("stickiness {stickiness} outside [0, 1]")));
            }
            _ => {}
        }
        Ok(())
    }
}

impl SubjectFactory for SubjectPolicy {
    fn label(&self) -> String {
        SubjectPolicy::label(self)
    }

    fn spawn(&self, task: &TaskSpec, _episode: u64) -> Result<Box<dyn Subject>> {
        Ok(Box::new(SyntheticSubject::new(self.clone(), task.clone())?))
    }
}

//! Closed-loop adversarial testing of decision-making agents.
//!
//! The crate covers the four phases of the loop:
//!
//! 1. collect behavioural episodes from a subject playing a two-armed bandit
//!    or the multi-round trust task ([`pipeline::collect_episodes`]);
//! 2. fit a gated recurrent learner model that predicts the subject's next
//!    action ([`learner::train_learner`]);
//! 3. train a deep Q-learning adversary against the learner model
//!    ([`pipeline::train_adversary_loop`]);
//! 4. deploy the adversary against the live subject, with the learner model
//!    running in observer mode to supply state ([`pipeline::closed_loop_run`]).
//!
//! Everything numeric (recurrent backprop, Adam, Q-learning) is implemented
//! directly on `f64` slices so runs replay bit-for-bit from a seed.

pub mod adversary;
pub mod episode;
pub mod error;
pub mod gateway;
pub mod learner;
pub mod metrics;
pub mod numerics;
pub mod pipeline;
pub mod subjects;
pub mod tasks;

pub use adversary::{AdversaryHandle, DqnConfig, Objective, QNetParams};
pub use episode::{AdversaryMove, EpisodeLog, TrialRecord};
pub use error::{Error, Result};
pub use learner::{HiddenState, LearnerConfig, LearnerParams};
pub use numerics::{Matrix, Rng, Stream};
pub use pipeline::AdversaryPolicy;
pub use subjects::{Subject, SubjectFactory, SubjectPolicy};
pub use tasks::{BanditConfig, Observation, TaskKind, TaskSpec, TrustConfig};

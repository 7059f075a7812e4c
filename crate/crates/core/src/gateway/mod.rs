//! Persistence formats and the session service behind the HTTP API.

mod checkpoint;
mod ndjson;
mod session;

pub use checkpoint::{
    assemble_adversary, learner_checkpoint, learner_from_checkpoint, load_adversary, load_learner, save_adversary,
    save_learner, AdversaryMeta, Checkpoint, CheckpointKind, LearnerMeta, LoadedAdversary, LoadedLearner,
    CHECKPOINT_VERSION,
};
pub use ndjson::{episodes_to_string, read_episodes, read_episodes_file, write_episodes, TrialLine};
pub use session::{
    ActionRequest, ActionResponse, CreateSessionRequest, CreateSessionResponse, ServeLock, SessionConfig,
    SessionContext, SessionManager, SessionStatus, SessionView, HUMAN_SUBJECT,
};

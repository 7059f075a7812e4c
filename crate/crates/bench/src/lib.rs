//! Fixtures shared by the benchmarks.

use adversa_core::adversary::{adversary_input_dim, QNetDims, Transition, BANDIT_ACTIONS};
use adversa_core::episode::TrainingSequence;
use adversa_core::learner::LearnerDims;
use adversa_core::pipeline::collect_episodes;
use adversa_core::tasks::FEATURE_DIM;
use adversa_core::{AdversaryPolicy, LearnerParams, QNetParams, Rng, SubjectPolicy, TaskKind, TaskSpec};

pub const HIDDEN: usize = 10;

pub fn bandit() -> TaskSpec {
    TaskSpec::default_for(TaskKind::Bandit)
}

pub fn learner(task: &TaskSpec) -> LearnerParams {
    LearnerParams::init(
        LearnerDims { input_dim: FEATURE_DIM, hidden_dim: HIDDEN, action_dim: task.action_dim() },
        &mut Rng::new(1),
    )
}

/// One full-length episode of a flexible subject as a training sequence.
pub fn sequence(task: &TaskSpec) -> TrainingSequence {
    let logs = collect_episodes(task, &SubjectPolicy::rw_softmax(task), &AdversaryPolicy::Random, 1, 2)
        .expect("collection succeeds");
    logs[0].to_sequence(task).expect("valid log")
}

/// Default-sized bandit Q-network.
pub fn qnet(task: &TaskSpec) -> QNetParams {
    QNetParams::init(
        QNetDims { input_dim: adversary_input_dim(task, HIDDEN), hidden: vec![64, 64], actions: BANDIT_ACTIONS },
        &mut Rng::new(3),
    )
}

/// Random transitions with all actions legal.
pub fn transitions(task: &TaskSpec, n: usize) -> Vec<Transition> {
    let dim = adversary_input_dim(task, HIDDEN);
    let mut rng = Rng::new(4);
    let mut state = || (0..dim).map(|_| rng.uniform_range(-1.0, 1.0)).collect::<Vec<f64>>();
    (0..n)
        .map(|i| Transition {
            state: state(),
            action: i % BANDIT_ACTIONS,
            reward: (i % 2) as f64,
            next_state: state(),
            next_legal: vec![true; BANDIT_ACTIONS],
            terminal: i % 100 == 99,
        })
        .collect()
}

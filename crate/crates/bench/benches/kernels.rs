use adversa_bench::{bandit, learner, qnet, sequence, transitions};
use adversa_core::adversary::dqn_update;
use adversa_core::learner::{gru_forward_step, sequence_nll};
use adversa_core::numerics::{AdamConfig, AdamState};
use adversa_core::pipeline::collect_episodes;
use adversa_core::tasks::FEATURE_DIM;
use adversa_core::{AdversaryPolicy, HiddenState, SubjectPolicy};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

fn recurrent(c: &mut Criterion) {
    let task = bandit();
    let p = learner(&task);
    let h = HiddenState::zeros(p.dims.hidden_dim);
    let x = [0.5; FEATURE_DIM];
    c.bench_function("gru_forward_step", |b| b.iter(|| gru_forward_step(&p, black_box(&h), black_box(&x)).unwrap()));

    let seq = sequence(&task);
    c.bench_function("sequence_nll_100_trials", |b| b.iter(|| sequence_nll(&p, black_box(&seq)).unwrap()));
}

fn q_learning(c: &mut Criterion) {
    let task = bandit();
    let target = qnet(&task);
    let data = transitions(&task, 64);
    let batch: Vec<_> = data.iter().collect();
    c.bench_function("dqn_update_batch_64", |b| {
        b.iter_batched(
            || (target.clone(), AdamState::new(target.num_params(), AdamConfig::with_lr(1e-3))),
            |(mut params, mut adam)| dqn_update(&mut params, &target, &batch, 1.0, &mut adam, 10.0).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn collection(c: &mut Criterion) {
    let task = bandit();
    let policy = SubjectPolicy::rw_softmax(&task);
    c.bench_function("collect_20_bandit_episodes", |b| {
        b.iter(|| collect_episodes(&task, &policy, &AdversaryPolicy::Random, 20, black_box(7)).unwrap())
    });
}

criterion_group!(benches, recurrent, q_learning, collection);
criterion_main!(benches);

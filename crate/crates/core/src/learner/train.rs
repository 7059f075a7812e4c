use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::episode::{EpisodeLog, TrainingSequence};
use crate::error::{Error, Result};
use crate::learner::{sequence_nll, sequence_stats, LearnerDims, LearnerParams};
use crate::numerics::{clip_grad_norm, AdamConfig, AdamState, Rng, Stream};
use crate::tasks::{TaskSpec, FEATURE_DIM};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub hidden_dim: usize,
    pub epochs: usize,
    /// Epochs without held-out improvement before stopping.
    pub patience: usize,
    /// Episodes per minibatch.
    pub batch_size: usize,
    pub lr: f64,
    /// Maximum gradient norm per update.
    pub clip: f64,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 10,
            epochs: 200,
            patience: 20,
            batch_size: 16,
            lr: 1e-3,
            clip: 5.0,
            holdout_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub train_nll: f64,
    pub holdout_nll: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epochs: Vec<EpochReport>,
    pub best_epoch: usize,
    pub holdout_nll: f64,
    /// Fraction of held-out trials whose most probable action was the one taken.
    pub holdout_accuracy: f64,
    pub train_episodes: usize,
    pub holdout_episodes: usize,
    /// Largest gradient norm seen before clipping.
    pub max_grad_norm: f64,
}

fn evaluate(p: &LearnerParams, seqs: &[TrainingSequence]) -> Result<(f64, f64)> {
    let stats = seqs.par_iter().map(|s| sequence_stats(p, s)).collect::<Result<Vec<_>>>()?;
    let mut nll = 0.0;
    let mut correct = 0;
    let mut trials = 0;
    for s in stats {
        nll += s.nll * s.trials as f64;
        correct += s.correct;
        trials += s.trials;
    }
    Ok((nll / trials as f64, correct as f64 / trials as f64))
}

/// Fits a learner model with minibatch Adam, keeping the parameters from
/// the epoch with the lowest held-out NLL.
pub fn train_learner(
    dataset: &[EpisodeLog],
    task: &TaskSpec,
    config: &LearnerConfig,
) -> Result<(LearnerParams, TrainingReport)> {
    let usable: Vec<&EpisodeLog> = dataset.iter().filter(|e| e.aborted.is_none() && !e.is_empty()).collect();
    if usable.len() < 2 {
        return Err(Error::invalid("training needs at least two complete episodes"));
    }
    if usable.iter().any(|e| e.task != task.kind()) {
        return Err(Error::invalid("dataset mixes tasks"));
    }
    if config.hidden_dim == 0 || config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::invalid("hidden_dim, batch_size and epochs must be positive"));
    }
    if !(0.0..1.0).contains(&config.holdout_fraction) {
        return Err(Error::invalid("holdout fraction must lie in [0, 1)"));
    }
    let seqs = usable.iter().map(|e| e.to_sequence(task)).collect::<Result<Vec<_>>>()?;

    let mut data_rng = Rng::stream(config.seed, Stream::Data, 0);
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    data_rng.shuffle(&mut order);
    let n_hold = ((seqs.len() as f64 * config.holdout_fraction).round() as usize).clamp(1, seqs.len() - 1);
    let holdout: Vec<TrainingSequence> = order[..n_hold].iter().map(|&i| seqs[i].clone()).collect();
    let train: Vec<TrainingSequence> = order[n_hold..].iter().map(|&i| seqs[i].clone()).collect();

    let dims = LearnerDims { input_dim: FEATURE_DIM, hidden_dim: config.hidden_dim, action_dim: task.action_dim() };
    let mut params = LearnerParams::init(dims, &mut Rng::stream(config.seed, Stream::Init, 0));
    let mut flat = params.to_flat();
    let mut adam = AdamState::new(flat.len(), AdamConfig::with_lr(config.lr));

    let (mut best_nll, _) = evaluate(&params, &holdout)?;
    let mut best = params.clone();
    let mut best_epoch = 0;
    let mut epochs = Vec::new();
    let mut max_grad_norm: f64 = 0.0;
    let mut idx: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=config.epochs {
        data_rng.shuffle(&mut idx);
        let mut train_nll = 0.0;
        for batch in idx.chunks(config.batch_size) {
            // Per-episode gradients in parallel, summed in batch order.
            let parts = batch
                .par_iter()
                .map(|&i| sequence_nll(&params, &train[i]).map(|(l, g)| (l, g.to_flat())))
                .collect::<Result<Vec<_>>>()?;
            let mut grad = vec![0.0; flat.len()];
            for (loss, g) in &parts {
                train_nll += loss;
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            max_grad_norm = max_grad_norm.max(clip_grad_norm(&mut grad, config.clip));
            adam.step(&mut flat, &grad)?;
            if flat.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence(format!("non-finite learner weights in epoch {epoch}")));
            }
            params.set_flat(&flat)?;
        }
        let (holdout_nll, _) = evaluate(&params, &holdout)?;
        epochs.push(EpochReport { epoch, train_nll: train_nll / train.len() as f64, holdout_nll });
        if holdout_nll < best_nll {
            best_nll = holdout_nll;
            best = params.clone();
            best_epoch = epoch;
        } else if epoch - best_epoch >= config.patience {
            break;
        }
    }

    let (holdout_nll, holdout_accuracy) = evaluate(&best, &holdout)?;
    Ok((
        best,
        TrainingReport {
            epochs,
            best_epoch,
            holdout_nll,
            holdout_accuracy,
            train_episodes: train.len(),
            holdout_episodes: holdout.len(),
            max_grad_norm,
        },
    ))
}

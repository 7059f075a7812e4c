//! The four phases: collection, learner fitting, adversary training against
//! the learner model, and closed-loop deployment.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adversary::{
    adversary_actions, adversary_input_dim, train_dqn, AdversaryHandle, CurvePoint, DqnConfig, LearnerModelEnv,
    Objective,
};
use crate::episode::{AdversaryMove, EpisodeLog, TrialRecord};
use crate::error::{Error, Result};
use crate::learner::{observe_action, train_learner, HiddenState, LearnerConfig, LearnerParams, TrainingReport};
use crate::metrics::{
    bandit_metrics, investment_by_repayment, trust_metrics, BanditMetrics, RepaymentBin, TrustMetrics,
};
use crate::numerics::{Rng, Stream};
use crate::subjects::{Subject, SubjectFactory};
use crate::tasks::{encode_step_features, random_allocation, BanditState, Feedback, TaskSpec, TrustState};

/// Who controls rewards (bandit) or repayments (trust) during collection.
#[derive(Clone, Debug)]
pub enum AdversaryPolicy {
    /// Bandit: budget-constrained Bernoulli allocations. Trust: uniform
    /// repayment option.
    Random,
    /// Greedy trained adversary fed by the learner model in observer mode.
    Trained(Box<AdversaryHandle>),
}

impl AdversaryPolicy {
    pub fn label(&self) -> String {
        match self {
            AdversaryPolicy::Random => "random".into(),
            AdversaryPolicy::Trained(h) => format!("dqn-{}", h.objective),
        }
    }
}

/// Observer-mode learner state carried through an episode.
struct Observer<'a> {
    learner: &'a LearnerParams,
    hidden: HiddenState,
}

impl<'a> Observer<'a> {
    fn start(learner: &'a LearnerParams, task: &TaskSpec) -> Result<Self> {
        let h0 = HiddenState::zeros(learner.dims.hidden_dim);
        let hidden = observe_action(learner, &h0, &encode_step_features(task, None, 0)?)?;
        Ok(Self { learner, hidden })
    }

    fn observe(&mut self, task: &TaskSpec, fb: &Feedback, completed: usize) -> Result<()> {
        let x = encode_step_features(task, Some(fb), completed)?;
        self.hidden = observe_action(self.learner, &self.hidden, &x)?;
        Ok(())
    }
}

/// Plays one episode. Randomness comes from the (seed, episode) subject and
/// environment streams, so episodes are independent of scheduling.
pub fn run_episode(
    task: &TaskSpec,
    subject: &mut dyn Subject,
    adversary: &AdversaryPolicy,
    seed: u64,
    episode: usize,
) -> Result<EpisodeLog> {
    let mut subject_rng = Rng::stream(seed, Stream::Subject, episode as u64);
    let mut env_rng = Rng::stream(seed, Stream::Environment, episode as u64);
    let mut log = EpisodeLog::new(task.kind(), subject.label(), seed, episode);
    let mut observer = match adversary {
        AdversaryPolicy::Trained(h) => {
            if h.task != *task {
                return Err(Error::Validation("adversary was trained on a different task configuration".into()));
            }
            Some(Observer::start(&h.learner, task)?)
        }
        AdversaryPolicy::Random => None,
    };
    let mut prev: Option<Feedback> = None;

    match task {
        TaskSpec::Bandit(cfg) => {
            let mut state = BanditState::new();
            while !state.is_done(cfg) {
                let hidden = observer.as_ref().map(|o| o.hidden.clone());
                let alloc = match (adversary, &hidden) {
                    (AdversaryPolicy::Trained(h), Some(hs)) => h.allocate(hs, &state)?,
                    _ => random_allocation(&state, cfg, &mut env_rng),
                };
                let action = match subject.act(prev.as_ref(), &mut subject_rng) {
                    Ok(a) => a,
                    Err(e) => {
                        log.aborted = Some(e.to_string());
                        break;
                    }
                };
                let out = state.step(cfg, alloc, action)?;
                let fb = Feedback { action, reward: f64::from(out.reward), observation: out.observation.clone() };
                log.records.push(TrialRecord {
                    t: state.t,
                    action,
                    reward: fb.reward,
                    observation: out.observation,
                    adversary: AdversaryMove::Allocation(alloc),
                    hidden: hidden.map(|h| h.0),
                });
                if let Some(o) = observer.as_mut() {
                    if !state.is_done(cfg) {
                        o.observe(task, &fb, state.t)?;
                    }
                }
                prev = Some(fb);
            }
        }
        TaskSpec::Trust(cfg) => {
            let mut state = TrustState::new();
            while !state.is_done(cfg) {
                let investment = match subject.act(prev.as_ref(), &mut subject_rng) {
                    Ok(a) if a <= cfg.endowment as usize => a as u32,
                    Ok(a) => {
                        log.aborted = Some(format!("investment {a} outside 0..={}", cfg.endowment));
                        break;
                    }
                    Err(e) => {
                        log.aborted = Some(e.to_string());
                        break;
                    }
                };
                let hidden = observer.as_ref().map(|o| o.hidden.clone());
                let repay = match (adversary, &hidden) {
                    (AdversaryPolicy::Trained(h), Some(hs)) => h.repay(hs, &state, investment)?,
                    _ => env_rng.below(cfg.repay_actions()),
                };
                let out = state.step(cfg, investment, repay)?;
                let fb = Feedback {
                    action: investment as usize,
                    reward: out.investor_gain_q as f64 / 4.0,
                    observation: out.observation.clone(),
                };
                log.records.push(TrialRecord {
                    t: state.round,
                    action: investment as usize,
                    reward: fb.reward,
                    observation: out.observation,
                    adversary: AdversaryMove::Repay { action: repay, repay_q: out.repay_q },
                    hidden: hidden.map(|h| h.0),
                });
                if let Some(o) = observer.as_mut() {
                    if !state.is_done(cfg) {
                        o.observe(task, &fb, state.round)?;
                    }
                }
                prev = Some(fb);
            }
        }
    }
    Ok(log)
}

/// Phase A: `n_episodes` independent episodes, run in parallel and returned
/// in episode order.
pub fn collect_episodes(
    task: &TaskSpec,
    subjects: &dyn SubjectFactory,
    adversary: &AdversaryPolicy,
    n_episodes: usize,
    seed: u64,
) -> Result<Vec<EpisodeLog>> {
    task.validate()?;
    if n_episodes == 0 {
        return Err(Error::invalid("n_episodes must be at least 1"));
    }
    (0..n_episodes)
        .into_par_iter()
        .map(|ep| {
            let mut subject = subjects.spawn(task, ep as u64)?;
            run_episode(task, subject.as_mut(), adversary, seed, ep)
        })
        .collect()
}

/// Hidden states the observer-mode learner would feed the adversary on
/// each trial of `log`, recomputed offline.
pub fn replay_hidden(learner: &LearnerParams, task: &TaskSpec, log: &EpisodeLog) -> Result<Vec<Vec<f64>>> {
    let mut observer = Observer::start(learner, task)?;
    let mut out = Vec::with_capacity(log.len());
    for (i, r) in log.records.iter().enumerate() {
        out.push(observer.hidden.0.clone());
        if i + 1 < log.len() {
            observer.observe(task, &r.feedback(), i + 1)?;
        }
    }
    Ok(out)
}

/// Phase B. Writes the checkpoint and a manifest entry when `out` is given.
pub fn fit_learner(
    dataset: &[EpisodeLog],
    task: &TaskSpec,
    config: &LearnerConfig,
    out: Option<&Path>,
) -> Result<(LearnerParams, TrainingReport)> {
    let started = unix_now();
    let (params, report) = train_learner(dataset, task, config)?;
    if let Some(path) = out {
        crate::gateway::save_learner(path, &params, task, config, Some(&report))?;
        let mut manifest = RunManifest::load_or_default(&RunManifest::path_beside(path))?;
        manifest.config.insert("learner".into(), serde_json::to_value(config)?);
        manifest.seeds.insert("learner".into(), config.seed);
        manifest.record_artifact(&RunManifest::dir_of(path), "learner", path)?;
        manifest.phases.push(PhaseStamp { phase: "fit_learner".into(), started, finished: unix_now() });
        manifest.save(&RunManifest::path_beside(path))?;
    }
    Ok((params, report))
}

#[derive(Clone, Debug)]
pub struct AdversaryTraining {
    pub handle: AdversaryHandle,
    /// Mean adversarial return per `curve_window` episodes.
    pub curve: Vec<CurvePoint>,
    pub updates: usize,
    /// Set when training stopped early on a non-finite loss; `handle` then
    /// holds the last weights.
    pub diverged: Option<String>,
}

/// Phase C: DQN training with the learner model acting as the subject.
pub fn train_adversary_loop(
    learner: &LearnerParams,
    task: &TaskSpec,
    objective: Objective,
    config: &DqnConfig,
) -> Result<AdversaryTraining> {
    let mut env = LearnerModelEnv::new(task.clone(), objective, learner.clone())?;
    let input = adversary_input_dim(task, learner.dims.hidden_dim);
    let run = train_dqn(&mut env, input, adversary_actions(task), config)?;
    let handle = AdversaryHandle::new(task.clone(), objective, learner.clone(), run.params)?;
    Ok(AdversaryTraining { handle, curve: run.curve, updates: run.updates, diverged: run.diverged })
}

/// Moving average of the curve over `window` points, and the fraction of
/// consecutive smoothed steps that do not decrease.
pub fn curve_monotonicity(curve: &[CurvePoint], window: usize) -> Option<f64> {
    if window == 0 || curve.len() < window + 1 {
        return None;
    }
    let smooth: Vec<f64> =
        curve.windows(window).map(|w| w.iter().map(|p| p.mean_return).sum::<f64>() / window as f64).collect();
    let ups = smooth.windows(2).filter(|w| w[1] >= w[0]).count();
    Some(ups as f64 / (smooth.len() - 1) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum MetricsReport {
    Bandit(BanditMetrics),
    Trust { metrics: TrustMetrics, investment_by_repayment: Vec<RepaymentBin> },
}

/// Metrics over the completed (non-aborted) episodes of `logs`.
pub fn metrics_report(task: &TaskSpec, logs: &[EpisodeLog]) -> Result<MetricsReport> {
    let complete: Vec<EpisodeLog> = logs.iter().filter(|e| e.aborted.is_none() && !e.is_empty()).cloned().collect();
    match task {
        TaskSpec::Bandit(cfg) => Ok(MetricsReport::Bandit(bandit_metrics(&complete, cfg)?)),
        TaskSpec::Trust(cfg) => Ok(MetricsReport::Trust {
            metrics: trust_metrics(&complete, cfg)?,
            investment_by_repayment: investment_by_repayment(&complete, cfg)?,
        }),
    }
}

#[derive(Clone, Debug)]
pub struct ClosedLoopRun {
    pub logs: Vec<EpisodeLog>,
    pub report: MetricsReport,
    pub aborted: usize,
}

/// Phase D: the greedy adversary against live subjects, learner in
/// observer mode. Logs carry the hidden state used on every trial.
pub fn closed_loop_run(
    adversary: &AdversaryHandle,
    subjects: &dyn SubjectFactory,
    n_episodes: usize,
    seed: u64,
) -> Result<ClosedLoopRun> {
    let policy = AdversaryPolicy::Trained(Box::new(adversary.clone()));
    let logs = collect_episodes(&adversary.task, subjects, &policy, n_episodes, seed)?;
    let aborted = logs.iter().filter(|e| e.aborted.is_some()).count();
    let report = metrics_report(&adversary.task, &logs)?;
    Ok(ClosedLoopRun { logs, report, aborted })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseStamp {
    pub phase: String,
    /// Seconds since the Unix epoch.
    pub started: u64,
    pub finished: u64,
}

/// Record of a run's configuration, seeds and artifacts.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: BTreeMap<String, serde_json::Value>,
    pub seeds: BTreeMap<String, u64>,
    pub artifacts: Vec<ArtifactEntry>,
    pub phases: Vec<PhaseStamp>,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

impl RunManifest {
    pub const FILE_NAME: &'static str = "manifest.json";

    /// Manifest location for an artifact: `manifest.json` in its directory.
    pub fn path_beside(artifact: &Path) -> PathBuf {
        Self::dir_of(artifact).join(Self::FILE_NAME)
    }

    /// Directory an artifact's manifest lives in.
    pub fn dir_of(artifact: &Path) -> PathBuf {
        match artifact.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        }
    }

    pub fn load_or_default(path: &Path) -> Result<Self> {
        match fs::read(path) {
            Ok(bytes) => Ok(serde_json::from_slice(&bytes)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    /// Adds or replaces the `role` entry for `path`. `dir` is the manifest's
    /// directory; paths inside it are stored relative to it, others absolute.
    pub fn record_artifact(&mut self, dir: &Path, role: &str, path: &Path) -> Result<()> {
        let sha256 = file_sha256(path)?;
        let stored = match (path.strip_prefix(dir), path.file_name()) {
            (_, Some(name)) if Self::dir_of(path) == dir => PathBuf::from(name),
            (Ok(rel), _) => rel.to_path_buf(),
            _ => fs::canonicalize(path)?,
        };
        self.artifacts.retain(|a| !(a.path == stored && a.role == role));
        self.artifacts.push(ArtifactEntry { role: role.into(), path: stored, sha256 });
        Ok(())
    }

    /// Checks that every artifact exists and still hashes to its digest.
    /// `dir` is the manifest's directory.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for a in &self.artifacts {
            let path = dir.join(&a.path);
            if !path.exists() {
                return Err(Error::NotFound(format!("artifact {}", a.path.display())));
            }
            if file_sha256(&path)? != a.sha256 {
                return Err(Error::Corruption(format!("artifact {} changed since it was recorded", a.path.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::LearnerDims;
    use crate::subjects::SubjectPolicy;
    use crate::tasks::{TaskKind, FEATURE_DIM};

    #[test]
    fn episode_counts_and_determinism() {
        let task = TaskSpec::default_for(TaskKind::Bandit);
        let subject = SubjectPolicy::wsls(&task);
        let a = collect_episodes(&task, &subject, &AdversaryPolicy::Random, 3, 11).unwrap();
        let b = collect_episodes(&task, &subject, &AdversaryPolicy::Random, 3, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().map(EpisodeLog::len).sum::<usize>(), 300);
        for log in &a {
            log.replay(&task).unwrap();
        }
    }

    #[test]
    fn trust_random_trustee_logs_replay() {
        let task = TaskSpec::default_for(TaskKind::Trust);
        let subject = SubjectPolicy::rw_softmax(&task);
        let logs = collect_episodes(&task, &subject, &AdversaryPolicy::Random, 20, 2).unwrap();
        let TaskSpec::Trust(cfg) = &task else { unreachable!() };
        for log in &logs {
            assert_eq!(log.len(), 10);
            log.replay(&task).unwrap();
            crate::metrics::episode_trust_metrics(log, cfg).unwrap();
        }
    }

    #[test]
    fn zero_episodes_rejected() {
        let task = TaskSpec::default_for(TaskKind::Bandit);
        assert!(collect_episodes(&task, &SubjectPolicy::sticky(), &AdversaryPolicy::Random, 0, 0).is_err());
    }

    #[test]
    fn logged_hidden_states_match_offline_replay() {
        let task = TaskSpec::default_for(TaskKind::Bandit);
        let dims = LearnerDims { input_dim: FEATURE_DIM, hidden_dim: 5, action_dim: 2 };
        let learner = LearnerParams::init(dims, &mut Rng::new(4));
        let qdims =
            crate::adversary::QNetDims { input_dim: adversary_input_dim(&task, 5), hidden: vec![8], actions: 4 };
        let qnet = crate::adversary::QNetParams::init(qdims, &mut Rng::new(5));
        let handle = AdversaryHandle::new(task.clone(), Objective::Target, learner.clone(), qnet).unwrap();
        let run = closed_loop_run(&handle, &SubjectPolicy::wsls(&task), 2, 9).unwrap();
        for log in &run.logs {
            let logged: Vec<Vec<f64>> = log.records.iter().map(|r| r.hidden.clone().unwrap()).collect();
            assert_eq!(logged, replay_hidden(&learner, &task, log).unwrap());
            let BanditState { used, .. } = match log.replay(&task).unwrap() {
                crate::episode::ReplayedState::Bandit(s) => s,
                _ => unreachable!(),
            };
            assert_eq!(used, [25, 25]);
        }
    }

    #[test]
    fn manifest_detects_changed_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("a.txt");
        fs::write(&file, "one").unwrap();
        let mut m = RunManifest::default();
        m.record_artifact(dir.path(), "data", &file).unwrap();
        assert_eq!(m.artifacts[0].path, Path::new("a.txt"));
        m.verify(dir.path()).unwrap();
        fs::write(&file, "two").unwrap();
        assert!(matches!(m.verify(dir.path()), Err(Error::Corruption(_))));
        fs::remove_file(&file).unwrap();
        assert!(matches!(m.verify(dir.path()), Err(Error::NotFound(_))));
    }

    #[test]
    fn monotonicity_of_smoothed_curve() {
        let curve: Vec<CurvePoint> = (0..10).map(|i| CurvePoint { episodes: i, mean_return: i as f64 }).collect();
        assert_eq!(curve_monotonicity(&curve, 5), Some(1.0));
        assert_eq!(curve_monotonicity(&curve[..5], 5), None);
    }
}

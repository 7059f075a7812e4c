use std::collections::HashMap;
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, TryLockError};

use serde::{Deserialize, Serialize};

use crate::adversary::AdversaryHandle;
use crate::episode::{AdversaryMove, EpisodeLog, TrialRecord};
use crate::error::{Error, Result};
use crate::gateway::checkpoint::{assemble_adversary, load_adversary, load_learner};
use crate::gateway::ndjson::{episodes_to_string, TrialLine};
use crate::learner::{observe_action, HiddenState};
use crate::numerics::{Rng, Stream};
use crate::pipeline::{metrics_report, unix_now, MetricsReport};
use crate::tasks::{
    encode_step_features, random_allocation, BanditState, Feedback, Observation, TaskKind, TaskSpec, TrustState,
};

pub const HUMAN_SUBJECT: &str = "human";

/// Where the session service finds checkpoints and writes finished logs.
#[derive(Clone, Debug, Default)]
pub struct SessionConfig {
    /// Root for checkpoint references in requests. References must be
    /// relative paths inside it.
    pub checkpoint_dir: Option<PathBuf>,
    /// Used when a request names no learner, or names `"default"`.
    pub default_learner: Option<PathBuf>,
    /// Used when a request names no adversary, or names `"default"`.
    pub default_adversary: Option<PathBuf>,
    /// Finished sessions are written here as `<id>.ndjson`.
    pub log_dir: Option<PathBuf>,
    /// Accept a learner other than the one the adversary was trained with.
    pub allow_mismatch: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    pub task: TaskKind,
    /// `"random"`, `"default"`, or a checkpoint reference.
    #[serde(default)]
    pub adversary: Option<String>,
    #[serde(default)]
    pub learner: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SessionContext {
    Bandit { choices: Vec<String>, trials: usize },
    Trust { endowment: u32, rounds: usize, round: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionResponse {
    pub id: String,
    pub trial: usize,
    pub context: SessionContext,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionRequest {
    pub action: i64,
    /// Trial the action is meant for. Lets a client retry safely.
    #[serde(default)]
    pub trial: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionResponse {
    /// Trial just played (1-based).
    pub trial: usize,
    /// Bandit: 0 or 1. Trust: the investor's round earnings in units.
    pub reward: f64,
    pub observation: Observation,
    pub done: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<MetricsReport>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Active,
    Done,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub task: TaskKind,
    pub status: SessionStatus,
    /// Next trial to be played, or the horizon once done.
    pub trial: usize,
    pub horizon: usize,
    pub adversary: String,
    pub context: SessionContext,
    pub history: Vec<TrialLine>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<MetricsReport>,
}

#[allow(clippy::large_enum_variant)]
enum SessionAdversary {
    Random(Rng),
    Trained(Arc<AdversaryHandle>),
}

struct Session {
    id: String,
    task: TaskSpec,
    adversary: SessionAdversary,
    hidden: Option<HiddenState>,
    bandit: BanditState,
    trust: TrustState,
    /// Bandit allocation already fixed for the upcoming trial.
    pending_alloc: Option<[bool; 2]>,
    log: EpisodeLog,
    last: Option<(usize, usize, ActionResponse)>,
    summary: Option<MetricsReport>,
}

impl Session {
    fn new(id: String, task: TaskSpec, adversary: SessionAdversary, seed: u64) -> Result<Self> {
        let hidden = match &adversary {
            SessionAdversary::Trained(h) => {
                let h0 = HiddenState::zeros(h.learner.dims.hidden_dim);
                Some(observe_action(&h.learner, &h0, &encode_step_features(&task, None, 0)?)?)
            }
            SessionAdversary::Random(_) => None,
        };
        let log = EpisodeLog::new(task.kind(), HUMAN_SUBJECT, seed, 0);
        let mut s = Self {
            id,
            task,
            adversary,
            hidden,
            bandit: BanditState::new(),
            trust: TrustState::new(),
            pending_alloc: None,
            log,
            last: None,
            summary: None,
        };
        s.prepare_allocation()?;
        Ok(s)
    }

    fn adversary_label(&self) -> String {
        match &self.adversary {
            SessionAdversary::Random(_) => "random".into(),
            SessionAdversary::Trained(h) => format!("dqn-{}", h.objective),
        }
    }

    fn completed(&self) -> usize {
        self.log.len()
    }

    fn is_done(&self) -> bool {
        self.completed() >= self.task.horizon()
    }

    fn prepare_allocation(&mut self) -> Result<()> {
        let TaskSpec::Bandit(cfg) = &self.task else {
            return Ok(());
        };
        if self.bandit.is_done(cfg) {
            self.pending_alloc = None;
            return Ok(());
        }
        let alloc = match (&mut self.adversary, &self.hidden) {
            (SessionAdversary::Trained(h), Some(hs)) => h.allocate(hs, &self.bandit)?,
            (SessionAdversary::Random(rng), _) => random_allocation(&self.bandit, cfg, rng),
            (SessionAdversary::Trained(_), None) => unreachable!("trained sessions carry a hidden state"),
        };
        self.pending_alloc = Some(alloc);
        Ok(())
    }

    fn context(&self) -> SessionContext {
        match &self.task {
            TaskSpec::Bandit(cfg) => {
                SessionContext::Bandit { choices: vec!["X".into(), "Y".into()], trials: cfg.trials }
            }
            TaskSpec::Trust(cfg) => SessionContext::Trust {
                endowment: cfg.endowment,
                rounds: cfg.rounds,
                round: (self.completed() + 1).min(cfg.rounds),
            },
        }
    }

    fn advance(&mut self, req: &ActionRequest) -> Result<ActionResponse> {
        let legal_max = self.task.action_dim() - 1;
        if let Some((trial, action, resp)) = &self.last {
            if req.trial == Some(*trial) && req.action == *action as i64 {
                return Ok(resp.clone());
            }
        }
        if self.is_done() {
            return Err(Error::Conflict(format!("session {} is finished", self.id)));
        }
        let trial = self.completed() + 1;
        if let Some(t) = req.trial {
            if t != trial {
                return Err(Error::Conflict(format!("session {} expects trial {trial}, not {t}", self.id)));
            }
        }
        if req.action < 0 || req.action > legal_max as i64 {
            return Err(Error::Validation(format!("action must be in 0..={legal_max}, got {}", req.action)));
        }
        let action = req.action as usize;
        let hidden = self.hidden.clone();
        let task = self.task.clone();
        let (fb, adversary) = match &task {
            TaskSpec::Bandit(cfg) => {
                let alloc = self.pending_alloc.expect("allocation prepared for an active bandit session");
                let out = self.bandit.step(cfg, alloc, action)?;
                let fb = Feedback { action, reward: f64::from(out.reward), observation: out.observation };
                (fb, AdversaryMove::Allocation(alloc))
            }
            TaskSpec::Trust(cfg) => {
                let investment = action as u32;
                let repay = match (&mut self.adversary, &hidden) {
                    (SessionAdversary::Trained(h), Some(hs)) => h.repay(hs, &self.trust, investment)?,
                    (SessionAdversary::Random(rng), _) => rng.below(cfg.repay_actions()),
                    (SessionAdversary::Trained(_), None) => unreachable!("trained sessions carry a hidden state"),
                };
                let out = self.trust.step(cfg, investment, repay)?;
                let fb = Feedback { action, reward: out.investor_gain_q as f64 / 4.0, observation: out.observation };
                (fb, AdversaryMove::Repay { action: repay, repay_q: out.repay_q })
            }
        };
        self.log.records.push(TrialRecord {
            t: trial,
            action,
            reward: fb.reward,
            observation: fb.observation.clone(),
            adversary,
            hidden: hidden.as_ref().map(|h| h.0.clone()),
        });
        let done = self.is_done();
        if !done {
            if let (SessionAdversary::Trained(h), Some(hs)) = (&self.adversary, &self.hidden) {
                let x = encode_step_features(&self.task, Some(&fb), trial)?;
                self.hidden = Some(observe_action(&h.learner, hs, &x)?);
            }
            self.prepare_allocation()?;
        } else {
            self.pending_alloc = None;
            self.summary = Some(metrics_report(&self.task, std::slice::from_ref(&self.log))?);
        }
        let resp = ActionResponse {
            trial,
            reward: fb.reward,
            observation: fb.observation,
            done,
            summary: self.summary.clone(),
        };
        self.last = Some((trial, action, resp.clone()));
        Ok(resp)
    }

    fn view(&self) -> Result<SessionView> {
        let text = episodes_to_string(std::slice::from_ref(&self.log))?;
        let history = text.lines().map(serde_json::from_str).collect::<std::result::Result<Vec<TrialLine>, _>>()?;
        Ok(SessionView {
            id: self.id.clone(),
            task: self.task.kind(),
            status: if self.is_done() { SessionStatus::Done } else { SessionStatus::Active },
            trial: (self.completed() + 1).min(self.task.horizon()),
            horizon: self.task.horizon(),
            adversary: self.adversary_label(),
            context: self.context(),
            history,
            summary: self.summary.clone(),
        })
    }
}

/// In-memory store of live sessions. Requests on one session are
/// serialised; a request arriving while another is being handled for the
/// same session is refused with a conflict.
pub struct SessionManager {
    config: SessionConfig,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    id_rng: Mutex<Rng>,
    created: AtomicU64,
}

impl SessionManager {
    pub fn new(config: SessionConfig) -> Self {
        let nanos = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0);
        Self {
            config,
            sessions: Mutex::new(HashMap::new()),
            id_rng: Mutex::new(Rng::new(nanos ^ u64::from(std::process::id()))),
            created: AtomicU64::new(0),
        }
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    fn resolve(&self, reference: &str, default: Option<&PathBuf>, what: &str) -> Result<PathBuf> {
        if reference == "default" {
            return default.cloned().ok_or_else(|| Error::NotFound(format!("no default {what} configured")));
        }
        let rel = Path::new(reference);
        if rel.is_absolute() || rel.components().any(|c| !matches!(c, Component::Normal(_))) {
            return Err(Error::Validation(format!("{what} reference must be a plain relative path")));
        }
        let dir = self
            .config
            .checkpoint_dir
            .as_ref()
            .ok_or_else(|| Error::NotFound(format!("{what} {reference:?}: no checkpoint directory configured")))?;
        let path = dir.join(rel);
        if !path.is_file() {
            return Err(Error::NotFound(format!("{what} checkpoint {reference:?}")));
        }
        Ok(path)
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>> {
        self.sessions
            .lock()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("session {id}")))
    }

    pub fn create(&self, req: &CreateSessionRequest) -> Result<CreateSessionResponse> {
        let n = self.created.fetch_add(1, Ordering::SeqCst);
        let seed = req.seed.unwrap_or(n);
        let adversary_ref = match (&req.adversary, &self.config.default_adversary) {
            (Some(r), _) => r.clone(),
            (None, Some(_)) => "default".into(),
            (None, None) => "random".into(),
        };
        let (task, adversary) = if adversary_ref == "random" {
            (TaskSpec::default_for(req.task), SessionAdversary::Random(Rng::stream(seed, Stream::Environment, 0)))
        } else {
            let adv_path = self.resolve(&adversary_ref, self.config.default_adversary.as_ref(), "adversary")?;
            let learner_ref = req.learner.clone().unwrap_or_else(|| "default".into());
            let learner_path = self.resolve(&learner_ref, self.config.default_learner.as_ref(), "learner")?;
            let handle = assemble_adversary(
                load_adversary(&adv_path)?,
                load_learner(&learner_path)?,
                self.config.allow_mismatch,
            )?;
            if handle.task.kind() != req.task {
                return Err(Error::Validation(format!(
                    "checkpoint is for the {} task, session asked for {}",
                    handle.task.kind(),
                    req.task
                )));
            }
            (handle.task.clone(), SessionAdversary::Trained(Arc::new(handle)))
        };
        let mut map = self.sessions.lock().expect("session map poisoned");
        let id = loop {
            let candidate = format!("{:016x}", self.id_rng.lock().expect("id rng poisoned").next_u64());
            if !map.contains_key(&candidate) {
                break candidate;
            }
        };
        let session = Session::new(id.clone(), task, adversary, seed)?;
        let context = session.context();
        map.insert(id.clone(), Arc::new(Mutex::new(session)));
        Ok(CreateSessionResponse { id, trial: 1, context })
    }

    pub fn advance(&self, id: &str, req: &ActionRequest) -> Result<ActionResponse> {
        let cell = self.session(id)?;
        let mut session = match cell.try_lock() {
            Ok(s) => s,
            Err(TryLockError::WouldBlock) => {
                return Err(Error::Conflict(format!("session {id} already has a request in flight")))
            }
            Err(TryLockError::Poisoned(_)) => return Err(Error::Conflict(format!("session {id} is unusable"))),
        };
        let was_done = session.is_done();
        let resp = session.advance(req)?;
        if resp.done && !was_done {
            if let Some(dir) = &self.config.log_dir {
                std::fs::create_dir_all(dir)?;
                std::fs::write(
                    dir.join(format!("{id}.ndjson")),
                    episodes_to_string(std::slice::from_ref(&session.log))?,
                )?;
            }
        }
        Ok(resp)
    }

    pub fn get(&self, id: &str) -> Result<SessionView> {
        let cell = self.session(id)?;
        let session = cell.lock().expect("session poisoned");
        session.view()
    }

    /// The session's trials in the episode-log format.
    pub fn transcript(&self, id: &str) -> Result<String> {
        let cell = self.session(id)?;
        let session = cell.lock().expect("session poisoned");
        episodes_to_string(std::slice::from_ref(&session.log))
    }

    pub fn episode(&self, id: &str) -> Result<EpisodeLog> {
        let cell = self.session(id)?;
        let session = cell.lock().expect("session poisoned");
        Ok(session.log.clone())
    }

    pub fn delete(&self, id: &str) -> Result<()> {
        self.sessions
            .lock()
            .expect("session map poisoned")
            .remove(id)
            .map(|_| ())
            .ok_or_else(|| Error::NotFound(format!("session {id}")))
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("session map poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Marks a checkpoint directory as being served so training commands can
/// refuse to overwrite checkpoints underneath a running service. Removed
/// on drop.
#[derive(Debug)]
pub struct ServeLock {
    path: PathBuf,
}

impl ServeLock {
    pub const FILE_NAME: &'static str = ".serve.lock";

    pub fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(Self::FILE_NAME);
        if let Some(pid) = Self::holder(dir)? {
            return Err(Error::Conflict(format!("{} is already served by process {pid}", dir.display())));
        }
        std::fs::write(&path, format!("{} {}\n", std::process::id(), unix_now()))?;
        Ok(Self { path })
    }

    /// Process id of a live server holding `dir`, if any. Locks left by
    /// processes that no longer exist are ignored.
    pub fn holder(dir: &Path) -> Result<Option<u32>> {
        let text = match std::fs::read_to_string(dir.join(Self::FILE_NAME)) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let pid: u32 = text.split_whitespace().next().and_then(|p| p.parse().ok()).unwrap_or(0);
        if pid == 0 {
            return Ok(None);
        }
        if cfg!(target_os = "linux") && !Path::new(&format!("/proc/{pid}")).exists() {
            return Ok(None);
        }
        Ok(Some(pid))
    }

    /// Fails if a live server holds `dir`.
    pub fn ensure_free(dir: &Path) -> Result<()> {
        match Self::holder(dir)? {
            Some(pid) => Err(Error::Conflict(format!(
                "{} is in use by a serving process ({pid}); stop it before training into it",
                dir.display()
            ))),
            None => Ok(()),
        }
    }
}

impl Drop for ServeLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{adversary_input_dim, AdversaryHandle, DqnConfig, Objective, QNetDims, QNetParams};
    use crate::gateway::checkpoint::{save_adversary, save_learner, AdversaryMeta};
    use crate::learner::{LearnerConfig, LearnerDims, LearnerParams};
    use crate::pipeline::replay_hidden;
    use crate::tasks::FEATURE_DIM;

    fn write_checkpoints(dir: &Path, kind: TaskKind) -> AdversaryHandle {
        let task = TaskSpec::default_for(kind);
        let learner = LearnerParams::init(
            LearnerDims { input_dim: FEATURE_DIM, hidden_dim: 4, action_dim: task.action_dim() },
            &mut Rng::new(1),
        );
        let digest = save_learner(&dir.join("learner.json"), &learner, &task, &LearnerConfig::default(), None).unwrap();
        let (objective, actions) = match kind {
            TaskKind::Bandit => (Objective::Target, 4),
            TaskKind::Trust => (Objective::Max, 5),
        };
        let qnet = QNetParams::init(
            QNetDims { input_dim: adversary_input_dim(&task, 4), hidden: vec![8], actions },
            &mut Rng::new(2),
        );
        let meta = AdversaryMeta {
            task: task.clone(),
            objective,
            training: DqnConfig::default(),
            learner_digest: digest,
            curve: vec![],
        };
        save_adversary(&dir.join("adversary.json"), &qnet, &meta).unwrap();
        AdversaryHandle::new(task, objective, learner, qnet).unwrap()
    }

    fn manager(dir: &Path) -> SessionManager {
        SessionManager::new(SessionConfig {
            checkpoint_dir: Some(dir.to_path_buf()),
            default_learner: Some(dir.join("learner.json")),
            default_adversary: Some(dir.join("adversary.json")),
            log_dir: Some(dir.join("logs")),
            allow_mismatch: false,
        })
    }

    fn req(action: i64) -> ActionRequest {
        ActionRequest { action, trial: None }
    }

    #[test]
    fn bandit_session_runs_to_completion() {
        let dir = tempfile::tempdir().unwrap();
        let handle = write_checkpoints(dir.path(), TaskKind::Bandit);
        let m = manager(dir.path());
        let created = m
            .create(&CreateSessionRequest { task: TaskKind::Bandit, adversary: None, learner: None, seed: Some(1) })
            .unwrap();
        assert_eq!(created.trial, 1);
        assert_eq!(created.context, SessionContext::Bandit { choices: vec!["X".into(), "Y".into()], trials: 100 });
        let mut last = None;
        for t in 1..=100 {
            let r = m.advance(&created.id, &req((t % 3 == 0) as i64)).unwrap();
            assert_eq!(r.trial, t);
            assert_eq!(r.done, t == 100);
            assert_eq!(r.summary.is_some(), t == 100);
            last = Some(r);
        }
        assert!(matches!(m.advance(&created.id, &req(0)), Err(Error::Conflict(_))));
        let log = m.episode(&created.id).unwrap();
        let task = TaskSpec::default_for(TaskKind::Bandit);
        // the summary replays from the log, allocations use the full budget
        assert_eq!(last.unwrap().summary.unwrap(), metrics_report(&task, std::slice::from_ref(&log)).unwrap());
        let crate::episode::ReplayedState::Bandit(s) = log.replay(&task).unwrap() else { unreachable!() };
        assert_eq!(s.used, [25, 25]);
        let logged: Vec<Vec<f64>> = log.records.iter().map(|r| r.hidden.clone().unwrap()).collect();
        assert_eq!(logged, replay_hidden(&handle.learner, &task, &log).unwrap());
        let written = std::fs::read_to_string(dir.path().join("logs").join(format!("{}.ndjson", created.id))).unwrap();
        assert_eq!(written, m.transcript(&created.id).unwrap());
        assert_eq!(m.get(&created.id).unwrap().status, SessionStatus::Done);
    }

    #[test]
    fn allocated_choice_is_rewarded() {
        let dir = tempfile::tempdir().unwrap();
        write_checkpoints(dir.path(), TaskKind::Bandit);
        let m = manager(dir.path());
        let id = m
            .create(&CreateSessionRequest { task: TaskKind::Bandit, adversary: None, learner: None, seed: None })
            .unwrap()
            .id;
        for _ in 0..100 {
            let alloc = {
                let cell = m.session(&id).unwrap();
                let s = cell.lock().unwrap();
                s.pending_alloc.unwrap()
            };
            let r = m.advance(&id, &req(0)).unwrap();
            assert_eq!(r.reward, f64::from(u8::from(alloc[0])));
        }
    }

    #[test]
    fn trust_range_is_validated() {
        let dir = tempfile::tempdir().unwrap();
        write_checkpoints(dir.path(), TaskKind::Trust);
        let m = manager(dir.path());
        let id = m
            .create(&CreateSessionRequest { task: TaskKind::Trust, adversary: None, learner: None, seed: None })
            .unwrap()
            .id;
        match m.advance(&id, &req(21)) {
            Err(Error::Validation(msg)) => assert!(msg.contains("0..=20"), "{msg}"),
            other => panic!("{other:?}"),
        }
        let r = m.advance(&id, &req(10)).unwrap();
        assert_eq!(r.trial, 1);
        let Observation::Trust { repay_q, .. } = r.observation else { panic!() };
        assert_eq!(r.reward * 4.0, (40 + repay_q) as f64);
    }

    #[test]
    fn retries_are_idempotent() {
        let m = SessionManager::new(SessionConfig::default());
        let id = m
            .create(&CreateSessionRequest { task: TaskKind::Bandit, adversary: None, learner: None, seed: Some(3) })
            .unwrap()
            .id;
        let a = m.advance(&id, &ActionRequest { action: 1, trial: Some(1) }).unwrap();
        let b = m.advance(&id, &ActionRequest { action: 1, trial: Some(1) }).unwrap();
        assert_eq!(a, b);
        assert_eq!(m.episode(&id).unwrap().len(), 1);
        assert!(matches!(m.advance(&id, &ActionRequest { action: 0, trial: Some(1) }), Err(Error::Conflict(_))));
        assert!(matches!(m.advance(&id, &ActionRequest { action: 0, trial: Some(5) }), Err(Error::Conflict(_))));
    }

    #[test]
    fn in_flight_request_conflicts() {
        let m = SessionManager::new(SessionConfig::default());
        let id = m
            .create(&CreateSessionRequest { task: TaskKind::Bandit, adversary: None, learner: None, seed: None })
            .unwrap()
            .id;
        let cell = m.session(&id).unwrap();
        let _held = cell.lock().unwrap();
        assert!(matches!(m.advance(&id, &req(0)), Err(Error::Conflict(_))));
    }

    #[test]
    fn unknown_references_and_sessions() {
        let dir = tempfile::tempdir().unwrap();
        write_checkpoints(dir.path(), TaskKind::Bandit);
        let m = manager(dir.path());
        let bad = CreateSessionRequest {
            task: TaskKind::Bandit,
            adversary: Some("missing.json".into()),
            learner: None,
            seed: None,
        };
        assert!(matches!(m.create(&bad), Err(Error::NotFound(_))));
        let escape = CreateSessionRequest { adversary: Some("../adversary.json".into()), ..bad.clone() };
        assert!(matches!(m.create(&escape), Err(Error::Validation(_))));
        let wrong_task = CreateSessionRequest { task: TaskKind::Trust, adversary: None, learner: None, seed: None };
        assert!(matches!(m.create(&wrong_task), Err(Error::Validation(_))));
        assert!(matches!(m.get("nope"), Err(Error::NotFound(_))));
        assert!(matches!(m.delete("nope"), Err(Error::NotFound(_))));
    }

    #[test]
    fn ids_are_distinct_and_sessions_isolated() {
        let m = SessionManager::new(SessionConfig::default());
        let mk = || {
            m.create(&CreateSessionRequest { task: TaskKind::Bandit, adversary: None, learner: None, seed: Some(9) })
                .unwrap()
                .id
        };
        let (a, b) = (mk(), mk());
        assert_ne!(a, b);
        // same seed, interleaved play: identical trajectories
        for t in 0..100 {
            m.advance(&a, &req(t % 2)).unwrap();
            m.advance(&b, &req(t % 2)).unwrap();
        }
        let (la, lb) = (m.episode(&a).unwrap(), m.episode(&b).unwrap());
        assert_eq!(la.records, lb.records);
        m.delete(&a).unwrap();
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn serve_lock_blocks_and_releases() {
        let dir = tempfile::tempdir().unwrap();
        {
            let _lock = ServeLock::acquire(dir.path()).unwrap();
            assert!(matches!(ServeLock::ensure_free(dir.path()), Err(Error::Conflict(_))));
            assert!(ServeLock::acquire(dir.path()).is_err());
        }
        ServeLock::ensure_free(dir.path()).unwrap();
        // a lock left by a process that is gone does not count
        std::fs::write(dir.path().join(ServeLock::FILE_NAME), "4294967294 0\n").unwrap();
        ServeLock::ensure_free(dir.path()).unwrap();
    }
}

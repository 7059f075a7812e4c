use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::adversary::{AdversaryHandle, CurvePoint, DqnConfig, Objective, QNetDims, QNetParams};
use crate::error::{Error, Result};
use crate::learner::{LearnerConfig, LearnerDims, LearnerParams, TrainingReport};
use crate::tasks::TaskSpec;

pub const CHECKPOINT_VERSION: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointKind {
    Learner,
    Qnet,
}

/// On-disk checkpoint. `digest` is the SHA-256 of the compact JSON encoding
/// of every other field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u64,
    pub kind: CheckpointKind,
    pub dims: Value,
    pub weights: BTreeMap<String, Vec<f64>>,
    pub config: Value,
    pub digest: String,
}

#[derive(Serialize)]
struct Payload<'a> {
    version: u64,
    kind: CheckpointKind,
    dims: &'a Value,
    weights: &'a BTreeMap<String, Vec<f64>>,
    config: &'a Value,
}

impl Checkpoint {
    pub fn new(kind: CheckpointKind, dims: Value, weights: BTreeMap<String, Vec<f64>>, config: Value) -> Result<Self> {
        if weights.values().flatten().any(|w| !w.is_finite()) {
            return Err(Error::invalid("refusing to checkpoint non-finite weights"));
        }
        let mut ck = Self { version: CHECKPOINT_VERSION, kind, dims, weights, config, digest: String::new() };
        ck.digest = ck.compute_digest()?;
        Ok(ck)
    }

    pub fn compute_digest(&self) -> Result<String> {
        let payload = Payload {
            version: self.version,
            kind: self.kind,
            dims: &self.dims,
            weights: &self.weights,
            config: &self.config,
        };
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(&payload)?)))
    }

    /// Parses and verifies a checkpoint.
    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        let raw: Value =
            serde_json::from_slice(bytes).map_err(|e| Error::Corruption(format!("unreadable checkpoint: {e}")))?;
        match raw.get("version").and_then(Value::as_u64) {
            Some(CHECKPOINT_VERSION) => {}
            Some(v) => return Err(Error::Version(v)),
            None => return Err(Error::Corruption("missing version".into())),
        }
        let ck: Checkpoint =
            serde_json::from_value(raw).map_err(|e| Error::Corruption(format!("malformed checkpoint: {e}")))?;
        if ck.compute_digest()? != ck.digest {
            return Err(Error::Corruption("digest does not match contents".into()));
        }
        Ok(ck)
    }

    pub fn to_vec(&self) -> Result<Vec<u8>> {
        let mut v = serde_json::to_vec(self)?;
        v.push(b'\n');
        Ok(v)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(format!("checkpoint {}", path.display())),
            _ => Error::Io(e),
        })?;
        Self::from_slice(&bytes)
    }

    /// Writes via a temporary file in the same directory and renames it
    /// into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(&self.to_vec()?)?;
        tmp.persist(path).map_err(|e| Error::Io(e.error))?;
        Ok(())
    }

    fn expect_kind(&self, kind: CheckpointKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Validation(format!("expected a {kind:?} checkpoint, found {:?}", self.kind)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerMeta {
    pub task: TaskSpec,
    pub training: LearnerConfig,
    pub report: Option<TrainingReport>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadedLearner {
    pub params: LearnerParams,
    pub meta: LearnerMeta,
    pub digest: String,
}

pub fn learner_checkpoint(
    params: &LearnerParams,
    task: &TaskSpec,
    config: &LearnerConfig,
    report: Option<&TrainingReport>,
) -> Result<Checkpoint> {
    let meta = LearnerMeta { task: task.clone(), training: config.clone(), report: report.cloned() };
    Checkpoint::new(
        CheckpointKind::Learner,
        serde_json::to_value(params.dims)?,
        params.to_named(),
        serde_json::to_value(meta)?,
    )
}

/// Saves a learner checkpoint and returns its digest.
pub fn save_learner(
    path: &Path,
    params: &LearnerParams,
    task: &TaskSpec,
    config: &LearnerConfig,
    report: Option<&TrainingReport>,
) -> Result<String> {
    let ck = learner_checkpoint(params, task, config, report)?;
    ck.save(path)?;
    Ok(ck.digest)
}

pub fn learner_from_checkpoint(ck: &Checkpoint) -> Result<LoadedLearner> {
    ck.expect_kind(CheckpointKind::Learner)?;
    let dims: LearnerDims =
        serde_json::from_value(ck.dims.clone()).map_err(|e| Error::Corruption(format!("learner dims: {e}")))?;
    let meta: LearnerMeta =
        serde_json::from_value(ck.config.clone()).map_err(|e| Error::Corruption(format!("learner config: {e}")))?;
    let params = LearnerParams::from_named(dims, &ck.weights)?;
    if dims.action_dim != meta.task.action_dim() {
        return Err(Error::Corruption("learner dims disagree with its task".into()));
    }
    Ok(LoadedLearner { params, meta, digest: ck.digest.clone() })
}

pub fn load_learner(path: &Path) -> Result<LoadedLearner> {
    learner_from_checkpoint(&Checkpoint::load(path)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversaryMeta {
    pub task: TaskSpec,
    pub objective: Objective,
    pub training: DqnConfig,
    /// Digest of the learner checkpoint the adversary was trained against.
    pub learner_digest: String,
    pub curve: Vec<CurvePoint>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadedAdversary {
    pub qnet: QNetParams,
    pub meta: AdversaryMeta,
    pub digest: String,
}

pub fn save_adversary(path: &Path, qnet: &QNetParams, meta: &AdversaryMeta) -> Result<String> {
    let ck = Checkpoint::new(
        CheckpointKind::Qnet,
        serde_json::to_value(&qnet.dims)?,
        qnet.to_named(),
        serde_json::to_value(meta)?,
    )?;
    ck.save(path)?;
    Ok(ck.digest)
}

pub fn load_adversary(path: &Path) -> Result<LoadedAdversary> {
    let ck = Checkpoint::load(path)?;
    ck.expect_kind(CheckpointKind::Qnet)?;
    let dims: QNetDims =
        serde_json::from_value(ck.dims.clone()).map_err(|e| Error::Corruption(format!("q-network dims: {e}")))?;
    let meta: AdversaryMeta =
        serde_json::from_value(ck.config.clone()).map_err(|e| Error::Corruption(format!("adversary config: {e}")))?;
    let qnet = QNetParams::from_named(dims, &ck.weights)?;
    Ok(LoadedAdversary { qnet, meta, digest: ck.digest })
}

/// Pairs an adversary with a learner checkpoint. A learner other than the
/// one the adversary was trained against is refused unless
/// `allow_mismatch` is set.
pub fn assemble_adversary(
    adversary: LoadedAdversary,
    learner: LoadedLearner,
    allow_mismatch: bool,
) -> Result<AdversaryHandle> {
    if adversary.meta.learner_digest != learner.digest && !allow_mismatch {
        return Err(Error::Validation(format!(
            "adversary was trained against learner {} but {} was given",
            short(&adversary.meta.learner_digest),
            short(&learner.digest)
        )));
    }
    if adversary.meta.task != learner.meta.task {
        return Err(Error::Validation("adversary and learner were built for different tasks".into()));
    }
    AdversaryHandle::new(adversary.meta.task, adversary.meta.objective, learner.params, adversary.qnet)
}

fn short(digest: &str) -> &str {
    &digest[..digest.len().min(12)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use crate::tasks::{TaskKind, FEATURE_DIM};

    fn random_learner(seed: u64) -> LearnerParams {
        let dims = LearnerDims { input_dim: FEATURE_DIM, hidden_dim: 6, action_dim: 2 };
        let mut p = LearnerParams::init(dims, &mut Rng::new(seed));
        // exercise values that need all 17 significant digits
        let mut flat = p.to_flat();
        let mut rng = Rng::new(seed + 1);
        flat.iter_mut().for_each(|v| *v += rng.uniform() * 1e-7 - 1.0 / 3.0);
        p.set_flat(&flat).unwrap();
        p
    }

    #[test]
    fn learner_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.json");
        let task = TaskSpec::default_for(TaskKind::Bandit);
        let p = random_learner(1);
        let digest = save_learner(&path, &p, &task, &LearnerConfig::default(), None).unwrap();
        let back = load_learner(&path).unwrap();
        assert_eq!(back.digest, digest);
        let a: Vec<u64> = p.to_flat().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = back.params.to_flat().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
        assert_eq!(back.meta.task, task);
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.json");
        save_learner(
            &path,
            &random_learner(2),
            &TaskSpec::default_for(TaskKind::Bandit),
            &LearnerConfig::default(),
            None,
        )
        .unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_learner(&path), Err(Error::Corruption(_))));
    }

    #[test]
    fn edited_weight_fails_digest() {
        let ck = learner_checkpoint(
            &random_learner(3),
            &TaskSpec::default_for(TaskKind::Bandit),
            &LearnerConfig::default(),
            None,
        )
        .unwrap();
        let mut tampered = ck.clone();
        tampered.weights.get_mut("b_out").unwrap()[0] += 1e-12;
        let bytes = serde_json::to_vec(&tampered).unwrap();
        assert!(matches!(Checkpoint::from_slice(&bytes), Err(Error::Corruption(_))));
    }

    #[test]
    fn future_version_is_rejected() {
        let ck = learner_checkpoint(
            &random_learner(4),
            &TaskSpec::default_for(TaskKind::Bandit),
            &LearnerConfig::default(),
            None,
        )
        .unwrap();
        let mut v = serde_json::to_value(&ck).unwrap();
        v["version"] = Value::from(2);
        let bytes = serde_json::to_vec(&v).unwrap();
        assert!(matches!(Checkpoint::from_slice(&bytes), Err(Error::Version(2))));
    }

    #[test]
    fn missing_file_is_not_found() {
        assert!(matches!(load_learner(Path::new("/nonexistent/l.json")), Err(Error::NotFound(_))));
    }

    #[test]
    fn qnet_round_trip_and_mismatch_guard() {
        let dir = tempfile::tempdir().unwrap();
        let task = TaskSpec::default_for(TaskKind::Bandit);
        let learner = random_learner(5);
        let lpath = dir.path().join("l.json");
        let ldigest = save_learner(&lpath, &learner, &task, &LearnerConfig::default(), None).unwrap();
        let dims = QNetDims { input_dim: 9, hidden: vec![7, 5], actions: 4 };
        let qnet = QNetParams::init(dims, &mut Rng::new(6));
        let meta = AdversaryMeta {
            task: task.clone(),
            objective: Objective::Target,
            training: DqnConfig::default(),
            learner_digest: ldigest,
            curve: vec![CurvePoint { episodes: 1000, mean_return: 42.5 }],
        };
        let qpath = dir.path().join("q.json");
        save_adversary(&qpath, &qnet, &meta).unwrap();
        let loaded = load_adversary(&qpath).unwrap();
        assert_eq!(loaded.qnet, qnet);
        assert_eq!(loaded.meta, meta);
        assert!(load_learner(&qpath).is_err());

        let handle = assemble_adversary(loaded.clone(), load_learner(&lpath).unwrap(), false).unwrap();
        assert_eq!(handle.learner, learner);

        let other = dir.path().join("l2.json");
        save_learner(&other, &random_learner(7), &task, &LearnerConfig::default(), None).unwrap();
        assert!(matches!(
            assemble_adversary(loaded.clone(), load_learner(&other).unwrap(), false),
            Err(Error::Validation(_))
        ));
        assert!(assemble_adversary(loaded, load_learner(&other).unwrap(), true).is_ok());
    }
}

use std::path::PathBuf;

use adversa_core::subjects::LlmSettings;
use adversa_core::tasks::{BanditConfig, TrustConfig};
use adversa_core::{Objective, SubjectPolicy, TaskKind, TaskSpec};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "adversa", version, about = "Closed-loop adversarial testing of decision-making agents")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a subject against an adversary and write episode logs.
    Collect(CollectArgs),
    /// Fit the recurrent learner model to episode logs.
    TrainLearner(TrainLearnerArgs),
    /// Train a Q-learning adversary against a learner model.
    TrainAdversary(TrainAdversaryArgs),
    /// Deploy a trained adversary against a live subject.
    Evaluate(EvaluateArgs),
    /// Summarise episode logs.
    Report(ReportArgs),
    /// Serve the session API for human subjects.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Bandit,
    Trust,
}

impl From<TaskArg> for TaskKind {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Bandit => TaskKind::Bandit,
            TaskArg::Trust => TaskKind::Trust,
        }
    }
}

/// Task parameters; defaults follow the standard task definitions.
#[derive(Debug, Clone, Args)]
pub struct TaskArgs {
    /// Bandit trials per episode.
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Potential rewards per bandit arm per episode.
    #[arg(long, default_value_t = 25)]
    pub budget: usize,
    #[arg(long, default_value_t = 0)]
    pub target_arm: usize,
    /// Trust rounds per episode.
    #[arg(long, default_value_t = 10)]
    pub rounds: usize,
    #[arg(long, default_value_t = 20)]
    pub endowment: u32,
    #[arg(long, default_value_t = 3)]
    pub multiplier: u32,
}

impl TaskArgs {
    pub fn spec(&self, kind: TaskKind) -> TaskSpec {
        match kind {
            TaskKind::Bandit => TaskSpec::Bandit(BanditConfig {
                trials: self.trials,
                budget_per_arm: self.budget,
                target_arm: self.target_arm,
                ..Default::default()
            }),
            TaskKind::Trust => TaskSpec::Trust(TrustConfig {
                rounds: self.rounds,
                endowment: self.endowment,
                multiplier: self.multiplier,
                ..Default::default()
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SubjectArg {
    Wsls,
    RwSoftmax,
    Sticky,
    Llm,
}

#[derive(Debug, Clone, Args)]
pub struct SubjectArgs {
    #[arg(long, value_enum)]
    pub subject: SubjectArg,
    /// rw-softmax learning rate.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// rw-softmax inverse temperature.
    #[arg(long)]
    pub beta: Option<f64>,
    /// sticky: probability of repeating the anchor choice.
    #[arg(long)]
    pub stickiness: Option<f64>,
    /// sticky: uniform exploration trials at the start.
    #[arg(long)]
    pub explore_trials: Option<usize>,
    /// llm: JSON file with endpoint settings.
    #[arg(long)]
    pub llm_config: Option<PathBuf>,
    #[arg(long)]
    pub llm_model: Option<String>,
    #[arg(long)]
    pub llm_base_url: Option<String>,
    /// llm: directory of prompt template overrides.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// llm: directory receiving per-episode prompt transcripts.
    #[arg(long)]
    pub transcripts: Option<PathBuf>,
}

impl SubjectArgs {
    pub fn synthetic_policy(&self, task: &TaskSpec) -> Option<SubjectPolicy> {
        Some(match self.subject {
            SubjectArg::Wsls => SubjectPolicy::wsls(task),
            SubjectArg::RwSoftmax => match SubjectPolicy::rw_softmax(task) {
                SubjectPolicy::RwSoftmax { alpha, beta, initial_value } => SubjectPolicy::RwSoftmax {
                    alpha: self.alpha.unwrap_or(alpha),
                    beta: self.beta.unwrap_or(beta),
                    initial_value,
                },
                other => other,
            },
            SubjectArg::Sticky => match SubjectPolicy::sticky() {
                SubjectPolicy::Sticky { explore_trials, stickiness } => SubjectPolicy::Sticky {
                    explore_trials: self.explore_trials.unwrap_or(explore_trials),
                    stickiness: self.stickiness.unwrap_or(stickiness),
                },
                other => other,
            },
            SubjectArg::Llm => return None,
        })
    }

    pub fn llm_settings(&self) -> anyhow::Result<LlmSettings> {
        let mut s: LlmSettings = match &self.llm_config {
            Some(path) => serde_json::from_slice(&std::fs::read(path)?)?,
            None => LlmSettings::default(),
        };
        if let Some(m) = &self.llm_model {
            s.model = m.clone();
        }
        if let Some(u) = &self.llm_base_url {
            s.base_url = u.clone();
        }
        if self.templates.is_some() {
            s.template_dir = self.templates.clone();
        }
        if self.transcripts.is_some() {
            s.transcript_dir = self.transcripts.clone();
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, Args)]
pub struct CollectArgs {
    #[arg(long, value_enum)]
    pub task: TaskArg,
    #[command(flatten)]
    pub subject: SubjectArgs,
    /// `random` or the path of an adversary checkpoint.
    #[arg(long, default_value = "random")]
    pub adversary: String,
    /// Learner checkpoint paired with a trained adversary.
    #[arg(long)]
    pub learner: Option<PathBuf>,
    /// Allow a learner other than the one the adversary was trained with.
    #[arg(long)]
    pub allow_mismatch: bool,
    #[arg(long)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub task_args: TaskArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TrainLearnerArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub hidden: usize,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 20)]
    pub patience: usize,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 5.0)]
    pub clip: f64,
    #[arg(long, default_value_t = 0.1)]
    pub holdout: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub task_args: TaskArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Target,
    Max,
    Fair,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Target => Objective::Target,
            ObjectiveArg::Max => Objective::Max,
            ObjectiveArg::Fair => Objective::Fair,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainAdversaryArgs {
    #[arg(long)]
    pub learner: PathBuf,
    #[arg(long, value_enum)]
    pub objective: ObjectiveArg,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20_000)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "64,64")]
    pub layers: Vec<usize>,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 50_000)]
    pub buffer: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 500)]
    pub target_sync: usize,
    #[arg(long, default_value_t = 4)]
    pub update_every: usize,
    #[arg(long, default_value_t = 1_000)]
    pub learning_starts: usize,
    #[arg(long, default_value_t = 1_000)]
    pub curve_window: usize,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub adversary: PathBuf,
    #[arg(long)]
    pub learner: PathBuf,
    #[command(flatten)]
    pub subject: SubjectArgs,
    #[arg(long, default_value_t = 200)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON metrics report.
    #[arg(long)]
    pub report: PathBuf,
    /// Episode logs of the adversarial run.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Also run the random adversary on the same seeds for comparison.
    #[arg(long)]
    pub baseline: bool,
    #[arg(long)]
    pub allow_mismatch: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    pub format: ReportFormat,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub task_args: TaskArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: String,
    #[arg(long)]
    pub learner: Option<PathBuf>,
    #[arg(long)]
    pub adversary: Option<PathBuf>,
    /// Directory that checkpoint references in requests resolve against.
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
    /// Where finished sessions are written as episode logs.
    #[arg(long)]
    pub log_dir: Option<PathBuf>,
    #[arg(long)]
    pub allow_mismatch: bool,
}

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::subjects::{Subject, SubjectFactory};
use crate::tasks::{format_units, Feedback, Observation, TaskKind, TaskSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: ChatRole::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: ChatRole::User, content: content.into() }
    }
}

/// Transport for chat-completion requests.
pub trait ChatBackend: Send {
    fn complete(&mut self, messages: &[ChatMessage]) -> Result<String>;
}

/// Endpoint and prompting configuration for an LLM subject.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LlmSettings {
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub timeout_secs: u64,
    /// Re-prompts allowed after an unparseable reply before the episode is aborted.
    pub retry_limit: usize,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    /// Directory of template overrides; built-in defaults otherwise.
    pub template_dir: Option<PathBuf>,
    /// Directory receiving one transcript file per episode.
    pub transcript_dir: Option<PathBuf>,
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o-mini".into(),
            temperature: 1.0,
            timeout_secs: 60,
            retry_limit: 3,
            api_key_env: "OPENAI_API_KEY".into(),
            template_dir: None,
            transcript_dir: None,
        }
    }
}

/// Prompt text with `{name}` placeholders.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplates {
    pub bandit_system: String,
    /// Placeholders: `{trial}`, `{trials}`, `{history}`.
    pub bandit_trial: String,
    /// Header placed above the bandit history lines.
    pub bandit_history_header: String,
    /// Placeholders: `{trial}`, `{choice}`, `{outcome}`.
    pub bandit_history_line: String,
    pub bandit_labels: [String; 2],
    pub bandit_outcomes: [String; 2],
    pub trust_system: String,
    /// Placeholders: `{round}`, `{rounds}`, `{endowment}`, `{history}`.
    pub trust_round: String,
    pub trust_history_header: String,
    /// Placeholders: `{round}`, `{invested}`, `{returned}`, `{earnings}`.
    pub trust_history_line: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            bandit_system: "You are a space explorer searching for gold coins. On every trial you \
                travel to one of two planets, Planet X or Planet Y, and find out whether a gold coin \
                was there. Try to collect as many gold coins as possible over {trials} trials."
                .into(),
            bandit_trial: "Trial {trial} of {trials}.\n{history}Which planet do you visit? Answer \
                with \"Planet X\" or \"Planet Y\"."
                .into(),
            bandit_history_header: "Your previous visits:\n".into(),
            bandit_history_line: "Trial {trial}: you visited Planet {choice} and {outcome}.".into(),
            bandit_labels: ["X".into(), "Y".into()],
            bandit_outcomes: ["found nothing".into(), "found a gold coin".into()],
            trust_system: "You are the investor in an investment game with a trustee. Each of the \
                {rounds} rounds you receive {endowment} units and decide how many to invest. The \
                invested amount is multiplied by {multiplier} and sent to the trustee, who decides \
                how much to send back. You keep whatever you do not invest."
                .into(),
            trust_round: "Round {round} of {rounds}.\n{history}You have {endowment} units. How many \
                units (an integer from 0 to {endowment}) do you invest this round?"
                .into(),
            trust_history_header: "Summary of previous rounds:\n".into(),
            trust_history_line: "Round {round}: you invested {invested}, the trustee returned \
                {returned}, your earnings for the round were {earnings}."
                .into(),
        }
    }
}

const TEMPLATE_FILES: [&str; 8] = [
    "bandit_system",
    "bandit_trial",
    "bandit_history_header",
    "bandit_history_line",
    "trust_system",
    "trust_round",
    "trust_history_header",
    "trust_history_line",
];

impl PromptTemplates {
    /// Loads `<name>.txt` overrides from `dir`; missing files keep defaults.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut t = Self::default();
        for name in TEMPLATE_FILES {
            let path = dir.join(format!("{name}.txt"));
            if !path.exists() {
                continue;
            }
            let text = fs::read_to_string(&path)?;
            let text = text.trim_end_matches('\n').to_string();
            match name {
                "bandit_system" => t.bandit_system = text,
                "bandit_trial" => t.bandit_trial = text,
                "bandit_history_header" => t.bandit_history_header = text,
                "bandit_history_line" => t.bandit_history_line = text,
                "trust_system" => t.trust_system = text,
                "trust_round" => t.trust_round = text,
                "trust_history_header" => t.trust_history_header = text,
                "trust_history_line" => t.trust_history_line = text,
                _ => unreachable!(),
            }
        }
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let required: [(&str, &str, &[&str]); 4] = [
            ("bandit_trial", &self.bandit_trial, &["{trial}", "{history}"]),
            ("bandit_history_line", &self.bandit_history_line, &["{trial}", "{choice}", "{outcome}"]),
            ("trust_round", &self.trust_round, &["{round}", "{history}"]),
            ("trust_history_line", &self.trust_history_line, &["{round}", "{invested}", "{returned}", "{earnings}"]),
        ];
        for (name, text, keys) in required {
            for key in keys {
                if !text.contains(key) {
                    return Err(Error::Configuration(format!("template {name} is missing placeholder {key}")));
                }
            }
        }
        Ok(())
    }
}

fn fill(template: &str, pairs: &[(&str, String)]) -> String {
    let mut out = template.to_string();
    for (key, value) in pairs {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}

/// Messages for the next step: the scenario as a system message and one
/// user message carrying the full history so far.
pub fn build_llm_prompt(
    task: &TaskSpec,
    templates: &PromptTemplates,
    history: &[Feedback],
) -> Result<Vec<ChatMessage>> {
    templates.validate()?;
    if history.len() >= task.horizon() {
        return Err(Error::invalid("episode history already reaches the horizon"));
    }
    let step = history.len() + 1;
    match task {
        TaskSpec::Bandit(cfg) => {
            let mut block = String::new();
            if !history.is_empty() {
                block.push_str(&templates.bandit_history_header);
                for (i, fb) in history.iter().enumerate() {
                    let label = templates
                        .bandit_labels
                        .get(fb.action)
                        .ok_or_else(|| Error::invalid(format!("bandit action {} out of range", fb.action)))?;
                    let outcome = &templates.bandit_outcomes[usize::from(fb.reward > 0.0)];
                    block.push_str(&fill(
                        &templates.bandit_history_line,
                        &[("trial", (i + 1).to_string()), ("choice", label.clone()), ("outcome", outcome.clone())],
                    ));
                    block.push('\n');
                }
            }
            let trials = cfg.trials.to_string();
            Ok(vec![
                ChatMessage::system(fill(&templates.bandit_system, &[("trials", trials.clone())])),
                ChatMessage::user(fill(
                    &templates.bandit_trial,
                    &[("trial", step.to_string()), ("trials", trials), ("history", block)],
                )),
            ])
        }
        TaskSpec::Trust(cfg) => {
            let mut block = String::new();
            if !history.is_empty() {
                block.push_str(&templates.trust_history_header);
                for (i, fb) in history.iter().enumerate() {
                    let Observation::Trust { repay_q, .. } = fb.observation else {
                        return Err(Error::invalid("bandit observation in a trust history"));
                    };
                    let earnings_q = 4 * (i64::from(cfg.endowment) - fb.action as i64) + repay_q;
                    block.push_str(&fill(
                        &templates.trust_history_line,
                        &[
                            ("round", (i + 1).to_string()),
                            ("invested", fb.action.to_string()),
                            ("returned", format_units(repay_q)),
                            ("earnings", format_units(earnings_q)),
                        ],
                    ));
                    block.push('\n');
                }
            }
            let common = [
                ("rounds", cfg.rounds.to_string()),
                ("endowment", cfg.endowment.to_string()),
                ("multiplier", cfg.multiplier.to_string()),
            ];
            let mut round_pairs = common.to_vec();
            round_pairs.push(("round", step.to_string()));
            round_pairs.push(("history", block));
            Ok(vec![
                ChatMessage::system(fill(&templates.trust_system, &common)),
                ChatMessage::user(fill(&templates.trust_round, &round_pairs)),
            ])
        }
    }
}

fn words(raw: &str) -> Vec<String> {
    raw.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(|w| w.to_lowercase()).collect()
}

/// Maps a raw reply to an action.
///
/// Bandit replies must name exactly one planet label (preferring
/// "planet <label>" mentions over bare labels). Trust replies must start
/// their first number with an integer in `0..=endowment`.
pub fn parse_llm_reply(task: &TaskSpec, templates: &PromptTemplates, raw: &str) -> Result<usize> {
    let fail = |reason: &str| Error::Parse { raw: raw.to_string(), reason: reason.to_string() };
    match task {
        TaskSpec::Bandit(_) => {
            let labels: Vec<String> = templates.bandit_labels.iter().map(|l| l.to_lowercase()).collect();
            let tokens = words(raw);
            let find = |prefixed: bool| -> Vec<usize> {
                let mut found: Vec<usize> = Vec::new();
                for (i, tok) in tokens.iter().enumerate() {
                    if prefixed && (i == 0 || tokens[i - 1] != "planet") {
                        continue;
                    }
                    if let Some(a) = labels.iter().position(|l| l == tok) {
                        if !found.contains(&a) {
                            found.push(a);
                        }
                    }
                }
                found
            };
            let mut found = find(true);
            if found.is_empty() {
                found = find(false);
            }
            match found.as_slice() {
                [a] => Ok(*a),
                [] => Err(fail("no planet named")),
                _ => Err(fail("more than one planet named")),
            }
        }
        TaskSpec::Trust(cfg) => {
            let start = raw.find(|c: char| c.is_ascii_digit()).ok_or_else(|| fail("no number"))?;
            let rest = &raw[start..];
            let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
            let after = &rest[digits.len()..];
            if after.starts_with('.') && after[1..].starts_with(|c: char| c.is_ascii_digit()) {
                return Err(fail("investment is not an integer"));
            }
            let value: u64 = digits.parse().map_err(|_| fail("number too large"))?;
            if value > u64::from(cfg.endowment) {
                return Err(fail("investment outside the endowment"));
            }
            Ok(value as usize)
        }
    }
}

/// A reply that a compliant subject would give for `action`.
pub fn compliant_reply(task: &TaskSpec, templates: &PromptTemplates, action: usize) -> String {
    match task.kind() {
        TaskKind::Bandit => format!("I will visit Planet {}.", templates.bandit_labels[action]),
        TaskKind::Trust => format!("I invest {action} units this round."),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptTurn {
    pub trial: usize,
    pub attempt: usize,
    pub message: String,
    pub reply: String,
}

/// Everything sent to and received from the model during one episode.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PromptTranscript {
    pub system: String,
    pub turns: Vec<TranscriptTurn>,
}

/// Subject that asks a chat model for each action.
pub struct LlmSubject {
    task: TaskSpec,
    templates: PromptTemplates,
    backend: Box<dyn ChatBackend>,
    retry_limit: usize,
    history: Vec<Feedback>,
    transcript: PromptTranscript,
    transcript_path: Option<PathBuf>,
    label: String,
}

impl LlmSubject {
    pub fn new(
        task: TaskSpec,
        templates: PromptTemplates,
        backend: Box<dyn ChatBackend>,
        retry_limit: usize,
    ) -> Result<Self> {
        templates.validate()?;
        Ok(Self {
            task,
            templates,
            backend,
            retry_limit,
            history: Vec::new(),
            transcript: PromptTranscript::default(),
            transcript_path: None,
            label: "llm".into(),
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Appends every exchange to `path` as JSON lines.
    pub fn with_transcript_file(mut self, path: PathBuf) -> Self {
        self.transcript_path = Some(path);
        self
    }

    pub fn transcript(&self) -> &PromptTranscript {
        &self.transcript
    }

    fn record(&mut self, turn: TranscriptTurn) -> Result<()> {
        if let Some(path) = &self.transcript_path {
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir)?;
            }
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            writeln!(f, "{}", serde_json::to_string(&turn)?)?;
        }
        self.transcript.turns.push(turn);
        Ok(())
    }
}

impl Subject for LlmSubject {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn act(&mut self, prev: Option<&Feedback>, _rng: &mut Rng) -> Result<usize> {
        if let Some(fb) = prev {
            self.history.push(fb.clone());
        }
        let messages = build_llm_prompt(&self.task, &self.templates, &self.history)?;
        if self.transcript.system.is_empty() {
            self.transcript.system = messages[0].content.clone();
        }
        let trial = self.history.len() + 1;
        let mut last_err = None;
        for attempt in 0..=self.retry_limit {
            let reply = self.backend.complete(&messages)?;
            self.record(TranscriptTurn { trial, attempt, message: messages[1].content.clone(), reply: reply.clone() })?;
            match parse_llm_reply(&self.task, &self.templates, &reply) {
                Ok(a) => return Ok(a),
                Err(e @ Error::Parse { .. }) => last_err = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(Error::SubjectAborted(format!(
            "trial {trial}: no parseable reply after {} attempts ({})",
            self.retry_limit + 1,
            last_err.map(|e| e.to_string()).unwrap_or_default()
        )))
    }
}

/// Builds one [`LlmSubject`] per episode from a backend constructor.
pub struct LlmSubjectFactory<F> {
    pub settings: LlmSettings,
    pub templates: PromptTemplates,
    pub make_backend: F,
}

impl<F> SubjectFactory for LlmSubjectFactory<F>
where
    F: Fn() -> Result<Box<dyn ChatBackend>> + Sync,
{
    fn label(&self) -> String {
        format!("llm:{}", self.settings.model)
    }

    fn spawn(&self, task: &TaskSpec, episode: u64) -> Result<Box<dyn Subject>> {
        let mut subject =
            LlmSubject::new(task.clone(), self.templates.clone(), (self.make_backend)()?, self.settings.retry_limit)?
                .with_label(SubjectFactory::label(self));
        if let Some(dir) = &self.settings.transcript_dir {
            subject = subject.with_transcript_file(dir.join(format!("episode_{episode:05}.jsonl")));
        }
        Ok(Box::new(subject))
    }
}

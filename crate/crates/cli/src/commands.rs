use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use adversa_core::adversary::DqnConfig;
use adversa_core::gateway::{
    assemble_adversary, load_adversary, load_learner, save_adversary, write_episodes, AdversaryMeta, ServeLock,
    SessionConfig, SessionManager,
};
use adversa_core::metrics::{episode_bandit_metrics, episode_trust_metrics};
use adversa_core::pipeline::{
    closed_loop_run, collect_episodes, fit_learner, metrics_report, train_adversary_loop, unix_now, MetricsReport,
    PhaseStamp, RunManifest,
};
use adversa_core::subjects::{ChatBackend, LlmSubjectFactory, PromptTemplates};
use adversa_core::{
    AdversaryHandle, AdversaryPolicy, EpisodeLog, LearnerConfig, Objective, SubjectFactory, TaskKind, TaskSpec,
};
use anyhow::{anyhow, bail, Context};
use serde::Serialize;

use crate::args::*;
use crate::chat::HttpChatBackend;

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Collect(a) => collect(a),
        Command::TrainLearner(a) => train_learner(a),
        Command::TrainAdversary(a) => train_adversary(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => report(a),
        Command::Serve(a) => serve(a),
    }
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(RunManifest::dir_of(path))
        .with_context(|| format!("creating directory for {}", path.display()))
}

/// Builds the subject factory named on the command line.
fn subject_factory(args: &SubjectArgs, task: &TaskSpec) -> anyhow::Result<Box<dyn SubjectFactory>> {
    if let Some(policy) = args.synthetic_policy(task) {
        policy.validate()?;
        return Ok(Box::new(policy));
    }
    let settings = args.llm_settings()?;
    let templates = match &settings.template_dir {
        Some(dir) => PromptTemplates::load_dir(dir)?,
        None => PromptTemplates::default(),
    };
    if let Some(dir) = &settings.transcript_dir {
        std::fs::create_dir_all(dir)?;
    }
    // Fail before any episode runs when the key is missing.
    HttpChatBackend::from_settings(&settings)?;
    let backend_settings = settings.clone();
    let make_backend = move || -> adversa_core::Result<Box<dyn ChatBackend>> {
        Ok(Box::new(HttpChatBackend::from_settings(&backend_settings)?))
    };
    Ok(Box::new(LlmSubjectFactory { settings, templates, make_backend }))
}

fn load_handle(adversary: &Path, learner: &Path, allow_mismatch: bool) -> anyhow::Result<AdversaryHandle> {
    let adv = load_adversary(adversary).with_context(|| format!("loading adversary {}", adversary.display()))?;
    let lrn = load_learner(learner).with_context(|| format!("loading learner {}", learner.display()))?;
    if allow_mismatch && adv.meta.learner_digest != lrn.digest {
        eprintln!("warning: learner digest differs from the one the adversary was trained against");
    }
    Ok(assemble_adversary(adv, lrn, allow_mismatch)?)
}

fn write_log(path: &Path, logs: &[EpisodeLog]) -> anyhow::Result<()> {
    ensure_parent(path)?;
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write_episodes(&mut w, logs)?;
    w.flush()?;
    Ok(())
}

fn record(
    path: &Path,
    role: &str,
    phase: &str,
    started: u64,
    config: Option<(&str, serde_json::Value)>,
    seed: Option<u64>,
) -> anyhow::Result<()> {
    let manifest_path = RunManifest::path_beside(path);
    let mut m = RunManifest::load_or_default(&manifest_path)?;
    if let Some((k, v)) = config {
        m.config.insert(k.into(), v);
    }
    if let Some(s) = seed {
        m.seeds.insert(role.into(), s);
    }
    m.record_artifact(&RunManifest::dir_of(path), role, path)?;
    m.phases.push(PhaseStamp { phase: phase.into(), started, finished: unix_now() });
    m.save(&manifest_path)?;
    Ok(())
}

fn collect(a: CollectArgs) -> anyhow::Result<()> {
    let started = unix_now();
    let kind = TaskKind::from(a.task);
    let (task, policy) = if a.adversary == "random" {
        (a.task_args.spec(kind), AdversaryPolicy::Random)
    } else {
        let learner = a.learner.as_deref().ok_or_else(|| anyhow!("--learner is required with a trained adversary"))?;
        let handle = load_handle(Path::new(&a.adversary), learner, a.allow_mismatch)?;
        if handle.task.kind() != kind {
            bail!("adversary was trained for the {} task, not {}", handle.task.kind(), kind);
        }
        (handle.task.clone(), AdversaryPolicy::Trained(Box::new(handle)))
    };
    task.validate()?;
    let subjects = subject_factory(&a.subject, &task)?;
    let logs = collect_episodes(&task, subjects.as_ref(), &policy, a.episodes, a.seed)?;
    write_log(&a.out, &logs)?;
    let aborted = logs.iter().filter(|e| e.aborted.is_some()).count();
    let config = serde_json::json!({
        "task": task,
        "subject": subjects.label(),
        "adversary": policy.label(),
        "episodes": a.episodes,
    });
    record(&a.out, "episodes", "collect", started, Some(("collect", config)), Some(a.seed))?;
    eprintln!("wrote {} episodes ({} aborted) to {}", logs.len(), aborted, a.out.display());
    Ok(())
}

/// Task of a log file; the first episode decides.
fn task_of(logs: &[EpisodeLog], args: &TaskArgs) -> anyhow::Result<TaskSpec> {
    let first = logs.first().ok_or_else(|| anyhow!("no episodes in the data file"))?;
    if logs.iter().any(|e| e.task != first.task) {
        bail!("data file mixes bandit and trust episodes");
    }
    let task = args.spec(first.task);
    task.validate()?;
    Ok(task)
}

fn train_learner(a: TrainLearnerArgs) -> anyhow::Result<()> {
    let out_dir = RunManifest::dir_of(&a.out);
    std::fs::create_dir_all(&out_dir)?;
    ServeLock::ensure_free(&out_dir)?;
    let logs =
        adversa_core::gateway::read_episodes_file(&a.data).with_context(|| format!("reading {}", a.data.display()))?;
    let task = task_of(&logs, &a.task_args)?;
    let config = LearnerConfig {
        hidden_dim: a.hidden,
        epochs: a.epochs,
        patience: a.patience,
        batch_size: a.batch,
        lr: a.lr,
        clip: a.clip,
        holdout_fraction: a.holdout,
        seed: a.seed,
    };
    let (_, report) = fit_learner(&logs, &task, &config, Some(&a.out))?;
    let mut m = RunManifest::load_or_default(&RunManifest::path_beside(&a.out))?;
    m.record_artifact(&RunManifest::dir_of(&a.out), "training_data", &a.data)?;
    m.save(&RunManifest::path_beside(&a.out))?;
    eprintln!(
        "best epoch {}: holdout nll {:.4}, accuracy {:.3} ({} train / {} holdout episodes)",
        report.best_epoch, report.holdout_nll, report.holdout_accuracy, report.train_episodes, report.holdout_episodes
    );
    Ok(())
}

fn train_adversary(a: TrainAdversaryArgs) -> anyhow::Result<()> {
    let started = unix_now();
    let out_dir = RunManifest::dir_of(&a.out);
    std::fs::create_dir_all(&out_dir)?;
    ServeLock::ensure_free(&out_dir)?;
    let learner = load_learner(&a.learner).with_context(|| format!("loading learner {}", a.learner.display()))?;
    let objective = Objective::from(a.objective);
    let task = learner.meta.task.clone();
    if objective.task() != task.kind() {
        bail!("objective {} does not apply to the {} task", objective, task.kind());
    }
    let config = DqnConfig {
        hidden: a.layers.clone(),
        episodes: a.episodes,
        gamma: a.gamma,
        buffer_capacity: a.buffer,
        batch_size: a.batch,
        target_sync: a.target_sync,
        lr: a.lr,
        update_every: a.update_every,
        learning_starts: a.learning_starts,
        curve_window: a.curve_window,
        seed: a.seed,
        ..DqnConfig::default()
    };
    let run = train_adversary_loop(&learner.params, &task, objective, &config)?;
    let meta = AdversaryMeta {
        task,
        objective,
        training: config.clone(),
        learner_digest: learner.digest.clone(),
        curve: run.curve.clone(),
    };
    if let Some(reason) = run.diverged {
        let curve_path = a.out.with_extension("curve.json");
        std::fs::write(&curve_path, serde_json::to_vec_pretty(&run.curve)?)?;
        bail!("training diverged ({reason}); curve so far written to {}", curve_path.display());
    }
    save_adversary(&a.out, &run.handle.qnet, &meta)?;
    record(
        &a.out,
        "adversary",
        "train_adversary",
        started,
        Some(("adversary", serde_json::to_value(&config)?)),
        Some(a.seed),
    )?;
    if let Some(last) = run.curve.last() {
        eprintln!("{} updates; mean return over the last window {:.3}", run.updates, last.mean_return);
    }
    Ok(())
}

#[derive(Serialize)]
struct Arm {
    adversary: String,
    aborted: usize,
    metrics: MetricsReport,
}

#[derive(Serialize)]
struct Evaluation {
    task: TaskSpec,
    objective: Objective,
    subject: String,
    episodes: usize,
    seed: u64,
    adversarial: Arm,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline: Option<Arm>,
}

fn evaluate(a: EvaluateArgs) -> anyhow::Result<()> {
    let started = unix_now();
    let handle = load_handle(&a.adversary, &a.learner, a.allow_mismatch)?;
    let subjects = subject_factory(&a.subject, &handle.task)?;
    let run = closed_loop_run(&handle, subjects.as_ref(), a.episodes, a.seed)?;
    let baseline = if a.baseline {
        let logs = collect_episodes(&handle.task, subjects.as_ref(), &AdversaryPolicy::Random, a.episodes, a.seed)?;
        Some(Arm {
            adversary: AdversaryPolicy::Random.label(),
            aborted: logs.iter().filter(|e| e.aborted.is_some()).count(),
            metrics: metrics_report(&handle.task, &logs)?,
        })
    } else {
        None
    };
    let evaluation = Evaluation {
        task: handle.task.clone(),
        objective: handle.objective,
        subject: subjects.label(),
        episodes: a.episodes,
        seed: a.seed,
        adversarial: Arm {
            adversary: AdversaryPolicy::Trained(Box::new(handle.clone())).label(),
            aborted: run.aborted,
            metrics: run.report,
        },
        baseline,
    };
    ensure_parent(&a.report)?;
    let mut body = serde_json::to_vec_pretty(&evaluation)?;
    body.push(b'\n');
    std::fs::write(&a.report, body)?;
    if let Some(log) = &a.log {
        write_log(log, &run.logs)?;
    }
    record(&a.report, "evaluation", "evaluate", started, None, Some(a.seed))?;
    eprintln!("report written to {}", a.report.display());
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-episode metrics as CSV.
pub fn episodes_csv<W: Write>(w: W, task: &TaskSpec, logs: &[EpisodeLog]) -> anyhow::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let complete = logs.iter().filter(|e| e.aborted.is_none() && !e.is_empty());
    match task {
        TaskSpec::Bandit(cfg) => {
            out.write_record([
                "episode",
                "reward_rate",
                "target_rate",
                "no_reward_switch_rate",
                "reward_switch_rate",
                "consistency_index",
            ])?;
            for log in complete {
                let m = episode_bandit_metrics(log, cfg, 0)?;
                out.write_record([
                    m.episode.to_string(),
                    m.reward_rate.to_string(),
                    m.target_rate.to_string(),
                    opt(m.no_reward_switch_rate),
                    opt(m.reward_switch_rate),
                    m.consistency_index.to_string(),
                ])?;
            }
        }
        TaskSpec::Trust(cfg) => {
            out.write_record(["episode", "investor_total", "trustee_total", "earnings_gap"])?;
            for log in complete {
                let m = episode_trust_metrics(log, cfg)?;
                out.write_record([
                    m.episode.to_string(),
                    m.investor_total.to_string(),
                    m.trustee_total.to_string(),
                    m.earnings_gap.to_string(),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn report(a: ReportArgs) -> anyhow::Result<()> {
    let logs =
        adversa_core::gateway::read_episodes_file(&a.data).with_context(|| format!("reading {}", a.data.display()))?;
    let task = task_of(&logs, &a.task_args)?;
    let mut sink: Box<dyn Write> = match &a.out {
        Some(p) => {
            ensure_parent(p)?;
            Box::new(BufWriter::new(File::create(p)?))
        }
        None => Box::new(std::io::stdout().lock()),
    };
    match a.format {
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut sink, &metrics_report(&task, &logs)?)?;
            writeln!(sink)?;
        }
        ReportFormat::Csv => episodes_csv(&mut sink, &task, &logs)?,
    }
    sink.flush()?;
    Ok(())
}

fn serve(a: ServeArgs) -> anyhow::Result<()> {
    let lock_dir = a
        .checkpoint_dir
        .clone()
        .or_else(|| a.adversary.as_deref().map(RunManifest::dir_of))
        .or_else(|| a.learner.as_deref().map(RunManifest::dir_of))
        .unwrap_or_else(|| PathBuf::from("."));
    let _lock = ServeLock::acquire(&lock_dir)?;
    if let Some(dir) = &a.log_dir {
        std::fs::create_dir_all(dir)?;
    }
    let manager = SessionManager::new(SessionConfig {
        checkpoint_dir: a.checkpoint_dir.clone(),
        default_learner: a.learner.clone(),
        default_adversary: a.adversary.clone(),
        log_dir: a.log_dir.clone(),
        allow_mismatch: a.allow_mismatch,
    });
    let addr = format!("{}:{}", a.bind, a.port);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, crate::http::router(Arc::new(manager)))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::episode::{AdversaryMove, EpisodeLog, TrialRecord};
use crate::error::{Error, Result};
use crate::tasks::{Observation, TaskKind};

/// One line of an episode log. A line with `t = 0` marks an episode that
/// was aborted before its first trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialLine {
    pub ep: usize,
    pub t: usize,
    pub task: TaskKind,
    pub subject: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obs: Option<Observation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alloc: Option<[u8; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invest: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repay_q: Option<i64>,
    /// Trust: index of the repayment option chosen.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adv: Option<usize>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

fn lines_for(log: &EpisodeLog) -> Vec<TrialLine> {
    let base = |t: usize| TrialLine {
        ep: log.episode,
        t,
        task: log.task,
        subject: log.subject.clone(),
        a: None,
        r: None,
        obs: None,
        alloc: None,
        invest: None,
        repay_q: None,
        adv: None,
        seed: log.seed,
        h: None,
        aborted: None,
    };
    let mut out: Vec<TrialLine> = log
        .records
        .iter()
        .map(|rec| {
            let mut line = base(rec.t);
            line.a = Some(rec.action);
            line.r = Some(rec.reward);
            line.obs = Some(rec.observation.clone());
            match &rec.adversary {
                AdversaryMove::Allocation(al) => line.alloc = Some([u8::from(al[0]), u8::from(al[1])]),
                AdversaryMove::Repay { action, repay_q } => {
                    line.invest = Some(rec.action as u32);
                    line.repay_q = Some(*repay_q);
                    line.adv = Some(*action);
                }
            }
            line.h = rec.hidden.clone();
            line
        })
        .collect();
    if let Some(reason) = &log.aborted {
        match out.last_mut() {
            Some(last) => last.aborted = Some(reason.clone()),
            None => {
                let mut marker = base(0);
                marker.aborted = Some(reason.clone());
                out.push(marker);
            }
        }
    }
    out
}

pub fn write_episodes<W: Write>(mut w: W, logs: &[EpisodeLog]) -> Result<()> {
    for log in logs {
        for line in lines_for(log) {
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn episodes_to_string(logs: &[EpisodeLog]) -> Result<String> {
    let mut buf = Vec::new();
    write_episodes(&mut buf, logs)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

fn record_from(line: &TrialLine, n: usize) -> Result<TrialRecord> {
    let bad = |what: &str| Error::DataCorruption(format!("line {n}: {what}"));
    let action = line.a.ok_or_else(|| bad("missing \"a\""))?;
    let reward = line.r.ok_or_else(|| bad("missing \"r\""))?;
    let observation = line.obs.clone().ok_or_else(|| bad("missing \"obs\""))?;
    let adversary = match line.task {
        TaskKind::Bandit => {
            let al = line.alloc.ok_or_else(|| bad("missing \"alloc\""))?;
            if al.iter().any(|&x| x > 1) {
                return Err(bad("allocation entries must be 0 or 1"));
            }
            AdversaryMove::Allocation([al[0] == 1, al[1] == 1])
        }
        TaskKind::Trust => {
            let repay_q = line.repay_q.ok_or_else(|| bad("missing \"repay_q\""))?;
            let adv = line.adv.ok_or_else(|| bad("missing \"adv\""))?;
            if line.invest.is_some_and(|i| i as usize != action) {
                return Err(bad("\"invest\" disagrees with \"a\""));
            }
            AdversaryMove::Repay { action: adv, repay_q }
        }
    };
    let obs_ok = matches!(
        (line.task, &observation),
        (TaskKind::Bandit, Observation::Bandit { .. }) | (TaskKind::Trust, Observation::Trust { .. })
    );
    if !obs_ok {
        return Err(bad("observation does not match the task"));
    }
    Ok(TrialRecord { t: line.t, action, reward, observation, adversary, hidden: line.h.clone() })
}

/// Reads episodes back, grouping consecutive lines with the same episode
/// index and seed.
pub fn read_episodes<R: BufRead>(r: R) -> Result<Vec<EpisodeLog>> {
    let mut logs: Vec<EpisodeLog> = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let n = i + 1;
        let parsed: TrialLine =
            serde_json::from_str(&line).map_err(|e| Error::DataCorruption(format!("line {n}: {e}")))?;
        let same = logs.last().is_some_and(|l| {
            l.episode == parsed.ep && l.seed == parsed.seed && l.task == parsed.task && l.aborted.is_none()
        });
        if !same {
            logs.push(EpisodeLog::new(parsed.task, parsed.subject.clone(), parsed.seed, parsed.ep));
        }
        let log = logs.last_mut().expect("pushed above");
        if parsed.t > 0 {
            if parsed.t != log.records.len() + 1 {
                return Err(Error::DataCorruption(format!(
                    "line {n}: episode {} jumps to trial {}",
                    parsed.ep, parsed.t
                )));
            }
            log.records.push(record_from(&parsed, n)?);
        } else if parsed.aborted.is_none() {
            return Err(Error::DataCorruption(format!("line {n}: trial 0 without an abort reason")));
        }
        if parsed.aborted.is_some() {
            log.aborted = parsed.aborted;
        }
    }
    Ok(logs)
}

pub fn read_episodes_file(path: &std::path::Path) -> Result<Vec<EpisodeLog>> {
    let f = std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(format!("episode log {}", path.display())),
        _ => Error::Io(e),
    })?;
    read_episodes(std::io::BufReader::new(f))
}

//! Behavioural statistics over episode logs.

use serde::{Deserialize, Serialize};

use crate::episode::{AdversaryMove, EpisodeLog};
use crate::error::{Error, Result};
use crate::tasks::{BanditConfig, Observation, TaskKind, TrustConfig};

/// Mean and sample standard deviation over the episodes where a statistic
/// is defined. Sums run over sorted values so the result does not depend on
/// episode order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub n: usize,
}

impl Summary {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let mut v: Vec<f64> = values.into_iter().collect();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n == 0 {
            return Self { mean: None, sd: None, n };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            let mut dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
            dev.sort_by(f64::total_cmp);
            Some((dev.iter().sum::<f64>() / (n - 1) as f64).sqrt())
        } else {
            None
        };
        Self { mean: Some(mean), sd, n }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeBanditMetrics {
    pub episode: usize,
    pub reward_rate: f64,
    pub target_rate: f64,
    /// `None` when no unrewarded trial was followed by another trial.
    pub no_reward_switch_rate: Option<f64>,
    pub reward_switch_rate: Option<f64>,
    /// Fraction of trials on the episode's most chosen arm.
    pub consistency_index: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BanditMetrics {
    pub episodes: Vec<EpisodeBanditMetrics>,
    pub reward_rate: Summary,
    pub target_rate: Summary,
    pub no_reward_switch_rate: Summary,
    pub reward_switch_rate: Summary,
    pub consistency_index: Summary,
}

fn check_task(episodes: &[EpisodeLog], kind: TaskKind) -> Result<()> {
    if episodes.is_empty() {
        return Err(Error::invalid("no episodes"));
    }
    if let Some(e) = episodes.iter().find(|e| e.task != kind) {
        return Err(Error::invalid(format!("episode {} is a {} episode, expected {kind}", e.episode, e.task)));
    }
    Ok(())
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Metrics for one bandit episode, counting only trials with index greater
/// than `after` (switches need both trials of the pair past `after`).
pub fn episode_bandit_metrics(log: &EpisodeLog, cfg: &BanditConfig, after: usize) -> Result<EpisodeBanditMetrics> {
    let trials: Vec<_> = log.records.iter().filter(|r| r.t > after).collect();
    if trials.is_empty() {
        return Err(Error::invalid(format!("episode {} has no trials after {after}", log.episode)));
    }
    let n = trials.len();
    let rewards = trials.iter().filter(|r| r.reward > 0.0).count();
    let target = trials.iter().filter(|r| r.action == cfg.target_arm).count();
    let (mut nr, mut nr_sw, mut rw, mut rw_sw) = (0, 0, 0, 0);
    for pair in trials.windows(2) {
        let (p, c) = (pair[0], pair[1]);
        let switched = usize::from(p.action != c.action);
        if p.reward > 0.0 {
            rw += 1;
            rw_sw += switched;
        } else {
            nr += 1;
            nr_sw += switched;
        }
    }
    let mut counts = [0usize; 2];
    for r in &trials {
        if r.action > 1 {
            return Err(Error::DataCorruption(format!("bandit action {} in episode {}", r.action, log.episode)));
        }
        counts[r.action] += 1;
    }
    Ok(EpisodeBanditMetrics {
        episode: log.episode,
        reward_rate: rewards as f64 / n as f64,
        target_rate: target as f64 / n as f64,
        no_reward_switch_rate: ratio(nr_sw, nr),
        reward_switch_rate: ratio(rw_sw, rw),
        consistency_index: counts[0].max(counts[1]) as f64 / n as f64,
    })
}

pub fn bandit_metrics(episodes: &[EpisodeLog], cfg: &BanditConfig) -> Result<BanditMetrics> {
    bandit_metrics_after(episodes, cfg, 0)
}

/// As [`bandit_metrics`], restricted to trials with index greater than `after`.
pub fn bandit_metrics_after(episodes: &[EpisodeLog], cfg: &BanditConfig, after: usize) -> Result<BanditMetrics> {
    check_task(episodes, TaskKind::Bandit)?;
    let per: Vec<EpisodeBanditMetrics> =
        episodes.iter().map(|e| episode_bandit_metrics(e, cfg, after)).collect::<Result<_>>()?;
    Ok(BanditMetrics {
        reward_rate: Summary::of(per.iter().map(|m| m.reward_rate)),
        target_rate: Summary::of(per.iter().map(|m| m.target_rate)),
        no_reward_switch_rate: Summary::of(per.iter().filter_map(|m| m.no_reward_switch_rate)),
        reward_switch_rate: Summary::of(per.iter().filter_map(|m| m.reward_switch_rate)),
        consistency_index: Summary::of(per.iter().map(|m| m.consistency_index)),
        episodes: per,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrustMetrics {
    pub episode: usize,
    pub investor_total_q: i64,
    pub trustee_total_q: i64,
    /// Units.
    pub investor_total: f64,
    pub trustee_total: f64,
    pub earnings_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrustMetrics {
    pub episodes: Vec<EpisodeTrustMetrics>,
    pub investor_total: Summary,
    pub trustee_total: Summary,
    /// Per-episode |investor − trustee|.
    pub earnings_gap: Summary,
    /// Mean investment in each round across episodes.
    pub investment_by_round: Vec<Option<f64>>,
    /// Mean repayment percentage of the amount received in each round,
    /// over episodes where something was invested.
    pub repayment_pct_by_round: Vec<Option<f64>>,
}

/// Totals for one trust episode, rebuilt from the logged investor gains and
/// repayments and checked against the conservation identity.
pub fn episode_trust_metrics(log: &EpisodeLog, cfg: &TrustConfig) -> Result<EpisodeTrustMetrics> {
    let (mut inv, mut tr, mut expected) = (0i64, 0i64, 0i64);
    for r in &log.records {
        let AdversaryMove::Repay { repay_q, .. } = r.adversary else {
            return Err(Error::DataCorruption(format!("episode {} holds a bandit move", log.episode)));
        };
        let investment = u32::try_from(r.action)
            .ok()
            .filter(|&i| i <= cfg.endowment)
            .ok_or_else(|| Error::DataCorruption(format!("investment {} out of range", r.action)))?;
        let gain_q = r.reward * 4.0;
        if gain_q.fract() != 0.0 || !gain_q.is_finite() {
            return Err(Error::DataCorruption(format!("investor gain {} is not a whole quarter", r.reward)));
        }
        inv += gain_q as i64;
        tr += cfg.received_q(investment) - repay_q;
        expected += cfg.round_total_q(investment);
    }
    if inv + tr != expected {
        return Err(Error::DataCorruption(format!(
            "episode {}: totals {} + {} quarter-units break conservation (expected {expected})",
            log.episode, inv, tr
        )));
    }
    Ok(EpisodeTrustMetrics {
        episode: log.episode,
        investor_total_q: inv,
        trustee_total_q: tr,
        investor_total: inv as f64 / 4.0,
        trustee_total: tr as f64 / 4.0,
        earnings_gap: (inv - tr).abs() as f64 / 4.0,
    })
}

pub fn trust_metrics(episodes: &[EpisodeLog], cfg: &TrustConfig) -> Result<TrustMetrics> {
    check_task(episodes, TaskKind::Trust)?;
    let per: Vec<EpisodeTrustMetrics> =
        episodes.iter().map(|e| episode_trust_metrics(e, cfg)).collect::<Result<_>>()?;
    let rounds = episodes.iter().map(EpisodeLog::len).max().unwrap_or(0);
    let mut investment_by_round = Vec::with_capacity(rounds);
    let mut repayment_pct_by_round = Vec::with_capacity(rounds);
    for k in 0..rounds {
        let recs: Vec<_> = episodes.iter().filter_map(|e| e.records.get(k)).collect();
        investment_by_round.push(Summary::of(recs.iter().map(|r| r.action as f64)).mean);
        repayment_pct_by_round.push(
            Summary::of(recs.iter().filter_map(|r| match r.observation {
                Observation::Trust { fraction, .. } if r.action > 0 => Some(100.0 * fraction),
                _ => None,
            }))
            .mean,
        );
    }
    Ok(TrustMetrics {
        investor_total: Summary::of(per.iter().map(|m| m.investor_total)),
        trustee_total: Summary::of(per.iter().map(|m| m.trustee_total)),
        earnings_gap: Summary::of(per.iter().map(|m| m.earnings_gap)),
        investment_by_round,
        repayment_pct_by_round,
        episodes: per,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepaymentBin {
    /// Bin bounds in percent; the last bin includes its upper bound.
    pub lo_pct: u32,
    pub hi_pct: u32,
    pub mean_investment: Option<f64>,
    pub count: usize,
}

pub const REPAYMENT_BINS: usize = 5;

/// Mean investment in round `k` grouped by the repayment proportion the
/// investor saw in round `k − 1`.
pub fn investment_by_repayment(episodes: &[EpisodeLog], cfg: &TrustConfig) -> Result<Vec<RepaymentBin>> {
    check_task(episodes, TaskKind::Trust)?;
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); REPAYMENT_BINS];
    for e in episodes {
        for pair in e.records.windows(2) {
            let (prev, cur) = (&pair[0], &pair[1]);
            let AdversaryMove::Repay { repay_q, .. } = prev.adversary else {
                return Err(Error::DataCorruption(format!("episode {} holds a bandit move", e.episode)));
            };
            let received = cfg.received_q(prev.action as u32);
            // floor(5 · repay / received) without floating point; 100% lands in the top bin
            let bin = if received == 0 { 0 } else { ((5 * repay_q) / received).clamp(0, 4) as usize };
            buckets[bin].push(cur.action as f64);
        }
    }
    Ok(buckets
        .into_iter()
        .enumerate()
        .map(|(k, vals)| {
            let s = Summary::of(vals);
            RepaymentBin { lo_pct: 20 * k as u32, hi_pct: 20 * (k as u32 + 1), mean_investment: s.mean, count: s.n }
        })
        .collect())
}

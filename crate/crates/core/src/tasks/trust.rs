use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tasks::Observation;

/// Multi-round trust task parameters. Money is tracked in integer
/// quarter-units so every repayment fraction stays exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrustConfig {
    pub rounds: usize,
    /// Units the investor receives at the start of each round.
    pub endowment: u32,
    /// Factor applied to the investment before it reaches the trustee.
    pub multiplier: u32,
    /// Repayment options as quarters of the received amount (0..=4).
    pub repay_quarters: Vec<u32>,
}

impl Default for TrustConfig {
    fn default() -> Self {
        Self { rounds: 10, endowment: 20, multiplier: 3, repay_quarters: vec![0, 1, 2, 3, 4] }
    }
}

impl TrustConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::invalid("trust task needs at least one round"));
        }
        if self.endowment == 0 {
            return Err(Error::invalid("endowment must be positive"));
        }
        if self.multiplier < 1 {
            return Err(Error::invalid("multiplier must be at least 1"));
        }
        if self.repay_quarters.is_empty()
            || self.repay_quarters.iter().any(|&q| q > 4)
            || self.repay_quarters.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::invalid("repay options must be strictly increasing quarters in 0..=4"));
        }
        Ok(())
    }

    pub fn repay_actions(&self) -> usize {
        self.repay_quarters.len()
    }

    pub fn repay_fraction(&self, action: usize) -> f64 {
        self.repay_quarters[action] as f64 / 4.0
    }

    /// Amount the trustee receives for `investment`, in quarter-units.
    pub fn received_q(&self, investment: u32) -> i64 {
        4 * i64::from(self.multiplier) * i64::from(investment)
    }

    /// Both parties' combined round gain in quarter-units.
    pub fn round_total_q(&self, investment: u32) -> i64 {
        4 * (i64::from(self.endowment) + (i64::from(self.multiplier) - 1) * i64::from(investment))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrustRecord {
    pub investment: u32,
    pub repay_action: usize,
    pub repay_q: i64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrustState {
    /// Rounds completed.
    pub round: usize,
    pub investor_total_q: i64,
    pub trustee_total_q: i64,
    pub history: Vec<TrustRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrustStepOutcome {
    pub repay_q: i64,
    /// Investor's gain this round in quarter-units.
    pub investor_gain_q: i64,
    pub trustee_gain_q: i64,
    pub observation: Observation,
}

impl TrustState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_done(&self, cfg: &TrustConfig) -> bool {
        self.round >= cfg.rounds
    }

    pub fn last_investment(&self) -> Option<u32> {
        self.history.last().map(|r| r.investment)
    }

    /// Plays one round. The state is left untouched on error.
    pub fn step(&mut self, cfg: &TrustConfig, investment: u32, repay_action: usize) -> Result<TrustStepOutcome> {
        if investment > cfg.endowment {
            return Err(Error::invalid(format!("investment {investment} outside 0..={}", cfg.endowment)));
        }
        if repay_action >= cfg.repay_actions() {
            return Err(Error::invalid(format!("repay action {repay_action} outside 0..{}", cfg.repay_actions())));
        }
        if self.is_done(cfg) {
            return Err(Error::invalid("trust episode already finished"));
        }
        let received_q = cfg.received_q(investment);
        // quarters/4 of the received amount, in quarter-units
        let repay_q = i64::from(cfg.repay_quarters[repay_action]) * i64::from(cfg.multiplier) * i64::from(investment);
        let investor_gain_q = 4 * i64::from(cfg.endowment - investment) + repay_q;
        let trustee_gain_q = received_q - repay_q;
        self.investor_total_q += investor_gain_q;
        self.trustee_total_q += trustee_gain_q;
        self.round += 1;
        self.history.push(TrustRecord { investment, repay_action, repay_q });
        let fraction = if received_q == 0 { 0.0 } else { repay_q as f64 / received_q as f64 };
        Ok(TrustStepOutcome {
            repay_q,
            investor_gain_q,
            trustee_gain_q,
            observation: Observation::Trust { repay_q, fraction },
        })
    }
}

/// Formats a quarter-unit amount in units, e.g. `30 -> "7.5"`.
pub fn format_units(q: i64) -> String {
    let units = q as f64 / 4.0;
    if q % 4 == 0 {
        format!("{}", q / 4)
    } else {
        format!("{units}")
    }
}

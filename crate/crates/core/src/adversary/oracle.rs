use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::subjects::Subject;
use crate::tasks::{BanditConfig, BanditState, Feedback};

use super::{bandit_action_to_allocation, legal_bandit_actions, BANDIT_ACTIONS};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleResult {
    /// Most target choices any legal allocation sequence can produce.
    pub best: usize,
    /// One allocation sequence achieving `best`.
    pub allocations: Vec<[bool; 2]>,
}

pub const ORACLE_MAX_TRIALS: usize = 8;

/// Exhaustive search over every legal allocation sequence against a
/// deterministic subject.
pub fn brute_force_oracle<S: Subject + Clone>(cfg: &BanditConfig, subject: &S) -> Result<OracleResult> {
    cfg.validate()?;
    if cfg.trials > ORACLE_MAX_TRIALS {
        return Err(Error::invalid(format!("oracle supports at most {ORACLE_MAX_TRIALS} trials")));
    }
    if !subject.is_deterministic() {
        return Err(Error::invalid("oracle needs a deterministic subject"));
    }
    let mut path = Vec::with_capacity(cfg.trials);
    let mut best = OracleResult { best: 0, allocations: Vec::new() };
    let mut found = false;
    search(cfg, &BanditState::new(), subject.clone(), None, 0, &mut path, &mut best, &mut found)?;
    Ok(best)
}

#[allow(clippy::too_many_arguments)]
fn search<S: Subject + Clone>(
    cfg: &BanditConfig,
    state: &BanditState,
    subject: S,
    prev: Option<Feedback>,
    count: usize,
    path: &mut Vec<[bool; 2]>,
    best: &mut OracleResult,
    found: &mut bool,
) -> Result<()> {
    if state.is_done(cfg) {
        if !*found || count > best.best {
            *found = true;
            *best = OracleResult { best: count, allocations: path.clone() };
        }
        return Ok(());
    }
    // Deterministic subjects never touch the generator.
    let mut rng = Rng::new(0);
    let mut subject = subject;
    let arm = subject.act(prev.as_ref(), &mut rng)?;
    let hit = usize::from(arm == cfg.target_arm);
    let legal = legal_bandit_actions(state, cfg);
    for a in (0..BANDIT_ACTIONS).filter(|&a| legal[a]) {
        let alloc = bandit_action_to_allocation(a, cfg);
        let mut next = state.clone();
        let out = next.step(cfg, alloc, arm)?;
        let fb = Feedback { action: arm, reward: f64::from(out.reward), observation: out.observation };
        path.push(alloc);
        search(cfg, &next, subject.clone(), Some(fb), count + hit, path, best, found)?;
        path.pop();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subjects::{SubjectPolicy, SyntheticSubject};
    use crate::tasks::TaskSpec;

    fn wsls(cfg: &BanditConfig) -> SyntheticSubject {
        SyntheticSubject::new(SubjectPolicy::Wsls { start: cfg.target_arm }, TaskSpec::Bandit(cfg.clone())).unwrap()
    }

    /// Plays an allocation sequence against the subject and counts target choices.
    fn play(cfg: &BanditConfig, subject: &SyntheticSubject, allocations: &[[bool; 2]]) -> usize {
        let mut s = subject.clone();
        let mut state = BanditState::new();
        let mut prev = None;
        let mut rng = Rng::new(0);
        let mut count = 0;
        for &alloc in allocations {
            let arm = s.act(prev.as_ref(), &mut rng).unwrap();
            count += usize::from(arm == cfg.target_arm);
            let out = state.step(cfg, alloc, arm).unwrap();
            prev = Some(Feedback { action: arm, reward: f64::from(out.reward), observation: out.observation });
        }
        assert!(state.is_done(cfg));
        count
    }

    #[test]
    fn wsls_four_trials_one_reward_each() {
        let cfg = BanditConfig { trials: 4, budget_per_arm: 1, ..Default::default() };
        let subject = wsls(&cfg);
        let r = brute_force_oracle(&cfg, &subject).unwrap();
        assert_eq!(r.best, 3);
        assert_eq!(r.allocations.len(), 4);
        assert_eq!(play(&cfg, &subject, &r.allocations), 3);
    }

    #[derive(Clone)]
    struct AlwaysTarget;

    impl Subject for AlwaysTarget {
        fn label(&self) -> String {
            "always-target".into()
        }
        fn act(&mut self, _: Option<&Feedback>, _: &mut Rng) -> Result<usize> {
            Ok(0)
        }
        fn is_deterministic(&self) -> bool {
            true
        }
    }

    #[test]
    fn subject_ignoring_rewards_scores_horizon() {
        let cfg = BanditConfig { trials: 2, budget_per_arm: 1, ..Default::default() };
        assert_eq!(brute_force_oracle(&cfg, &AlwaysTarget).unwrap().best, 2);
    }

    #[test]
    fn stochastic_subject_is_refused() {
        let cfg = BanditConfig { trials: 2, budget_per_arm: 1, ..Default::default() };
        let sticky = SyntheticSubject::new(
            SubjectPolicy::Sticky { explore_trials: 0, stickiness: 1.0 },
            TaskSpec::Bandit(cfg.clone()),
        )
        .unwrap();
        assert!(matches!(brute_force_oracle(&cfg, &sticky), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn zero_budget_makes_wsls_alternate() {
        let cfg = BanditConfig { trials: 4, budget_per_arm: 0, ..Default::default() };
        let r = brute_force_oracle(&cfg, &wsls(&cfg)).unwrap();
        assert_eq!(r.best, 2);
        assert_eq!(r.allocations, vec![[false, false]; 4]);
    }

    #[test]
    fn oracle_matches_every_sequence_bound() {
        let cfg = BanditConfig { trials: 6, budget_per_arm: 2, ..Default::default() };
        let subject = wsls(&cfg);
        let r = brute_force_oracle(&cfg, &subject).unwrap();
        assert_eq!(play(&cfg, &subject, &r.allocations), r.best);
        assert!(r.best <= 6);
    }

    #[test]
    fn rejects_long_horizons() {
        let cfg = BanditConfig { trials: 10, budget_per_arm: 2, ..Default::default() };
        assert!(brute_force_oracle(&cfg, &wsls(&cfg)).is_err());
    }
}

use crate::error::{Error, Result};
use crate::numerics::{softmax_in_place, Rng};
use crate::subjects::{Subject, SubjectPolicy};
use crate::tasks::{Feedback, Observation, TaskSpec};

/// A synthetic agent plus the memory it carries through an episode.
#[derive(Clone, Debug)]
pub struct SyntheticSubject {
    policy: SubjectPolicy,
    task: TaskSpec,
    values: Vec<f64>,
    last_action: Option<usize>,
    last_rewarded: Option<usize>,
    steps: usize,
}

impl SyntheticSubject {
    pub fn new(policy: SubjectPolicy, task: TaskSpec) -> Result<Self> {
        policy.validate()?;
        let values = match policy {
            SubjectPolicy::RwSoftmax { initial_value, .. } => vec![initial_value; task.action_dim()],
            SubjectPolicy::Wsls { start } => {
                if start >= task.action_dim() {
                    return Err(Error::invalid(format!("wsls start {start} is not a legal action")));
                }
                Vec::new()
            }
            SubjectPolicy::Sticky { .. } => Vec::new(),
            SubjectPolicy::Llm(_) | SubjectPolicy::HumanProxy => {
                return Err(Error::invalid(format!("{} is not a synthetic subject", policy.label())))
            }
        };
        Ok(Self { policy, task, values, last_action: None, last_rewarded: None, steps: 0 })
    }

    pub fn policy(&self) -> &SubjectPolicy {
        &self.policy
    }

    /// Current value estimates (rw_softmax only).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn absorb(&mut self, fb: &Feedback) -> Result<()> {
        if fb.action >= self.task.action_dim() {
            return Err(Error::invalid(format!("feedback action {} out of range", fb.action)));
        }
        if let SubjectPolicy::RwSoftmax { alpha, .. } = self.policy {
            let target = match (&self.task, &fb.observation) {
                (TaskSpec::Bandit(_), _) => fb.reward,
                // Round profit relative to the endowment.
                (TaskSpec::Trust(cfg), _) => fb.reward / cfg.endowment as f64,
            };
            let v = &mut self.values[fb.action];
            *v += alpha * (target - *v);
        }
        if fb.reward > 0.0 && matches!(self.task, TaskSpec::Bandit(_)) {
            self.last_rewarded = Some(fb.action);
        }
        self.last_action = Some(fb.action);
        Ok(())
    }

    fn choose(&mut self, prev: Option<&Feedback>, rng: &mut Rng) -> usize {
        let n = self.task.action_dim();
        match (&self.policy, &self.task) {
            (SubjectPolicy::Wsls { start }, TaskSpec::Bandit(_)) => match prev {
                None => *start,
                Some(fb) if fb.reward > 0.0 => fb.action,
                Some(fb) => 1 - fb.action,
            },
            (SubjectPolicy::Wsls { start }, TaskSpec::Trust(_)) => match prev {
                None => *start,
                Some(fb) => {
                    let kept = match fb.observation {
                        Observation::Trust { fraction, .. } => fraction >= 0.5,
                        Observation::Bandit { .. } => unreachable!("checked by task"),
                    };
                    if kept {
                        fb.action
                    } else {
                        fb.action.saturating_sub(5)
                    }
                }
            },
            (SubjectPolicy::RwSoftmax { beta, .. }, _) => {
                let mut p: Vec<f64> = self.values.iter().map(|v| beta * v).collect();
                softmax_in_place(&mut p);
                rng.categorical(&p)
            }
            (SubjectPolicy::Sticky { explore_trials, stickiness }, task) => {
                if self.steps < *explore_trials {
                    return rng.below(n);
                }
                // Bandit anchor: the most recently rewarded arm, else the
                // previous choice. Trust has no reward anchor.
                let anchor = match task {
                    TaskSpec::Bandit(_) => self.last_rewarded.or(self.last_action),
                    TaskSpec::Trust(_) => self.last_action,
                };
                match anchor {
                    Some(a) if rng.bernoulli(*stickiness) => a,
                    _ => rng.below(n),
                }
            }
            (SubjectPolicy::Llm(_) | SubjectPolicy::HumanProxy, _) => unreachable!("rejected in new()"),
        }
    }
}

impl Subject for SyntheticSubject {
    fn label(&self) -> String {
        self.policy.label()
    }

    fn act(&mut self, prev: Option<&Feedback>, rng: &mut Rng) -> Result<usize> {
        if let Some(fb) = prev {
            if !matches!(
                (&self.task, &fb.observation),
                (TaskSpec::Bandit(_), Observation::Bandit { .. }) | (TaskSpec::Trust(_), Observation::Trust { .. })
            ) {
                return Err(Error::invalid("feedback observation does not match the subject's task"));
            }
            self.absorb(fb)?;
        }
        let a = self.choose(prev, rng);
        self.steps += 1;
        Ok(a)
    }

    fn is_deterministic(&self) -> bool {
        matches!(self.policy, SubjectPolicy::Wsls { .. })
    }
}

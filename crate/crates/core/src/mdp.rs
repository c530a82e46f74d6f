//! Domain types of the request-based MDP.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UserGroup {
    HighActive,
    LowActive,
}

impl UserGroup {
    pub const ALL: [UserGroup; 2] = [UserGroup::HighActive, UserGroup::LowActive];

    pub fn as_str(self) -> &'static str {
        match self {
            UserGroup::HighActive => "high",
            UserGroup::LowActive => "low",
        }
    }

    pub fn flag(self) -> f64 {
        match self {
            UserGroup::HighActive => 1.0,
            UserGroup::LowActive => 0.0,
        }
    }
}

/// Widths of the four parts of a [`UserState`]; fixed for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateLayout {
    pub profile: usize,
    pub history: usize,
    pub context: usize,
    pub candidate_summary: usize,
}

impl StateLayout {
    pub fn dim(&self) -> usize {
        self.profile + self.history + self.context + self.candidate_summary
    }
}

/// Observation at one request.
///
/// `context[0]` is the session depth (1 for the first request of a session),
/// `context[1]` the time-of-day fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserState {
    pub profile: Vec<f64>,
    pub history: Vec<f64>,
    pub context: Vec<f64>,
    pub candidate_summary: Vec<f64>,
}

impl UserState {
    pub fn layout(&self) -> StateLayout {
        StateLayout {
            profile: self.profile.len(),
            history: self.history.len(),
            context: self.context.len(),
            candidate_summary: self.candidate_summary.len(),
        }
    }

    pub fn dim(&self) -> usize {
        self.layout().dim()
    }

    pub fn session_depth(&self) -> f64 {
        self.context.first().copied().unwrap_or(0.0)
    }

    /// Flat feature vector in declaration order.
    pub fn features(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        self.write_features(&mut v);
        v
    }

    pub fn write_features(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.profile);
        out.extend_from_slice(&self.history);
        out.extend_from_slice(&self.context);
        out.extend_from_slice(&self.candidate_summary);
    }

    pub fn validate(&self, layout: &StateLayout) -> Result<()> {
        if self.layout() != *layout {
            return Err(Error::DimensionMismatch {
                context: "user state",
                expected: layout.dim(),
                got: self.dim(),
            });
        }
        if !self.features().iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("user state has non-finite entries".into()));
        }
        if self.session_depth() < 1.0 {
            return Err(Error::InvalidConfig(format!(
                "session depth must be >= 1, got {}",
                self.session_depth()
            )));
        }
        Ok(())
    }
}

/// Ranking weights chosen at a request, with the Gaussian that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionVector {
    pub values: Vec<f64>,
    pub behavior_mu: Vec<f64>,
    pub behavior_sigma: Vec<f64>,
}

impl ActionVector {
    /// A deterministic action; the behavior density is a narrow Gaussian at it.
    pub fn constant(values: Vec<f64>, sigma: f64) -> Self {
        let n = values.len();
        Self {
            behavior_mu: values.clone(),
            behavior_sigma: vec![sigma; n],
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Clamps every component to `[0, max]`; returns whether anything moved.
    pub fn clip(&mut self, max: f64) -> bool {
        let mut clipped = false;
        for v in &mut self.values {
            let c = if v.is_nan() { 0.0 } else { v.clamp(0.0, max) };
            if c != *v {
                clipped = true;
                *v = c;
            }
        }
        clipped
    }

    pub fn validate(&self, max: f64) -> Result<()> {
        let n = self.values.len();
        if self.behavior_mu.len() != n || self.behavior_sigma.len() != n {
            return Err(Error::DimensionMismatch {
                context: "action vector",
                expected: n,
                got: self.behavior_mu.len().min(self.behavior_sigma.len()),
            });
        }
        if let Some(v) = self.values.iter().find(|v| !(0.0..=max).contains(*v)) {
            return Err(Error::InvalidConfig(format!("action component {v} outside [0, {max}]")));
        }
        if let Some(&s) = self.behavior_sigma.iter().find(|&&s| s <= 0.0) {
            return Err(Error::NonPositiveSigma(s));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateVideo {
    pub video_id: u64,
    /// Predicted feedback propensities, one per scoring model.
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ImmediateFeedback {
    pub watch_time_s: f64,
    pub interactions: u32,
}

impl ImmediateFeedback {
    pub fn merge(self, other: ImmediateFeedback) -> ImmediateFeedback {
        ImmediateFeedback {
            watch_time_s: self.watch_time_s + other.watch_time_s,
            interactions: self.interactions + other.interactions,
        }
    }
}

/// Heuristic reward of one request: seconds watched plus interaction count.
pub fn immediate_reward(fb: &ImmediateFeedback) -> f64 {
    fb.watch_time_s + f64::from(fb.interactions)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub state: UserState,
    pub action: ActionVector,
    pub feedback: ImmediateFeedback,
}

/// A session and, once the user is back, its returning time in days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub user_id: u64,
    pub group: UserGroup,
    pub session_index: usize,
    pub requests: Vec<RequestRecord>,
    pub returning_time: Option<f64>,
}

impl SessionRecord {
    pub fn total_feedback(&self) -> ImmediateFeedback {
        self.requests
            .iter()
            .fold(ImmediateFeedback::default(), |acc, r| acc.merge(r.feedback))
    }

    pub fn total_immediate_reward(&self) -> f64 {
        self.requests.iter().map(|r| immediate_reward(&r.feedback)).sum()
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }
}

/// One replayed transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionSample {
    pub state: UserState,
    pub action: ActionVector,
    pub immediate_reward: f64,
    pub intrinsic_reward: f64,
    /// Zero unless `terminal`.
    pub retention_reward: f64,
    pub next_state: UserState,
    pub terminal: bool,
    /// 1 within a session, the run discount on the session's last request.
    pub gamma_it: f64,
    pub user_group: UserGroup,
    /// Raw returning time in days, present on terminal samples.
    pub returning_time: Option<f64>,
}

impl TransitionSample {
    pub fn check_invariants(&self, gamma: f64) -> Result<()> {
        let ok = if self.terminal {
            self.gamma_it == gamma && self.returning_time.is_some()
        } else {
            self.gamma_it == 1.0 && self.retention_reward == 0.0 && self.returning_time.is_none()
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "transition violates discount rule: terminal={}, gamma_it={}, retention_reward={}",
                self.terminal, self.gamma_it, self.retention_reward
            )))
        }
    }
}

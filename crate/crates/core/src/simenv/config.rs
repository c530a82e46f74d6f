use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{StateLayout, UserGroup};

/// Score channels, in the order the ranking weights address them.
pub mod channel {
    pub const WATCH: usize = 0;
    pub const SHORTVIEW: usize = 1;
    pub const LONGVIEW: usize = 2;
    pub const LIKE: usize = 3;
    pub const FOLLOW: usize = 4;
    pub const FORWARD: usize = 5;
    pub const COMMENT: usize = 6;
    pub const PROFILE: usize = 7;
    pub const INTERACTIONS: [usize; 4] = [LIKE, FOLLOW, FORWARD, COMMENT];
    pub const COUNT: usize = 8;
}

pub const AGE_BUCKETS: usize = 3;
pub const GENDERS: usize = 2;
/// Requests remembered in the behavior history.
pub const HISTORY_REQUESTS: usize = 3;

/// Session-end model: `P(leave) = logistic(base + depth * depth_slope - satisfaction * satisfaction_slope)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeaveCurve {
    pub base: f64,
    pub depth_slope: f64,
    pub satisfaction_slope: f64,
}

impl Default for LeaveCurve {
    fn default() -> Self {
        Self {
            base: -1.9,
            depth_slope: 0.06,
            satisfaction_slope: 0.35,
        }
    }
}

/// Return-day model: `P(day = k) ∝ exp(logits_g[k] + (k - 1) * (offset_g - satisfaction_weight * s))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReturnCurve {
    pub high_logits: Vec<f64>,
    pub low_logits: Vec<f64>,
    pub satisfaction_weight: f64,
    pub high_offset: f64,
    pub low_offset: f64,
}

impl Default for ReturnCurve {
    fn default() -> Self {
        Self {
            high_logits: vec![1.2, 0.9, 0.0, -0.6, -1.2, -1.8, -2.4, -3.0, -3.6, -4.2],
            low_logits: vec![-0.8, -0.1, 0.5, 0.7, 0.6, 0.3, -0.2, -0.7, -1.2, -1.7],
            satisfaction_weight: 0.3,
            high_offset: -0.15,
            low_offset: -0.25,
        }
    }
}

impl ReturnCurve {
    pub fn logits(&self, group: UserGroup) -> &[f64] {
        match group {
            UserGroup::HighActive => &self.high_logits,
            UserGroup::LowActive => &self.low_logits,
        }
    }

    pub fn offset(&self, group: UserGroup) -> f64 {
        match group {
            UserGroup::HighActive => self.high_offset,
            UserGroup::LowActive => self.low_offset,
        }
    }
}

/// Per-channel taste weights a user's engagement is built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TasteModel {
    pub base: f64,
    /// Added on the two channels the user's (group, age) archetype likes.
    pub liked: f64,
    /// Added on the two channels the archetype dislikes; usually negative.
    pub disliked: f64,
    pub gender: f64,
    /// Half-width of the uniform per-user jitter.
    pub jitter: f64,
}

impl Default for TasteModel {
    fn default() -> Self {
        Self {
            base: 0.1,
            liked: 1.0,
            disliked: -0.3,
            gender: 0.4,
            jitter: 0.1,
        }
    }
}

/// Immediate-feedback module parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedbackModel {
    /// Std-dev of candidate scores around the user's interest.
    pub candidate_noise: f64,
    /// Median watch time of a video with reference engagement, seconds.
    pub watch_base_s: f64,
    /// Log-watch-time gain per unit engagement.
    pub watch_alignment: f64,
    pub watch_sigma: f64,
    /// Base probability scale of each interaction channel.
    pub interaction_rate: f64,
    /// Engagement at which a video is satisfaction-neutral.
    pub reference_engagement: f64,
    /// Satisfaction per unit engagement above the reference.
    pub satisfaction_gain: f64,
    /// Satisfaction per unit of short-view score (short-lived thrill).
    pub shortview_thrill: f64,
    /// Bound on the per-video satisfaction increment.
    pub max_increment: f64,
    /// Bound on the session satisfaction accumulator.
    pub max_satisfaction: f64,
}

impl Default for FeedbackModel {
    fn default() -> Self {
        Self {
            candidate_noise: 0.25,
            watch_base_s: 6.0,
            watch_alignment: 2.0,
            watch_sigma: 0.5,
            interaction_rate: 0.25,
            reference_engagement: 0.6,
            satisfaction_gain: 1.5,
            shortview_thrill: 0.35,
            max_increment: 1.0,
            max_satisfaction: 3.0,
        }
    }
}

/// Per-user state that outlives a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Carryover {
    /// Fatigue kept from one session to the next.
    pub fatigue_decay: f64,
    /// Fatigue added per unit mean short-view score above 0.5 in a session.
    pub fatigue_gain: f64,
    /// Opening-satisfaction penalty per unit fatigue.
    pub fatigue_penalty: f64,
    pub attachment_decay: f64,
    /// Attachment added per unit mean follow score above 0.5 in a session.
    pub attachment_gain: f64,
    /// Opening-satisfaction bonus per unit attachment.
    pub attachment_bonus: f64,
}

impl Default for Carryover {
    fn default() -> Self {
        Self {
            fatigue_decay: 0.6,
            fatigue_gain: 3.0,
            fatigue_penalty: 2.0,
            attachment_decay: 0.7,
            attachment_gain: 4.0,
            attachment_bonus: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub population: usize,
    pub high_active_fraction: f64,
    pub candidates_per_request: usize,
    pub slate_size: usize,
    pub num_scores: usize,
    pub max_return_days: usize,
    pub action_max: f64,
    pub episode_days: usize,
    pub tastes: TasteModel,
    pub leave: LeaveCurve,
    pub returns: ReturnCurve,
    pub feedback: FeedbackModel,
    pub carryover: Carryover,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            population: 100,
            high_active_fraction: 0.5,
            candidates_per_request: 50,
            slate_size: 6,
            num_scores: channel::COUNT,
            max_return_days: 10,
            action_max: 4.0,
            episode_days: 10,
            tastes: TasteModel::default(),
            leave: LeaveCurve::default(),
            returns: ReturnCurve::default(),
            feedback: FeedbackModel::default(),
            carryover: Carryover::default(),
        }
    }
}

impl SimConfig {
    pub fn state_layout(&self) -> StateLayout {
        StateLayout {
            profile: 1 + AGE_BUCKETS + GENDERS,
            history: 2 * HISTORY_REQUESTS + 2,
            context: 2,
            candidate_summary: 2 * self.num_scores,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_layout().dim()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.population == 0 {
            return bad("population must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.high_active_fraction) {
            return bad(format!("high_active_fraction {} not in [0, 1]", self.high_active_fraction));
        }
        if self.num_scores != channel::COUNT {
            return bad(format!("the simulator models {} score channels", channel::COUNT));
        }
        if self.slate_size == 0 || self.candidates_per_request < self.slate_size {
            return bad("need candidates_per_request >= slate_size > 0".into());
        }
        if self.max_return_days == 0 {
            return bad("max_return_days must be >= 1".into());
        }
        for (name, l) in [("high", &self.returns.high_logits), ("low", &self.returns.low_logits)] {
            if l.len() != self.max_return_days {
                return bad(format!(
                    "{name} return logits have {} entries, expected {}",
                    l.len(),
                    self.max_return_days
                ));
            }
            if l.iter().any(|v| !v.is_finite()) {
                return bad(format!("{name} return logits must be finite"));
            }
        }
        if !(self.action_max > 0.0) {
            return bad("action_max must be positive".into());
        }
        if self.episode_days == 0 {
            return bad("episode_days must be positive".into());
        }
        let f = &self.feedback;
        if !(f.candidate_noise >= 0.0 && f.watch_base_s > 0.0 && f.watch_sigma >= 0.0) {
            return bad("feedback noise scales must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&f.interaction_rate) {
            return bad("interaction_rate must be a probability".into());
        }
        if !(f.max_increment > 0.0 && f.max_satisfaction > 0.0) {
            return bad("satisfaction bounds must be positive".into());
        }
        let c = &self.carryover;
        if !(0.0..1.0).contains(&c.fatigue_decay) || !(0.0..1.0).contains(&c.attachment_decay) {
            return bad("carryover decays must be in [0, 1)".into());
        }
        Ok(())
    }
}

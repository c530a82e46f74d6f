use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use super::user::SimUser;
use crate::error::{Error, Result};
use crate::mdp::{
    immediate_reward, ActionVector, ImmediateFeedback, RequestRecord, SessionRecord, UserGroup,
    UserState,
};
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RequestContext {
    pub user_id: u64,
    pub group: UserGroup,
    pub day: usize,
    pub depth: usize,
}

/// Decision maker driven by [`run_episode`]. The observation hooks let a
/// learner build its replay data while the episode unfolds.
pub trait Policy {
    fn act(&mut self, ctx: &RequestContext, state: &UserState) -> Result<ActionVector>;

    fn on_session_start(&mut self, _ctx: &RequestContext) -> Result<()> {
        Ok(())
    }

    fn on_request(
        &mut self,
        _ctx: &RequestContext,
        _state: &UserState,
        _action: &ActionVector,
        _feedback: &ImmediateFeedback,
    ) -> Result<()> {
        Ok(())
    }

    /// The user came back (or the horizon ended): the previous session's
    /// returning time is now known and `next_state` opens the next session.
    fn on_session_closed(
        &mut self,
        _ctx: &RequestContext,
        _returning_time: f64,
        _next_state: &UserState,
    ) -> Result<()> {
        Ok(())
    }
}

/// Adapts a closure into a [`Policy`] with no learning hooks.
pub struct FnPolicy<F>(pub F);

impl<F> Policy for FnPolicy<F>
where
    F: FnMut(&RequestContext, &UserState) -> ActionVector,
{
    fn act(&mut self, ctx: &RequestContext, state: &UserState) -> Result<ActionVector> {
        Ok((self.0)(ctx, state))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub avg_return_day: f64,
    pub day1_retention: f64,
    pub mean_immediate_reward: f64,
    pub sessions: usize,
    pub requests: usize,
    pub clipped_actions: usize,
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub sessions: Vec<SessionRecord>,
    pub metrics: EpisodeMetrics,
}

/// Builds the population. Exactly `round(population * high_active_fraction)`
/// users are high-active.
pub fn reset(config: &SimConfig, seed: u64) -> Result<Vec<SimUser>> {
    config.validate()?;
    let n = config.population;
    let n_high = (n as f64 * config.high_active_fraction).round() as usize;
    let mut groups: Vec<UserGroup> = (0..n)
        .map(|i| {
            if i < n_high {
                UserGroup::HighActive
            } else {
                UserGroup::LowActive
            }
        })
        .collect();
    groups.shuffle(&mut seeding::rng(seed, "population", 0));
    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(i, g)| SimUser::new(i as u64, g, config, seeding::rng(seed, "user", i as u64)))
        .collect())
}

#[derive(Default)]
struct Tally {
    return_days: f64,
    day1: usize,
    sessions: usize,
    reward: f64,
    requests: usize,
}

/// Simulates the population for `episode_days` days.
///
/// Every user opens a session on day 0; after each session the return module
/// schedules the next one. Out-of-range actions are clipped to `[0, C]` and
/// counted.
pub fn run_episode(policy: &mut dyn Policy, config: &SimConfig, seed: u64) -> Result<EpisodeOutcome> {
    let mut users = reset(config, seed)?;
    let n = users.len();
    let mut next_day = vec![0usize; n];
    let mut pending: Vec<Option<(RequestContext, f64, UserState)>> = vec![None; n];
    let mut session_counts = vec![0usize; n];
    let mut sessions = Vec::new();
    let mut tally = Tally::default();
    let mut clipped = 0usize;

    for day in 0..config.episode_days {
        for (u, user) in users.iter_mut().enumerate() {
            if next_day[u] != day {
                continue;
            }
            if let Some((ctx, t, s)) = pending[u].take() {
                policy.on_session_closed(&ctx, t, &s)?;
            }
            let mut state = user.open_session(config);
            let mut ctx = RequestContext {
                user_id: user.user_id,
                group: user.group,
                day,
                depth: 1,
            };
            policy.on_session_start(&ctx)?;
            let mut requests = Vec::new();
            loop {
                ctx.depth = user.depth();
                let mut action = policy.act(&ctx, &state)?;
                if action.values.len() != config.num_scores {
                    return Err(Error::DimensionMismatch {
                        context: "policy action",
                        expected: config.num_scores,
                        got: action.values.len(),
                    });
                }
                if action.clip(config.action_max) {
                    clipped += 1;
                }
                let step = user.step(&action, config)?;
                policy.on_request(&ctx, &state, &action, &step.feedback)?;
                tally.reward += immediate_reward(&step.feedback);
                tally.requests += 1;
                requests.push(RequestRecord {
                    state,
                    action,
                    feedback: step.feedback,
                });
                state = step.next_state;
                if let Some(t) = step.returning_time {
                    tally.return_days += t;
                    tally.day1 += usize::from(t == 1.0);
                    tally.sessions += 1;
                    sessions.push(SessionRecord {
                        user_id: user.user_id,
                        group: user.group,
                        session_index: session_counts[u],
                        requests,
                        returning_time: Some(t),
                    });
                    session_counts[u] += 1;
                    next_day[u] = day + t as usize;
                    pending[u] = Some((ctx, t, state));
                    break;
                }
            }
        }
    }
    for slot in pending.iter_mut() {
        if let Some((ctx, t, s)) = slot.take() {
            policy.on_session_closed(&ctx, t, &s)?;
        }
    }
    if clipped > 0 {
        log::warn!("clipped {clipped} out-of-range actions to [0, {}]", config.action_max);
    }

    let s = tally.sessions.max(1) as f64;
    let metrics = EpisodeMetrics {
        avg_return_day: tally.return_days / s,
        day1_retention: tally.day1 as f64 / s,
        mean_immediate_reward: tally.reward / tally.requests.max(1) as f64,
        sessions: tally.sessions,
        requests: tally.requests,
        clipped_actions: clipped,
    };
    Ok(EpisodeOutcome { sessions, metrics })
}

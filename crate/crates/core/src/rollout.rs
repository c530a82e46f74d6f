//! Drives an off-policy learner through simulated episodes.

use crate::error::Result;
use crate::mdp::{ActionVector, ImmediateFeedback, UserGroup, UserState};
use crate::simenv::{Policy, RequestContext};

/// What an off-policy trainer exposes to the episode loop.
pub trait Learner {
    fn act(&mut self, state: &UserState, group: UserGroup, explore: bool) -> Result<ActionVector>;
    fn open_session(&mut self, user_id: u64, group: UserGroup) -> Result<()>;
    fn record_request(
        &mut self,
        user_id: u64,
        state: &UserState,
        action: &ActionVector,
        feedback: &ImmediateFeedback,
    ) -> Result<()>;
    fn close_session(&mut self, user_id: u64, returning_time: f64, next_state: &UserState) -> Result<()>;
    /// Whether the replay buffer holds enough samples to train.
    fn ready(&self) -> bool;
    fn train_every(&self) -> usize;
    fn train_step(&mut self) -> Result<()>;
}

/// A [`Policy`] view of a learner. With `learn` set, transitions go to the
/// replay buffer and a train step runs every `train_every` requests.
pub struct Rollout<'a, L: Learner + ?Sized> {
    learner: &'a mut L,
    explore: bool,
    learn: bool,
    requests: usize,
}

impl<'a, L: Learner + ?Sized> Rollout<'a, L> {
    pub fn training(learner: &'a mut L) -> Self {
        Self {
            learner,
            explore: true,
            learn: true,
            requests: 0,
        }
    }

    pub fn evaluation(learner: &'a mut L) -> Self {
        Self {
            learner,
            explore: false,
            learn: false,
            requests: 0,
        }
    }
}

impl<L: Learner + ?Sized> Policy for Rollout<'_, L> {
    fn act(&mut self, ctx: &RequestContext, state: &UserState) -> Result<ActionVector> {
        self.learner.act(state, ctx.group, self.explore)
    }

    fn on_session_start(&mut self, ctx: &RequestContext) -> Result<()> {
        if self.learn {
            self.learner.open_session(ctx.user_id, ctx.group)?;
        }
        Ok(())
    }

    fn on_request(
        &mut self,
        ctx: &RequestContext,
        state: &UserState,
        action: &ActionVector,
        feedback: &ImmediateFeedback,
    ) -> Result<()> {
        if !self.learn {
            return Ok(());
        }
        self.learner.record_request(ctx.user_id, state, action, feedback)?;
        self.requests += 1;
        if self.requests % self.learner.train_every() == 0 && self.learner.ready() {
            self.learner.train_step()?;
        }
        Ok(())
    }

    fn on_session_closed(&mut self, ctx: &RequestContext, returning_time: f64, next_state: &UserState) -> Result<()> {
        if self.learn {
            self.learner.close_session(ctx.user_id, returning_time, next_state)?;
        }
        Ok(())
    }
}

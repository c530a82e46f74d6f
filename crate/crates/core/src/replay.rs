//! Replay storage that holds a session's transitions back until its
//! returning time is known.

use std::collections::{BTreeMap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdp::{
    immediate_reward, ActionVector, ImmediateFeedback, RequestRecord, SessionRecord,
    TransitionSample, UserGroup, UserState,
};

pub const DEFAULT_CAPACITY: usize = 200_000;

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    gamma: f64,
    samples: VecDeque<TransitionSample>,
    pending: BTreeMap<u64, SessionRecord>,
    next_session_index: BTreeMap<u64, usize>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, gamma: f64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidConfig("replay capacity must be positive".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidConfig(format!("gamma must be in [0, 1), got {gamma}")));
        }
        Ok(Self {
            capacity,
            gamma,
            samples: VecDeque::with_capacity(capacity.min(1 << 16)),
            pending: BTreeMap::new(),
            next_session_index: BTreeMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn samples(&self) -> impl Iterator<Item = &TransitionSample> {
        self.samples.iter()
    }

    pub fn pending_session(&self, user_id: u64) -> Option<&SessionRecord> {
        self.pending.get(&user_id)
    }

    pub fn pending_count(&self) -> usize {
        self.pending.len()
    }

    /// Starts a session for `user_id`. A previous session must be closed first.
    pub fn open_session(&mut self, user_id: u64, group: UserGroup) -> Result<()> {
        if self.pending.contains_key(&user_id) {
            return Err(Error::InvalidConfig(format!(
                "user {user_id} already has an open session"
            )));
        }
        let idx = self.next_session_index.entry(user_id).or_insert(0);
        self.pending.insert(
            user_id,
            SessionRecord {
                user_id,
                group,
                session_index: *idx,
                requests: Vec::new(),
                returning_time: None,
            },
        );
        *idx += 1;
        Ok(())
    }

    pub fn push_request(
        &mut self,
        user_id: u64,
        state: UserState,
        action: ActionVector,
        feedback: ImmediateFeedback,
    ) -> Result<()> {
        let session = self
            .pending
            .get_mut(&user_id)
            .ok_or(Error::NoPendingSession(user_id))?;
        session.requests.push(RequestRecord {
            state,
            action,
            feedback,
        });
        Ok(())
    }

    /// Finalizes the open session of `user_id`.
    ///
    /// `next_state` is the opening state of the user's following session; it
    /// becomes the bootstrap state of the terminal transition. `retention_reward`
    /// maps the closed session (with its returning time filled in) to the
    /// reward stored on the terminal sample. Returns the number of appended
    /// transitions.
    pub fn close_session<F>(
        &mut self,
        user_id: u64,
        returning_time: f64,
        next_state: UserState,
        retention_reward: F,
    ) -> Result<usize>
    where
        F: FnOnce(&SessionRecord) -> f64,
    {
        if !returning_time.is_finite() || returning_time < 0.0 {
            return Err(Error::InvalidReturningTime(returning_time));
        }
        let mut session = self
            .pending
            .remove(&user_id)
            .ok_or(Error::NoPendingSession(user_id))?;
        if session.requests.is_empty() {
            return Err(Error::EmptySession(user_id));
        }
        session.returning_time = Some(returning_time);
        let terminal_reward = retention_reward(&session);

        let n = session.requests.len();
        let group = session.group;
        let mut requests = session.requests.into_iter().peekable();
        let mut appended = 0;
        while let Some(req) = requests.next() {
            let terminal = requests.peek().is_none();
            let next = match requests.peek() {
                Some(r) => r.state.clone(),
                None => next_state.clone(),
            };
            self.push_sample(TransitionSample {
                immediate_reward: immediate_reward(&req.feedback),
                intrinsic_reward: 0.0,
                retention_reward: if terminal { terminal_reward } else { 0.0 },
                state: req.state,
                action: req.action,
                next_state: next,
                terminal,
                gamma_it: if terminal { self.gamma } else { 1.0 },
                user_group: group,
                returning_time: terminal.then_some(returning_time),
            });
            appended += 1;
        }
        debug_assert_eq!(appended, n);
        Ok(appended)
    }

    /// Drops the open session of `user_id` without emitting transitions.
    pub fn discard_session(&mut self, user_id: u64) -> Option<SessionRecord> {
        self.pending.remove(&user_id)
    }

    pub fn push_sample(&mut self, sample: TransitionSample) {
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(sample);
    }

    /// Uniform sample without replacement, deterministic in `seed`.
    pub fn sample_batch(&self, batch_size: usize, seed: u64) -> Result<Vec<&TransitionSample>> {
        if batch_size > self.samples.len() {
            return Err(Error::InsufficientSamples {
                requested: batch_size,
                available: self.samples.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(rand::seq::index::sample(&mut rng, self.samples.len(), batch_size)
            .into_iter()
            .map(|i| &self.samples[i])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(depth: f64, tag: f64) -> UserState {
        UserState {
            profile: vec![tag],
            history: vec![0.0],
            context: vec![depth, 0.0],
            candidate_summary: vec![0.0],
        }
    }

    fn fb(w: f64) -> ImmediateFeedback {
        ImmediateFeedback {
            watch_time_s: w,
            interactions: 1,
        }
    }

    fn action() -> ActionVector {
        ActionVector::constant(vec![1.0, 2.0], 0.5)
    }

    fn fill_session(buf: &mut ReplayBuffer, user: u64, n: usize, tag: f64) {
        buf.open_session(user, UserGroup::LowActive).unwrap();
        for t in 0..n {
            buf.push_request(user, state(t as f64 + 1.0, tag), action(), fb(t as f64))
                .unwrap();
        }
    }

    #[test]
    fn three_request_session_discount_rule() {
        let mut buf = ReplayBuffer::new(100, 0.95).unwrap();
        fill_session(&mut buf, 7, 3, 0.0);
        let n = buf
            .close_session(7, 2.0, state(1.0, 9.0), |s| s.returning_time.unwrap())
            .unwrap();
        assert_eq!(n, 3);
        let s: Vec<_> = buf.samples().collect();
        for x in &s[..2] {
            assert!(!x.terminal);
            assert_eq!(x.gamma_it, 1.0);
            assert_eq!(x.retention_reward, 0.0);
        }
        assert!(s[2].terminal);
        assert_eq!(s[2].gamma_it, 0.95);
        assert_eq!(s[2].retention_reward, 2.0);
        assert_eq!(s[0].next_state, s[1].state);
        assert_eq!(s[2].next_state.profile[0], 9.0);
        assert_eq!(s[1].immediate_reward, 2.0);
        for x in s {
            x.check_invariants(0.95).unwrap();
        }
        assert_eq!(buf.pending_count(), 0);
    }

    #[test]
    fn single_request_session_is_terminal() {
        let mut buf = ReplayBuffer::new(10, 0.9).unwrap();
        fill_session(&mut buf, 1, 1, 0.0);
        assert_eq!(buf.close_session(1, 1.0, state(1.0, 0.0), |_| 0.5).unwrap(), 1);
        let s = buf.samples().next().unwrap();
        assert!(s.terminal && s.gamma_it == 0.9 && s.retention_reward == 0.5);
    }

    #[test]
    fn consecutive_sessions_link_only_through_terminal() {
        let mut buf = ReplayBuffer::new(100, 0.9).unwrap();
        fill_session(&mut buf, 3, 2, 1.0);
        let opening = state(1.0, 2.0);
        buf.close_session(3, 4.0, opening.clone(), |_| 4.0).unwrap();
        fill_session(&mut buf, 3, 2, 2.0);
        buf.close_session(3, 1.0, state(1.0, 3.0), |_| 1.0).unwrap();
        let s: Vec<_> = buf.samples().collect();
        // session one: internal link, then bootstrap into session two's opening state
        assert_eq!(s[0].next_state, s[1].state);
        assert_eq!(s[1].next_state, opening);
        // session two links within itself only
        assert_eq!(s[2].next_state, s[3].state);
        assert_eq!(s[2].state.profile[0], 2.0);
        assert!(!s[2].terminal && s[3].terminal);
    }

    #[test]
    fn close_errors() {
        let mut buf = ReplayBuffer::new(10, 0.9).unwrap();
        assert!(matches!(
            buf.close_session(5, 1.0, state(1.0, 0.0), |_| 0.0),
            Err(Error::NoPendingSession(5))
        ));
        fill_session(&mut buf, 5, 1, 0.0);
        assert!(matches!(
            buf.close_session(5, -1.0, state(1.0, 0.0), |_| 0.0),
            Err(Error::InvalidReturningTime(_))
        ));
        // rejected close leaves the session pending
        assert!(buf.pending_session(5).is_some());
        assert!(buf.open_session(5, UserGroup::HighActive).is_err());
    }

    #[test]
    fn fifo_eviction_respects_capacity() {
        let mut buf = ReplayBuffer::new(4, 0.9).unwrap();
        for u in 0..3 {
            fill_session(&mut buf, u, 2, u as f64);
            buf.close_session(u, 1.0, state(1.0, 0.0), |_| 0.0).unwrap();
        }
        assert_eq!(buf.len(), 4);
        assert_eq!(buf.samples().next().unwrap().state.profile[0], 1.0);
    }

    #[test]
    fn sampling_contract() {
        let mut buf = ReplayBuffer::new(100, 0.9).unwrap();
        for u in 0..10 {
            fill_session(&mut buf, u, 1, u as f64);
            buf.close_session(u, 1.0, state(1.0, 0.0), |_| 0.0).unwrap();
        }
        let all = buf.sample_batch(10, 42).unwrap();
        let mut tags: Vec<i64> = all.iter().map(|s| s.state.profile[0] as i64).collect();
        tags.sort_unstable();
        assert_eq!(tags, (0..10).collect::<Vec<_>>());

        let a = buf.sample_batch(5, 7).unwrap();
        let b = buf.sample_batch(5, 7).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            buf.sample_batch(11, 0),
            Err(Error::InsufficientSamples { requested: 11, available: 10 })
        ));
    }
}

//! Network inputs derived from states and closed sessions.

use crate::mdp::{SessionRecord, UserState};

/// Divisor applied to the session depth before it enters a network.
pub const DEPTH_SCALE: f64 = 10.0;

/// Flat network input for a state; identical to [`UserState::features`] except
/// that the raw session depth is rescaled.
pub fn encode_state(state: &UserState) -> Vec<f64> {
    let mut out = Vec::with_capacity(state.dim());
    encode_state_into(state, &mut out);
    out
}

pub fn encode_state_into(state: &UserState, out: &mut Vec<f64>) {
    let start = out.len();
    state.write_features(out);
    let depth_at = start + state.profile.len() + state.history.len();
    out[depth_at] /= DEPTH_SCALE;
}

/// Session-level classifier input: user profile (which carries the group
/// flag), session length, total watch time and total interactions.
pub fn session_features(session: &SessionRecord) -> Vec<f64> {
    let profile = session
        .requests
        .first()
        .map(|r| r.state.profile.clone())
        .unwrap_or_default();
    let total = session.total_feedback();
    let mut x = profile;
    x.push(session.len() as f64 / DEPTH_SCALE);
    x.push(total.watch_time_s / 600.0);
    x.push(f64::from(total.interactions) / 20.0);
    x
}

pub fn session_feature_dim(profile_dim: usize) -> usize {
    profile_dim + 3
}

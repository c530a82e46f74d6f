//! Two-session toy MDP with a known cumulative returning time.
//!
//! Session one has two requests and returns after `t1` days; session two has
//! one request and returns after `t2` days, after which the user sits in an
//! absorbing state with zero reward. Under a fixed policy the first request's
//! retention value is `t1 + gamma * t2`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mdp::{ActionVector, StateLayout, TransitionSample, UserGroup, UserState};
use crate::rlur::{encode_state, RlurHyper, RlurTrainer, TrainBatch, Variant};

pub const TOY_T1: f64 = 2.0;
pub const TOY_T2: f64 = 4.0;
pub const TOY_TOLERANCE: f64 = 1e-2;
const TOY_STATES: usize = 4;
const TOY_ACTION_DIM: usize = 2;
const TOY_ACTION_MAX: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyReport {
    pub gamma: f64,
    pub expected: f64,
    pub estimate: f64,
    pub steps: usize,
    pub passed: bool,
}

pub fn toy_layout() -> StateLayout {
    StateLayout {
        profile: TOY_STATES,
        history: 1,
        context: 2,
        candidate_summary: 1,
    }
}

/// One-hot state `index`; 0..=2 are the three requests, 3 is absorbing.
pub fn toy_state(index: usize) -> UserState {
    let mut profile = vec![0.0; TOY_STATES];
    profile[index] = 1.0;
    UserState {
        profile,
        history: vec![0.0],
        context: vec![1.0, 0.0],
        candidate_summary: vec![0.0],
    }
}

/// The four transitions of the toy MDP. Actions are whatever `policy`
/// returns for each state, so the data is on-policy for a fixed actor.
pub fn toy_transitions<F>(t1: f64, t2: f64, gamma: f64, mut policy: F) -> Result<Vec<TransitionSample>>
where
    F: FnMut(&UserState) -> Result<Vec<f64>>,
{
    // (from, to, reward, terminal)
    let edges = [(0, 1, 0.0, false), (1, 2, t1, true), (2, 3, t2, true), (3, 3, 0.0, true)];
    edges
        .iter()
        .map(|&(from, to, reward, terminal)| {
            let state = toy_state(from);
            let a = policy(&state)?;
            Ok(TransitionSample {
                action: ActionVector::constant(a, 0.1),
                next_state: toy_state(to),
                state,
                immediate_reward: 0.0,
                intrinsic_reward: 0.0,
                retention_reward: reward,
                terminal,
                gamma_it: if terminal { gamma } else { 1.0 },
                user_group: UserGroup::LowActive,
                returning_time: terminal.then_some(reward),
            })
        })
        .collect()
}

/// Fits the retention critic of a retention-only trainer on the toy MDP by
/// full-batch TD updates under its (frozen) initial actor.
pub fn toy_mdp_check(gamma: f64, seed: u64) -> Result<ToyReport> {
    let hyper = RlurHyper {
        gamma,
        reward_normalization: false,
        critic_lr: 3e-3,
        tau: 0.05,
        hidden: vec![32, 32],
        ..Default::default()
    };
    let mut trainer = RlurTrainer::new(Variant::Naive, hyper, toy_layout(), TOY_ACTION_DIM, TOY_ACTION_MAX, seed)?;
    let actor = trainer.actors()[0].clone();
    let samples = toy_transitions(TOY_T1, TOY_T2, gamma, |s| Ok(actor.mean_sigma(&encode_state(s))?.0))?;
    let refs: Vec<&TransitionSample> = samples.iter().collect();
    let batch = TrainBatch::from_samples(&refs);
    let expected = TOY_T1 + gamma * TOY_T2;
    let first = batch.select(&[0]);

    let max_steps = 20_000;
    let mut steps = 0;
    let mut estimate = f64::NAN;
    while steps < max_steps {
        for _ in 0..500 {
            trainer.retention_td_update(&batch)?;
            trainer.retention_critic_mut().soft_update()?;
        }
        steps += 500;
        estimate = trainer
            .retention_critic()
            .values(first.states.view(), first.actions.view())?[0];
        // stop once both the estimate and its bootstrap target have settled
        let target = trainer.retention_td_targets(&batch)?;
        let online = trainer
            .retention_critic()
            .values(batch.states.view(), batch.actions.view())?;
        let settled = target.iter().zip(&online).all(|(t, q)| (t - q).abs() < 1e-3);
        if settled && (estimate - expected).abs() < TOY_TOLERANCE / 4.0 {
            break;
        }
    }
    Ok(ToyReport {
        gamma,
        expected,
        estimate,
        steps,
        passed: (estimate - expected).abs() <= TOY_TOLERANCE,
    })
}

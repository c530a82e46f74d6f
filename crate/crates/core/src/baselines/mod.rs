//! Comparison methods: constant-weight cross-entropy search, TD3, and the
//! retention-only variants of the RLUR trainer.

mod cem;
mod td3;

pub use cem::{cem_iterate, CemConfig, CemState};
pub use td3::{Td3Hyper, Td3Losses, Td3Targets, Td3Trainer};

use crate::error::Result;
use crate::mdp::StateLayout;
use crate::rlur::{RlurHyper, RlurTrainer, Variant};

/// Hyperparameters of a retention-only trainer: raw returning time, no
/// normalization, one actor, discount `gamma`. Everything else follows `base`.
pub fn naive_hyper(base: &RlurHyper, gamma: f64) -> RlurHyper {
    RlurHyper {
        gamma,
        reward_normalization: false,
        ..base.clone()
    }
}

/// A trainer with only the retention critic and a single actor.
pub fn rlur_naive(
    base: &RlurHyper,
    gamma: f64,
    layout: StateLayout,
    action_dim: usize,
    action_max: f64,
    seed: u64,
) -> Result<RlurTrainer> {
    RlurTrainer::new(Variant::Naive, naive_hyper(base, gamma), layout, action_dim, action_max, seed)
}

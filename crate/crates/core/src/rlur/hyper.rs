use serde::{Deserialize, Serialize};

use super::losses::SoftRegDirection;
use crate::error::{Error, Result};

/// Trainer hyperparameters shared by RLUR and its naive variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlurHyper {
    pub gamma: f64,
    pub lambda_t: f64,
    pub lambda_i: f64,
    /// Percentile (0..100) of returning times that separates short from long.
    pub beta: f64,
    /// Upper clip of the normalized retention reward.
    pub alpha: f64,
    /// Soft-regularization coefficient.
    pub reg_lambda: f64,
    pub soft_reg_direction: SoftRegDirection,
    /// Feed the normalized reward (rather than raw days) to the retention critic.
    pub reward_normalization: bool,
    /// Multiplier on immediate-critic rewards, i.e. the unit Q_I is learned in.
    pub immediate_scale: f64,
    pub batch_size: usize,
    pub min_fill: usize,
    /// Environment requests per train step.
    pub train_every: usize,
    pub replay_capacity: usize,
    pub hidden: Vec<usize>,
    pub rnd_embedding: usize,
    pub critic_lr: f64,
    pub actor_lr: f64,
    pub tau: f64,
    /// Exploration standard deviation the sigma head starts at.
    pub sigma_init: f64,
    pub sigma_floor: f64,
    /// Closed sessions between T_beta refreshes.
    pub t_beta_refresh: usize,
    /// Sliding window of closed sessions for T_beta and classifier batches.
    pub t_beta_window: usize,
}

impl Default for RlurHyper {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            lambda_t: 1.0,
            lambda_i: 1.0,
            beta: 60.0,
            alpha: 3.0,
            reg_lambda: 1.5,
            soft_reg_direction: SoftRegDirection::AsWritten,
            reward_normalization: true,
            immediate_scale: 1.0 / 60.0,
            batch_size: 64,
            min_fill: 2000,
            train_every: 8,
            replay_capacity: 100_000,
            hidden: vec![64, 64],
            rnd_embedding: 16,
            critic_lr: 1e-3,
            actor_lr: 1e-4,
            tau: 0.005,
            sigma_init: 0.4,
            sigma_floor: 1e-3,
            t_beta_refresh: 1000,
            t_beta_window: 10_000,
        }
    }
}

impl RlurHyper {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must be in [0, 1), got {}", self.gamma));
        }
        if self.lambda_t < 0.0 || self.lambda_i < 0.0 || self.reg_lambda < 0.0 {
            return bad("lambda_t, lambda_i and reg_lambda must be non-negative".into());
        }
        if !(self.beta > 0.0 && self.beta < 100.0) {
            return bad(format!("beta must be in (0, 100), got {}", self.beta));
        }
        if !(self.alpha > 0.0) {
            return bad("alpha must be positive".into());
        }
        if !(self.immediate_scale > 0.0) {
            return bad("immediate_scale must be positive".into());
        }
        if self.batch_size == 0 || self.train_every == 0 || self.replay_capacity == 0 {
            return bad("batch_size, train_every and replay_capacity must be positive".into());
        }
        if self.min_fill < self.batch_size {
            return bad("min_fill must be at least batch_size".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) || self.rnd_embedding == 0 {
            return bad("hidden layer widths must be positive".into());
        }
        if !(self.critic_lr >= 0.0 && self.actor_lr >= 0.0) {
            return bad("learning rates must be non-negative".into());
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must be in (0, 1], got {}", self.tau));
        }
        if !(self.sigma_floor > 0.0 && self.sigma_init > self.sigma_floor) {
            return bad("need sigma_init > sigma_floor > 0".into());
        }
        if self.t_beta_refresh == 0 || self.t_beta_window == 0 {
            return bad("T_beta refresh and window must be positive".into());
        }
        Ok(())
    }
}

//! Twin-delayed deterministic policy gradient over per-request rewards.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::approx::{Activation, Checkpoint, Mlp, TargetCopy};
use crate::error::{Error, Result};
use crate::mdp::{ActionVector, ImmediateFeedback, StateLayout, TransitionSample, UserGroup, UserState};
use crate::replay::ReplayBuffer;
use crate::rlur::{actor_loss, encode_state, Critic, CriticTerm, Learnable, TrainBatch};
use crate::rollout::Learner;
use crate::seeding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Td3Hyper {
    pub gamma: f64,
    /// Multiplier on the immediate reward (the unit the critics learn in).
    pub immediate_scale: f64,
    /// Multiplier on the returning time subtracted at session ends.
    pub retention_weight: f64,
    /// Target-policy smoothing noise, as a fraction of the action bound.
    pub policy_noise: f64,
    /// Clip of the smoothing noise, as a fraction of the action bound.
    pub noise_clip: f64,
    /// Critic steps per actor step.
    pub policy_delay: usize,
    /// Gaussian behavior noise, as a fraction of the action bound.
    pub exploration_noise: f64,
    /// Minimum over two critics; a single critic gives DDPG targets.
    pub twin: bool,
    pub batch_size: usize,
    pub min_fill: usize,
    pub train_every: usize,
    pub replay_capacity: usize,
    pub hidden: Vec<usize>,
    pub critic_lr: f64,
    pub actor_lr: f64,
    pub tau: f64,
}

impl Default for Td3Hyper {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            immediate_scale: 1.0 / 60.0,
            retention_weight: 1.0,
            policy_noise: 0.2,
            noise_clip: 0.5,
            policy_delay: 2,
            exploration_noise: 0.1,
            twin: true,
            batch_size: 64,
            min_fill: 2000,
            train_every: 8,
            replay_capacity: 100_000,
            hidden: vec![64, 64],
            critic_lr: 1e-3,
            actor_lr: 1e-4,
            tau: 0.005,
        }
    }
}

impl Td3Hyper {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("TD3 gamma must be in [0, 1)");
        }
        if self.policy_noise < 0.0 || self.noise_clip < 0.0 || self.exploration_noise < 0.0 {
            return bad("TD3 noise scales must be non-negative");
        }
        if self.policy_delay == 0 || self.batch_size == 0 || self.train_every == 0 {
            return bad("TD3 policy delay, batch size and train interval must be positive");
        }
        if self.min_fill < self.batch_size || self.replay_capacity < self.min_fill {
            return bad("TD3 needs batch_size <= min_fill <= replay_capacity");
        }
        if !(self.critic_lr >= 0.0 && self.actor_lr >= 0.0 && self.tau > 0.0 && self.tau <= 1.0) {
            return bad("TD3 learning rates must be non-negative and tau in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Td3Losses {
    pub step: u64,
    pub critic_1: f64,
    pub critic_2: Option<f64>,
    /// Present on delayed actor steps only.
    pub actor: Option<f64>,
}

impl Td3Losses {
    pub const HEADER: [&'static str; 4] = ["step", "critic_1", "critic_2", "actor"];

    pub fn values(&self) -> Vec<Option<f64>> {
        vec![Some(self.critic_1), self.critic_2, self.actor]
    }
}

/// Bootstrapped targets of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Td3Targets {
    /// Minimum over the critics, the regression target of both.
    pub min: Vec<f64>,
    /// Each critic's own target, before the minimum.
    pub per_critic: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Td3Trainer {
    hyper: Td3Hyper,
    action_dim: usize,
    action_max: f64,
    actor: Learnable,
    actor_target: TargetCopy,
    critics: Vec<Critic>,
    buffer: ReplayBuffer,
    seed: u64,
    steps: u64,
    explore_rng: ChaCha8Rng,
    losses: Vec<Td3Losses>,
    failed_batch: Option<Vec<TransitionSample>>,
}

impl Td3Trainer {
    pub fn new(hyper: Td3Hyper, layout: StateLayout, action_dim: usize, action_max: f64, seed: u64) -> Result<Self> {
        hyper.validate()?;
        if action_dim == 0 || !(action_max > 0.0) {
            return Err(Error::InvalidConfig("action space must be non-empty".into()));
        }
        let sd = layout.dim();
        let init = |name: &str| seeding::rng(seed, "init", seeding::derive(0, name, 0));
        let mut dims = vec![sd];
        dims.extend_from_slice(&hyper.hidden);
        dims.push(action_dim);
        let actor_net = Mlp::new(
            &dims,
            vec![Activation::ScaledSigmoid(action_max); action_dim],
            &mut init("td3_actor"),
        )?;
        let actor_target = TargetCopy::new(&actor_net, hyper.tau)?;
        let names: &[&str] = if hyper.twin {
            &["td3_critic_1", "td3_critic_2"]
        } else {
            &["td3_critic_1"]
        };
        let critics = names
            .iter()
            .map(|n| Critic::new(sd, action_dim, &hyper.hidden, hyper.critic_lr, hyper.tau, &mut init(n)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            actor: Learnable::new(actor_net, hyper.actor_lr),
            actor_target,
            critics,
            // the buffer's mixed discount is unused: TD3 discounts uniformly
            buffer: ReplayBuffer::new(hyper.replay_capacity, hyper.gamma)?,
            explore_rng: seeding::rng(seed, "explore", 0),
            hyper,
            action_dim,
            action_max,
            seed,
            steps: 0,
            losses: Vec::new(),
            failed_batch: None,
        })
    }

    pub fn hyper(&self) -> &Td3Hyper {
        &self.hyper
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn buffer_mut(&mut self) -> &mut ReplayBuffer {
        &mut self.buffer
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor.net
    }

    pub fn critics(&self) -> &[Critic] {
        &self.critics
    }

    pub fn critics_mut(&mut self) -> &mut [Critic] {
        &mut self.critics
    }

    pub fn drain_losses(&mut self) -> Vec<Td3Losses> {
        std::mem::take(&mut self.losses)
    }

    pub fn take_failed_batch(&mut self) -> Option<Vec<TransitionSample>> {
        self.failed_batch.take()
    }

    /// Deterministic action plus clipped Gaussian noise when exploring.
    pub fn act(&mut self, state: &UserState, explore: bool) -> Result<ActionVector> {
        let mu = self.actor.net.forward_one(&encode_state(state))?;
        let sigma = self.hyper.exploration_noise * self.action_max;
        let values = if explore && sigma > 0.0 {
            mu.iter()
                .map(|m| {
                    let z: f64 = StandardNormal.sample(&mut self.explore_rng);
                    (m + sigma * z).clamp(0.0, self.action_max)
                })
                .collect()
        } else {
            mu.clone()
        };
        // behavior sigma must stay positive even with exploration off
        let behavior_sigma = vec![sigma.max(1e-6); self.action_dim];
        Ok(ActionVector {
            values,
            behavior_mu: mu,
            behavior_sigma,
        })
    }

    /// Per-request reward: scaled immediate reward, minus the returning time
    /// on a session's last request.
    pub fn rewards(&self, batch: &TrainBatch) -> Vec<f64> {
        batch
            .immediate
            .iter()
            .zip(&batch.retention)
            .map(|(i, t)| self.hyper.immediate_scale * i - self.hyper.retention_weight * t)
            .collect()
    }

    /// Target-actor actions at the next states with clipped smoothing noise.
    pub fn smoothed_next_actions(&self, batch: &TrainBatch, noise_seed: u64) -> Result<Array2<f64>> {
        let mut a = self.actor_target.net().forward(batch.next_states.view())?;
        let scale = self.hyper.policy_noise * self.action_max;
        if scale > 0.0 {
            let clip = self.hyper.noise_clip * self.action_max;
            let normal = Normal::new(0.0, scale).expect("positive scale");
            let mut rng = seeding::rng(noise_seed, "td3-smoothing", 0);
            a.mapv_inplace(|v| (v + normal.sample(&mut rng).clamp(-clip, clip)).clamp(0.0, self.action_max));
        }
        Ok(a)
    }

    pub fn critic_targets(&self, batch: &TrainBatch, noise_seed: u64) -> Result<Td3Targets> {
        let next_a = self.smoothed_next_actions(batch, noise_seed)?;
        let rewards = self.rewards(batch);
        let per_critic = self
            .critics
            .iter()
            .map(|c| {
                let q = c.target_values(batch.next_states.view(), next_a.view())?;
                Ok(rewards
                    .iter()
                    .zip(q)
                    .map(|(r, q)| r + self.hyper.gamma * q)
                    .collect::<Vec<f64>>())
            })
            .collect::<Result<Vec<_>>>()?;
        let min = (0..batch.len())
            .map(|i| per_critic.iter().map(|t| t[i]).fold(f64::INFINITY, f64::min))
            .collect();
        Ok(Td3Targets { min, per_critic })
    }

    /// `-Q_1(s, mu(s))` averaged over the batch, and its actor gradient.
    pub fn actor_objective(&self, batch: &TrainBatch) -> Result<(f64, crate::approx::MlpGrads)> {
        let terms = [CriticTerm {
            critic: self.critics[0].net(),
            coefficient: -1.0,
        }];
        let weights = vec![1.0; batch.len()];
        actor_loss(&self.actor.net, self.action_dim, batch.states.view(), &weights, &terms)
    }

    pub fn train_on(&mut self, step: u64, batch: &TrainBatch) -> Result<Td3Losses> {
        let targets = self.critic_targets(batch, seeding::derive(self.seed, "td3-noise", step))?;
        let mut out = Td3Losses {
            step,
            ..Default::default()
        };
        for (k, critic) in self.critics.iter_mut().enumerate() {
            let loss = critic.fit(batch.states.view(), batch.actions.view(), &targets.min, "TD3 critic")?;
            if !loss.is_finite() {
                return Err(Error::GradientBlowUp("TD3 critic loss".into()));
            }
            match k {
                0 => out.critic_1 = loss,
                _ => out.critic_2 = Some(loss),
            }
        }
        if (step + 1) % self.hyper.policy_delay as u64 == 0 {
            let (loss, grads) = self.actor_objective(batch)?;
            if !loss.is_finite() {
                return Err(Error::GradientBlowUp("TD3 actor loss".into()));
            }
            self.actor.apply(&grads, "TD3 actor")?;
            out.actor = Some(loss);
            self.actor_target.soft_update(&self.actor.net)?;
            for c in &mut self.critics {
                c.soft_update()?;
            }
        }
        Ok(out)
    }

    pub fn train_step(&mut self) -> Result<Td3Losses> {
        let step = self.steps;
        self.steps += 1;
        let seed = seeding::derive(self.seed, "batch", step);
        let samples = self.buffer.sample_batch(self.hyper.batch_size, seed)?;
        let batch = TrainBatch::from_samples(&samples);
        let owned: Vec<TransitionSample> = samples.iter().map(|s| (*s).clone()).collect();
        match self.train_on(step, &batch) {
            Ok(l) => {
                self.losses.push(l);
                Ok(l)
            }
            Err(e) => {
                self.failed_batch = Some(owned);
                Err(e)
            }
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.push_mlp("actor", &self.actor.net);
        ck.push_mlp("actor_target", self.actor_target.net());
        for (k, c) in self.critics.iter().enumerate() {
            ck.push_mlp(&format!("critic_{}", k + 1), c.net());
            ck.push_mlp(&format!("critic_{}_target", k + 1), c.target.net());
        }
        ck
    }
}

impl Learner for Td3Trainer {
    fn act(&mut self, state: &UserState, _group: UserGroup, explore: bool) -> Result<ActionVector> {
        Td3Trainer::act(self, state, explore)
    }

    fn open_session(&mut self, user_id: u64, group: UserGroup) -> Result<()> {
        self.buffer.open_session(user_id, group)
    }

    fn record_request(
        &mut self,
        user_id: u64,
        state: &UserState,
        action: &ActionVector,
        feedback: &ImmediateFeedback,
    ) -> Result<()> {
        self.buffer
            .push_request(user_id, state.clone(), action.clone(), *feedback)
    }

    fn close_session(&mut self, user_id: u64, returning_time: f64, next_state: &UserState) -> Result<()> {
        self.buffer
            .close_session(user_id, returning_time, next_state.clone(), |_| returning_time)
            .map(|_| ())
    }

    fn ready(&self) -> bool {
        self.buffer.len() >= self.hyper.min_fill
    }

    fn train_every(&self) -> usize {
        self.hyper.train_every
    }

    fn train_step(&mut self) -> Result<()> {
        Td3Trainer::train_step(self).map(|_| ())
    }
}

use ndarray::{Array2, ArrayView2};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::batch::TrainBatch;
use super::features::{encode_state, session_feature_dim, session_features};
use super::hyper::RlurHyper;
use super::losses::{
    actor_loss, classifier_batch_loss, immediate_targets, normalized_retention_reward, retention_targets,
    rnd_intrinsic, rnd_loss, soft_reg_weight, CriticTerm,
};
use super::nets::{Critic, GaussianActor, ReturnClassifier, RndPair};
use super::returns::ReturnWindow;
use crate::approx::{gaussian_log_density, Checkpoint};
use crate::error::{Error, Result};
use crate::mdp::{ActionVector, ImmediateFeedback, SessionRecord, StateLayout, TransitionSample, UserGroup, UserState};
use crate::replay::ReplayBuffer;
use crate::rollout::Learner;
use crate::seeding;

/// Which parts of the method a trainer instantiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Dual actors, retention and immediate critics, novelty bonus, classifier
    /// normalization and soft regularization.
    Full,
    /// A single actor trained against the retention critic alone.
    Naive,
}

/// Loss scalars of one train step; `None` where a component is absent or skipped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepLosses {
    pub step: u64,
    pub loss_t: f64,
    pub loss_i: Option<f64>,
    pub loss_cls: Option<f64>,
    pub loss_rnd: Option<f64>,
    pub actor_loss_high: Option<f64>,
    pub actor_loss_low: Option<f64>,
    pub mean_w: Option<f64>,
}

impl StepLosses {
    pub const HEADER: [&'static str; 8] = [
        "step",
        "loss_T",
        "loss_I",
        "loss_cls",
        "loss_rnd",
        "actor_loss_high",
        "actor_loss_low",
        "mean_w",
    ];

    pub fn values(&self) -> Vec<Option<f64>> {
        vec![
            Some(self.loss_t),
            self.loss_i,
            self.loss_cls,
            self.loss_rnd,
            self.actor_loss_high,
            self.actor_loss_low,
            self.mean_w,
        ]
    }
}

fn finite(value: f64, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::GradientBlowUp(format!("{what} loss")))
    }
}

#[derive(Debug, Clone)]
pub struct RlurTrainer {
    hyper: RlurHyper,
    variant: Variant,
    layout: StateLayout,
    action_max: f64,
    /// `[high, low]` for the full method, a single shared actor otherwise.
    actors: Vec<GaussianActor>,
    q_t: Critic,
    q_i: Option<Critic>,
    rnd: Option<RndPair>,
    classifier: Option<ReturnClassifier>,
    returns: ReturnWindow,
    buffer: ReplayBuffer,
    seed: u64,
    steps: u64,
    explore_rng: ChaCha8Rng,
    losses: Vec<StepLosses>,
    failed_batch: Option<Vec<TransitionSample>>,
}

impl RlurTrainer {
    pub fn new(
        variant: Variant,
        hyper: RlurHyper,
        layout: StateLayout,
        action_dim: usize,
        action_max: f64,
        seed: u64,
    ) -> Result<Self> {
        hyper.validate()?;
        if action_dim == 0 || !(action_max > 0.0) {
            return Err(Error::InvalidConfig("action space must be non-empty".into()));
        }
        let sd = layout.dim();
        let h = &hyper.hidden;
        let init = |name: &str| seeding::rng(seed, "init", seeding::derive(0, name, 0));
        let actor = |name: &str| {
            GaussianActor::new(
                sd,
                h,
                action_dim,
                action_max,
                hyper.sigma_init,
                hyper.sigma_floor,
                hyper.actor_lr,
                &mut init(name),
            )
        };
        let actors = match variant {
            Variant::Full => vec![actor("actor_high")?, actor("actor_low")?],
            Variant::Naive => vec![actor("actor")?],
        };
        let q_t = Critic::new(sd, action_dim, h, hyper.critic_lr, hyper.tau, &mut init("q_t"))?;
        let (q_i, rnd) = match variant {
            Variant::Full => (
                Some(Critic::new(sd, action_dim, h, hyper.critic_lr, hyper.tau, &mut init("q_i"))?),
                Some(RndPair::new(
                    layout.history,
                    h,
                    hyper.rnd_embedding,
                    hyper.critic_lr,
                    &mut init("rnd_trainable"),
                    &mut init("rnd_fixed"),
                )?),
            ),
            Variant::Naive => (None, None),
        };
        let classifier = if hyper.reward_normalization {
            Some(ReturnClassifier::new(
                session_feature_dim(layout.profile),
                h,
                hyper.critic_lr,
                &mut init("classifier"),
            )?)
        } else {
            None
        };
        Ok(Self {
            returns: ReturnWindow::new(hyper.t_beta_window, hyper.t_beta_refresh, hyper.beta),
            buffer: ReplayBuffer::new(hyper.replay_capacity, hyper.gamma)?,
            explore_rng: seeding::rng(seed, "explore", 0),
            hyper,
            variant,
            layout,
            action_max,
            actors,
            q_t,
            q_i,
            rnd,
            classifier,
            seed,
            steps: 0,
            losses: Vec::new(),
            failed_batch: None,
        })
    }

    pub fn hyper(&self) -> &RlurHyper {
        &self.hyper
    }

    pub fn variant(&self) -> Variant {
        self.variant
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

    pub fn t_beta(&self) -> Option<f64> {
        self.returns.t_beta()
    }

    pub fn actors(&self) -> &[GaussianActor] {
        &self.actors
    }

    pub fn actors_mut(&mut self) -> &mut [GaussianActor] {
        &mut self.actors
    }

    pub fn retention_critic(&self) -> &Critic {
        &self.q_t
    }

    pub fn retention_critic_mut(&mut self) -> &mut Critic {
        &mut self.q_t
    }

    pub fn immediate_critic(&self) -> Option<&Critic> {
        self.q_i.as_ref()
    }

    pub fn immediate_critic_mut(&mut self) -> Option<&mut Critic> {
        self.q_i.as_mut()
    }

    pub fn rnd(&self) -> Option<&RndPair> {
        self.rnd.as_ref()
    }

    pub fn classifier(&self) -> Option<&ReturnClassifier> {
        self.classifier.as_ref()
    }

    /// Loss records accumulated since the last drain.
    pub fn drain_losses(&mut self) -> Vec<StepLosses> {
        std::mem::take(&mut self.losses)
    }

    /// The batch a failed train step was working on.
    pub fn take_failed_batch(&mut self) -> Option<Vec<TransitionSample>> {
        self.failed_batch.take()
    }

    pub fn actor_index(&self, group: UserGroup) -> usize {
        match (self.variant, group) {
            (Variant::Naive, _) => 0,
            (Variant::Full, UserGroup::HighActive) => 0,
            (Variant::Full, UserGroup::LowActive) => 1,
        }
    }

    /// Samples from the group's Gaussian policy (clipped to `[0, C]`) when
    /// exploring, otherwise returns its mean.
    pub fn act(&mut self, state: &UserState, group: UserGroup, explore: bool) -> Result<ActionVector> {
        let actor = &self.actors[self.actor_index(group)];
        let (mu, sigma) = actor.mean_sigma(&encode_state(state))?;
        let values = if explore {
            mu.iter()
                .zip(&sigma)
                .map(|(m, s)| {
                    let z: f64 = StandardNormal.sample(&mut self.explore_rng);
                    (m + s * z).clamp(0.0, self.action_max)
                })
                .collect()
        } else {
            mu.clone()
        };
        Ok(ActionVector {
            values,
            behavior_mu: mu,
            behavior_sigma: sigma,
        })
    }

    /// The reward stored on a closed session's terminal transition: the
    /// normalized reward when normalization is on, raw days otherwise.
    fn retention_reward(&mut self, session: &SessionRecord, returning_time: f64) -> Result<f64> {
        let Some(classifier) = &self.classifier else {
            return Ok(returning_time);
        };
        let x = session_features(session);
        self.returns.observe(x.clone(), returning_time)?;
        let t_beta = self.returns.t_beta().expect("set by observe");
        let t_prime = classifier.predict(&x)?;
        Ok(normalized_retention_reward(
            returning_time,
            t_prime,
            t_beta,
            self.hyper.alpha,
        ))
    }

    pub fn close_session(&mut self, user_id: u64, returning_time: f64, next_state: &UserState) -> Result<usize> {
        let session = self
            .buffer
            .pending_session(user_id)
            .ok_or(Error::NoPendingSession(user_id))?
            .clone();
        let reward = self.retention_reward(&session, returning_time)?;
        self.buffer
            .close_session(user_id, returning_time, next_state.clone(), |_| reward)
    }

    /// Mean action of each row's own policy.
    pub fn policy_means(&self, states: ArrayView2<f64>, groups: &[UserGroup]) -> Result<Array2<f64>> {
        if self.variant == Variant::Naive {
            return self.actors[0].means(states);
        }
        let n = self.actors[0].action_dim();
        let mut out = Array2::zeros((states.nrows(), n));
        for group in UserGroup::ALL {
            let rows: Vec<usize> = (0..groups.len()).filter(|&i| groups[i] == group).collect();
            if rows.is_empty() {
                continue;
            }
            let sub = states.select(ndarray::Axis(0), &rows);
            let means = self.actors[self.actor_index(group)].means(sub.view())?;
            for (k, &r) in rows.iter().enumerate() {
                out.row_mut(r).assign(&means.row(k));
            }
        }
        Ok(out)
    }

    /// Bootstrapped retention-critic targets for a batch.
    pub fn retention_td_targets(&self, batch: &TrainBatch) -> Result<Vec<f64>> {
        let next_actions = self.policy_means(batch.next_states.view(), &batch.groups)?;
        let next_q = self
            .q_t
            .target_values(batch.next_states.view(), next_actions.view())?;
        Ok(retention_targets(&batch.retention, &batch.gamma_it, &next_q))
    }

    /// One regression step of the retention critic. The full method and the
    /// naive variants both go through here.
    pub fn retention_td_update(&mut self, batch: &TrainBatch) -> Result<f64> {
        let targets = self.retention_td_targets(batch)?;
        let loss = self
            .q_t
            .fit(batch.states.view(), batch.actions.view(), &targets, "retention critic")?;
        finite(loss, "retention critic")
    }

    /// Novelty bonus of each row's behavior history (zero without a novelty pair).
    pub fn intrinsic_rewards(&self, history: ArrayView2<f64>) -> Result<Vec<f64>> {
        match &self.rnd {
            Some(rnd) => rnd_intrinsic(&rnd.trainable.net, &rnd.fixed, history),
            None => Ok(vec![0.0; history.nrows()]),
        }
    }

    pub fn immediate_td_targets(&self, batch: &TrainBatch) -> Result<Vec<f64>> {
        let q_i = self
            .q_i
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("variant has no immediate critic".into()))?;
        let intrinsic = self.intrinsic_rewards(batch.history.view())?;
        let scaled: Vec<f64> = batch
            .immediate
            .iter()
            .map(|r| r * self.hyper.immediate_scale)
            .collect();
        let next_actions = self.policy_means(batch.next_states.view(), &batch.groups)?;
        let next_q = q_i.target_values(batch.next_states.view(), next_actions.view())?;
        Ok(immediate_targets(&scaled, &intrinsic, self.hyper.gamma, &next_q))
    }

    /// Soft-regularization weight of every row under the given actor.
    pub fn soft_reg_weights(&self, actor: usize, batch: &TrainBatch) -> Result<Vec<f64>> {
        if self.variant == Variant::Naive {
            return Ok(vec![1.0; batch.len()]);
        }
        let out = self.actors[actor].net().forward(batch.states.view())?;
        let n = self.actors[actor].action_dim();
        (0..batch.len())
            .map(|i| {
                let row = out.row(i);
                let (mu, sigma) = (row.slice(ndarray::s![..n]), row.slice(ndarray::s![n..]));
                let a = batch.actions.row(i);
                let log_p = gaussian_log_density(
                    a.as_slice().expect("row-major"),
                    &mu.to_vec(),
                    &sigma.to_vec(),
                )?;
                let log_pb = gaussian_log_density(
                    a.as_slice().expect("row-major"),
                    batch.behavior_mu.row(i).as_slice().expect("row-major"),
                    batch.behavior_sigma.row(i).as_slice().expect("row-major"),
                )?;
                Ok(soft_reg_weight(
                    log_p,
                    log_pb,
                    self.hyper.reg_lambda,
                    self.hyper.soft_reg_direction,
                ))
            })
            .collect()
    }

    /// One actor step on `batch` (already restricted to the actor's users).
    /// Returns `(loss, mean weight)`.
    pub fn actor_update(&mut self, actor: usize, batch: &TrainBatch) -> Result<(f64, f64)> {
        let weights = self.soft_reg_weights(actor, batch)?;
        let mut terms = vec![CriticTerm {
            critic: self.q_t.net(),
            coefficient: self.hyper.lambda_t,
        }];
        if let Some(q_i) = &self.q_i {
            terms.push(CriticTerm {
                critic: q_i.net(),
                coefficient: -self.hyper.lambda_i,
            });
        }
        let n = self.actors[actor].action_dim();
        let (loss, grads) = actor_loss(self.actors[actor].net(), n, batch.states.view(), &weights, &terms)?;
        finite(loss, "actor")?;
        self.actors[actor].inner.apply(&grads, "actor")?;
        let mean_w = weights.iter().sum::<f64>() / weights.len() as f64;
        Ok((loss, mean_w))
    }

    pub fn train_step(&mut self) -> Result<StepLosses> {
        let step = self.steps;
        self.steps += 1;
        let seed = seeding::derive(self.seed, "batch", step);
        let owned: Vec<TransitionSample>;
        let batch = {
            let samples = self.buffer.sample_batch(self.hyper.batch_size, seed)?;
            owned = samples.iter().map(|s| (*s).clone()).collect();
            TrainBatch::from_samples(&samples)
        };
        match self.train_on(step, &batch) {
            Ok(losses) => {
                self.losses.push(losses);
                Ok(losses)
            }
            Err(e) => {
                self.failed_batch = Some(owned);
                Err(e)
            }
        }
    }

    /// Classifier, novelty, retention critic, immediate critic, actors, then
    /// target networks, in that order.
    pub fn train_on(&mut self, step: u64, batch: &TrainBatch) -> Result<StepLosses> {
        let mut out = StepLosses {
            step,
            ..Default::default()
        };

        if let (Some(cls), Some(_)) = (&mut self.classifier, self.returns.t_beta()) {
            let seed = seeding::derive(self.seed, "classifier-batch", step);
            let (x, y) = self.returns.sample(self.hyper.batch_size, seed)?;
            let (loss, grads) = classifier_batch_loss(&cls.inner.net, x.view(), &y)?;
            out.loss_cls = Some(finite(loss, "classifier")?);
            cls.inner.apply(&grads, "classifier")?;
        }

        if let Some(rnd) = &mut self.rnd {
            let (loss, grads) = rnd_loss(&rnd.trainable.net, &rnd.fixed, batch.history.view())?;
            out.loss_rnd = Some(finite(loss, "novelty")?);
            rnd.trainable.apply(&grads, "novelty")?;
        }

        out.loss_t = self.retention_td_update(batch)?;

        if self.q_i.is_some() {
            let targets = self.immediate_td_targets(batch)?;
            let q_i = self.q_i.as_mut().expect("checked");
            let loss = q_i.fit(batch.states.view(), batch.actions.view(), &targets, "immediate critic")?;
            out.loss_i = Some(finite(loss, "immediate critic")?);
        }

        let mut w_sum = 0.0;
        let mut w_count = 0usize;
        match self.variant {
            Variant::Naive => {
                let (loss, w) = self.actor_update(0, batch)?;
                out.actor_loss_high = Some(loss);
                w_sum += w * batch.len() as f64;
                w_count += batch.len();
            }
            Variant::Full => {
                for group in UserGroup::ALL {
                    let rows = batch.group_rows(group);
                    if rows.is_empty() {
                        log::warn!("step {step}: no {} samples in batch; actor skipped", group.as_str());
                        continue;
                    }
                    let sub = batch.select(&rows);
                    let idx = self.actor_index(group);
                    let (loss, w) = self.actor_update(idx, &sub)?;
                    match group {
                        UserGroup::HighActive => out.actor_loss_high = Some(loss),
                        UserGroup::LowActive => out.actor_loss_low = Some(loss),
                    }
                    w_sum += w * rows.len() as f64;
                    w_count += rows.len();
                }
            }
        }
        if w_count > 0 {
            out.mean_w = Some(w_sum / w_count as f64);
        }

        self.q_t.soft_update()?;
        if let Some(q_i) = &mut self.q_i {
            q_i.soft_update()?;
        }
        Ok(out)
    }

    fn actor_names(&self) -> &'static [&'static str] {
        match self.variant {
            Variant::Full => &["actor_high", "actor_low"],
            Variant::Naive => &["actor"],
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        for (name, actor) in self.actor_names().iter().zip(&self.actors) {
            ck.push_mlp(name, actor.net());
        }
        ck.push_mlp("q_t", self.q_t.net());
        ck.push_mlp("q_t_target", self.q_t.target.net());
        if let Some(q_i) = &self.q_i {
            ck.push_mlp("q_i", q_i.net());
            ck.push_mlp("q_i_target", q_i.target.net());
        }
        if let Some(rnd) = &self.rnd {
            ck.push_mlp("rnd_trainable", &rnd.trainable.net);
            ck.push_mlp("rnd_fixed", &rnd.fixed);
        }
        if let Some(cls) = &self.classifier {
            ck.push_mlp("classifier", &cls.inner.net);
        }
        if let Some(t) = self.returns.t_beta() {
            ck.push("t_beta", vec![1], vec![t]);
        }
        ck
    }

    /// Restores network parameters (optimizer moments are not checkpointed).
    pub fn load_checkpoint(&mut self, ck: &Checkpoint) -> Result<()> {
        let names = self.actor_names();
        for (name, actor) in names.iter().zip(self.actors.iter_mut()) {
            ck.load_mlp(name, &mut actor.inner.net)?;
        }
        ck.load_mlp("q_t", &mut self.q_t.inner.net)?;
        let mut target = self.q_t.target.net().clone();
        ck.load_mlp("q_t_target", &mut target)?;
        self.q_t.target.set(&target)?;
        if let Some(q_i) = &mut self.q_i {
            ck.load_mlp("q_i", &mut q_i.inner.net)?;
            let mut target = q_i.target.net().clone();
            ck.load_mlp("q_i_target", &mut target)?;
            q_i.target.set(&target)?;
        }
        if let Some(rnd) = &mut self.rnd {
            ck.load_mlp("rnd_trainable", &mut rnd.trainable.net)?;
            ck.load_mlp("rnd_fixed", &mut rnd.fixed)?;
        }
        if let Some(cls) = &mut self.classifier {
            ck.load_mlp("classifier", &mut cls.inner.net)?;
        }
        if let Some(t) = ck.get("t_beta") {
            self.returns.set_t_beta(t.data[0]);
        }
        Ok(())
    }

    pub fn state_layout(&self) -> StateLayout {
        self.layout
    }
}

impl Learner for RlurTrainer {
    fn act(&mut self, state: &UserState, group: UserGroup, explore: bool) -> Result<ActionVector> {
        RlurTrainer::act(self, state, group, explore)
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
        RlurTrainer::close_session(self, user_id, returning_time, next_state).map(|_| ())
    }

    fn ready(&self) -> bool {
        self.buffer.len() >= self.hyper.min_fill
    }

    fn train_every(&self) -> usize {
        self.hyper.train_every
    }

    fn train_step(&mut self) -> Result<()> {
        RlurTrainer::train_step(self).map(|_| ())
    }
}

//! The networks the trainers own, each paired with its optimizer.

use ndarray::{s, Array2, ArrayView2};
use rand::Rng;

use super::losses::{critic_input, critic_values, mse_loss};
use crate::approx::{gaussian_log_density, Activation, AdamConfig, AdamState, Mlp, MlpGrads, TargetCopy};
use crate::error::Result;

fn dims(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut d = Vec::with_capacity(hidden.len() + 2);
    d.push(input);
    d.extend_from_slice(hidden);
    d.push(output);
    d
}

/// A network together with its Adam state.
#[derive(Debug, Clone)]
pub struct Learnable {
    pub net: Mlp,
    adam: AdamState,
}

impl Learnable {
    pub fn new(net: Mlp, lr: f64) -> Self {
        let adam = AdamState::new(&net, AdamConfig::with_lr(lr));
        Self { net, adam }
    }

    pub fn apply(&mut self, grads: &MlpGrads, what: &str) -> Result<()> {
        self.adam.step(&mut self.net, grads, what)
    }
}

/// Diagonal-Gaussian policy: one trunk, `n` mean outputs squashed onto
/// `[0, C]` and `n` softplus sigma outputs.
///
/// None of the trainer's losses reaches the sigma head, so it is built with
/// zero output weights and a bias that yields `sigma_init`: exploration noise
/// stays at that level for the whole run.
#[derive(Debug, Clone)]
pub struct GaussianActor {
    pub inner: Learnable,
    action_dim: usize,
}

impl GaussianActor {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        hidden: &[usize],
        action_dim: usize,
        action_max: f64,
        sigma_init: f64,
        sigma_floor: f64,
        lr: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut acts = vec![Activation::ScaledSigmoid(action_max); action_dim];
        let sigma_act = Activation::Softplus { floor: sigma_floor };
        acts.extend(std::iter::repeat_n(sigma_act, action_dim));
        let mut net = Mlp::new(&dims(state_dim, hidden, 2 * action_dim), acts, rng)?;
        let last = net.layers_mut().last_mut().expect("at least one layer");
        last.weights.slice_mut(s![.., action_dim..]).fill(0.0);
        last.bias
            .slice_mut(s![action_dim..])
            .fill(sigma_act.inverse(sigma_init));
        Ok(Self {
            inner: Learnable::new(net, lr),
            action_dim,
        })
    }

    pub fn net(&self) -> &Mlp {
        &self.inner.net
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn mean_sigma(&self, state: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut out = self.inner.net.forward_one(state)?;
        let sigma = out.split_off(self.action_dim);
        Ok((out, sigma))
    }

    pub fn means(&self, states: ArrayView2<f64>) -> Result<Array2<f64>> {
        let out = self.inner.net.forward(states)?;
        Ok(out.slice(s![.., ..self.action_dim]).to_owned())
    }

    /// `log p(a|s)` under the current parameters.
    pub fn log_density(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        let (mu, sigma) = self.mean_sigma(state)?;
        gaussian_log_density(action, &mu, &sigma)
    }
}

/// `Q(s, a)` with a Polyak-averaged target copy.
#[derive(Debug, Clone)]
pub struct Critic {
    pub inner: Learnable,
    pub target: TargetCopy,
}

impl Critic {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        lr: f64,
        tau: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let net = Mlp::new(
            &dims(state_dim + action_dim, hidden, 1),
            vec![Activation::Identity],
            rng,
        )?;
        let target = TargetCopy::new(&net, tau)?;
        Ok(Self {
            inner: Learnable::new(net, lr),
            target,
        })
    }

    pub fn net(&self) -> &Mlp {
        &self.inner.net
    }

    pub fn values(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Vec<f64>> {
        critic_values(&self.inner.net, states, actions)
    }

    pub fn target_values(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Vec<f64>> {
        critic_values(self.target.net(), states, actions)
    }

    /// One regression step toward fixed targets; returns the pre-update loss.
    pub fn fit(
        &mut self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
        targets: &[f64],
        what: &str,
    ) -> Result<f64> {
        let input = critic_input(states, actions)?;
        let (loss, grads) = mse_loss(&self.inner.net, input.view(), targets)?;
        self.inner.apply(&grads, what)?;
        Ok(loss)
    }

    pub fn soft_update(&mut self) -> Result<()> {
        self.target.soft_update(&self.inner.net)
    }
}

/// Trainable/frozen embedding pair for novelty bonuses.
#[derive(Debug, Clone)]
pub struct RndPair {
    pub trainable: Learnable,
    pub fixed: Mlp,
}

impl RndPair {
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        embedding: usize,
        lr: f64,
        trainable_rng: &mut R,
        fixed_rng: &mut R,
    ) -> Result<Self> {
        let d = dims(input_dim, hidden, embedding);
        let acts = vec![Activation::Identity; embedding];
        Ok(Self {
            trainable: Learnable::new(Mlp::new(&d, acts.clone(), trainable_rng)?, lr),
            fixed: Mlp::new(&d, acts, fixed_rng)?,
        })
    }
}

/// Sigmoid-output model of `P(returning time < T_beta | session features)`.
#[derive(Debug, Clone)]
pub struct ReturnClassifier {
    pub inner: Learnable,
}

impl ReturnClassifier {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden: &[usize], lr: f64, rng: &mut R) -> Result<Self> {
        let net = Mlp::new(&dims(input_dim, hidden, 1), vec![Activation::Sigmoid], rng)?;
        Ok(Self {
            inner: Learnable::new(net, lr),
        })
    }

    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        Ok(self.inner.net.forward_one(features)?[0])
    }
}

//! Losses, targets and reward transforms. Every function here is pure so it
//! can be checked against finite differences and hand computations.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::approx::{Mlp, MlpGrads};
use crate::error::{Error, Result};

/// Classifier outputs are clamped to `[CLASSIFIER_EPS, 1 - CLASSIFIER_EPS]`.
pub const CLASSIFIER_EPS: f64 = 1e-6;

/// Row-wise `[states | actions]`, the critic input.
pub fn critic_input(states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Array2<f64>> {
    if states.nrows() != actions.nrows() {
        return Err(Error::DimensionMismatch {
            context: "critic input rows",
            expected: states.nrows(),
            got: actions.nrows(),
        });
    }
    Ok(concatenate(Axis(1), &[states, actions]).expect("row counts checked"))
}

/// `Q(s, a)` for every row.
pub fn critic_values(
    critic: &Mlp,
    states: ArrayView2<f64>,
    actions: ArrayView2<f64>,
) -> Result<Vec<f64>> {
    let out = critic.forward(critic_input(states, actions)?.view())?;
    Ok(out.column(0).to_vec())
}

/// Mean squared error of a single-output network against fixed targets.
pub fn mse_loss(net: &Mlp, inputs: ArrayView2<f64>, targets: &[f64]) -> Result<(f64, MlpGrads)> {
    let b = inputs.nrows();
    if targets.len() != b {
        return Err(Error::DimensionMismatch {
            context: "regression targets",
            expected: b,
            got: targets.len(),
        });
    }
    if b == 0 {
        return Err(Error::EmptyInput("regression batch"));
    }
    let (out, cache) = net.forward_cached(inputs)?;
    let mut upstream = Array2::zeros((b, 1));
    let mut loss = 0.0;
    for i in 0..b {
        let diff = out[[i, 0]] - targets[i];
        loss += diff * diff;
        upstream[[i, 0]] = 2.0 * diff / b as f64;
    }
    let (grads, _) = net.backward(&cache, upstream.view())?;
    Ok((loss / b as f64, grads))
}

/// Retention critic target: `r + gamma_it * Q_T_target(s', pi(s'))`, using each
/// sample's own discount.
pub fn retention_targets(rewards: &[f64], gamma_it: &[f64], next_q: &[f64]) -> Vec<f64> {
    rewards
        .iter()
        .zip(gamma_it)
        .zip(next_q)
        .map(|((r, g), q)| r + g * q)
        .collect()
}

/// Immediate critic target: `I + intrinsic + gamma * Q_I_target(s', pi(s'))`,
/// the same discount on every sample.
pub fn immediate_targets(immediate: &[f64], intrinsic: &[f64], gamma: f64, next_q: &[f64]) -> Vec<f64> {
    immediate
        .iter()
        .zip(intrinsic)
        .zip(next_q)
        .map(|((i, e), q)| i + e + gamma * q)
        .collect()
}

/// Nearest-rank percentile: the smallest value whose cumulative fraction is at
/// least `beta / 100`.
pub fn percentile_t_beta(values: &[f64], beta: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("returning times for percentile"));
    }
    if !(beta > 0.0 && beta < 100.0) {
        return Err(Error::InvalidConfig(format!("percentile {beta} not in (0, 100)")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((beta / 100.0) * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Label of the returning-time classifier: 1 for a "short" return.
pub fn short_return_label(returning_time: f64, t_beta: f64) -> f64 {
    if returning_time < t_beta {
        1.0
    } else {
        0.0
    }
}

/// Binary cross-entropy of one prediction, with the clamp applied.
pub fn classifier_loss(prediction: f64, label: f64) -> f64 {
    let p = prediction.clamp(CLASSIFIER_EPS, 1.0 - CLASSIFIER_EPS);
    -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
}

/// Mean cross-entropy of a sigmoid-output network and its gradients. Inside
/// the clamp region the gradient is zero.
pub fn classifier_batch_loss(net: &Mlp, inputs: ArrayView2<f64>, labels: &[f64]) -> Result<(f64, MlpGrads)> {
    let b = inputs.nrows();
    if labels.len() != b {
        return Err(Error::DimensionMismatch {
            context: "classifier labels",
            expected: b,
            got: labels.len(),
        });
    }
    if b == 0 {
        return Err(Error::EmptyInput("classifier batch"));
    }
    let (out, cache) = net.forward_cached(inputs)?;
    let mut upstream = Array2::zeros((b, 1));
    let mut loss = 0.0;
    for i in 0..b {
        let p = out[[i, 0]];
        let y = labels[i];
        loss += classifier_loss(p, y);
        if p > CLASSIFIER_EPS && p < 1.0 - CLASSIFIER_EPS {
            upstream[[i, 0]] = (-y / p + (1.0 - y) / (1.0 - p)) / b as f64;
        }
    }
    let (grads, _) = net.backward(&cache, upstream.view())?;
    Ok((loss / b as f64, grads))
}

/// `clip(T / ((1 - T') * T_beta), 0, alpha)`, with the denominator floored at
/// `1e-6 * T_beta` once `T'` reaches `1 - 1e-6`.
pub fn normalized_retention_reward(returning_time: f64, t_prime: f64, t_beta: f64, alpha: f64) -> f64 {
    let denom = if t_prime >= 1.0 - CLASSIFIER_EPS {
        CLASSIFIER_EPS * t_beta
    } else {
        (1.0 - t_prime) * t_beta
    };
    (returning_time / denom).clamp(0.0, alpha)
}

/// Squared distance between the trainable and frozen embeddings, per row.
pub fn rnd_intrinsic(trainable: &Mlp, fixed: &Mlp, inputs: ArrayView2<f64>) -> Result<Vec<f64>> {
    let a = trainable.forward(inputs)?;
    let b = fixed.forward(inputs)?;
    Ok((&a - &b)
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|d| d * d).sum())
        .collect())
}

/// Mean distillation loss and its gradients for the trainable network.
pub fn rnd_loss(trainable: &Mlp, fixed: &Mlp, inputs: ArrayView2<f64>) -> Result<(f64, MlpGrads)> {
    let b = inputs.nrows();
    if b == 0 {
        return Err(Error::EmptyInput("rnd batch"));
    }
    let target = fixed.forward(inputs)?;
    let (out, cache) = trainable.forward_cached(inputs)?;
    let diff = &out - &target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / b as f64;
    let upstream = diff * (2.0 / b as f64);
    let (grads, _) = trainable.backward(&cache, upstream.view())?;
    Ok((loss, grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoftRegDirection {
    /// `w = exp(max(lambda * gap, 0))`.
    #[default]
    AsWritten,
    /// `w = exp(-max(lambda * gap, 0))`.
    Inverse,
}

/// Per-sample actor-loss weight for the log-density gap `log p - log p_b`.
pub fn soft_reg_weight(log_p: f64, log_p_behavior: f64, lambda: f64, direction: SoftRegDirection) -> f64 {
    if lambda == 0.0 {
        return 1.0;
    }
    let excess = (lambda * (log_p - log_p_behavior)).max(0.0);
    match direction {
        SoftRegDirection::AsWritten => excess.exp(),
        SoftRegDirection::Inverse => (-excess).exp(),
    }
}

/// A critic term of the actor objective: `coefficient * Q(s, mu(s))`.
pub struct CriticTerm<'a> {
    pub critic: &'a Mlp,
    pub coefficient: f64,
}

/// `mean_i weights_i * sum_c coefficient_c * Q_c(s_i, mu(s_i))` and its gradient
/// with respect to the actor parameters. The actor's first `n` outputs are the
/// action mean; any further outputs (the sigma head) receive no gradient.
/// Critic parameters are read only.
pub fn actor_loss(
    actor: &Mlp,
    action_dim: usize,
    states: ArrayView2<f64>,
    weights: &[f64],
    terms: &[CriticTerm<'_>],
) -> Result<(f64, MlpGrads)> {
    let b = states.nrows();
    if weights.len() != b {
        return Err(Error::DimensionMismatch {
            context: "actor loss weights",
            expected: b,
            got: weights.len(),
        });
    }
    if b == 0 {
        return Err(Error::EmptyInput("actor batch"));
    }
    let (out, actor_cache) = actor.forward_cached(states)?;
    let mean = out.slice(s![.., ..action_dim]);
    let mut action_grad = Array2::<f64>::zeros((b, action_dim));
    let mut loss = 0.0;
    for term in terms {
        let input = critic_input(states, mean)?;
        let (q, cache) = term.critic.forward_cached(input.view())?;
        let mut upstream = Array2::zeros((b, 1));
        for i in 0..b {
            loss += weights[i] * term.coefficient * q[[i, 0]];
            upstream[[i, 0]] = weights[i] * term.coefficient / b as f64;
        }
        let (_, input_grad) = term.critic.backward(&cache, upstream.view())?;
        action_grad += &input_grad.slice(s![.., states.ncols()..]);
    }
    let mut upstream = Array2::zeros(out.dim());
    upstream.slice_mut(s![.., ..action_dim]).assign(&action_grad);
    let (grads, _) = actor.backward(&actor_cache, upstream.view())?;
    Ok((loss / b as f64, grads))
}

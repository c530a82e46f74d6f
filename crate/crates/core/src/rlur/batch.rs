use ndarray::Array2;

use super::features::encode_state_into;
use crate::mdp::{TransitionSample, UserGroup};

/// Matrix view of a sampled minibatch.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub next_states: Array2<f64>,
    /// Behavior-history sub-vector of each state (the novelty input).
    pub history: Array2<f64>,
    pub behavior_mu: Array2<f64>,
    pub behavior_sigma: Array2<f64>,
    pub immediate: Vec<f64>,
    pub retention: Vec<f64>,
    pub gamma_it: Vec<f64>,
    pub terminal: Vec<bool>,
    pub groups: Vec<UserGroup>,
}

fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Array2<f64> {
    Array2::from_shape_vec((rows, cols), data).expect("rows are equally sized")
}

impl TrainBatch {
    /// Panics if the samples do not share one state layout and action size.
    pub fn from_samples(samples: &[&TransitionSample]) -> Self {
        let b = samples.len();
        let sd = samples.first().map_or(0, |s| s.state.dim());
        let ad = samples.first().map_or(0, |s| s.action.dim());
        let hd = samples.first().map_or(0, |s| s.state.history.len());
        let mut states = Vec::with_capacity(b * sd);
        let mut next = Vec::with_capacity(b * sd);
        let mut actions = Vec::with_capacity(b * ad);
        let mut mu = Vec::with_capacity(b * ad);
        let mut sigma = Vec::with_capacity(b * ad);
        let mut history = Vec::with_capacity(b * hd);
        for s in samples {
            encode_state_into(&s.state, &mut states);
            encode_state_into(&s.next_state, &mut next);
            actions.extend_from_slice(&s.action.values);
            mu.extend_from_slice(&s.action.behavior_mu);
            sigma.extend_from_slice(&s.action.behavior_sigma);
            history.extend_from_slice(&s.state.history);
        }
        Self {
            states: matrix(b, sd, states),
            actions: matrix(b, ad, actions),
            next_states: matrix(b, sd, next),
            history: matrix(b, hd, history),
            behavior_mu: matrix(b, ad, mu),
            behavior_sigma: matrix(b, ad, sigma),
            immediate: samples.iter().map(|s| s.immediate_reward).collect(),
            retention: samples.iter().map(|s| s.retention_reward).collect(),
            gamma_it: samples.iter().map(|s| s.gamma_it).collect(),
            terminal: samples.iter().map(|s| s.terminal).collect(),
            groups: samples.iter().map(|s| s.user_group).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.immediate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.immediate.is_empty()
    }

    /// Row indices belonging to `group`.
    pub fn group_rows(&self, group: UserGroup) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.groups[i] == group).collect()
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        let pick = |m: &Array2<f64>| m.select(ndarray::Axis(0), rows);
        let pickv = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            states: pick(&self.states),
            actions: pick(&self.actions),
            next_states: pick(&self.next_states),
            history: pick(&self.history),
            behavior_mu: pick(&self.behavior_mu),
            behavior_sigma: pick(&self.behavior_sigma),
            immediate: pickv(&self.immediate),
            retention: pickv(&self.retention),
            gamma_it: pickv(&self.gamma_it),
            terminal: rows.iter().map(|&i| self.terminal[i]).collect(),
            groups: rows.iter().map(|&i| self.groups[i]).collect(),
        }
    }
}

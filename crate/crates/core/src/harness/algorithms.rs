//! Algorithms behind one interface, looked up by name.

use crate::approx::Checkpoint;
use crate::baselines::{cem_iterate, rlur_naive, CemState, Td3Losses, Td3Trainer};
use crate::error::{Error, Result};
use crate::mdp::{ActionVector, TransitionSample};
use crate::rlur::{RlurTrainer, StepLosses, Variant};
use crate::rollout::Rollout;
use crate::simenv::{run_episode, EpisodeMetrics, FnPolicy, RequestContext, SimConfig};

use super::config::ExperimentConfig;

/// Loss scalars of one optimization step, aligned with [`Algorithm::loss_header`].
#[derive(Debug, Clone, PartialEq)]
pub struct LossRow {
    pub step: u64,
    pub values: Vec<Option<f64>>,
}

pub trait Algorithm {
    fn name(&self) -> &str;

    /// One episode of training on the environment seeded with `seed`.
    fn train_episode(&mut self, sim: &SimConfig, seed: u64) -> Result<()>;

    /// One episode with the current greedy policy; no learning.
    fn evaluate(&mut self, sim: &SimConfig, seed: u64) -> Result<EpisodeMetrics>;

    /// Column names of the loss log, starting with the step column.
    fn loss_header(&self) -> Vec<&'static str>;

    fn drain_losses(&mut self) -> Vec<LossRow>;

    fn checkpoint(&self) -> Checkpoint;

    /// The minibatch of a failed optimization step, if any.
    fn take_failed_batch(&mut self) -> Option<Vec<TransitionSample>> {
        None
    }
}

pub type Factory = fn(&ExperimentConfig) -> Result<Box<dyn Algorithm>>;

/// Canonical form of an algorithm name: lower case, `-` separators.
pub fn normalize_name(name: &str) -> String {
    name.trim().to_ascii_lowercase().replace('_', "-")
}

pub struct Registry {
    entries: Vec<(&'static str, Factory)>,
}

impl Registry {
    pub fn empty() -> Self {
        Self { entries: Vec::new() }
    }

    /// The five methods of the comparison, in table order.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("cem", build_cem);
        r.register("td3", build_td3);
        r.register("rlur-naive-g0", |c| build_naive(c, 0.0, "rlur-naive-g0"));
        r.register("rlur-naive-g09", |c| build_naive(c, 0.9, "rlur-naive-g09"));
        r.register("rlur", build_rlur);
        r
    }

    /// Adds or replaces an entry.
    pub fn register(&mut self, name: &'static str, factory: Factory) {
        let key = normalize_name(name);
        match self.entries.iter_mut().find(|(n, _)| *n == key) {
            Some(e) => e.1 = factory,
            None => self.entries.push((name, factory)),
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.0).collect()
    }

    /// Position of `name` in registration order.
    pub fn position(&self, name: &str) -> Option<usize> {
        let key = normalize_name(name);
        self.entries.iter().position(|(n, _)| *n == key)
    }

    pub fn canonical(&self, name: &str) -> Result<&'static str> {
        self.position(name)
            .map(|i| self.entries[i].0)
            .ok_or_else(|| Error::UnknownAlgorithm(name.to_string()))
    }

    pub fn create(&self, config: &ExperimentConfig) -> Result<Box<dyn Algorithm>> {
        let i = self
            .position(&config.algorithm)
            .ok_or_else(|| Error::UnknownAlgorithm(config.algorithm.clone()))?;
        (self.entries[i].1)(config)
    }
}

impl Default for Registry {
    fn default() -> Self {
        Self::builtin()
    }
}

fn rlur_loss_rows(losses: Vec<StepLosses>) -> Vec<LossRow> {
    losses
        .into_iter()
        .map(|l| LossRow {
            step: l.step,
            values: l.values(),
        })
        .collect()
}

/// The actor-critic trainer in its full or retention-only wiring.
pub struct RlurAlgorithm {
    name: &'static str,
    trainer: RlurTrainer,
}

impl RlurAlgorithm {
    pub fn trainer(&self) -> &RlurTrainer {
        &self.trainer
    }
}

fn build_rlur(c: &ExperimentConfig) -> Result<Box<dyn Algorithm>> {
    let trainer = RlurTrainer::new(
        Variant::Full,
        c.rlur.clone(),
        c.sim.state_layout(),
        c.sim.num_scores,
        c.sim.action_max,
        c.seed,
    )?;
    Ok(Box::new(RlurAlgorithm { name: "rlur", trainer }))
}

fn build_naive(c: &ExperimentConfig, gamma: f64, name: &'static str) -> Result<Box<dyn Algorithm>> {
    let trainer = rlur_naive(
        &c.rlur,
        gamma,
        c.sim.state_layout(),
        c.sim.num_scores,
        c.sim.action_max,
        c.seed,
    )?;
    Ok(Box::new(RlurAlgorithm { name, trainer }))
}

impl Algorithm for RlurAlgorithm {
    fn name(&self) -> &str {
        self.name
    }

    fn train_episode(&mut self, sim: &SimConfig, seed: u64) -> Result<()> {
        run_episode(&mut Rollout::training(&mut self.trainer), sim, seed).map(|_| ())
    }

    fn evaluate(&mut self, sim: &SimConfig, seed: u64) -> Result<EpisodeMetrics> {
        Ok(run_episode(&mut Rollout::evaluation(&mut self.trainer), sim, seed)?.metrics)
    }

    fn loss_header(&self) -> Vec<&'static str> {
        StepLosses::HEADER.to_vec()
    }

    fn drain_losses(&mut self) -> Vec<LossRow> {
        rlur_loss_rows(self.trainer.drain_losses())
    }

    fn checkpoint(&self) -> Checkpoint {
        self.trainer.to_checkpoint()
    }

    fn take_failed_batch(&mut self) -> Option<Vec<TransitionSample>> {
        self.trainer.take_failed_batch()
    }
}

pub struct Td3Algorithm {
    trainer: Td3Trainer,
}

fn build_td3(c: &ExperimentConfig) -> Result<Box<dyn Algorithm>> {
    let trainer = Td3Trainer::new(
        c.td3.clone(),
        c.sim.state_layout(),
        c.sim.num_scores,
        c.sim.action_max,
        c.seed,
    )?;
    Ok(Box::new(Td3Algorithm { trainer }))
}

impl Algorithm for Td3Algorithm {
    fn name(&self) -> &str {
        "td3"
    }

    fn train_episode(&mut self, sim: &SimConfig, seed: u64) -> Result<()> {
        run_episode(&mut Rollout::training(&mut self.trainer), sim, seed).map(|_| ())
    }

    fn evaluate(&mut self, sim: &SimConfig, seed: u64) -> Result<EpisodeMetrics> {
        Ok(run_episode(&mut Rollout::evaluation(&mut self.trainer), sim, seed)?.metrics)
    }

    fn loss_header(&self) -> Vec<&'static str> {
        Td3Losses::HEADER.to_vec()
    }

    fn drain_losses(&mut self) -> Vec<LossRow> {
        self.trainer
            .drain_losses()
            .into_iter()
            .map(|l| LossRow {
                step: l.step,
                values: l.values(),
            })
            .collect()
    }

    fn checkpoint(&self) -> Checkpoint {
        self.trainer.to_checkpoint()
    }

    fn take_failed_batch(&mut self) -> Option<Vec<TransitionSample>> {
        self.trainer.take_failed_batch()
    }
}

/// Constant-action search; one training episode is one search iteration.
pub struct CemAlgorithm {
    state: CemState,
    pending: Vec<LossRow>,
}

fn build_cem(c: &ExperimentConfig) -> Result<Box<dyn Algorithm>> {
    let state = CemState::new(c.cem.clone(), c.sim.num_scores, c.sim.action_max, c.seed)?;
    Ok(Box::new(CemAlgorithm {
        state,
        pending: Vec::new(),
    }))
}

fn constant_episode(action: &[f64], sim: &SimConfig, seed: u64) -> Result<EpisodeMetrics> {
    let mut policy = FnPolicy(|_: &RequestContext, _: &_| ActionVector::constant(action.to_vec(), 1.0));
    Ok(run_episode(&mut policy, sim, seed)?.metrics)
}

impl CemAlgorithm {
    pub fn state(&self) -> &CemState {
        &self.state
    }
}

impl Algorithm for CemAlgorithm {
    fn name(&self) -> &str {
        "cem"
    }

    fn train_episode(&mut self, sim: &SimConfig, seed: u64) -> Result<()> {
        self.state = cem_iterate(&self.state, |a| Ok(-constant_episode(a, sim, seed)?.avg_return_day))?;
        let mean_std = self.state.stddev.iter().sum::<f64>() / self.state.stddev.len() as f64;
        self.pending.push(LossRow {
            step: self.state.iteration - 1,
            values: vec![self.state.last_best, Some(mean_std)],
        });
        Ok(())
    }

    fn evaluate(&mut self, sim: &SimConfig, seed: u64) -> Result<EpisodeMetrics> {
        constant_episode(&self.state.mean, sim, seed)
    }

    fn loss_header(&self) -> Vec<&'static str> {
        vec!["iteration", "best_fitness", "mean_stddev"]
    }

    fn drain_losses(&mut self) -> Vec<LossRow> {
        std::mem::take(&mut self.pending)
    }

    fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        let n = self.state.mean.len();
        ck.push("cem_mean", vec![n], self.state.mean.clone());
        ck.push("cem_stddev", vec![n], self.state.stddev.clone());
        ck
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_case_and_separator_insensitive() {
        let r = Registry::builtin();
        assert_eq!(r.canonical("RLUR_NAIVE_G09").unwrap(), "rlur-naive-g09");
        assert_eq!(r.canonical(" Td3 ").unwrap(), "td3");
        assert!(matches!(r.canonical("ppo"), Err(Error::UnknownAlgorithm(_))));
        assert_eq!(r.names(), ["cem", "td3", "rlur-naive-g0", "rlur-naive-g09", "rlur"]);
    }

    #[test]
    fn every_builtin_constructs() {
        let r = Registry::builtin();
        for name in r.names() {
            let cfg = ExperimentConfig {
                algorithm: name.to_uppercase(),
                ..Default::default()
            };
            let alg = r.create(&cfg).unwrap();
            assert_eq!(alg.name(), name);
            assert!(alg.loss_header().len() >= 2);
        }
    }

    #[test]
    fn naive_checkpoints_hold_one_actor_and_the_retention_critic() {
        let r = Registry::builtin();
        for name in ["rlur-naive-g0", "rlur-naive-g09"] {
            let cfg = ExperimentConfig {
                algorithm: name.into(),
                ..Default::default()
            };
            let ck = r.create(&cfg).unwrap().checkpoint();
            let prefixes: std::collections::BTreeSet<&str> =
                ck.names().map(|n| n.split('.').next().unwrap()).collect();
            assert_eq!(prefixes, ["actor", "q_t", "q_t_target"].into_iter().collect());
        }
    }
}

//! Cross-entropy search over a constant ranking-weight vector.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CemConfig {
    pub population: usize,
    pub elite_fraction: f64,
    /// Weight of the elite statistics in each update (1 = no memory).
    pub smoothing: f64,
    /// Initial mean as a fraction of the action bound.
    pub init_mean_fraction: f64,
    /// Initial standard deviation as a fraction of the action bound.
    pub init_std_fraction: f64,
    pub std_floor: f64,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self {
            population: 32,
            elite_fraction: 0.25,
            smoothing: 0.8,
            init_mean_fraction: 0.5,
            init_std_fraction: 0.5,
            std_floor: 1e-3,
        }
    }
}

impl CemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::InvalidConfig("CEM population must be at least 2".into()));
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return Err(Error::InvalidConfig("CEM elite fraction must be in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.smoothing) {
            return Err(Error::InvalidConfig("CEM smoothing must be in [0, 1]".into()));
        }
        if !(self.std_floor >= 0.0 && self.init_std_fraction >= 0.0) {
            return Err(Error::InvalidConfig("CEM standard deviations must be non-negative".into()));
        }
        Ok(())
    }

    pub fn elite_count(&self) -> usize {
        ((self.elite_fraction * self.population as f64).ceil() as usize).clamp(1, self.population)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CemState {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
    pub config: CemConfig,
    /// Candidates are clipped to `[0, bound]`.
    pub bound: f64,
    pub iteration: u64,
    pub seed: u64,
    /// Best fitness among the last iteration's candidates.
    pub last_best: Option<f64>,
}

impl CemState {
    pub fn new(config: CemConfig, dim: usize, bound: f64, seed: u64) -> Result<Self> {
        config.validate()?;
        if dim == 0 || !(bound > 0.0) {
            return Err(Error::InvalidConfig("CEM needs a non-empty, positive box".into()));
        }
        Ok(Self {
            mean: vec![config.init_mean_fraction * bound; dim],
            stddev: vec![config.init_std_fraction * bound; dim],
            config,
            bound,
            iteration: 0,
            seed,
            last_best: None,
        })
    }

    /// The `population` candidates of the current iteration.
    pub fn candidates(&self) -> Vec<Vec<f64>> {
        let mut rng = seeding::rng(self.seed, "cem-candidates", self.iteration);
        (0..self.config.population)
            .map(|_| {
                self.mean
                    .iter()
                    .zip(&self.stddev)
                    .map(|(m, s)| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        (m + s * z).clamp(0.0, self.bound)
                    })
                    .collect()
            })
            .collect()
    }
}

/// One iteration: sample candidates, score them with `evaluate` (higher is
/// better), and move the Gaussian toward the elite set.
pub fn cem_iterate<F>(state: &CemState, mut evaluate: F) -> Result<CemState>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let candidates = state.candidates();
    let mut scored = candidates
        .into_iter()
        .map(|c| {
            let f = evaluate(&c)?;
            if f.is_nan() {
                return Err(Error::InvalidConfig("CEM fitness is NaN".into()));
            }
            Ok((f, c))
        })
        .collect::<Result<Vec<_>>>()?;
    // stable sort keeps sampling order among equal fitness
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let k = state.config.elite_count();
    let elites = &scored[..k];
    let eta = state.config.smoothing;
    let mut next = state.clone();
    for d in 0..state.mean.len() {
        let m = elites.iter().map(|e| e.1[d]).sum::<f64>() / k as f64;
        let var = elites.iter().map(|e| (e.1[d] - m).powi(2)).sum::<f64>() / k as f64;
        next.mean[d] = eta * m + (1.0 - eta) * state.mean[d];
        next.stddev[d] = (eta * var.sqrt() + (1.0 - eta) * state.stddev[d]).max(state.config.std_floor);
    }
    next.iteration += 1;
    next.last_best = Some(scored[0].0);
    Ok(next)
}

//! Shared helpers for the integration tests.
#![allow(dead_code)]

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rlur::approx::{Mlp, MlpGrads};
use rlur::mdp::{ActionVector, StateLayout, TransitionSample, UserGroup, UserState};

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
pub const GRAD_COORDS: usize = 100;
/// Denominator floor of the relative error, so coordinates whose gradient
/// is numerically zero are judged by an absolute error of `1e-6 * FD_REL_TOL`.
pub const FD_REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct GradReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= FD_REL_TOL
    }
}

/// Compares `grads` with central differences of `loss` on `coords` random
/// parameters of `net` (all of them if the network is smaller).
pub fn gradient_report<F>(net: &Mlp, grads: &MlpGrads, loss: F, coords: usize, seed: u64) -> GradReport
where
    F: Fn(&Mlp) -> f64,
{
    let analytic: Vec<f64> = grads.iter().copied().collect();
    let n = net.param_count();
    assert_eq!(analytic.len(), n, "gradient and parameter counts differ");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = sample(&mut rng, n, coords.min(n)).into_vec();
    let mut worst = (0.0f64, 0usize);
    let mut probe = net.clone();
    for &k in &picks {
        let orig = *net.params().nth(k).unwrap();
        *probe.params_mut().nth(k).unwrap() = orig + FD_STEP;
        let up = loss(&probe);
        *probe.params_mut().nth(k).unwrap() = orig - FD_STEP;
        let down = loss(&probe);
        *probe.params_mut().nth(k).unwrap() = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let a = analytic[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FD_REL_FLOOR);
        if rel > worst.0 {
            worst = (rel, k);
        }
    }
    GradReport {
        checked: picks.len(),
        max_rel_error: worst.0,
        worst_index: worst.1,
    }
}

pub fn check_gradient<F>(name: &str, net: &Mlp, grads: &MlpGrads, loss: F, coords: usize, seed: u64) -> GradReport
where
    F: Fn(&Mlp) -> f64,
{
    let r = gradient_report(net, grads, loss, coords, seed);
    assert!(
        r.passed(),
        "{name}: relative error {:.3e} at parameter {} exceeds {FD_REL_TOL:e}",
        r.max_rel_error,
        r.worst_index
    );
    assert_eq!(r.checked, coords.min(net.param_count()));
    r
}

pub fn random_state<R: Rng>(rng: &mut R, layout: StateLayout) -> UserState {
    let mut v = |n: usize| (0..n).map(|_| rng.random_range(0.0..1.0)).collect::<Vec<f64>>();
    UserState {
        profile: v(layout.profile),
        history: v(layout.history),
        context: v(layout.context),
        candidate_summary: v(layout.candidate_summary),
    }
}

/// Replay samples with random contents, roughly a third of them terminal.
pub fn random_samples<R: Rng>(rng: &mut R, layout: StateLayout, action_dim: usize, n: usize) -> Vec<TransitionSample> {
    (0..n)
        .map(|i| {
            let terminal = i % 3 == 2;
            let values: Vec<f64> = (0..action_dim).map(|_| rng.random_range(0.0..4.0)).collect();
            let mu: Vec<f64> = (0..action_dim).map(|_| rng.random_range(0.0..4.0)).collect();
            let t = rng.random_range(1..=10) as f64;
            TransitionSample {
                state: random_state(rng, layout),
                action: ActionVector {
                    values,
                    behavior_mu: mu,
                    behavior_sigma: vec![0.4; action_dim],
                },
                next_state: random_state(rng, layout),
                immediate_reward: rng.random_range(0.0..120.0),
                intrinsic_reward: 0.0,
                retention_reward: if terminal { t } else { 0.0 },
                terminal,
                gamma_it: if terminal { 0.9 } else { 1.0 },
                user_group: if i % 2 == 0 { UserGroup::HighActive } else { UserGroup::LowActive },
                returning_time: terminal.then_some(t),
            }
        })
        .collect()
}

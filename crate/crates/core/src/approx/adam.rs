use serde::{Deserialize, Serialize};

use super::mlp::{Dense, Mlp, MlpGrads};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected adaptive-moment state for one network.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Dense>,
    second: Vec<Dense>,
    step: u64,
}

impl AdamState {
    pub fn new(net: &Mlp, config: AdamConfig) -> Self {
        let zeros = MlpGrads::zeros_like(net).layers;
        Self {
            config,
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update in place. Non-finite gradients abort without touching
    /// the parameters.
    pub fn step(&mut self, net: &mut Mlp, grads: &MlpGrads, what: &str) -> Result<()> {
        if grads.layers.len() != self.first.len() {
            return Err(Error::DimensionMismatch {
                context: "adam gradient layers",
                expected: self.first.len(),
                got: grads.layers.len(),
            });
        }
        for (g, m) in grads.layers.iter().zip(&self.first) {
            if g.weights.dim() != m.weights.dim() || g.bias.len() != m.bias.len() {
                return Err(Error::DimensionMismatch {
                    context: "adam gradient shape",
                    expected: m.weights.len() + m.bias.len(),
                    got: g.weights.len() + g.bias.len(),
                });
            }
        }
        if !grads.is_finite() {
            return Err(Error::GradientBlowUp(what.to_string()));
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (((layer, g), m), v) in net
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            ndarray::Zip::from(&mut layer.weights)
                .and(&g.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
        if !net.is_finite() {
            return Err(Error::GradientBlowUp(format!("{what} parameters")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::Activation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net() -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        Mlp::new(&[2, 3, 1], vec![Activation::Identity], &mut rng).unwrap()
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut n = net();
        let before = n.clone();
        let mut adam = AdamState::new(&n, AdamConfig::default());
        let g = MlpGrads::zeros_like(&n);
        for _ in 0..5 {
            adam.step(&mut n, &g, "test").unwrap();
        }
        assert_eq!(n, before);
        assert_eq!(adam.step_count(), 5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = g, v_hat = g^2 after one step, so the update is lr * g / (|g| + eps).
        for g in [0.37, -2.5, 1e-3] {
            let mut n = net();
            let before = n.clone();
            let lr = 1e-2;
            let mut adam = AdamState::new(&n, AdamConfig::with_lr(lr));
            let mut grads = MlpGrads::zeros_like(&n);
            for l in &mut grads.layers {
                l.weights.fill(g);
                l.bias.fill(g);
            }
            adam.step(&mut n, &grads, "test").unwrap();
            let expected = lr * g / (g.abs() + 1e-8);
            for (a, b) in before.params().zip(n.params()) {
                assert!(((a - b) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn equal_gradients_give_equal_updates() {
        let mut n = Mlp::zeros(&[2, 1], vec![Activation::Identity]).unwrap();
        let mut adam = AdamState::new(&n, AdamConfig::default());
        let mut grads = MlpGrads::zeros_like(&n);
        grads.layers[0].weights.fill(0.8);
        adam.step(&mut n, &grads, "test").unwrap();
        let w = &n.layers()[0].weights;
        assert_eq!(w[[0, 0]], w[[1, 0]]);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut n = net();
        let before = n.clone();
        let mut adam = AdamState::new(&n, AdamConfig::default());
        let mut grads = MlpGrads::zeros_like(&n);
        grads.layers[0].bias[0] = f64::NAN;
        let err = adam.step(&mut n, &grads, "critic").unwrap_err();
        assert!(err.is_numerical());
        assert_eq!(n, before);
        assert_eq!(adam.step_count(), 0);
    }
}

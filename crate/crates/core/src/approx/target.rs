use super::mlp::Mlp;
use crate::error::{Error, Result};

/// Slowly tracking shadow copy of a network.
#[derive(Debug, Clone)]
pub struct TargetCopy {
    net: Mlp,
    tau: f64,
}

impl TargetCopy {
    pub fn new(source: &Mlp, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::InvalidConfig(format!("tau must be in (0, 1], got {tau}")));
        }
        Ok(Self {
            net: source.clone(),
            tau,
        })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `target <- tau * source + (1 - tau) * target`, elementwise.
    pub fn soft_update(&mut self, source: &Mlp) -> Result<()> {
        self.net.check_same_shape(source)?;
        let tau = self.tau;
        for (t, s) in self.net.params_mut().zip(source.params()) {
            *t = tau * s + (1.0 - tau) * *t;
        }
        Ok(())
    }

    /// Overwrite the shadow parameters (used when restoring a checkpoint).
    pub fn set(&mut self, net: &Mlp) -> Result<()> {
        self.net.copy_from(net)
    }
}

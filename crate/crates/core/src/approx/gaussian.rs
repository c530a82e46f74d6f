use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Log density of a diagonal Gaussian, summed over dimensions.
pub fn gaussian_log_density(x: &[f64], mu: &[f64], sigma: &[f64]) -> Result<f64> {
    if x.len() != mu.len() || x.len() != sigma.len() {
        return Err(Error::DimensionMismatch {
            context: "gaussian density",
            expected: x.len(),
            got: mu.len().min(sigma.len()),
        });
    }
    let half_ln_2pi = 0.5 * (2.0 * PI).ln();
    let mut total = 0.0;
    for ((&xi, &mi), &si) in x.iter().zip(mu).zip(sigma) {
        if si <= 0.0 || !si.is_finite() {
            return Err(Error::NonPositiveSigma(si));
        }
        let z = (xi - mi) / si;
        total += -0.5 * z * z - si.ln() - half_ln_2pi;
    }
    Ok(total)
}

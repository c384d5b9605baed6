//! Exact log-likelihood of the AR(1)-plus-noise model.

use crate::error::{Error, Result};
use crate::models::ar1::Ar1Params;
use crate::models::prior::normal_log_density;

/// Scalar Kalman prediction/update recursions started from the stationary
/// law of the state.
pub fn kalman_loglik(p: &Ar1Params, y: &[f64]) -> Result<f64> {
    if !(p.phi.abs() < 1.0) {
        return Err(Error::config("phi", "no stationary initial law when |phi| >= 1"));
    }
    let mut mean = p.mu;
    let mut var = p.stationary_var();
    let mut total = 0.0;
    for &obs in y {
        // predict x_t from x_{t-1}
        mean = p.mu + p.phi * (mean - p.mu);
        var = p.phi * p.phi * var + p.tau2;
        let s = var + p.sigma2;
        total += normal_log_density(obs, mean, s);
        let gain = var / s;
        mean += gain * (obs - mean);
        var *= 1.0 - gain;
    }
    Ok(total)
}

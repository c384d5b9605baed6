//! Gaussian AR(1) signal observed with Gaussian noise.
//!
//! ```text
//! y_t | x_t         ~ N(x_t, sigma2)
//! x_{t+1} | x_t     ~ N(mu + phi (x_t - mu), tau2)
//! x_0               ~ N(mu, tau2 / (1 - phi^2))
//! ```
//!
//! Fully adaptable, and its likelihood is available exactly from the Kalman
//! filter.

use super::prior::normal_log_density;
use super::{
    Capabilities, GaussianObservation, GaussianTransition, Marginal, Parameterization, PriorSpec, StateSpaceModel,
    StepContext, Transform,
};
use crate::error::{Error, Result};
use crate::rng::RandomStream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ar1Params {
    pub mu: f64,
    pub phi: f64,
    pub tau2: f64,
    pub sigma2: f64,
}

impl Ar1Params {
    pub fn stationary_var(&self) -> f64 {
        self.tau2 / (1.0 - self.phi * self.phi)
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![self.mu, self.phi, self.tau2, self.sigma2]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Ar1Noise;

impl Ar1Noise {
    pub const NAMES: [&'static str; 4] = ["mu", "phi", "tau2", "sigma2"];
}

impl StateSpaceModel for Ar1Noise {
    type State = f64;
    type Params = Ar1Params;

    fn name(&self) -> String {
        "ar1".into()
    }

    fn parameterization(&self) -> Parameterization {
        Parameterization::new(
            Self::NAMES.iter().map(|s| s.to_string()).collect(),
            vec![Transform::Identity, Transform::Logit, Transform::Log, Transform::Log],
        )
    }

    fn default_prior(&self) -> PriorSpec {
        PriorSpec::new(vec![
            Marginal::Normal { mean: 0.0, var: 100.0 },
            Marginal::Uniform { lo: 0.0, hi: 1.0 },
            Marginal::InverseGamma { shape: 0.1, scale: 0.1 },
            Marginal::InverseGamma { shape: 0.1, scale: 0.1 },
        ])
    }

    fn params(&self, natural: &[f64]) -> Result<Ar1Params> {
        let &[mu, phi, tau2, sigma2] = natural else {
            return Err(Error::config("parameters", "ar1 expects [mu, phi, tau2, sigma2]"));
        };
        if !(phi.abs() < 1.0) {
            return Err(Error::config("phi", "stationarity requires |phi| < 1"));
        }
        if !(tau2 >= 0.0) || !(sigma2 > 0.0) || !mu.is_finite() {
            return Err(Error::config("parameters", "need tau2 >= 0, sigma2 > 0, finite mu"));
        }
        Ok(Ar1Params { mu, phi, tau2, sigma2 })
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            fully_adaptable: true,
            partially_adaptable: true,
        }
    }

    fn sample_initial(&self, p: &Ar1Params, rs: &mut RandomStream) -> f64 {
        p.mu + p.stationary_var().sqrt() * rs.normal()
    }

    fn sample_transition(&self, x: &f64, _ctx: StepContext, p: &Ar1Params, rs: &mut RandomStream) -> f64 {
        p.mu + p.phi * (x - p.mu) + p.tau2.sqrt() * rs.normal()
    }

    fn log_transition_density(&self, next: &f64, x: &f64, _ctx: StepContext, p: &Ar1Params) -> f64 {
        normal_log_density(*next, p.mu + p.phi * (x - p.mu), p.tau2)
    }

    fn log_obs_density(&self, y: f64, x: &f64, p: &Ar1Params) -> f64 {
        normal_log_density(y, *x, p.sigma2)
    }

    fn sample_observation(&self, x: &f64, p: &Ar1Params, rs: &mut RandomStream) -> f64 {
        x + p.sigma2.sqrt() * rs.normal()
    }

    fn component(&self, x: &f64) -> f64 {
        *x
    }

    fn next_state(&self, _x: &f64, _ctx: StepContext, _p: &Ar1Params, v: f64) -> f64 {
        v
    }

    fn gaussian_transition(&self, x: &f64, _ctx: StepContext, p: &Ar1Params) -> Option<GaussianTransition> {
        Some(GaussianTransition {
            mean: p.mu + p.phi * (x - p.mu),
            var: p.tau2,
            exact: true,
        })
    }

    fn gaussian_observation(&self, p: &Ar1Params) -> Option<GaussianObservation> {
        Some(GaussianObservation { h: 1.0, var: p.sigma2 })
    }

    fn obs_derivatives(&self, y: f64, v: f64, p: &Ar1Params) -> Option<(f64, f64, f64)> {
        Some((normal_log_density(y, v, p.sigma2), (y - v) / p.sigma2, -1.0 / p.sigma2))
    }
}

//! Binomial counts driven by a latent Gaussian AR(1) on the logit scale.
//!
//! `y_t ~ Bin(m, logistic(x_t))` with the AR(1) state of [`super::Ar1Noise`].
//! The log observation density is concave in `x_t`, so the model is partially
//! adaptable.

use rand_distr::{Binomial, Distribution};
use statrs::function::gamma::ln_gamma;

use super::params::{logistic, logit};
use super::prior::normal_log_density;
use super::{
    Capabilities, Dataset, GaussianTransition, Marginal, Parameterization, PriorSpec, StateSpaceModel, StepContext,
    Transform,
};
use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Trial counts from which the mode search starts at `logit(y/m)` instead of
/// the prior mean.
pub const LOGIT_START_MIN_TRIALS: u32 = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinomialParams {
    pub mu: f64,
    pub phi: f64,
    pub tau2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinomialAr {
    trials: u32,
    ln_choose: Vec<f64>,
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl BinomialAr {
    pub const NAMES: [&'static str; 3] = ["mu", "phi", "tau2"];

    pub fn new(trials: u32) -> Result<Self> {
        if trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        let m = f64::from(trials);
        let ln_choose = (0..=trials)
            .map(|k| {
                let k = f64::from(k);
                ln_gamma(m + 1.0) - ln_gamma(k + 1.0) - ln_gamma(m - k + 1.0)
            })
            .collect();
        Ok(Self { trials, ln_choose })
    }

    pub fn trials(&self) -> u32 {
        self.trials
    }

    fn ln_choose(&self, y: f64) -> f64 {
        if y >= 0.0 && y <= f64::from(self.trials) && y.fract() == 0.0 {
            self.ln_choose[y as usize]
        } else {
            f64::NEG_INFINITY
        }
    }
}

impl StateSpaceModel for BinomialAr {
    type State = f64;
    type Params = BinomialParams;

    fn name(&self) -> String {
        format!("binomial-m{}", self.trials)
    }

    fn parameterization(&self) -> Parameterization {
        Parameterization::new(
            Self::NAMES.iter().map(|s| s.to_string()).collect(),
            vec![Transform::Identity, Transform::Logit, Transform::Log],
        )
    }

    fn default_prior(&self) -> PriorSpec {
        PriorSpec::new(vec![
            Marginal::Normal { mean: 0.0, var: 100.0 },
            Marginal::Uniform { lo: 0.0, hi: 1.0 },
            Marginal::HalfNormal { var: 100.0 },
        ])
    }

    fn params(&self, natural: &[f64]) -> Result<BinomialParams> {
        let &[mu, phi, tau2] = natural else {
            return Err(Error::config("parameters", "binomial expects [mu, phi, tau2]"));
        };
        if !(phi.abs() < 1.0) {
            return Err(Error::config("phi", "stationarity requires |phi| < 1"));
        }
        if !(tau2 >= 0.0) || !mu.is_finite() {
            return Err(Error::config("parameters", "need tau2 >= 0 and finite mu"));
        }
        Ok(BinomialParams { mu, phi, tau2 })
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            fully_adaptable: false,
            partially_adaptable: true,
        }
    }

    fn sample_initial(&self, p: &BinomialParams, rs: &mut RandomStream) -> f64 {
        p.mu + (p.tau2 / (1.0 - p.phi * p.phi)).sqrt() * rs.normal()
    }

    fn sample_transition(&self, x: &f64, _ctx: StepContext, p: &BinomialParams, rs: &mut RandomStream) -> f64 {
        p.mu + p.phi * (x - p.mu) + p.tau2.sqrt() * rs.normal()
    }

    fn log_transition_density(&self, next: &f64, x: &f64, _ctx: StepContext, p: &BinomialParams) -> f64 {
        normal_log_density(*next, p.mu + p.phi * (x - p.mu), p.tau2)
    }

    fn log_obs_density(&self, y: f64, x: &f64, _p: &BinomialParams) -> f64 {
        self.ln_choose(y) + y * x - f64::from(self.trials) * softplus(*x)
    }

    fn sample_observation(&self, x: &f64, _p: &BinomialParams, rs: &mut RandomStream) -> f64 {
        let prob = logistic(*x).clamp(0.0, 1.0);
        Binomial::new(u64::from(self.trials), prob)
            .expect("probability in [0, 1]")
            .sample(rs) as f64
    }

    fn component(&self, x: &f64) -> f64 {
        *x
    }

    fn next_state(&self, _x: &f64, _ctx: StepContext, _p: &BinomialParams, v: f64) -> f64 {
        v
    }

    fn gaussian_transition(&self, x: &f64, _ctx: StepContext, p: &BinomialParams) -> Option<GaussianTransition> {
        Some(GaussianTransition {
            mean: p.mu + p.phi * (x - p.mu),
            var: p.tau2,
            exact: true,
        })
    }

    fn obs_derivatives(&self, y: f64, v: f64, p: &BinomialParams) -> Option<(f64, f64, f64)> {
        let m = f64::from(self.trials);
        let s = logistic(v);
        Some((self.log_obs_density(y, &v, p), y - m * s, -m * s * (1.0 - s)))
    }

    fn mode_start(&self, y: f64, prior_mean: f64, _p: &BinomialParams) -> f64 {
        if self.trials >= LOGIT_START_MIN_TRIALS {
            let m = f64::from(self.trials);
            logit((y + 0.5) / (m + 1.0))
        } else {
            prior_mean
        }
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        data.check_counts(self.trials)
    }
}

//! GARCH(1,1) signal observed with Gaussian noise.
//!
//! ```text
//! y_t | x_t            ~ N(x_t, tau2)
//! sigma2_{t+1}         = alpha + beta x_t^2 + gamma sigma2_t
//! x_{t+1} | sigma2_{t+1} ~ N(0, sigma2_{t+1})
//! x_0                  ~ N(0, alpha / (1 - beta - gamma))
//! ```
//!
//! The state carries the conditional variance along with the signal so the
//! recursion stays Markov. Given the previous state the next variance is
//! known, which makes the model fully adaptable.

use std::f64::consts::LN_2;

use super::prior::normal_log_density;
use super::{
    Capabilities, Constraint, GaussianObservation, GaussianTransition, Marginal, Parameterization, PriorSpec,
    StateSpaceModel, StepContext, Transform,
};
use crate::error::{Error, Result};
use crate::rng::RandomStream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GarchParams {
    pub tau2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl GarchParams {
    pub fn unconditional_var(&self) -> f64 {
        self.alpha / (1.0 - self.beta - self.gamma)
    }

    fn next_var(&self, x: &GarchState) -> f64 {
        self.alpha + self.beta * x.x * x.x + self.gamma * x.var
    }
}

/// Signal `x_t` and the variance `sigma2_t` it was drawn with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GarchState {
    pub x: f64,
    pub var: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GarchNoise;

impl GarchNoise {
    pub const NAMES: [&'static str; 4] = ["tau2", "alpha", "beta", "gamma"];
}

impl StateSpaceModel for GarchNoise {
    type State = GarchState;
    type Params = GarchParams;

    fn name(&self) -> String {
        "garch".into()
    }

    fn parameterization(&self) -> Parameterization {
        Parameterization::new(
            Self::NAMES.iter().map(|s| s.to_string()).collect(),
            vec![Transform::Log, Transform::Log, Transform::Logit, Transform::Logit],
        )
    }

    fn default_prior(&self) -> PriorSpec {
        PriorSpec::new(vec![
            Marginal::HalfNormal { var: 100.0 },
            Marginal::HalfNormal { var: 100.0 },
            Marginal::Uniform { lo: 0.0, hi: 1.0 },
            Marginal::Uniform { lo: 0.0, hi: 1.0 },
        ])
        .with_constraint(Constraint::SumBelow {
            indices: vec![2, 3],
            bound: 1.0,
            log_normalizer: LN_2,
        })
    }

    fn params(&self, natural: &[f64]) -> Result<GarchParams> {
        let &[tau2, alpha, beta, gamma] = natural else {
            return Err(Error::config("parameters", "garch expects [tau2, alpha, beta, gamma]"));
        };
        if !(tau2 > 0.0) || !(alpha > 0.0) {
            return Err(Error::config("parameters", "need tau2 > 0 and alpha > 0"));
        }
        if !(beta >= 0.0 && gamma >= 0.0 && beta + gamma < 1.0) {
            return Err(Error::config("beta", "need beta, gamma >= 0 and beta + gamma < 1"));
        }
        Ok(GarchParams {
            tau2,
            alpha,
            beta,
            gamma,
        })
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            fully_adaptable: true,
            partially_adaptable: true,
        }
    }

    fn sample_initial(&self, p: &GarchParams, rs: &mut RandomStream) -> GarchState {
        let var = p.unconditional_var();
        GarchState {
            x: var.sqrt() * rs.normal(),
            var,
        }
    }

    fn sample_transition(
        &self,
        x: &GarchState,
        _ctx: StepContext,
        p: &GarchParams,
        rs: &mut RandomStream,
    ) -> GarchState {
        let var = p.next_var(x);
        GarchState {
            x: var.sqrt() * rs.normal(),
            var,
        }
    }

    fn log_transition_density(&self, next: &GarchState, x: &GarchState, _ctx: StepContext, p: &GarchParams) -> f64 {
        normal_log_density(next.x, 0.0, p.next_var(x))
    }

    fn log_obs_density(&self, y: f64, x: &GarchState, p: &GarchParams) -> f64 {
        normal_log_density(y, x.x, p.tau2)
    }

    fn sample_observation(&self, x: &GarchState, p: &GarchParams, rs: &mut RandomStream) -> f64 {
        x.x + p.tau2.sqrt() * rs.normal()
    }

    fn component(&self, x: &GarchState) -> f64 {
        x.x
    }

    fn next_state(&self, x: &GarchState, _ctx: StepContext, p: &GarchParams, v: f64) -> GarchState {
        GarchState {
            x: v,
            var: p.next_var(x),
        }
    }

    fn gaussian_transition(&self, x: &GarchState, _ctx: StepContext, p: &GarchParams) -> Option<GaussianTransition> {
        Some(GaussianTransition {
            mean: 0.0,
            var: p.next_var(x),
            exact: true,
        })
    }

    fn gaussian_observation(&self, p: &GarchParams) -> Option<GaussianObservation> {
        Some(GaussianObservation { h: 1.0, var: p.tau2 })
    }

    fn obs_derivatives(&self, y: f64, v: f64, p: &GarchParams) -> Option<(f64, f64, f64)> {
        Some((normal_log_density(y, v, p.tau2), (y - v) / p.tau2, -1.0 / p.tau2))
    }
}

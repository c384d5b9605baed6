//! State-space models: the contract consumed by the filters and four
//! concrete instances.

pub mod ar1;
pub mod binomial;
pub mod data;
pub mod garch;
pub mod params;
pub mod prior;
pub mod sv;

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;

pub use ar1::Ar1Noise;
pub use binomial::BinomialAr;
pub use data::Dataset;
pub use garch::{GarchNoise, GarchState};
pub use params::{ParameterVector, Parameterization, Transform};
pub use prior::{Constraint, Marginal, PriorSpec};
pub use sv::SvModel;

/// Information available to the transition from `x_t` to `x_{t+1}` besides
/// the state itself. `prev_obs` is `y_t` (absent for the move out of `x_0`).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepContext {
    pub prev_obs: Option<f64>,
}

/// Gaussian law `N(mean, var)` for the scalar component of the next state.
/// `exact` is false when the model's transition is only approximated by it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianTransition {
    pub mean: f64,
    pub var: f64,
    pub exact: bool,
}

/// Observation law `y ~ N(h * v, var)` in the scalar state component `v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianObservation {
    pub h: f64,
    pub var: f64,
}

/// Which adapted filters a model supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Capabilities {
    pub fully_adaptable: bool,
    pub partially_adaptable: bool,
}

/// A state-space model `p(x_0)`, `p(x_{t+1} | x_t)`, `p(y_t | x_t)`.
///
/// The adaptation hooks describe the next state through one scalar
/// component `v` (the latent value the observation depends on) plus whatever
/// is a deterministic function of the previous state.
pub trait StateSpaceModel: Send + Sync {
    type State: Copy + Send + Sync + Debug;
    type Params: Copy + Send + Sync + Debug;

    fn name(&self) -> String;

    /// Parameter names, in order, with their unconstraining transforms.
    fn parameterization(&self) -> Parameterization;

    fn default_prior(&self) -> PriorSpec;

    /// Validates a natural parameter vector.
    fn params(&self, natural: &[f64]) -> Result<Self::Params>;

    fn capabilities(&self) -> Capabilities;

    fn sample_initial(&self, p: &Self::Params, rs: &mut RandomStream) -> Self::State;

    fn sample_transition(
        &self,
        x: &Self::State,
        ctx: StepContext,
        p: &Self::Params,
        rs: &mut RandomStream,
    ) -> Self::State;

    fn log_transition_density(&self, next: &Self::State, x: &Self::State, ctx: StepContext, p: &Self::Params) -> f64;

    fn log_obs_density(&self, y: f64, x: &Self::State, p: &Self::Params) -> f64;

    fn sample_observation(&self, x: &Self::State, p: &Self::Params, rs: &mut RandomStream) -> f64;

    /// The scalar component the observation depends on.
    fn component(&self, x: &Self::State) -> f64;

    /// Builds the next state from its scalar component.
    fn next_state(&self, x: &Self::State, ctx: StepContext, p: &Self::Params, v: f64) -> Self::State;

    /// Gaussian form of the transition for the scalar component, if any.
    fn gaussian_transition(
        &self,
        _x: &Self::State,
        _ctx: StepContext,
        _p: &Self::Params,
    ) -> Option<GaussianTransition> {
        None
    }

    fn gaussian_observation(&self, _p: &Self::Params) -> Option<GaussianObservation> {
        None
    }

    /// `(l, dl/dv, d2l/dv2)` of `l(v) = log p(y | v)`.
    fn obs_derivatives(&self, _y: f64, _v: f64, _p: &Self::Params) -> Option<(f64, f64, f64)> {
        None
    }

    /// Starting point for the mode search of the partially adapted filter.
    fn mode_start(&self, _y: f64, prior_mean: f64, _p: &Self::Params) -> f64 {
        prior_mean
    }

    /// Extra validation of a dataset against the observation space.
    fn check_data(&self, _data: &Dataset) -> Result<()> {
        Ok(())
    }
}

/// Latent path and observations from a simulation.
#[derive(Debug, Clone)]
pub struct Simulation<S> {
    pub states: Vec<S>,
    pub data: Dataset,
}

/// Draws `x_0` from the initial law, then alternates transition and
/// observation for `t = 1..=T`.
pub fn simulate<M: StateSpaceModel>(
    model: &M,
    natural: &[f64],
    t_len: usize,
    rs: &mut RandomStream,
) -> Result<Simulation<M::State>> {
    if t_len == 0 {
        return Err(Error::config("T", "must be at least 1"));
    }
    let p = model.params(natural)?;
    let mut x = model.sample_initial(&p, rs);
    let mut states = Vec::with_capacity(t_len + 1);
    states.push(x);
    let mut y = Vec::with_capacity(t_len);
    let mut ctx = StepContext::default();
    for _ in 0..t_len {
        x = model.sample_transition(&x, ctx, &p, rs);
        let obs = model.sample_observation(&x, &p, rs);
        states.push(x);
        y.push(obs);
        ctx = StepContext { prev_obs: Some(obs) };
    }
    let mut data = Dataset::new(model.name(), y)?;
    data.truth = Some(natural.to_vec());
    Ok(Simulation { states, data })
}

/// Serializable model selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelConfig {
    Ar1,
    Binomial {
        trials: u32,
    },
    Sv {
        #[serde(default)]
        leverage: bool,
        #[serde(default)]
        outliers: bool,
        #[serde(default = "default_outlier_prob")]
        outlier_prob: f64,
    },
    Garch,
}

fn default_outlier_prob() -> f64 {
    sv::DEFAULT_OUTLIER_PROB
}

impl ModelConfig {
    pub fn build(&self) -> Result<AnyModel> {
        Ok(match *self {
            ModelConfig::Ar1 => AnyModel::Ar1(Ar1Noise),
            ModelConfig::Binomial { trials } => AnyModel::Binomial(BinomialAr::new(trials)?),
            ModelConfig::Sv {
                leverage,
                outliers,
                outlier_prob,
            } => AnyModel::Sv(SvModel::new(leverage, if outliers { outlier_prob } else { 0.0 })?),
            ModelConfig::Garch => AnyModel::Garch(GarchNoise),
        })
    }
}

/// Closed set of the concrete models, for code that picks one at run time.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Ar1(Ar1Noise),
    Binomial(BinomialAr),
    Sv(SvModel),
    Garch(GarchNoise),
}

/// Calls `$body` with `$m` bound to the concrete model inside an [`AnyModel`].
#[macro_export]
macro_rules! with_model {
    ($any:expr, $m:ident => $body:expr) => {
        match $any {
            $crate::models::AnyModel::Ar1($m) => $body,
            $crate::models::AnyModel::Binomial($m) => $body,
            $crate::models::AnyModel::Sv($m) => $body,
            $crate::models::AnyModel::Garch($m) => $body,
        }
    };
}

impl AnyModel {
    pub fn name(&self) -> String {
        with_model!(self, m => m.name())
    }

    pub fn parameterization(&self) -> Parameterization {
        with_model!(self, m => m.parameterization())
    }

    pub fn default_prior(&self) -> PriorSpec {
        with_model!(self, m => m.default_prior())
    }

    pub fn capabilities(&self) -> Capabilities {
        with_model!(self, m => m.capabilities())
    }

    pub fn simulate(&self, natural: &[f64], t_len: usize, rs: &mut RandomStream) -> Result<Dataset> {
        with_model!(self, m => simulate(m, natural, t_len, rs).map(|s| s.data))
    }

    pub fn check_data(&self, data: &Dataset) -> Result<()> {
        with_model!(self, m => m.check_data(data))
    }
}

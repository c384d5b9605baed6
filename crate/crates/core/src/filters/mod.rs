//! The auxiliary particle filter and its simulated likelihood.
//!
//! Each step weights the current particles by a first-stage density
//! `g(y_{t+1} | x_t)`, resamples, proposes from `g(x_{t+1} | x_t; y_{t+1})`
//! and corrects with second-stage weights. The log of
//!
//! ```text
//! p^(y_{t+1} | y_{1:t}) = [ (1/M) sum_k w_{t+1}^k ] [ sum_k g(y_{t+1} | x_t^k) pi_t^k ]
//! ```
//!
//! is accumulated over time; its exponential is an unbiased estimate of the
//! likelihood.
//!
//! Randomness is drawn from one stream per (step, particle) plus one stream
//! per step for resampling, all keyed by the run seed, so a run is a pure
//! function of `(model, theta, data, config, seed)`.

pub mod adapters;
pub mod kalman;

use serde::{Deserialize, Serialize};

pub use adapters::{Adapter, EpsMixture, Fapf, ModeOptions, ModeSolver, Papf, Sir};
pub use kalman::kalman_loglik;

use crate::error::{Error, Result};
use crate::models::{AnyModel, Dataset, StateSpaceModel, StepContext};
use crate::resample::Resampler;
use crate::rng::RandomStream;
use crate::weights::{normalize_log_weights, WeightVector};
use crate::with_model;

/// Stream id used for particle `k` at step `step` (step 0 draws `x_0`).
#[inline]
pub fn particle_stream(step: usize, k: usize) -> u64 {
    ((step as u64) << 32) | k as u64
}

/// Stream id used for resampling at step `step`.
#[inline]
pub fn resample_stream(step: usize) -> u64 {
    ((step as u64) << 32) | u64::from(u32::MAX)
}

/// Largest supported particle count (the low 32 bits of a stream id hold
/// the particle index, with one id reserved for resampling).
pub const MAX_PARTICLES: usize = u32::MAX as usize - 1;

/// Weighted particles at time `t`.
#[derive(Debug, Clone)]
pub struct ParticleSwarm<S> {
    pub particles: Vec<S>,
    pub weights: WeightVector,
    pub t: usize,
}

impl<S> ParticleSwarm<S> {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }
}

/// Result of one filter step.
#[derive(Debug, Clone)]
pub struct StepOutcome<S> {
    pub swarm: ParticleSwarm<S>,
    pub log_increment: f64,
    pub degenerate: bool,
    /// Particles whose adapted proposal fell back to the transition.
    pub fallbacks: usize,
}

/// One step of the auxiliary filter, moving `swarm` from `t` to `t + 1`
/// with observation `y = y_{t+1}`. On degeneracy the increment is `-inf` and
/// the swarm is returned unchanged.
pub fn asir_step<M, A>(
    adapter: &A,
    swarm: &ParticleSwarm<M::State>,
    y: f64,
    ctx: StepContext,
    resampler: Resampler,
    seed: u64,
) -> StepOutcome<M::State>
where
    M: StateSpaceModel,
    A: Adapter<M>,
{
    let m = swarm.len();
    let step = swarm.t + 1;
    let degenerate = |fallbacks| StepOutcome {
        swarm: swarm.clone(),
        log_increment: f64::NEG_INFINITY,
        degenerate: true,
        fallbacks,
    };

    // first stage
    let mut plans = Vec::with_capacity(m);
    let mut first = Vec::with_capacity(m);
    let mut fallbacks = 0;
    for (x, &pi) in swarm.particles.iter().zip(swarm.weights.normalized()) {
        let (plan, log_g) = adapter.plan(x, ctx, y);
        fallbacks += usize::from(A::fell_back(&plan));
        plans.push((plan, log_g));
        first.push(log_g + pi.ln());
    }
    let Ok(w1) = normalize_log_weights(&first) else {
        return degenerate(fallbacks);
    };

    // selection
    let mut rs = RandomStream::new(seed, resample_stream(step));
    let ancestors = resampler.resample(&w1, m, &mut rs);

    // propagation and second stage
    let mut particles = Vec::with_capacity(m);
    let mut second = Vec::with_capacity(m);
    for (k, &a) in ancestors.iter().enumerate() {
        let mut rs = RandomStream::new(seed, particle_stream(step, k));
        let parent = &swarm.particles[a];
        let (plan, log_g) = &plans[a];
        let next = adapter.sample(parent, plan, ctx, &mut rs);
        second.push(adapter.log_weight(&next, parent, plan, *log_g, ctx, y));
        particles.push(next);
    }
    let Ok(w2) = normalize_log_weights(&second) else {
        return degenerate(fallbacks);
    };
    let log_increment = w2.log_mean() + w1.log_sum();
    StepOutcome {
        swarm: ParticleSwarm {
            particles,
            weights: w2,
            t: step,
        },
        log_increment,
        degenerate: false,
        fallbacks,
    }
}

/// Which pair of adaptation densities the filter uses.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FilterVariant {
    /// Bootstrap filter.
    #[default]
    Sir,
    /// Fully adapted.
    Fapf,
    /// Partially adapted.
    Papf,
    /// Partially adapted, mixed with the transition at weight `epsilon`.
    PapfEps { epsilon: f64 },
}

impl FilterVariant {
    pub fn name(&self) -> &'static str {
        match self {
            FilterVariant::Sir => "sir",
            FilterVariant::Fapf => "fapf",
            FilterVariant::Papf => "papf",
            FilterVariant::PapfEps { .. } => "papf-eps",
        }
    }

    /// Parses `sir`, `fapf`, `papf` or `papf-eps` (the latter taking
    /// `epsilon`).
    pub fn parse(name: &str, epsilon: f64) -> Result<Self> {
        match name {
            "sir" => Ok(FilterVariant::Sir),
            "fapf" => Ok(FilterVariant::Fapf),
            "papf" => Ok(FilterVariant::Papf),
            "papf-eps" => Ok(FilterVariant::PapfEps { epsilon }),
            other => Err(Error::config("variant", format!("unknown filter variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub particles: usize,
    pub variant: FilterVariant,
    pub resampler: Resampler,
    pub mode: ModeOptions,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            particles: 100,
            variant: FilterVariant::Sir,
            resampler: Resampler::Stratified,
            mode: ModeOptions::default(),
        }
    }
}

impl FilterConfig {
    pub fn new(particles: usize, variant: FilterVariant) -> Self {
        Self {
            particles,
            variant,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct FilterOutput<S> {
    /// `log p^(y_t | y_{1:t-1})` for each step that was run.
    pub increments: Vec<f64>,
    /// Sum of `increments`; `-inf` if the run degenerated.
    pub log_likelihood: f64,
    pub swarm: ParticleSwarm<S>,
    pub degenerate: bool,
    pub fallbacks: usize,
}

/// Runs the filter on `data` at natural parameters `natural`.
pub fn run_filter<M: StateSpaceModel>(
    model: &M,
    natural: &[f64],
    data: &Dataset,
    cfg: &FilterConfig,
    seed: u64,
) -> Result<FilterOutput<M::State>> {
    if cfg.particles == 0 || cfg.particles > MAX_PARTICLES {
        return Err(Error::config("particles", format!("must lie in 1..={MAX_PARTICLES}")));
    }
    let p = model.params(natural)?;
    match cfg.variant {
        FilterVariant::Sir => Ok(run_with(&Sir { model, params: p }, data, cfg, seed)),
        FilterVariant::Fapf => Ok(run_with(&Fapf::new(model, p)?, data, cfg, seed)),
        FilterVariant::Papf => Ok(run_with(&Papf::new(model, p, cfg.mode)?, data, cfg, seed)),
        FilterVariant::PapfEps { epsilon } => {
            let a = EpsMixture::new(Papf::new(model, p, cfg.mode)?, epsilon)?;
            Ok(run_with(&a, data, cfg, seed))
        }
    }
}

/// Draws the initial swarm `x_0^k ~ p(x_0)` with equal weights.
pub fn initial_swarm<M: StateSpaceModel>(model: &M, p: &M::Params, m: usize, seed: u64) -> ParticleSwarm<M::State> {
    let particles = (0..m)
        .map(|k| model.sample_initial(p, &mut RandomStream::new(seed, particle_stream(0, k))))
        .collect();
    ParticleSwarm {
        particles,
        weights: WeightVector::uniform(m),
        t: 0,
    }
}

/// The filter loop for a given adapter.
pub fn run_with<M: StateSpaceModel, A: Adapter<M>>(
    adapter: &A,
    data: &Dataset,
    cfg: &FilterConfig,
    seed: u64,
) -> FilterOutput<M::State> {
    let swarm = initial_swarm(adapter.model(), adapter.params(), cfg.particles, seed);
    run_from(adapter, swarm, data, cfg.resampler, seed)
}

/// The filter loop from a given initial swarm.
pub fn run_from<M: StateSpaceModel, A: Adapter<M>>(
    adapter: &A,
    mut swarm: ParticleSwarm<M::State>,
    data: &Dataset,
    resampler: Resampler,
    seed: u64,
) -> FilterOutput<M::State> {
    let mut increments = Vec::with_capacity(data.len());
    let mut fallbacks = 0;
    let mut ctx = StepContext::default();
    for &y in &data.y {
        let out = asir_step(adapter, &swarm, y, ctx, resampler, seed);
        increments.push(out.log_increment);
        fallbacks += out.fallbacks;
        swarm = out.swarm;
        if out.degenerate {
            return FilterOutput {
                increments,
                log_likelihood: f64::NEG_INFINITY,
                swarm,
                degenerate: true,
                fallbacks,
            };
        }
        ctx = StepContext { prev_obs: Some(y) };
    }
    FilterOutput {
        log_likelihood: increments.iter().sum(),
        increments,
        swarm,
        degenerate: false,
        fallbacks,
    }
}

/// Summary of a run that does not depend on the state type.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSummary {
    pub increments: Vec<f64>,
    pub log_likelihood: f64,
    pub degenerate: bool,
    pub fallbacks: usize,
}

impl<S> From<FilterOutput<S>> for FilterSummary {
    fn from(o: FilterOutput<S>) -> Self {
        Self {
            increments: o.increments,
            log_likelihood: o.log_likelihood,
            degenerate: o.degenerate,
            fallbacks: o.fallbacks,
        }
    }
}

impl AnyModel {
    pub fn run_filter(&self, natural: &[f64], data: &Dataset, cfg: &FilterConfig, seed: u64) -> Result<FilterSummary> {
        with_model!(self, m => run_filter(m, natural, data, cfg, seed).map(FilterSummary::from))
    }
}

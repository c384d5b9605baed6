//! First-stage weights and proposals for the auxiliary particle filter.
//!
//! An adapter supplies `g(y_{t+1} | x_t)` and `g(x_{t+1} | x_t; y_{t+1})`.
//! The bootstrap (SIR) filter takes `g = 1` and proposes from the transition;
//! the fully adapted filter uses the exact predictive and posterior; the
//! partially adapted filter uses a Laplace approximation around the mode of
//! `l(v) + log p(v | x_t)`; the epsilon mixture blends any adapter with the
//! transition to keep the second-stage weights bounded.

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::prior::normal_log_density;
use crate::models::{StateSpaceModel, StepContext};
use crate::rng::RandomStream;
use crate::weights::log_add_exp;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// The two adaptation densities of one filter step, evaluated per particle.
pub trait Adapter<M: StateSpaceModel>: Sync {
    /// Per-particle quantities computed with the first-stage weight and
    /// reused by the proposal.
    type Plan: Copy + Send + Sync + Debug;

    fn model(&self) -> &M;

    fn params(&self) -> &M::Params;

    /// Plan for particle `x` and `log g(y | x)`.
    fn plan(&self, x: &M::State, ctx: StepContext, y: f64) -> (Self::Plan, f64);

    /// Draws from `g(. | x; y)`.
    fn sample(&self, x: &M::State, plan: &Self::Plan, ctx: StepContext, rs: &mut RandomStream) -> M::State;

    /// `log g(next | x; y)`.
    fn log_proposal(&self, next: &M::State, x: &M::State, plan: &Self::Plan, ctx: StepContext) -> f64;

    /// Second-stage log weight
    /// `log p(y | next) + log p(next | x) - log g(y | x) - log g(next | x; y)`.
    fn log_weight(
        &self,
        next: &M::State,
        x: &M::State,
        plan: &Self::Plan,
        log_g: f64,
        ctx: StepContext,
        y: f64,
    ) -> f64 {
        generic_log_weight(self, next, x, plan, log_g, ctx, y)
    }

    /// True when the plan abandoned adaptation for this particle.
    fn fell_back(_plan: &Self::Plan) -> bool {
        false
    }
}

/// The second-stage weight written out in full, without any cancellation.
pub fn generic_log_weight<M: StateSpaceModel, A: Adapter<M> + ?Sized>(
    a: &A,
    next: &M::State,
    x: &M::State,
    plan: &A::Plan,
    log_g: f64,
    ctx: StepContext,
    y: f64,
) -> f64 {
    let m = a.model();
    let p = a.params();
    m.log_obs_density(y, next, p) + m.log_transition_density(next, x, ctx, p)
        - log_g
        - a.log_proposal(next, x, plan, ctx)
}

/// Bootstrap filter: `g(y | x) = 1`, proposal = transition.
pub struct Sir<'a, M: StateSpaceModel> {
    pub model: &'a M,
    pub params: M::Params,
}

impl<M: StateSpaceModel> Adapter<M> for Sir<'_, M> {
    type Plan = ();

    fn model(&self) -> &M {
        self.model
    }

    fn params(&self) -> &M::Params {
        &self.params
    }

    fn plan(&self, _x: &M::State, _ctx: StepContext, _y: f64) -> ((), f64) {
        ((), 0.0)
    }

    fn sample(&self, x: &M::State, _plan: &(), ctx: StepContext, rs: &mut RandomStream) -> M::State {
        self.model.sample_transition(x, ctx, &self.params, rs)
    }

    fn log_proposal(&self, next: &M::State, x: &M::State, _plan: &(), ctx: StepContext) -> f64 {
        self.model.log_transition_density(next, x, ctx, &self.params)
    }

    fn log_weight(&self, next: &M::State, _x: &M::State, _plan: &(), _log_g: f64, _ctx: StepContext, y: f64) -> f64 {
        self.model.log_obs_density(y, next, &self.params)
    }
}

/// Normal law of the scalar component under a proposal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalPlan {
    pub mean: f64,
    pub var: f64,
}

impl NormalPlan {
    fn draw(&self, rs: &mut RandomStream) -> f64 {
        if self.var > 0.0 {
            self.mean + self.var.sqrt() * rs.normal()
        } else {
            self.mean
        }
    }

    fn log_density(&self, v: f64) -> f64 {
        if self.var > 0.0 {
            normal_log_density(v, self.mean, self.var)
        } else if v == self.mean {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Fully adapted filter for a Gaussian transition observed through
/// `y ~ N(h v, V)`: the predictive `N(y; h mu, h^2 S + V)` is the first-stage
/// weight and the exact posterior of `v` is the proposal, so every
/// second-stage weight is one.
pub struct Fapf<'a, M: StateSpaceModel> {
    model: &'a M,
    params: M::Params,
    h: f64,
    obs_var: f64,
}

impl<'a, M: StateSpaceModel> Fapf<'a, M> {
    pub fn new(model: &'a M, params: M::Params) -> Result<Self> {
        let unsupported = || Error::UnsupportedVariant {
            variant: "fapf".into(),
            model: model.name(),
        };
        if !model.capabilities().fully_adaptable {
            return Err(unsupported());
        }
        let obs = model.gaussian_observation(&params).ok_or_else(unsupported)?;
        Ok(Self {
            model,
            params,
            h: obs.h,
            obs_var: obs.var,
        })
    }

    /// Posterior of `v` and log predictive of `y` given prior `N(mean, var)`.
    pub fn conjugate(&self, mean: f64, var: f64, y: f64) -> (NormalPlan, f64) {
        let (h, r) = (self.h, self.obs_var);
        let log_pred = normal_log_density(y, h * mean, h * h * var + r);
        let post = if var > 0.0 {
            let pv = 1.0 / (h * h / r + 1.0 / var);
            NormalPlan {
                mean: pv * (h * y / r + mean / var),
                var: pv,
            }
        } else {
            NormalPlan { mean, var: 0.0 }
        };
        (post, log_pred)
    }
}

impl<M: StateSpaceModel> Adapter<M> for Fapf<'_, M> {
    type Plan = NormalPlan;

    fn model(&self) -> &M {
        self.model
    }

    fn params(&self) -> &M::Params {
        &self.params
    }

    fn plan(&self, x: &M::State, ctx: StepContext, y: f64) -> (NormalPlan, f64) {
        match self.model.gaussian_transition(x, ctx, &self.params) {
            Some(gt) if gt.exact => self.conjugate(gt.mean, gt.var, y),
            _ => (
                NormalPlan {
                    mean: f64::NAN,
                    var: f64::NAN,
                },
                f64::NEG_INFINITY,
            ),
        }
    }

    fn sample(&self, x: &M::State, plan: &NormalPlan, ctx: StepContext, rs: &mut RandomStream) -> M::State {
        let v = plan.draw(rs);
        self.model.next_state(x, ctx, &self.params, v)
    }

    fn log_proposal(&self, next: &M::State, _x: &M::State, plan: &NormalPlan, _ctx: StepContext) -> f64 {
        plan.log_density(self.model.component(next))
    }

    fn log_weight(&self, _: &M::State, _: &M::State, _: &NormalPlan, _: f64, _: StepContext, _: f64) -> f64 {
        0.0
    }
}

/// How the partially adapted filter locates the mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSolver {
    /// Newton-Raphson on `lambda` with step halving.
    #[default]
    Newton,
    /// The fixed-point iteration `v = mu + S l'(v)`.
    FixedPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModeOptions {
    pub solver: ModeSolver,
    /// Stop once `|d lambda / dv|` (Newton) or the step (fixed point) is
    /// below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Run exactly this many iterations instead of testing convergence.
    pub fixed_steps: Option<usize>,
}

impl Default for ModeOptions {
    fn default() -> Self {
        Self {
            solver: ModeSolver::Newton,
            tol: 1e-8,
            max_iter: 50,
            fixed_steps: None,
        }
    }
}

/// Mode, curvature-based variance and value of
/// `lambda(v) = l(v) + log N(v; mean, var)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub mode: f64,
    pub var: f64,
    pub lambda: f64,
}

/// Maximizes `lambda(v) = l(v) + log N(v; mean, var)` where `derivs(v)`
/// returns `(l, l', l'')`. Newton steps are halved until `lambda` does not
/// decrease. Returns `None` when the iteration fails to converge or the
/// curvature is not negative at the end point.
pub fn find_mode(
    derivs: impl Fn(f64) -> Option<(f64, f64, f64)>,
    mean: f64,
    var: f64,
    start: f64,
    opts: &ModeOptions,
) -> Option<Mode> {
    let eval = |v: f64| -> Option<(f64, f64, f64)> {
        let (l, d1, d2) = derivs(v)?;
        let lam = l + normal_log_density(v, mean, var);
        let g = d1 - (v - mean) / var;
        let h = d2 - 1.0 / var;
        (lam.is_finite() && g.is_finite() && h.is_finite()).then_some((lam, g, h))
    };
    let finish = |v: f64, (lam, _g, h): (f64, f64, f64)| {
        (h < 0.0).then_some(Mode {
            mode: v,
            var: -1.0 / h,
            lambda: lam,
        })
    };
    let iters = opts.fixed_steps.unwrap_or(opts.max_iter);
    let mut v = start;
    let mut cur = eval(v)?;
    match opts.solver {
        ModeSolver::Newton => {
            for _ in 0..iters {
                let (lam, g, h) = cur;
                if opts.fixed_steps.is_none() && g.abs() < opts.tol {
                    return finish(v, cur);
                }
                // where lambda is not locally concave, step along the
                // gradient scaled by the prior variance instead
                let mut step = if h < 0.0 { -g / h } else { g * var };
                let mut accepted = None;
                for _ in 0..60 {
                    let cand = v + step;
                    if let Some(e) = eval(cand) {
                        if e.0 >= lam - 1e-12 * lam.abs().max(1.0) {
                            accepted = Some((cand, e));
                            break;
                        }
                    }
                    step *= 0.5;
                }
                let (nv, e) = accepted?;
                v = nv;
                cur = e;
            }
        }
        ModeSolver::FixedPoint => {
            for _ in 0..iters {
                let (_, d1, _) = derivs(v)?;
                let nv = mean + var * d1;
                if !nv.is_finite() {
                    return None;
                }
                let moved = (nv - v).abs();
                v = nv;
                cur = eval(v)?;
                if opts.fixed_steps.is_none() && moved < opts.tol {
                    return finish(v, cur);
                }
            }
        }
    }
    if opts.fixed_steps.is_some() {
        return finish(v, cur);
    }
    // out of iterations: accept only if already stationary
    match opts.solver {
        ModeSolver::Newton if cur.1.abs() < opts.tol => finish(v, cur),
        _ => None,
    }
}

/// Plan of the partially adapted filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PapfPlan {
    pub proposal: NormalPlan,
    /// Mode search failed; the particle uses the bootstrap proposal.
    pub fallback: bool,
}

/// Partially adapted filter: Laplace approximation of
/// `p(y | x) = int p(y | v) p(v | x) dv` around the mode of the integrand,
/// with the normal `N(mode, -1 / lambda'')` as proposal.
pub struct Papf<'a, M: StateSpaceModel> {
    model: &'a M,
    params: M::Params,
    opts: ModeOptions,
}

impl<'a, M: StateSpaceModel> Papf<'a, M> {
    pub fn new(model: &'a M, params: M::Params, opts: ModeOptions) -> Result<Self> {
        if !model.capabilities().partially_adaptable {
            return Err(Error::UnsupportedVariant {
                variant: "papf".into(),
                model: model.name(),
            });
        }
        Ok(Self { model, params, opts })
    }

    /// Mode of `lambda` for particle `x` and observation `y`.
    pub fn mode(&self, x: &M::State, ctx: StepContext, y: f64) -> Option<Mode> {
        let gt = self.model.gaussian_transition(x, ctx, &self.params)?;
        if !(gt.var > 0.0) {
            return None;
        }
        let start = self.model.mode_start(y, gt.mean, &self.params);
        find_mode(
            |v| self.model.obs_derivatives(y, v, &self.params),
            gt.mean,
            gt.var,
            start,
            &self.opts,
        )
    }
}

impl<M: StateSpaceModel> Adapter<M> for Papf<'_, M> {
    type Plan = PapfPlan;

    fn model(&self) -> &M {
        self.model
    }

    fn params(&self) -> &M::Params {
        &self.params
    }

    fn plan(&self, x: &M::State, ctx: StepContext, y: f64) -> (PapfPlan, f64) {
        match self.mode(x, ctx, y) {
            Some(m) => (
                PapfPlan {
                    proposal: NormalPlan {
                        mean: m.mode,
                        var: m.var,
                    },
                    fallback: false,
                },
                m.lambda + 0.5 * (LN_2PI + m.var.ln()),
            ),
            None => (
                PapfPlan {
                    proposal: NormalPlan { mean: 0.0, var: 0.0 },
                    fallback: true,
                },
                0.0,
            ),
        }
    }

    fn sample(&self, x: &M::State, plan: &PapfPlan, ctx: StepContext, rs: &mut RandomStream) -> M::State {
        if plan.fallback {
            self.model.sample_transition(x, ctx, &self.params, rs)
        } else {
            let v = plan.proposal.draw(rs);
            self.model.next_state(x, ctx, &self.params, v)
        }
    }

    fn log_proposal(&self, next: &M::State, x: &M::State, plan: &PapfPlan, ctx: StepContext) -> f64 {
        if plan.fallback {
            self.model.log_transition_density(next, x, ctx, &self.params)
        } else {
            plan.proposal.log_density(self.model.component(next))
        }
    }

    fn log_weight(&self, next: &M::State, x: &M::State, plan: &PapfPlan, log_g: f64, ctx: StepContext, y: f64) -> f64 {
        if plan.fallback {
            self.model.log_obs_density(y, next, &self.params)
        } else {
            generic_log_weight(self, next, x, plan, log_g, ctx, y)
        }
    }

    fn fell_back(plan: &PapfPlan) -> bool {
        plan.fallback
    }
}

/// Plan of the epsilon mixture: the base plan and `log g0(y | x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsPlan<P> {
    pub base: P,
    pub log_g0: f64,
}

/// Joint proposal `eps p(x' | x) + (1 - eps) g0(y | x) g0(x' | x; y)`.
///
/// Its first-stage weight is `eps + (1 - eps) g0(y | x)`, and each
/// second-stage weight is at most `sup p(y | .) / eps`.
pub struct EpsMixture<A> {
    base: A,
    ln_eps: f64,
    ln_rest: f64,
}

impl<A> EpsMixture<A> {
    pub fn new(base: A, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::config("epsilon", format!("must lie in (0, 1), got {eps}")));
        }
        Ok(Self {
            base,
            ln_eps: eps.ln(),
            ln_rest: (-eps).ln_1p(),
        })
    }

    fn log_joint<M: StateSpaceModel>(
        &self,
        next: &M::State,
        x: &M::State,
        plan: &EpsPlan<A::Plan>,
        ctx: StepContext,
    ) -> f64
    where
        A: Adapter<M>,
    {
        let trans = self
            .base
            .model()
            .log_transition_density(next, x, ctx, self.base.params());
        let adapted = plan.log_g0 + self.base.log_proposal(next, x, &plan.base, ctx);
        log_add_exp(self.ln_eps + trans, self.ln_rest + adapted)
    }
}

impl<M: StateSpaceModel, A: Adapter<M>> Adapter<M> for EpsMixture<A> {
    type Plan = EpsPlan<A::Plan>;

    fn model(&self) -> &M {
        self.base.model()
    }

    fn params(&self) -> &M::Params {
        self.base.params()
    }

    fn plan(&self, x: &M::State, ctx: StepContext, y: f64) -> (Self::Plan, f64) {
        let (base, log_g0) = self.base.plan(x, ctx, y);
        (
            EpsPlan { base, log_g0 },
            log_add_exp(self.ln_eps, self.ln_rest + log_g0),
        )
    }

    fn sample(&self, x: &M::State, plan: &Self::Plan, ctx: StepContext, rs: &mut RandomStream) -> M::State {
        // probability of the transition branch given x is eps / g(y | x)
        let log_g = log_add_exp(self.ln_eps, self.ln_rest + plan.log_g0);
        if rs.uniform().ln() < self.ln_eps - log_g {
            self.base.model().sample_transition(x, ctx, self.base.params(), rs)
        } else {
            self.base.sample(x, &plan.base, ctx, rs)
        }
    }

    fn log_proposal(&self, next: &M::State, x: &M::State, plan: &Self::Plan, ctx: StepContext) -> f64 {
        let log_g = log_add_exp(self.ln_eps, self.ln_rest + plan.log_g0);
        self.log_joint(next, x, plan, ctx) - log_g
    }

    fn log_weight(
        &self,
        next: &M::State,
        x: &M::State,
        plan: &Self::Plan,
        _log_g: f64,
        ctx: StepContext,
        y: f64,
    ) -> f64 {
        let m = self.base.model();
        let p = self.base.params();
        m.log_obs_density(y, next, p) + m.log_transition_density(next, x, ctx, p) - self.log_joint(next, x, plan, ctx)
    }

    fn fell_back(plan: &Self::Plan) -> bool {
        A::fell_back(&plan.base)
    }
}

//! Stochastic volatility with optional leverage and outliers.
//!
//! ```text
//! y_t     = K_t exp(x_t / 2) eps_t
//! x_{t+1} = mu + phi (x_t - mu) + sigma_eta eta_t,   corr(eps_t, eta_t) = rho
//! P(K_t = 2.5) = omega,  P(K_t = 1) = 1 - omega
//! ```
//!
//! In the filter the leverage term enters through the transition: given
//! `(x_t, y_t)` the outlier indicator is drawn from its conditional law, the
//! standardized shock `eps_t = y_t exp(-x_t / 2) / K_t` is recovered and
//!
//! ```text
//! x_{t+1} | x_t, y_t, K_t ~ N(mu + phi (x_t - mu) + sigma_eta rho eps_t, sigma_eta^2 (1 - rho^2))
//! ```
//!
//! so the transition density is a two-component mixture over `K_t`. With
//! `rho = 0` or `omega = 0` it collapses to a single normal.

use super::prior::normal_log_density;
use super::{
    Capabilities, GaussianTransition, Marginal, Parameterization, PriorSpec, StateSpaceModel, StepContext, Transform,
};
use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::weights::log_add_exp;

pub const DEFAULT_OUTLIER_PROB: f64 = 0.03;
pub const OUTLIER_SCALE: f64 = 2.5;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvParams {
    pub mu: f64,
    pub phi: f64,
    pub sigma2: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvModel {
    leverage: bool,
    outlier_prob: f64,
}

/// Up to two normal components of the transition, with weights.
#[derive(Debug, Clone, Copy)]
struct TransitionMixture {
    weights: [f64; 2],
    means: [f64; 2],
    var: f64,
    n: usize,
}

impl SvModel {
    pub fn new(leverage: bool, outlier_prob: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&outlier_prob) {
            return Err(Error::config("outlier_prob", "must lie in [0, 1)"));
        }
        Ok(Self { leverage, outlier_prob })
    }

    pub fn leverage(&self) -> bool {
        self.leverage
    }

    pub fn outlier_prob(&self) -> f64 {
        self.outlier_prob
    }

    /// `log N(y; 0, k^2 exp(x))`.
    #[inline]
    fn log_component(y: f64, x: f64, k: f64) -> f64 {
        -LN_SQRT_2PI - k.ln() - 0.5 * x - 0.5 * y * y * (-x).exp() / (k * k)
    }

    /// Conditional probability that `K_t = 2.5` given `(y_t, x_t)`.
    pub fn outlier_posterior(&self, y: f64, x: f64) -> f64 {
        if self.outlier_prob == 0.0 {
            return 0.0;
        }
        let lo = self.outlier_prob.ln() + Self::log_component(y, x, OUTLIER_SCALE);
        let ln = (1.0 - self.outlier_prob).ln() + Self::log_component(y, x, 1.0);
        1.0 / (1.0 + (ln - lo).exp())
    }

    fn transition(&self, x: f64, ctx: StepContext, p: &SvParams) -> TransitionMixture {
        let base = p.mu + p.phi * (x - p.mu);
        match ctx.prev_obs {
            Some(y) if self.leverage && p.rho != 0.0 => {
                let shock = y * (-0.5 * x).exp();
                let var = p.sigma2 * (1.0 - p.rho * p.rho);
                let lev = p.sigma2.sqrt() * p.rho;
                if self.outlier_prob == 0.0 {
                    TransitionMixture {
                        weights: [1.0, 0.0],
                        means: [base + lev * shock, 0.0],
                        var,
                        n: 1,
                    }
                } else {
                    let r = self.outlier_posterior(y, x);
                    TransitionMixture {
                        weights: [1.0 - r, r],
                        means: [base + lev * shock, base + lev * shock / OUTLIER_SCALE],
                        var,
                        n: 2,
                    }
                }
            }
            _ => TransitionMixture {
                weights: [1.0, 0.0],
                means: [base, 0.0],
                var: p.sigma2,
                n: 1,
            },
        }
    }
}

impl StateSpaceModel for SvModel {
    type State = f64;
    type Params = SvParams;

    fn name(&self) -> String {
        match (self.leverage, self.outlier_prob > 0.0) {
            (false, false) => "sv".into(),
            (true, false) => "sv-lev".into(),
            (false, true) => "sv-out".into(),
            (true, true) => "sv-lev-out".into(),
        }
    }

    fn parameterization(&self) -> Parameterization {
        let mut names = vec!["mu".to_string(), "phi".into(), "sigma2_eta".into()];
        let mut transforms = vec![Transform::Identity, Transform::Logit, Transform::Log];
        if self.leverage {
            names.push("rho".into());
            transforms.push(Transform::ScaledLogit { lo: -1.0, hi: 1.0 });
        }
        Parameterization::new(names, transforms)
    }

    fn default_prior(&self) -> PriorSpec {
        let mut m = vec![
            Marginal::Normal { mean: 0.0, var: 100.0 },
            Marginal::TruncatedNormal {
                loc: 0.9,
                scale: 0.1,
                lo: 0.0,
                hi: 1.0,
            },
            Marginal::InverseGamma {
                shape: 0.01,
                scale: 0.01,
            },
        ];
        if self.leverage {
            m.push(Marginal::TruncatedNormal {
                loc: 0.0,
                scale: 1e6,
                lo: -1.0,
                hi: 1.0,
            });
        }
        PriorSpec::new(m)
    }

    fn params(&self, natural: &[f64]) -> Result<SvParams> {
        let (mu, phi, sigma2, rho) = match (self.leverage, natural) {
            (false, &[mu, phi, s]) => (mu, phi, s, 0.0),
            (true, &[mu, phi, s, rho]) => (mu, phi, s, rho),
            _ => {
                return Err(Error::config(
                    "parameters",
                    format!("{} expects {} values", self.name(), if self.leverage { 4 } else { 3 }),
                ))
            }
        };
        if !(phi.abs() < 1.0) {
            return Err(Error::config("phi", "stationarity requires |phi| < 1"));
        }
        if !(sigma2 > 0.0) || !mu.is_finite() {
            return Err(Error::config("sigma2_eta", "must be positive"));
        }
        if !(rho.abs() < 1.0) {
            return Err(Error::config("rho", "must lie in (-1, 1)"));
        }
        Ok(SvParams { mu, phi, sigma2, rho })
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            fully_adaptable: false,
            partially_adaptable: true,
        }
    }

    fn sample_initial(&self, p: &SvParams, rs: &mut RandomStream) -> f64 {
        p.mu + (p.sigma2 / (1.0 - p.phi * p.phi)).sqrt() * rs.normal()
    }

    fn sample_transition(&self, x: &f64, ctx: StepContext, p: &SvParams, rs: &mut RandomStream) -> f64 {
        let tm = self.transition(*x, ctx, p);
        let c = if tm.n == 2 && rs.uniform() < tm.weights[1] {
            1
        } else {
            0
        };
        tm.means[c] + tm.var.sqrt() * rs.normal()
    }

    fn log_transition_density(&self, next: &f64, x: &f64, ctx: StepContext, p: &SvParams) -> f64 {
        let tm = self.transition(*x, ctx, p);
        let first = normal_log_density(*next, tm.means[0], tm.var);
        if tm.n == 1 {
            first
        } else {
            log_add_exp(
                tm.weights[0].ln() + first,
                tm.weights[1].ln() + normal_log_density(*next, tm.means[1], tm.var),
            )
        }
    }

    fn log_obs_density(&self, y: f64, x: &f64, _p: &SvParams) -> f64 {
        let plain = Self::log_component(y, *x, 1.0);
        if self.outlier_prob == 0.0 {
            plain
        } else {
            log_add_exp(
                (1.0 - self.outlier_prob).ln() + plain,
                self.outlier_prob.ln() + Self::log_component(y, *x, OUTLIER_SCALE),
            )
        }
    }

    fn sample_observation(&self, x: &f64, _p: &SvParams, rs: &mut RandomStream) -> f64 {
        let k = if self.outlier_prob > 0.0 && rs.uniform() < self.outlier_prob {
            OUTLIER_SCALE
        } else {
            1.0
        };
        k * (0.5 * x).exp() * rs.normal()
    }

    fn component(&self, x: &f64) -> f64 {
        *x
    }

    fn next_state(&self, _x: &f64, _ctx: StepContext, _p: &SvParams, v: f64) -> f64 {
        v
    }

    fn gaussian_transition(&self, x: &f64, ctx: StepContext, p: &SvParams) -> Option<GaussianTransition> {
        let tm = self.transition(*x, ctx, p);
        if tm.n == 1 {
            return Some(GaussianTransition {
                mean: tm.means[0],
                var: tm.var,
                exact: true,
            });
        }
        let mean = tm.weights[0] * tm.means[0] + tm.weights[1] * tm.means[1];
        let spread = tm.weights[0] * (tm.means[0] - mean).powi(2) + tm.weights[1] * (tm.means[1] - mean).powi(2);
        Some(GaussianTransition {
            mean,
            var: tm.var + spread,
            exact: false,
        })
    }

    fn obs_derivatives(&self, y: f64, v: f64, p: &SvParams) -> Option<(f64, f64, f64)> {
        let e = y * y * (-v).exp();
        let d = |k: f64| (-0.5 + 0.5 * e / (k * k), -0.5 * e / (k * k));
        let l = self.log_obs_density(y, &v, p);
        if self.outlier_prob == 0.0 {
            let (d1, d2) = d(1.0);
            return Some((l, d1, d2));
        }
        let r = self.outlier_posterior(y, v);
        let (a1, a2) = d(1.0);
        let (b1, b2) = d(OUTLIER_SCALE);
        let d1 = (1.0 - r) * a1 + r * b1;
        let d2 = (1.0 - r) * (a2 + a1 * a1) + r * (b2 + b1 * b1) - d1 * d1;
        Some((l, d1, d2))
    }
}

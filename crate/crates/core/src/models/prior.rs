//! Prior distributions over model parameters (natural coordinates).

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Log-density of `N(mean, var)` at `x`.
#[inline]
pub fn normal_log_density(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -LN_SQRT_2PI - 0.5 * var.ln() - 0.5 * d * d / var
}

/// One-dimensional prior law. Variances, not standard deviations, parametrize
/// `Normal` and `HalfNormal`; `TruncatedNormal` takes a location and a scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum Marginal {
    Normal {
        mean: f64,
        var: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    InverseGamma {
        shape: f64,
        scale: f64,
    },
    HalfNormal {
        var: f64,
    },
    TruncatedNormal {
        loc: f64,
        scale: f64,
        lo: f64,
        hi: f64,
    },
    /// Point mass carried by a fixed parameter; contributes nothing.
    Flat,
}

impl Marginal {
    pub fn log_density(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NEG_INFINITY;
        }
        match *self {
            Marginal::Normal { mean, var } => normal_log_density(x, mean, var),
            Marginal::Uniform { lo, hi } => {
                if x > lo && x < hi {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Marginal::InverseGamma { shape, scale } => {
                if x > 0.0 {
                    shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
                } else {
                    f64::NEG_INFINITY
                }
            }
            Marginal::HalfNormal { var } => {
                if x >= 0.0 {
                    std::f64::consts::LN_2 + normal_log_density(x, 0.0, var)
                } else {
                    f64::NEG_INFINITY
                }
            }
            Marginal::TruncatedNormal { loc, scale, lo, hi } => {
                if x > lo && x < hi {
                    let mass = std_normal_cdf((hi - loc) / scale) - std_normal_cdf((lo - loc) / scale);
                    normal_log_density(x, loc, scale * scale) - mass.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Marginal::Flat => 0.0,
        }
    }

    /// Support as an open (or half-open) interval.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Marginal::Normal { .. } | Marginal::Flat => (f64::NEG_INFINITY, f64::INFINITY),
            Marginal::Uniform { lo, hi } | Marginal::TruncatedNormal { lo, hi, .. } => (lo, hi),
            Marginal::InverseGamma { .. } | Marginal::HalfNormal { .. } => (0.0, f64::INFINITY),
        }
    }
}

/// Joint restriction on a group of parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Constraint {
    /// All listed parameters positive with sum strictly below `bound`. The
    /// marginals of the group are renormalized to the region by adding
    /// `log_normalizer` (for two Uniform(0,1) marginals and bound 1 this is
    /// `ln 2`).
    SumBelow {
        indices: Vec<usize>,
        bound: f64,
        log_normalizer: f64,
    },
}

impl Constraint {
    fn log_factor(&self, natural: &[f64], mask: &[bool]) -> f64 {
        match self {
            Constraint::SumBelow {
                indices,
                bound,
                log_normalizer,
            } => {
                let inside = indices.iter().all(|&i| natural[i] > 0.0)
                    && indices.iter().map(|&i| natural[i]).sum::<f64>() < *bound;
                if !inside {
                    f64::NEG_INFINITY
                } else if indices.iter().all(|&i| mask[i]) {
                    *log_normalizer
                } else {
                    0.0
                }
            }
        }
    }
}

/// Independent marginals plus joint constraints, ordered like the model's
/// parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub marginals: Vec<Marginal>,
    #[serde(default)]
    pub constraints: Vec<Constraint>,
}

impl PriorSpec {
    pub fn new(marginals: Vec<Marginal>) -> Self {
        Self {
            marginals,
            constraints: Vec::new(),
        }
    }

    pub fn with_constraint(mut self, c: Constraint) -> Self {
        self.constraints.push(c);
        self
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    /// Log prior density of a full natural parameter vector.
    pub fn log_density(&self, natural: &[f64]) -> Result<f64> {
        self.log_density_masked(natural, &vec![true; natural.len()])
    }

    /// Log prior density counting only the marginals selected by `mask`.
    /// Constraints are always enforced; their normalizer is added only when
    /// every member is selected.
    pub fn log_density_masked(&self, natural: &[f64], mask: &[bool]) -> Result<f64> {
        if natural.len() != self.dim() || mask.len() != self.dim() {
            return Err(Error::config(
                "prior",
                format!(
                    "prior has {} marginals, parameter vector has {}",
                    self.dim(),
                    natural.len()
                ),
            ));
        }
        let mut total = 0.0;
        for ((m, &x), &on) in self.marginals.iter().zip(natural).zip(mask) {
            if on {
                total += m.log_density(x);
            }
        }
        for c in &self.constraints {
            total += c.log_factor(natural, mask);
        }
        if total.is_nan() {
            total = f64::NEG_INFINITY;
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Composite Simpson rule on [a, b] with n (even) panels.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn unit_uniform_density() {
        let m = Marginal::Uniform { lo: 0.0, hi: 1.0 };
        assert_eq!(m.log_density(0.3), 0.0);
        assert_eq!(m.log_density(1.3), f64::NEG_INFINITY);
    }

    #[test]
    fn garch_region_violation() {
        let u = Marginal::Uniform { lo: 0.0, hi: 1.0 };
        let prior = PriorSpec::new(vec![u, u]).with_constraint(Constraint::SumBelow {
            indices: vec![0, 1],
            bound: 1.0,
            log_normalizer: std::f64::consts::LN_2,
        });
        assert_eq!(prior.log_density(&[0.6, 0.5]).unwrap(), f64::NEG_INFINITY);
        assert_relative_eq!(prior.log_density(&[0.6, 0.3]).unwrap(), std::f64::consts::LN_2);
        // the renormalized region integrates to one
        let inner = |b: f64| {
            let w = 1.0 - b;
            simpson(
                |g| prior.log_density(&[b, g]).unwrap().exp(),
                w * 1e-12,
                w * (1.0 - 1e-12),
                200,
            )
        };
        let total = simpson(|b| if b < 1.0 { inner(b) } else { 0.0 }, 1e-12, 1.0 - 1e-12, 200);
        assert!((total - 1.0).abs() < 1e-9, "{total}");
    }

    #[test]
    fn half_normal_at_zero() {
        let m = Marginal::HalfNormal { var: 100.0 * 100.0 };
        let expected = std::f64::consts::LN_2 - 100f64.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert_relative_eq!(m.log_density(0.0), expected, epsilon = 1e-12);
        assert_relative_eq!(m.log_density(0.0), -4.830962, epsilon = 1e-6);
    }

    #[test]
    fn dimension_mismatch_is_a_config_error() {
        let prior = PriorSpec::new(vec![Marginal::Normal { mean: 0.0, var: 1.0 }]);
        assert!(matches!(prior.log_density(&[0.0, 1.0]), Err(Error::Config { .. })));
    }

    #[test]
    fn densities_integrate_to_one() {
        let cases = [
            (Marginal::Normal { mean: 1.0, var: 4.0 }, -30.0, 30.0),
            (Marginal::InverseGamma { shape: 3.0, scale: 2.0 }, 1e-9, 400.0),
            (Marginal::HalfNormal { var: 2.0 }, 0.0, 20.0),
            (
                Marginal::TruncatedNormal {
                    loc: 0.9,
                    scale: 0.1,
                    lo: 0.0,
                    hi: 1.0,
                },
                0.0,
                1.0,
            ),
            (
                Marginal::TruncatedNormal {
                    loc: 0.0,
                    scale: 1e6,
                    lo: -1.0,
                    hi: 1.0,
                },
                -1.0,
                1.0,
            ),
        ];
        for (m, a, b) in cases {
            let total = simpson(|x| m.log_density(x).exp(), a, b, 200_000);
            assert!((total - 1.0).abs() < 1e-4, "{m:?}: {total}");
        }
    }

    #[test]
    fn support_indicator() {
        let ig = Marginal::InverseGamma { shape: 0.1, scale: 0.1 };
        assert_eq!(ig.log_density(0.0), f64::NEG_INFINITY);
        assert_eq!(ig.log_density(-1.0), f64::NEG_INFINITY);
        assert!(ig.log_density(0.5).is_finite());
        let tn = Marginal::TruncatedNormal {
            loc: 0.0,
            scale: 1e6,
            lo: -1.0,
            hi: 1.0,
        };
        assert!((tn.log_density(0.2) + 2f64.ln()).abs() < 1e-9);
        assert_eq!(tn.log_density(1.0), f64::NEG_INFINITY);
    }
}

//! Marginal likelihood by bridge sampling and importance sampling over the
//! adaptive proposal `q`.
//!
//! With `f(z)` the unnormalized target in sampling coordinates and
//!
//! ```text
//! t(z) = 1 / (f(z) / U + q(z))
//! A    = mean over posterior draws of t q
//! A1   = mean over proposal draws of t f
//! p_BS = A1 / A,        p_IS = mean over proposal draws of f / q
//! ```
//!
//! Everything is computed on the log scale. Sums run over sorted values so
//! that the estimates do not depend on the order of the draws.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::{evaluate_batch, log_mean_exp_sorted, pool};
use crate::rng::{derive_seed, RandomStream};
use crate::samplers::{ChainRecord, Posterior, ProposalMixture};

/// Largest tolerated share of unusable draws in either set.
pub const MAX_EXCLUDED_SHARE: f64 = 0.10;

/// Cached log target and log proposal density of one draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvidencePoint {
    pub log_target: f64,
    pub log_q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceInput {
    pub posterior: Vec<EvidencePoint>,
    pub proposal: Vec<EvidencePoint>,
    pub log_u: f64,
}

/// `log f - log q` at a reference point; when `q` vanishes there or the target
/// is not finite, the posterior draw with the highest target is used instead.
pub fn estimate_log_u(at_star: EvidencePoint, posterior: &[EvidencePoint]) -> Result<f64> {
    let r = at_star.log_target - at_star.log_q;
    if r.is_finite() && at_star.log_q.is_finite() {
        return Ok(r);
    }
    posterior
        .iter()
        .filter(|p| p.log_target.is_finite() && p.log_q.is_finite())
        .max_by(|a, b| a.log_target.total_cmp(&b.log_target))
        .map(|p| p.log_target - p.log_q)
        .ok_or_else(|| Error::Evidence("no posterior draw with a finite target and proposal density".into()))
}

fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        m
    } else {
        m + ((a - m).exp() + (b - m).exp()).ln()
    }
}

/// Posterior draws must have finite caches; proposal draws may have a `-inf`
/// target (a zero term) but no NaN or `+inf`.
fn usable_posterior(p: &EvidencePoint) -> bool {
    p.log_target.is_finite() && p.log_q.is_finite()
}

fn usable_proposal(p: &EvidencePoint) -> bool {
    !p.log_target.is_nan() && p.log_target != f64::INFINITY && p.log_q.is_finite()
}

/// Number of draws dropped from each set.
pub fn exclusions(input: &EvidenceInput) -> (usize, usize) {
    (
        input.posterior.iter().filter(|p| !usable_posterior(p)).count(),
        input.proposal.iter().filter(|p| !usable_proposal(p)).count(),
    )
}

fn check(input: &EvidenceInput) -> Result<()> {
    if input.posterior.is_empty() || input.proposal.is_empty() {
        return Err(Error::Evidence("both draw sets must be nonempty".into()));
    }
    let (a, b) = exclusions(input);
    for (n, total, what) in [
        (a, input.posterior.len(), "posterior"),
        (b, input.proposal.len(), "proposal"),
    ] {
        if n as f64 > MAX_EXCLUDED_SHARE * total as f64 {
            return Err(Error::Evidence(format!("{n} of {total} {what} draws are unusable")));
        }
    }
    if !input.log_u.is_finite() {
        return Err(Error::Evidence(format!(
            "scaling constant log U = {} is not finite",
            input.log_u
        )));
    }
    Ok(())
}

/// Bridge sampling estimate of `log p(y)`.
pub fn bridge_sampling(input: &EvidenceInput) -> Result<f64> {
    check(input)?;
    let u = input.log_u;
    let a: Vec<f64> = input
        .posterior
        .iter()
        .filter(|p| usable_posterior(p))
        .map(|p| p.log_q - log_add(p.log_target - u, p.log_q))
        .collect();
    let a1: Vec<f64> = input
        .proposal
        .iter()
        .filter(|p| usable_proposal(p))
        .map(|p| {
            if p.log_target == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                p.log_target - log_add(p.log_target - u, p.log_q)
            }
        })
        .collect();
    let log_a = log_mean_exp_sorted(&a);
    if log_a == f64::NEG_INFINITY {
        return Err(Error::Evidence(
            "the posterior-side bridge mean underflowed to zero".into(),
        ));
    }
    let log_a1 = log_mean_exp_sorted(&a1);
    if log_a1 == f64::NEG_INFINITY {
        return Err(Error::Evidence("every proposal draw has zero target density".into()));
    }
    Ok(log_a1 - log_a)
}

/// Importance sampling estimate of `log p(y)` from proposal draws.
pub fn importance_sampling(proposal: &[EvidencePoint]) -> Result<f64> {
    if proposal.is_empty() {
        return Err(Error::Evidence("no proposal draws".into()));
    }
    let bad = proposal.iter().filter(|p| !usable_proposal(p)).count();
    if bad as f64 > MAX_EXCLUDED_SHARE * proposal.len() as f64 {
        return Err(Error::Evidence(format!(
            "{bad} of {} proposal draws are unusable",
            proposal.len()
        )));
    }
    let r: Vec<f64> = proposal
        .iter()
        .filter(|p| usable_proposal(p))
        .map(|p| p.log_target - p.log_q)
        .collect();
    let v = log_mean_exp_sorted(&r);
    if v == f64::NEG_INFINITY {
        return Err(Error::Evidence("every importance ratio is zero".into()));
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvidenceOptions {
    /// Proposal draws; `None` means as many as the retained posterior draws.
    pub proposal_draws: Option<usize>,
    /// Leading chain iterations to drop.
    pub burn_in: usize,
    /// Keep every `thin`-th retained posterior draw.
    pub thin: usize,
    pub workers: usize,
    pub seed: u64,
}

impl Default for EvidenceOptions {
    fn default() -> Self {
        Self {
            proposal_draws: None,
            burn_in: 0,
            thin: 1,
            workers: 1,
            seed: 0,
        }
    }
}

/// Evidence report as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceReport {
    pub model: String,
    #[serde(rename = "log_BS")]
    pub log_bs: f64,
    #[serde(rename = "log_IS")]
    pub log_is: f64,
    /// Proposal draws.
    #[serde(rename = "K")]
    pub k: usize,
    /// Posterior draws.
    #[serde(rename = "J")]
    pub j: usize,
    pub exclusions: usize,
    pub seed: u64,
    pub log_u: f64,
}

const TAG_DRAW: u64 = 1;
const TAG_FILTER: u64 = 2;
const TAG_STAR: u64 = 3;

/// Both estimates from a chain and its final proposal. The proposal draws
/// need fresh likelihood evaluations, run on `opts.workers` threads.
pub fn estimate_evidence(
    model: &str,
    posterior: &Posterior<'_>,
    chain: &ChainRecord,
    q: &ProposalMixture,
    opts: &EvidenceOptions,
) -> Result<EvidenceReport> {
    if opts.thin == 0 {
        return Err(Error::config("thin", "must be at least 1"));
    }
    let kept: Vec<_> = chain.draws.iter().skip(opts.burn_in).step_by(opts.thin).collect();
    if kept.is_empty() {
        return Err(Error::Evidence(
            "no posterior draws left after burn-in and thinning".into(),
        ));
    }
    let post_pts: Vec<EvidencePoint> = kept
        .iter()
        .map(|d| EvidencePoint {
            log_target: d.log_target,
            log_q: q.log_density(&d.z),
        })
        .collect();

    let dim = posterior.dim();
    let mut star = vec![0.0; dim];
    for d in &kept {
        for (s, z) in star.iter_mut().zip(&d.z) {
            *s += z / kept.len() as f64;
        }
    }
    let star_draw = posterior.evaluate(&star, derive_seed(opts.seed, &[TAG_STAR]))?;
    let log_u = estimate_log_u(
        EvidencePoint {
            log_target: star_draw.log_target,
            log_q: q.log_density(&star),
        },
        &post_pts,
    )?;

    let k = opts.proposal_draws.unwrap_or(kept.len());
    let points: Vec<(usize, Vec<f64>, u64)> = (0..k)
        .map(|i| {
            let mut rs = RandomStream::new(derive_seed(opts.seed, &[TAG_DRAW, i as u64]), 0);
            (i, q.sample(&mut rs), derive_seed(opts.seed, &[TAG_FILTER, i as u64]))
        })
        .collect();
    let evaluated = evaluate_batch(posterior, &points, &pool(opts.workers)?)?;
    let prop_pts: Vec<EvidencePoint> = evaluated
        .iter()
        .map(|(_, d)| EvidencePoint {
            log_target: d.log_target,
            log_q: q.log_density(&d.z),
        })
        .collect();

    let input = EvidenceInput {
        posterior: post_pts,
        proposal: prop_pts,
        log_u,
    };
    let (a, b) = exclusions(&input);
    Ok(EvidenceReport {
        model: model.to_string(),
        log_bs: bridge_sampling(&input)?,
        log_is: importance_sampling(&input.proposal)?,
        k,
        j: kept.len(),
        exclusions: a + b,
        seed: opts.seed,
        log_u,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::prior::normal_log_density;
    use crate::models::{Marginal, Parameterization, PriorSpec, Transform};
    use crate::samplers::{run_chain, ChainConfig, FnEngine, SamplerKind};

    // prior N(0, 1), one observation y = 2 with unit noise:
    // posterior N(1, 1/2), evidence N(2; 0, 2)
    fn log_evidence() -> f64 {
        normal_log_density(2.0, 0.0, 2.0)
    }

    fn log_target(x: f64) -> f64 {
        normal_log_density(2.0, x, 1.0) + normal_log_density(x, 0.0, 1.0)
    }

    fn points(xs: &[f64], log_q: impl Fn(f64) -> f64) -> Vec<EvidencePoint> {
        xs.iter()
            .map(|&x| EvidencePoint {
                log_target: log_target(x),
                log_q: log_q(x),
            })
            .collect()
    }

    fn draws(mean: f64, var: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rs = RandomStream::new(seed, 0);
        (0..n).map(|_| mean + var.sqrt() * rs.normal()).collect()
    }

    #[test]
    fn exact_proposal_and_scale_give_the_evidence() {
        let q = |x: f64| normal_log_density(x, 1.0, 0.5);
        let input = EvidenceInput {
            posterior: points(&draws(1.0, 0.5, 200, 1), q),
            proposal: points(&draws(1.0, 0.5, 200, 2), q),
            log_u: log_evidence(),
        };
        assert!((bridge_sampling(&input).unwrap() - log_evidence()).abs() < 1e-12);
        assert!((importance_sampling(&input.proposal).unwrap() - log_evidence()).abs() < 1e-12);
    }

    #[test]
    fn scale_estimate_with_exact_proposal() {
        let p = EvidencePoint {
            log_target: log_target(1.0),
            log_q: normal_log_density(1.0, 1.0, 0.5),
        };
        assert!((estimate_log_u(p, &[]).unwrap() - log_evidence()).abs() < 1e-12);
    }

    #[test]
    fn scale_falls_back_to_the_best_draw() {
        let q = |x: f64| normal_log_density(x, 1.0, 0.5);
        let post = points(&[0.0, 1.1, 3.0], q);
        let outside = EvidencePoint {
            log_target: f64::NEG_INFINITY,
            log_q: f64::NEG_INFINITY,
        };
        let u = estimate_log_u(outside, &post).unwrap();
        assert_eq!(u, post[1].log_target - post[1].log_q);
    }

    fn approximate_input(log_u: f64) -> EvidenceInput {
        // q is a deliberately wider normal than the posterior
        let q = |x: f64| normal_log_density(x, 0.8, 1.0);
        EvidenceInput {
            posterior: points(&draws(1.0, 0.5, 5000, 3), q),
            proposal: points(&draws(0.8, 1.0, 5000, 4), q),
            log_u,
        }
    }

    #[test]
    fn bridge_is_stable_under_rescaling_of_u() {
        let base = bridge_sampling(&approximate_input(log_evidence())).unwrap();
        assert!((base - log_evidence()).abs() < 0.03, "{base}");
        for c in [0.1f64, 10.0] {
            let v = bridge_sampling(&approximate_input(log_evidence() + c.ln())).unwrap();
            assert!((v - base).abs() < 0.03, "c = {c}: {v} vs {base}");
        }
        let is = importance_sampling(&approximate_input(0.0).proposal).unwrap();
        assert!((is - base).abs() < 0.05);
    }

    #[test]
    fn estimates_ignore_draw_order() {
        let input = approximate_input(log_evidence());
        let mut rev = input.clone();
        rev.posterior.reverse();
        rev.proposal.reverse();
        assert_eq!(bridge_sampling(&input).unwrap(), bridge_sampling(&rev).unwrap());
        assert_eq!(
            importance_sampling(&input.proposal).unwrap(),
            importance_sampling(&rev.proposal).unwrap()
        );
    }

    #[test]
    fn too_many_exclusions_is_an_error() {
        let mut input = approximate_input(log_evidence());
        for p in input.posterior.iter_mut().take(600) {
            p.log_target = f64::NAN;
        }
        assert_eq!(exclusions(&input), (600, 0));
        assert!(matches!(bridge_sampling(&input), Err(Error::Evidence(_))));
        let mut input = approximate_input(log_evidence());
        for p in input.posterior.iter_mut().take(100) {
            p.log_target = f64::NAN;
        }
        assert!(bridge_sampling(&input).is_ok());
    }

    #[test]
    fn zero_proposal_mass_underflows() {
        let mut input = approximate_input(log_evidence());
        for p in &mut input.posterior {
            p.log_q = f64::NEG_INFINITY;
        }
        assert!(matches!(bridge_sampling(&input), Err(Error::Evidence(_))));
        let all_zero: Vec<EvidencePoint> = (0..10)
            .map(|_| EvidencePoint {
                log_target: f64::NEG_INFINITY,
                log_q: 0.0,
            })
            .collect();
        assert!(matches!(importance_sampling(&all_zero), Err(Error::Evidence(_))));
    }

    #[test]
    fn end_to_end_on_a_conjugate_chain() {
        let engine = FnEngine(|x: &[f64], _| normal_log_density(2.0, x[0], 1.0));
        let prior = PriorSpec::new(vec![Marginal::Normal { mean: 0.0, var: 1.0 }]);
        let param = Parameterization::new(vec!["x".into()], vec![Transform::Identity]);
        let post = Posterior::new(&engine, &prior, &param).unwrap();
        let mut cfg = ChainConfig::new(SamplerKind::Aimh, 3000, 9, vec![0.0]);
        cfg.aimh.warmup = 500;
        let rec = run_chain(&post, &cfg).unwrap();
        let q = rec.final_proposal.clone().unwrap();
        let opts = EvidenceOptions {
            seed: 5,
            ..Default::default()
        };
        let rep = estimate_evidence("conjugate", &post, &rec, &q, &opts).unwrap();
        assert_eq!(rep.j, 3000);
        assert_eq!(rep.k, 3000);
        assert_eq!(rep.exclusions, 0);
        assert!((rep.log_bs - log_evidence()).abs() < 0.02, "{}", rep.log_bs);
        assert!((rep.log_is - log_evidence()).abs() < 0.02, "{}", rep.log_is);
        let json = serde_json::to_value(&rep).unwrap();
        for key in ["model", "log_BS", "log_IS", "K", "J", "exclusions", "seed"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }
}

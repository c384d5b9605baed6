//! Parallel evaluation strategies.
//!
//! * MP1: an AIMH block is split into rounds of `J * K` proposals, evaluated
//!   concurrently and then accepted or rejected in a serial pass. Since each
//!   proposal, filter seed and acceptance uniform is keyed by its iteration
//!   index, the chain is bit-identical to the serial one.
//! * MP2: `J` independent filter runs per point, averaged on the likelihood
//!   scale.
//!
//! Results are always collected by task index, never by completion order.

use rayon::prelude::*;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::samplers::{AimhChain, Draw, LikelihoodEngine, Posterior};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "PFMCMC_WORKERS";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExecutionMode {
    #[default]
    Sp,
    Mp1 {
        workers: usize,
        block: usize,
    },
    Mp2 {
        workers: usize,
    },
}

impl ExecutionMode {
    pub fn parse(name: &str, workers: usize, block: usize) -> Result<Self> {
        if workers == 0 {
            return Err(Error::config("workers", "need at least one worker"));
        }
        match name {
            "sp" => Ok(ExecutionMode::Sp),
            "mp1" => {
                if block == 0 {
                    return Err(Error::config("block", "need at least one proposal per worker"));
                }
                Ok(ExecutionMode::Mp1 { workers, block })
            }
            "mp2" => Ok(ExecutionMode::Mp2 { workers }),
            other => Err(Error::config("mode", format!("unknown mode `{other}` (sp, mp1, mp2)"))),
        }
    }

    /// Worker count from the environment, defaulting to the number of CPUs.
    pub fn default_workers() -> usize {
        std::env::var(WORKERS_ENV)
            .ok()
            .and_then(|v| v.parse().ok())
            .filter(|&w: &usize| w > 0)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

/// A dedicated pool with `workers` threads.
pub fn pool(workers: usize) -> Result<ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))
}

/// Evaluates proposals concurrently; output order follows input order. The
/// first error aborts the batch.
pub fn evaluate_batch(
    posterior: &Posterior<'_>,
    points: &[(usize, Vec<f64>, u64)],
    pool: &ThreadPool,
) -> Result<Vec<(usize, Draw)>> {
    pool.install(|| {
        points
            .par_iter()
            .map(|(j, z, s)| Ok((*j, posterior.evaluate(z, *s)?)))
            .collect()
    })
}

/// One MP1 round: up to `size` proposals from the frozen proposal (fewer at a
/// block end), evaluated in parallel, then the serial MH pass. On a worker
/// error the chain is left unchanged.
pub fn mp1_round(chain: &mut AimhChain<'_>, pool: &ThreadPool, size: usize) -> Result<usize> {
    let points = chain.proposals(size.max(1));
    let evaluated = evaluate_batch(chain.posterior(), &points, pool)?;
    let n = evaluated.len();
    chain.absorb(evaluated)?;
    Ok(n)
}

/// Numerically stable `log((1/n) sum exp(x))` over the values sorted
/// ascending, so that the result does not depend on input order.
pub fn log_mean_exp_sorted(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    crate::weights::log_sum_exp(&v) - (v.len() as f64).ln()
}

/// Seed of MP2 worker `w`; worker 0 reuses the point's seed so that one
/// worker reproduces a plain filter run.
pub fn worker_seed(seed: u64, w: usize) -> u64 {
    if w == 0 {
        seed
    } else {
        derive_seed(seed, &[w as u64])
    }
}

/// Likelihood averaged over `workers` independent runs of an inner engine.
pub struct AveragedEngine<'a> {
    pub inner: &'a dyn LikelihoodEngine,
    pub workers: usize,
}

impl LikelihoodEngine for AveragedEngine<'_> {
    fn log_likelihood(&self, natural: &[f64], seed: u64) -> Result<f64> {
        let runs: Vec<f64> = (0..self.workers.max(1))
            .into_par_iter()
            .map(|w| self.inner.log_likelihood(natural, worker_seed(seed, w)))
            .collect::<Result<_>>()?;
        Ok(log_mean_exp_sorted(&runs))
    }
}

/// MP2 likelihood of one point: `log((1/J) sum_j exp(L_j))`.
pub fn mp2_loglik(engine: &dyn LikelihoodEngine, natural: &[f64], workers: usize, seed: u64) -> Result<f64> {
    AveragedEngine { inner: engine, workers }.log_likelihood(natural, seed)
}

//! Particle-marginal Metropolis-Hastings with adaptive random walk (ARWM) and
//! adaptive independent (AIMH) proposals.
//!
//! Sampling runs in the unconstrained coordinates `z` of the free parameters.
//! The target is
//!
//! ```text
//! log p_S(y | theta(z), u) + log p(theta(z)) + log |d theta / d z|
//! ```
//!
//! where `u` is regenerated from the per-proposal filter seed.
//!
//! Every random quantity of iteration `j` comes from a key derived from the
//! master seed and `j`, separately for the proposal draw, the filter run and
//! the acceptance uniform. An AIMH proposal only changes at checkpoints, so the
//! proposals of a block between checkpoints can be drawn and evaluated in any
//! order or in parallel without changing the chain.

pub mod aimh;
pub mod arwm;
pub mod mixture;

use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{kalman::kalman_loglik, FilterConfig};
use crate::models::ar1::Ar1Noise;
use crate::models::data::format_value;
use crate::models::{AnyModel, Dataset, Parameterization, PriorSpec, StateSpaceModel};
use crate::parallel::{self, ExecutionMode};
use crate::rng::{derive_seed, RandomStream};

pub use aimh::{AimhSchedule, ProposalMixture};
pub use arwm::{Arwm, ArwmOptions};
pub use mixture::{fit_gaussian, fit_mixture, Gaussian, GaussianMixture};

/// Simulated (or exact) log-likelihood at a natural parameter vector.
pub trait LikelihoodEngine: Send + Sync {
    fn log_likelihood(&self, natural: &[f64], seed: u64) -> Result<f64>;
}

/// Particle filter likelihood.
#[derive(Debug, Clone)]
pub struct ParticleEngine {
    pub model: AnyModel,
    pub data: Dataset,
    pub filter: FilterConfig,
}

impl LikelihoodEngine for ParticleEngine {
    fn log_likelihood(&self, natural: &[f64], seed: u64) -> Result<f64> {
        Ok(self
            .model
            .run_filter(natural, &self.data, &self.filter, seed)?
            .log_likelihood)
    }
}

/// Exact likelihood of the AR(1)-plus-noise model; ignores the seed.
#[derive(Debug, Clone)]
pub struct KalmanEngine {
    pub data: Dataset,
}

impl LikelihoodEngine for KalmanEngine {
    fn log_likelihood(&self, natural: &[f64], _seed: u64) -> Result<f64> {
        kalman_loglik(&Ar1Noise.params(natural)?, &self.data.y)
    }
}

/// Any closure as an engine; handy for synthetic targets.
pub struct FnEngine<F>(pub F);

impl<F> LikelihoodEngine for FnEngine<F>
where
    F: Fn(&[f64], u64) -> f64 + Send + Sync,
{
    fn log_likelihood(&self, natural: &[f64], seed: u64) -> Result<f64> {
        Ok((self.0)(natural, seed))
    }
}

/// One evaluated point of the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub z: Vec<f64>,
    pub natural: Vec<f64>,
    pub log_lik: f64,
    pub log_prior: f64,
    pub log_jacobian: f64,
    pub log_target: f64,
    /// Seed of the filter run that produced `log_lik`.
    pub pf_seed: u64,
}

/// Likelihood engine, prior and parameterization of the sampled parameters.
#[derive(Clone, Copy)]
pub struct Posterior<'a> {
    pub engine: &'a dyn LikelihoodEngine,
    pub prior: &'a PriorSpec,
    pub param: &'a Parameterization,
}

impl<'a> Posterior<'a> {
    pub fn new(engine: &'a dyn LikelihoodEngine, prior: &'a PriorSpec, param: &'a Parameterization) -> Result<Self> {
        if prior.dim() != param.dim() {
            return Err(Error::config(
                "prior",
                format!(
                    "prior has {} marginals, model has {} parameters",
                    prior.dim(),
                    param.dim()
                ),
            ));
        }
        Ok(Self { engine, prior, param })
    }

    pub fn dim(&self) -> usize {
        self.param.free_dim()
    }

    /// Evaluates the target at `z`. Points outside the prior support skip the
    /// filter and get `-inf`.
    pub fn evaluate(&self, z: &[f64], pf_seed: u64) -> Result<Draw> {
        if z.len() != self.dim() {
            return Err(Error::config(
                "parameters",
                format!("expected {} free coordinates, got {}", self.dim(), z.len()),
            ));
        }
        let pv = self.param.from_unconstrained(z);
        let log_prior = self.prior.log_density_masked(&pv.natural, &self.param.free_mask())?;
        let log_lik = if log_prior == f64::NEG_INFINITY || !pv.log_jacobian.is_finite() {
            f64::NEG_INFINITY
        } else {
            self.engine.log_likelihood(&pv.natural, pf_seed)?
        };
        let mut log_target = log_lik + log_prior + pv.log_jacobian;
        if log_target.is_nan() {
            log_target = f64::NEG_INFINITY;
        }
        Ok(Draw {
            z: pv.unconstrained,
            natural: pv.natural,
            log_lik,
            log_prior,
            log_jacobian: pv.log_jacobian,
            log_target,
            pf_seed,
        })
    }

    /// Evaluates at a full natural vector (fixed entries are overridden).
    pub fn evaluate_natural(&self, natural: &[f64], pf_seed: u64) -> Result<Draw> {
        let pv = self.param.to_unconstrained(natural)?;
        self.evaluate(&pv.unconstrained, pf_seed)
    }
}

/// Log acceptance probability `min(0, target' - target + log_q_ratio)`;
/// `-inf` exactly when the proposed target is `-inf`.
pub fn log_accept_prob(current: f64, proposed: f64, log_q_ratio: f64) -> f64 {
    if proposed == f64::NEG_INFINITY || proposed.is_nan() {
        return f64::NEG_INFINITY;
    }
    let a = proposed - current + log_q_ratio;
    if a.is_nan() {
        // current is -inf as well; move to the finite point
        return if current == f64::NEG_INFINITY {
            0.0
        } else {
            f64::NEG_INFINITY
        };
    }
    a.min(0.0)
}

/// Accepts when `ln u < log_accept`, `u` uniform on (0, 1).
pub fn mh_accept(log_accept: f64, u: f64) -> bool {
    u.ln() < log_accept
}

const TAG_PROPOSAL: u64 = 1;
const TAG_FILTER: u64 = 2;
const TAG_ACCEPT: u64 = 3;
const TAG_WARMUP: u64 = 4;
const TAG_FIT: u64 = 5;

/// Stream for the proposal draw of iteration `j`.
pub fn proposal_stream(seed: u64, j: usize) -> RandomStream {
    RandomStream::new(derive_seed(seed, &[TAG_PROPOSAL, j as u64]), 0)
}

/// Filter seed for the point proposed at iteration `j` (0 is the start).
pub fn pf_seed(seed: u64, j: usize) -> u64 {
    derive_seed(seed, &[TAG_FILTER, j as u64])
}

/// Acceptance uniform of iteration `j`.
pub fn accept_uniform(seed: u64, j: usize) -> f64 {
    RandomStream::new(derive_seed(seed, &[TAG_ACCEPT, j as u64]), 0).uniform()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Arwm,
    Aimh,
}

impl SamplerKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "arwm" => Ok(SamplerKind::Arwm),
            "aimh" => Ok(SamplerKind::Aimh),
            other => Err(Error::config(
                "sampler",
                format!("unknown sampler `{other}` (arwm, aimh)"),
            )),
        }
    }
}

pub const DEFAULT_WARMUP: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AimhOptions {
    pub schedule: AimhSchedule,
    /// ARWM iterations used to build `g1` when no mixture is supplied.
    pub warmup: usize,
    /// Supplied `g1`; skips the warm-up.
    pub initial_mixture: Option<GaussianMixture>,
    /// Starting group weights instead of `(0.8, 0.2, 0, 0)`.
    pub initial_weights: Option<[f64; 4]>,
}

impl Default for AimhOptions {
    fn default() -> Self {
        Self {
            schedule: AimhSchedule::default(),
            warmup: DEFAULT_WARMUP,
            initial_mixture: None,
            initial_weights: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub sampler: SamplerKind,
    pub iterations: usize,
    pub seed: u64,
    /// Full natural starting vector (fixed entries are overridden).
    pub initial: Vec<f64>,
    #[serde(default)]
    pub arwm: ArwmOptions,
    #[serde(default)]
    pub aimh: AimhOptions,
    #[serde(default)]
    pub mode: ExecutionMode,
}

impl ChainConfig {
    pub fn new(sampler: SamplerKind, iterations: usize, seed: u64, initial: Vec<f64>) -> Self {
        Self {
            sampler,
            iterations,
            seed,
            initial,
            arwm: ArwmOptions::default(),
            aimh: AimhOptions::default(),
            mode: ExecutionMode::Sp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmupSummary {
    pub iterations: usize,
    pub accepted: usize,
    pub seconds: f64,
}

/// Output of a chain: iterates `1..=n` after the start point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub names: Vec<String>,
    pub free_names: Vec<String>,
    pub start: Draw,
    pub draws: Vec<Draw>,
    pub accepted: Vec<bool>,
    pub final_proposal: Option<ProposalMixture>,
    pub warmup: Option<WarmupSummary>,
    pub seconds: f64,
}

impl ChainRecord {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn accepted_count(&self) -> usize {
        self.accepted.iter().filter(|&&a| a).count()
    }

    /// Natural-coordinate series of parameter `i`.
    pub fn column(&self, i: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d.natural[i]).collect()
    }

    /// Unconstrained series of free coordinate `i`.
    pub fn z_column(&self, i: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d.z[i]).collect()
    }

    pub fn seconds_per_iteration(&self) -> f64 {
        self.seconds / self.len().max(1) as f64
    }

    /// One row per iteration: `j, accepted, log_target, log_lik, log_prior,
    /// pf_seed`, the natural parameters, then `z_<name>` per free parameter.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = ["j", "accepted", "log_target", "log_lik", "log_prior", "pf_seed"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(self.names.iter().cloned());
        header.extend(self.free_names.iter().map(|n| format!("z_{n}")));
        wr.write_record(&header).map_err(io_error)?;
        for (j, (d, &a)) in self.draws.iter().zip(&self.accepted).enumerate() {
            let mut row = vec![
                (j + 1).to_string(),
                u8::from(a).to_string(),
                format_value(d.log_target),
                format_value(d.log_lik),
                format_value(d.log_prior),
                d.pf_seed.to_string(),
            ];
            row.extend(d.natural.iter().map(|&v| format_value(v)));
            row.extend(d.z.iter().map(|&v| format_value(v)));
            wr.write_record(&row).map_err(io_error)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    /// Reads the rows written by [`ChainRecord::write_csv`]. The start point,
    /// proposal and timings are not part of the CSV and come back empty.
    pub fn read_csv(r: impl Read) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let header: Vec<String> = rd
            .headers()
            .map_err(|e| Error::Ingest {
                line: 1,
                message: e.to_string(),
            })?
            .iter()
            .map(str::to_string)
            .collect();
        if header.len() < 6 || header[0] != "j" || header[1] != "accepted" {
            return Err(Error::Ingest {
                line: 1,
                message: "expected a chain header starting `j,accepted,log_target`".into(),
            });
        }
        let rest = &header[6..];
        let n_free = rest.iter().filter(|h| h.starts_with("z_")).count();
        let names = rest[..rest.len() - n_free].to_vec();
        let free_names = rest[rest.len() - n_free..].iter().map(|h| h[2..].to_string()).collect();
        let mut draws = Vec::new();
        let mut accepted = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::Ingest {
                line,
                message: e.to_string(),
            })?;
            if rec.len() != header.len() {
                return Err(Error::Ingest {
                    line,
                    message: format!("expected {} fields, found {}", header.len(), rec.len()),
                });
            }
            let num = |k: usize| -> Result<f64> {
                parse_value(&rec[k]).ok_or_else(|| Error::Ingest {
                    line,
                    message: format!("bad number `{}`", &rec[k]),
                })
            };
            let vals: Vec<f64> = (6..rec.len()).map(num).collect::<Result<_>>()?;
            let (natural, z) = vals.split_at(names.len());
            draws.push(Draw {
                z: z.to_vec(),
                natural: natural.to_vec(),
                log_lik: num(3)?,
                log_prior: num(4)?,
                // not stored; recoverable from z and the parameterization
                log_jacobian: 0.0,
                log_target: num(2)?,
                pf_seed: rec[5].parse().map_err(|_| Error::Ingest {
                    line,
                    message: "bad pf_seed".into(),
                })?,
            });
            accepted.push(&rec[1] == "1");
        }
        let start = draws.first().cloned().ok_or_else(|| Error::Ingest {
            line: 2,
            message: "chain has no rows".into(),
        })?;
        Ok(Self {
            names,
            free_names,
            start,
            draws,
            accepted,
            final_proposal: None,
            warmup: None,
            seconds: 0.0,
        })
    }
}

fn parse_value(s: &str) -> Option<f64> {
    match s {
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}

fn io_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Runs a chain of `cfg.iterations` iterations.
pub fn run_chain(posterior: &Posterior<'_>, cfg: &ChainConfig) -> Result<ChainRecord> {
    match cfg.sampler {
        SamplerKind::Arwm => {
            if matches!(cfg.mode, ExecutionMode::Mp1 { .. }) {
                return Err(Error::config(
                    "mode",
                    "block evaluation needs an independent proposal (aimh)",
                ));
            }
            let start = start_draw(posterior, cfg)?;
            run_arwm(posterior, cfg.seed, cfg.iterations, &cfg.arwm, start)
        }
        SamplerKind::Aimh => run_aimh(posterior, cfg),
    }
}

fn start_draw(posterior: &Posterior<'_>, cfg: &ChainConfig) -> Result<Draw> {
    let start = posterior.evaluate_natural(&posterior.param.apply_fixed(&cfg.initial), pf_seed(cfg.seed, 0))?;
    if !start.log_target.is_finite() {
        return Err(Error::config(
            "initial",
            "the starting point has zero posterior density",
        ));
    }
    Ok(start)
}

fn names(posterior: &Posterior<'_>) -> (Vec<String>, Vec<String>) {
    (posterior.param.names().to_vec(), posterior.param.free_names())
}

fn run_arwm(posterior: &Posterior<'_>, seed: u64, n: usize, opts: &ArwmOptions, start: Draw) -> Result<ChainRecord> {
    let clock = Instant::now();
    let mut arwm = Arwm::new(posterior.dim(), opts)?;
    let mut current = start.clone();
    let mut draws = Vec::with_capacity(n);
    let mut accepted = Vec::with_capacity(n);
    for j in 1..=n {
        let z = arwm.propose(&current.z, j, &mut proposal_stream(seed, j));
        let prop = posterior.evaluate(&z, pf_seed(seed, j))?;
        let ok = mh_accept(
            log_accept_prob(current.log_target, prop.log_target, 0.0),
            accept_uniform(seed, j),
        );
        if ok {
            current = prop;
        }
        arwm.observe(&current.z);
        draws.push(current.clone());
        accepted.push(ok);
    }
    let (names, free_names) = names(posterior);
    Ok(ChainRecord {
        names,
        free_names,
        start,
        draws,
        accepted,
        final_proposal: None,
        warmup: None,
        seconds: clock.elapsed().as_secs_f64(),
    })
}

/// AIMH chain state, advanced block by block.
pub struct AimhChain<'a> {
    posterior: Posterior<'a>,
    seed: u64,
    n_iter: usize,
    schedule: AimhSchedule,
    proposal: ProposalMixture,
    current: Draw,
    current_log_q: f64,
    accepted_count: usize,
    draws: Vec<Draw>,
    accepted: Vec<bool>,
}

impl<'a> AimhChain<'a> {
    pub fn new(
        posterior: Posterior<'a>,
        seed: u64,
        n_iter: usize,
        schedule: AimhSchedule,
        proposal: ProposalMixture,
        start: Draw,
    ) -> Result<Self> {
        if proposal.dim() != posterior.dim() {
            return Err(Error::config(
                "proposal",
                "proposal dimension differs from the free parameter count",
            ));
        }
        Ok(Self {
            current_log_q: proposal.log_density(&start.z),
            posterior,
            seed,
            n_iter,
            schedule,
            proposal,
            current: start,
            accepted_count: 0,
            draws: Vec::with_capacity(n_iter),
            accepted: Vec::with_capacity(n_iter),
        })
    }

    /// Iterations completed.
    pub fn done(&self) -> usize {
        self.draws.len()
    }

    pub fn finished(&self) -> bool {
        self.done() >= self.n_iter
    }

    pub fn current(&self) -> &Draw {
        &self.current
    }

    pub fn proposal(&self) -> &ProposalMixture {
        &self.proposal
    }

    /// Iterations left before the proposal may change.
    pub fn remaining_in_block(&self) -> usize {
        let next = self.done() + 1;
        let end = self
            .schedule
            .next_checkpoint(next)
            .unwrap_or(self.n_iter)
            .min(self.n_iter);
        (end + 1).saturating_sub(next)
    }

    /// The next `count` proposals (truncated at the block end) with their
    /// iteration indices and filter seeds.
    pub fn proposals(&self, count: usize) -> Vec<(usize, Vec<f64>, u64)> {
        let first = self.done() + 1;
        (first..first + count.min(self.remaining_in_block()))
            .map(|j| {
                (
                    j,
                    self.proposal.sample(&mut proposal_stream(self.seed, j)),
                    pf_seed(self.seed, j),
                )
            })
            .collect()
    }

    pub fn posterior(&self) -> &Posterior<'a> {
        &self.posterior
    }

    /// Serial accept/reject pass over evaluated proposals, in iteration order,
    /// then adaptation if a checkpoint was reached.
    pub fn absorb(&mut self, evaluated: Vec<(usize, Draw)>) -> Result<()> {
        for (j, prop) in evaluated {
            if j != self.done() + 1 {
                return Err(Error::config(
                    "block",
                    format!("expected iteration {}, got {j}", self.done() + 1),
                ));
            }
            let prop_log_q = self.proposal.log_density(&prop.z);
            let lap = log_accept_prob(
                self.current.log_target,
                prop.log_target,
                self.current_log_q - prop_log_q,
            );
            let ok = mh_accept(lap, accept_uniform(self.seed, j));
            if ok {
                self.current = prop;
                self.current_log_q = prop_log_q;
                self.accepted_count += 1;
            }
            self.draws.push(self.current.clone());
            self.accepted.push(ok);
            self.adapt(j);
        }
        Ok(())
    }

    fn adapt(&mut self, j: usize) {
        let d = self.posterior.dim();
        let step = self.schedule.step(j, self.n_iter, self.accepted_count, d);
        if !step.refit {
            return;
        }
        let mut k = step.components;
        while k > 1 && j < 10 * d * k {
            k -= 1;
        }
        if j >= 10 * d * k {
            let rows: Vec<Vec<f64>> = self.draws.iter().map(|d| d.z.clone()).collect();
            // a failed fit keeps the previous g3
            if let Ok(g3) = fit_mixture(&rows, k, derive_seed(self.seed, &[TAG_FIT, j as u64])) {
                self.proposal.set_adapted(g3);
            }
        }
        if step.begin_stage_two {
            self.proposal.begin_stage_two();
        }
        self.current_log_q = self.proposal.log_density(&self.current.z);
    }

    fn into_record(self, start: Draw, warmup: Option<WarmupSummary>, seconds: f64) -> ChainRecord {
        let (names, free_names) = names(&self.posterior);
        ChainRecord {
            names,
            free_names,
            start,
            draws: self.draws,
            accepted: self.accepted,
            final_proposal: Some(self.proposal),
            warmup,
            seconds,
        }
    }
}

/// Evaluates proposals one after another.
pub fn evaluate_serial(posterior: &Posterior<'_>, points: &[(usize, Vec<f64>, u64)]) -> Result<Vec<(usize, Draw)>> {
    points
        .iter()
        .map(|(j, z, s)| Ok((*j, posterior.evaluate(z, *s)?)))
        .collect()
}

/// `g1` and start point for AIMH: supplied mixture, or an ARWM warm-up whose
/// second half gives a single normal.
fn aimh_start(posterior: &Posterior<'_>, cfg: &ChainConfig) -> Result<(GaussianMixture, Draw, Option<WarmupSummary>)> {
    let start = start_draw(posterior, cfg)?;
    if let Some(g1) = &cfg.aimh.initial_mixture {
        return Ok((g1.clone(), start, None));
    }
    let n = cfg.aimh.warmup;
    let d = posterior.dim();
    if n < 4 * d + 2 {
        return Err(Error::config(
            "warmup",
            format!("need at least {} warm-up iterations", 4 * d + 2),
        ));
    }
    let warm = run_arwm(posterior, derive_seed(cfg.seed, &[TAG_WARMUP]), n, &cfg.arwm, start)?;
    let rows: Vec<Vec<f64>> = warm.draws[n / 2..].iter().map(|d| d.z.clone()).collect();
    let g1 = GaussianMixture::single(fit_gaussian(&rows)?);
    let summary = WarmupSummary {
        iterations: n,
        accepted: warm.accepted_count(),
        seconds: warm.seconds,
    };
    let last = warm.draws.last().cloned().expect("warm-up has draws");
    Ok((g1, last, Some(summary)))
}

fn run_aimh(posterior: &Posterior<'_>, cfg: &ChainConfig) -> Result<ChainRecord> {
    let clock = Instant::now();
    let (g1, start, warmup) = aimh_start(posterior, cfg)?;
    let mut proposal = ProposalMixture::new(g1);
    if let Some(w) = cfg.aimh.initial_weights {
        proposal = proposal.with_weights(w)?;
    }
    let mut chain = AimhChain::new(
        *posterior,
        cfg.seed,
        cfg.iterations,
        cfg.aimh.schedule.clone(),
        proposal,
        start.clone(),
    )?;
    match cfg.mode {
        ExecutionMode::Mp1 { workers, block } => {
            let pool = parallel::pool(workers)?;
            while !chain.finished() {
                parallel::mp1_round(&mut chain, &pool, workers * block.max(1))?;
            }
        }
        _ => {
            while !chain.finished() {
                let pts = chain.proposals(1);
                let evaluated = evaluate_serial(posterior, &pts)?;
                chain.absorb(evaluated)?;
            }
        }
    }
    Ok(chain.into_record(start, warmup, clock.elapsed().as_secs_f64()))
}

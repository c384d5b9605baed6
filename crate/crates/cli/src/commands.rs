//! The `simulate`, `filter`, `sample`, `evidence` and `diag` subcommands.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use pfmcmc::diagnostics::{iqr, mean_sd, median, replicate_logliks, summarize_chain, StudyCell};
use pfmcmc::evidence::{estimate_evidence, EvidenceOptions, EvidenceReport};
use pfmcmc::filters::kalman::kalman_loglik;
use pfmcmc::filters::FilterConfig;
use pfmcmc::models::{AnyModel, Ar1Noise, Dataset, ModelConfig, PriorSpec, StateSpaceModel};
use pfmcmc::parallel::{pool, ExecutionMode};
use pfmcmc::rng::RandomStream;
use pfmcmc::samplers::{run_chain, ChainConfig, ChainRecord, Posterior, SamplerKind};
use pfmcmc::{Error, Result};
use serde::Serialize;

use crate::args::{DiagArgs, EvidenceArgs, FilterArgs, SampleArgs, SimulateArgs};
use crate::config::{
    default_init, default_theta, filter_config, model_config, read_json, write_json, Likelihood, RunConfig, RunSidecar,
};

pub const CHAIN_CSV: &str = "chain.csv";
pub const CHAIN_JSON: &str = "chain.json";
pub const DATA_CSV: &str = "data.csv";
pub const EVIDENCE_JSON: &str = "evidence.json";

fn workers(w: Option<usize>) -> usize {
    w.unwrap_or_else(ExecutionMode::default_workers)
}

fn load_data(model: &AnyModel, path: &Path) -> Result<Dataset> {
    let data = Dataset::load(path)?;
    model.check_data(&data)?;
    Ok(data)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let cfg = model_config(&a.model);
    let model = cfg.build()?;
    let theta = a.theta.clone().unwrap_or_else(|| default_theta(&cfg));
    let data = model.simulate(&theta, a.t_len, &mut RandomStream::new(a.seed, 0))?;
    let mut buf = Vec::new();
    data.write_csv(&mut buf)?;
    emit(std::str::from_utf8(&buf).expect("csv is ascii"), a.out.as_deref())
}

#[derive(Debug, Serialize)]
pub struct FilterReport {
    pub model: ModelConfig,
    pub data: String,
    pub theta: Vec<f64>,
    pub filter: FilterConfig,
    pub reps: usize,
    pub seed: u64,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub iqr: f64,
    /// Kalman log-likelihood, for ar1.
    pub exact: Option<f64>,
    pub log_likelihoods: Vec<f64>,
}

pub fn filter(a: &FilterArgs) -> Result<()> {
    let cfg = model_config(&a.model);
    let model = cfg.build()?;
    let data = load_data(&model, &a.data)?;
    let theta = a.theta.clone().unwrap_or_else(|| default_theta(&cfg));
    let fc = filter_config(&a.filter)?;
    if a.reps < 2 {
        return Err(Error::config("reps", "need at least two replicates"));
    }
    let logs = pool(workers(a.workers))?
        .install(|| replicate_logliks(&model, &theta, &data, &StudyCell::Filter(fc), a.reps, a.seed))?;
    let exact = match model {
        AnyModel::Ar1(_) => Some(kalman_loglik(&Ar1Noise.params(&theta)?, &data.y)?),
        _ => None,
    };
    let (mean, sd) = mean_sd(&logs);
    let report = FilterReport {
        model: cfg,
        data: a.data.display().to_string(),
        theta,
        filter: fc,
        reps: a.reps,
        seed: a.seed,
        mean,
        sd,
        median: median(&logs),
        iqr: iqr(&logs),
        exact,
        log_likelihoods: logs,
    };
    match &a.out {
        Some(p) => write_json(&report, p),
        None => {
            let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.to_string()))?;
            emit(&(text + "\n"), None)
        }
    }
}

pub fn sample(a: &SampleArgs) -> Result<()> {
    let cfg = model_config(&a.model);
    let model = cfg.build()?;
    let data = load_data(&model, &a.data)?;
    let prior: PriorSpec = match &a.prior {
        Some(p) => read_json(p)?,
        None => model.default_prior(),
    };
    let likelihood = if a.exact {
        Likelihood::Exact
    } else {
        Likelihood::Filter(filter_config(&a.filter)?)
    };
    let mut chain = ChainConfig::new(
        SamplerKind::parse(&a.sampler)?,
        a.iterations,
        a.seed,
        a.init.clone().unwrap_or_else(|| default_init(&cfg, &data)),
    );
    chain.mode = ExecutionMode::parse(&a.mode, workers(a.workers), a.block)?;
    chain.arwm.j0 = a.j0;
    chain.aimh.warmup = a.warmup;
    if let Some(c) = &a.checkpoints {
        chain.aimh.schedule.checkpoints = c.clone();
    }
    let run = RunConfig {
        model: cfg,
        data: DATA_CSV.into(),
        fixed: a.fixed.iter().cloned().collect::<BTreeMap<_, _>>(),
        prior,
        likelihood,
        chain,
    };
    let (record, sidecar) = execute(&run, &model, &data)?;
    create_dir(&a.out_dir)?;
    data.save(&a.out_dir.join(DATA_CSV))?;
    record.save_csv(&a.out_dir.join(CHAIN_CSV))?;
    write_json(&sidecar, &a.out_dir.join(CHAIN_JSON))
}

/// Runs the chain described by `run` on `data`.
pub fn execute(run: &RunConfig, model: &AnyModel, data: &Dataset) -> Result<(ChainRecord, RunSidecar)> {
    let param = run.parameterization(model)?;
    let engine = run.engine(model, data)?;
    let posterior = Posterior::new(engine.as_ref(), &run.prior, &param)?;
    let record = run_chain(&posterior, &run.chain)?;
    let sidecar = RunSidecar {
        run: run.clone(),
        parameterization: param.clone(),
        iterations: record.len(),
        accepted: record.accepted_count(),
        seconds: record.seconds,
        seconds_per_iteration: record.seconds_per_iteration(),
        warmup: record.warmup.clone(),
        final_proposal: record.final_proposal.clone(),
    };
    Ok((record, sidecar))
}

#[derive(Debug, Serialize)]
pub struct EvidenceOutput {
    #[serde(flatten)]
    pub report: EvidenceReport,
    pub burn_in: usize,
    pub thin: usize,
    pub run_dir: String,
}

pub fn evidence(a: &EvidenceArgs) -> Result<()> {
    let sidecar: RunSidecar = read_json(&a.run_dir.join(CHAIN_JSON))?;
    let run = &sidecar.run;
    let model = run.model.build()?;
    let data = load_data(&model, &a.run_dir.join(&run.data))?;
    let q = sidecar
        .final_proposal
        .as_ref()
        .ok_or_else(|| Error::config("run-dir", "evidence needs an aimh run with a fitted proposal"))?;
    let param = run.parameterization(&model)?;
    let engine = run.engine(&model, &data)?;
    let posterior = Posterior::new(engine.as_ref(), &run.prior, &param)?;
    let file = std::fs::File::open(a.run_dir.join(CHAIN_CSV))?;
    let chain = ChainRecord::read_csv(std::io::BufReader::new(file))?;
    let opts = EvidenceOptions {
        proposal_draws: a.draws,
        burn_in: a.burn_in,
        thin: a.thin,
        workers: workers(a.workers),
        seed: a.seed,
    };
    let report = estimate_evidence(&model.name(), &posterior, &chain, q, &opts)?;
    let out = EvidenceOutput {
        report,
        burn_in: a.burn_in,
        thin: a.thin,
        run_dir: a.run_dir.display().to_string(),
    };
    let path = a.out.clone().unwrap_or_else(|| a.run_dir.join(EVIDENCE_JSON));
    write_json(&out, &path)
}

pub fn diag(a: &DiagArgs) -> Result<()> {
    let file = std::fs::File::open(&a.chain).map_err(|e| Error::Io(format!("{}: {e}", a.chain.display())))?;
    let record = ChainRecord::read_csv(std::io::BufReader::new(file))?;
    let sidecar_path: PathBuf = a.sidecar.clone().unwrap_or_else(|| a.chain.with_file_name(CHAIN_JSON));
    // ECT needs the time per iteration; without a sidecar it is reported as NaN
    let spi = if sidecar_path.exists() {
        read_json::<RunSidecar>(&sidecar_path)?.seconds_per_iteration
    } else {
        f64::NAN
    };
    let summary = summarize_chain(&record, a.burn_in, spi)?;
    let mut buf = Vec::new();
    summary.write_csv(&mut buf)?;
    emit(std::str::from_utf8(&buf).expect("csv is ascii"), a.out.as_deref())
}

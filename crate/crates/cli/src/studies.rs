//! Named replication studies on simulated data.
//!
//! Every output is a function of the study name, scale and seed only: datasets
//! and filter replicates use derived seeds, and timings are left out.

use std::path::Path;

use pfmcmc::diagnostics::{iqr, loglik_sd_study, median, summarize_chain, SdStudyReport, StudyCell};
use pfmcmc::filters::{FilterConfig, FilterVariant};
use pfmcmc::models::data::format_value;
use pfmcmc::models::{AnyModel, Dataset, ModelConfig};
use pfmcmc::parallel::pool;
use pfmcmc::rng::{derive_seed, RandomStream};
use pfmcmc::samplers::{ChainConfig, SamplerKind};
use pfmcmc::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::Scale;
use crate::commands::execute;
use crate::config::{write_json, Likelihood, RunConfig};

pub const TABLE_CSV: &str = "table.csv";
pub const SUMMARY_JSON: &str = "summary.json";

const TAG_DATA: u64 = 1;
const TAG_FILTER: u64 = 2;
const TAG_CHAIN: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScaleParams {
    pub t_len: usize,
    pub datasets: usize,
    pub reps: usize,
    pub iterations: usize,
    pub warmup: usize,
}

pub fn scale_params(scale: Scale) -> ScaleParams {
    match scale {
        Scale::Smoke => ScaleParams {
            t_len: 50,
            datasets: 2,
            reps: 20,
            iterations: 600,
            warmup: 300,
        },
        Scale::Desk => ScaleParams {
            t_len: 200,
            datasets: 10,
            reps: 200,
            iterations: 5000,
            warmup: 1000,
        },
        Scale::Paper => ScaleParams {
            t_len: 500,
            datasets: 50,
            reps: 1000,
            iterations: 30000,
            warmup: 5000,
        },
    }
}

/// What a study computes.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StudyKind {
    /// Spread of the simulated log-likelihood at the true parameters.
    LoglikSd { cells: Vec<StudyCell> },
    /// ARWM against AIMH with a fixed filter.
    Samplers { filter: FilterConfig },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudySpec {
    pub name: String,
    pub description: String,
    pub model: ModelConfig,
    pub theta: Vec<f64>,
    pub kind: StudyKind,
}

pub const STUDIES: [&str; 6] = [
    "ar1-high-snr",
    "ar1-low-snr",
    "binomial-m500",
    "binomial-m100",
    "garch-uk-style",
    "ar1-samplers",
];

fn cells(sir: &[usize], adapted: FilterVariant, adapted_m: &[usize]) -> Vec<StudyCell> {
    sir.iter()
        .map(|&m| StudyCell::Filter(FilterConfig::new(m, FilterVariant::Sir)))
        .chain(
            adapted_m
                .iter()
                .map(|&m| StudyCell::Filter(FilterConfig::new(m, adapted))),
        )
        .collect()
}

pub fn study_spec(name: &str) -> Result<StudySpec> {
    let ar1 = |sigma2: f64| vec![0.0, 0.6, 1.0, sigma2];
    let binomial = vec![0.0, 0.97, 0.25];
    let (description, model, theta, kind) = match name {
        "ar1-high-snr" => (
            "AR(1) plus noise, sigma2 = 0.01: log-likelihood medians and SDs",
            ModelConfig::Ar1,
            ar1(0.01),
            StudyKind::LoglikSd {
                cells: cells(&[100, 500, 1000, 2000], FilterVariant::Fapf, &[100]),
            },
        ),
        "ar1-low-snr" => (
            "AR(1) plus noise, sigma2 = 1: log-likelihood medians and SDs",
            ModelConfig::Ar1,
            ar1(1.0),
            StudyKind::LoglikSd {
                cells: cells(&[100, 500, 1000], FilterVariant::Fapf, &[100]),
            },
        ),
        "binomial-m500" => (
            "Binomial AR(1) logit, 500 trials: log-likelihood medians and SDs",
            ModelConfig::Binomial { trials: 500 },
            binomial.clone(),
            StudyKind::LoglikSd {
                cells: cells(&[500, 1000, 2000, 4000], FilterVariant::Papf, &[100]),
            },
        ),
        "binomial-m100" => (
            "Binomial AR(1) logit, 100 trials: log-likelihood medians and SDs",
            ModelConfig::Binomial { trials: 100 },
            binomial,
            StudyKind::LoglikSd {
                cells: cells(&[500, 1000, 2000, 4000], FilterVariant::Papf, &[100, 200, 500]),
            },
        ),
        "garch-uk-style" => (
            "GARCH(1,1) plus noise at weekly-index posterior means (percent returns): log-likelihood SDs",
            ModelConfig::Garch,
            vec![2.7, 0.495, 0.893, 0.0378],
            StudyKind::LoglikSd {
                cells: cells(&[1000, 5000, 10000], FilterVariant::Fapf, &[200, 500, 1000]),
            },
        ),
        "ar1-samplers" => (
            "AR(1) plus noise, sigma2 = 1: ARWM against AIMH with the fully adapted filter",
            ModelConfig::Ar1,
            ar1(1.0),
            StudyKind::Samplers {
                filter: FilterConfig::new(100, FilterVariant::Fapf),
            },
        ),
        other => {
            return Err(Error::config(
                "study",
                format!("unknown study `{other}`; available: {}", STUDIES.join(", ")),
            ))
        }
    };
    Ok(StudySpec {
        name: name.into(),
        description: description.into(),
        model,
        theta,
        kind,
    })
}

/// `n` datasets of length `t_len`; dataset `i` depends only on `(seed, i)`.
pub fn study_datasets(model: &AnyModel, theta: &[f64], t_len: usize, n: usize, seed: u64) -> Result<Vec<Dataset>> {
    (0..n)
        .map(|i| {
            let mut rs = RandomStream::new(derive_seed(seed, &[TAG_DATA, i as u64]), 0);
            let mut d = model.simulate(theta, t_len, &mut rs)?;
            d.name = format!("{}-{}", model.name(), i + 1);
            Ok(d)
        })
        .collect()
}

/// Seed for the filter replicates of an SD study.
pub fn filter_seed(seed: u64) -> u64 {
    derive_seed(seed, &[TAG_FILTER])
}

/// Acceptance rate and inefficiencies of one chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainStats {
    pub dataset: usize,
    pub acceptance: f64,
    pub inefficiency: Vec<f64>,
    pub mean: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplerRow {
    pub sampler: SamplerKind,
    pub acceptance_median: f64,
    pub acceptance_iqr: f64,
    pub if_median: Vec<f64>,
    pub if_iqr: Vec<f64>,
    pub chains: Vec<ChainStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplerReport {
    pub names: Vec<String>,
    pub burn_in: usize,
    pub rows: Vec<SamplerRow>,
}

impl SamplerReport {
    pub fn write_csv(&self, w: &mut impl std::io::Write) -> Result<()> {
        let mut header = vec![
            "sampler".to_string(),
            "acceptance_median".into(),
            "acceptance_iqr".into(),
        ];
        for n in &self.names {
            header.push(format!("if_{n}_median"));
            header.push(format!("if_{n}_iqr"));
        }
        let mut out = header.join(",") + "\n";
        for r in &self.rows {
            let mut cols = vec![
                sampler_name(r.sampler).to_string(),
                format_value(r.acceptance_median),
                format_value(r.acceptance_iqr),
            ];
            for (m, q) in r.if_median.iter().zip(&r.if_iqr) {
                cols.push(format_value(*m));
                cols.push(format_value(*q));
            }
            out += &(cols.join(",") + "\n");
        }
        w.write_all(out.as_bytes())?;
        Ok(())
    }
}

fn sampler_name(s: SamplerKind) -> &'static str {
    match s {
        SamplerKind::Arwm => "arwm",
        SamplerKind::Aimh => "aimh",
    }
}

/// Runs ARWM and AIMH on every dataset, each chain started at `theta`, and
/// summarizes after discarding the first tenth of each chain.
pub fn sampler_comparison(
    spec: &StudySpec,
    filter: FilterConfig,
    datasets: &[Dataset],
    scale: &ScaleParams,
    seed: u64,
    workers: usize,
) -> Result<SamplerReport> {
    let model = spec.model.build()?;
    let burn_in = scale.iterations / 10;
    let names = model.parameterization().names().to_vec();
    let mut rows = Vec::new();
    for sampler in [SamplerKind::Arwm, SamplerKind::Aimh] {
        let chains: Vec<ChainStats> = pool(workers)?.install(|| {
            datasets
                .par_iter()
                .enumerate()
                .map(|(i, data)| {
                    let mut chain = ChainConfig::new(
                        sampler,
                        scale.iterations,
                        derive_seed(seed, &[TAG_CHAIN, i as u64]),
                        spec.theta.clone(),
                    );
                    chain.aimh.warmup = scale.warmup;
                    let run = RunConfig {
                        model: spec.model.clone(),
                        data: data.name.clone(),
                        fixed: Default::default(),
                        prior: model.default_prior(),
                        likelihood: Likelihood::Filter(filter),
                        chain,
                    };
                    let (record, _) = execute(&run, &model, data)?;
                    let summary = summarize_chain(&record, burn_in, f64::NAN)?;
                    Ok(ChainStats {
                        dataset: i + 1,
                        acceptance: summary.acceptance,
                        inefficiency: summary.params.iter().map(|p| p.inefficiency).collect(),
                        mean: summary.params.iter().map(|p| p.mean).collect(),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let acc: Vec<f64> = chains.iter().map(|c| c.acceptance).collect();
        let per_param = |i: usize| chains.iter().map(|c| c.inefficiency[i]).collect::<Vec<f64>>();
        rows.push(SamplerRow {
            sampler,
            acceptance_median: median(&acc),
            acceptance_iqr: iqr(&acc),
            if_median: (0..names.len()).map(|i| median(&per_param(i))).collect(),
            if_iqr: (0..names.len()).map(|i| iqr(&per_param(i))).collect(),
            chains,
        });
    }
    Ok(SamplerReport { names, burn_in, rows })
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
enum StudyResult {
    LoglikSd(SdStudyReport),
    Samplers(SamplerReport),
}

#[derive(Debug, Serialize)]
struct StudySummary<'a> {
    study: &'a StudySpec,
    scale: Scale,
    params: ScaleParams,
    seed: u64,
    datasets: Vec<String>,
    result: StudyResult,
}

/// Runs the named study and writes `table.csv` and `summary.json` into
/// `out_dir`.
pub fn run_study(name: &str, scale: Scale, seed: u64, workers: usize, out_dir: &Path) -> Result<()> {
    let spec = study_spec(name)?;
    let params = scale_params(scale);
    let model = spec.model.build()?;
    let datasets = study_datasets(&model, &spec.theta, params.t_len, params.datasets, seed)?;
    let mut table = Vec::new();
    let result = match &spec.kind {
        StudyKind::LoglikSd { cells } => {
            let r = loglik_sd_study(
                &model,
                &spec.theta,
                &datasets,
                cells,
                params.reps,
                filter_seed(seed),
                workers,
            )?;
            r.write_csv(&mut table)?;
            StudyResult::LoglikSd(r)
        }
        StudyKind::Samplers { filter } => {
            let r = sampler_comparison(&spec, *filter, &datasets, &params, seed, workers)?;
            r.write_csv(&mut table)?;
            StudyResult::Samplers(r)
        }
    };
    std::fs::create_dir_all(out_dir).map_err(|e| Error::Io(format!("{}: {e}", out_dir.display())))?;
    std::fs::write(out_dir.join(TABLE_CSV), table)?;
    let summary = StudySummary {
        study: &spec,
        scale,
        params,
        seed,
        datasets: datasets.iter().map(|d| d.name.clone()).collect(),
        result,
    };
    write_json(&summary, &out_dir.join(SUMMARY_JSON))
}

//! Chain and filter quality measures.
//!
//! ```text
//! IF  = 1 + 2 sum_{j=1}^{L*} rho_j,   L* = min(1000, L)
//! ECT = 1000 IF t
//! ```
//!
//! `L` is the first lag whose sample autocorrelation falls below `2 / sqrt(K)`
//! in absolute value; that lag is included in the sum. Autocorrelations use
//! the biased `1/K` normalization.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{kalman::kalman_loglik, FilterConfig};
use crate::models::data::format_value;
use crate::models::{AnyModel, Ar1Noise, Dataset, StateSpaceModel};
use crate::parallel::pool;
use crate::rng::derive_seed;
use crate::samplers::ChainRecord;

pub const MIN_IF_LENGTH: usize = 100;
pub const MAX_IF_LAG: usize = 1000;

/// Inefficiency factor of a scalar series; `+inf` for a constant series.
pub fn inefficiency(xs: &[f64]) -> Result<f64> {
    let k = xs.len();
    if k < MIN_IF_LENGTH {
        return Err(Error::config(
            "series",
            format!("need at least {MIN_IF_LENGTH} iterates, got {k}"),
        ));
    }
    let mean = xs.iter().sum::<f64>() / k as f64;
    let dev: Vec<f64> = xs.iter().map(|x| x - mean).collect();
    let c0 = dev.iter().map(|d| d * d).sum::<f64>() / k as f64;
    if !(c0 > 0.0) {
        return Ok(f64::INFINITY);
    }
    let bound = 2.0 / (k as f64).sqrt();
    let mut sum = 0.0;
    for lag in 1..k.min(MAX_IF_LAG + 1) {
        let c = dev[..k - lag].iter().zip(&dev[lag..]).map(|(a, b)| a * b).sum::<f64>() / k as f64;
        let rho = c / c0;
        sum += rho;
        if rho.abs() < bound {
            break;
        }
    }
    Ok((1.0 + 2.0 * sum).max(1.0))
}

/// Equivalent computing time `1000 IF t`.
pub fn ect(inefficiency: f64, seconds_per_iteration: f64) -> f64 {
    1000.0 * inefficiency * seconds_per_iteration
}

/// Percentage of accepted proposals after `burn_in` iterations.
pub fn acceptance_rate(accepted: &[bool], burn_in: usize) -> f64 {
    let window = &accepted[burn_in.min(accepted.len())..];
    if window.is_empty() {
        return 0.0;
    }
    100.0 * window.iter().filter(|&&a| a).count() as f64 / window.len() as f64
}

/// Per-parameter chain summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub inefficiency: f64,
    pub ect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub params: Vec<ParamSummary>,
    pub acceptance: f64,
    pub seconds_per_iteration: f64,
}

/// Summaries of the free parameters in natural coordinates.
pub fn summarize_chain(rec: &ChainRecord, burn_in: usize, seconds_per_iteration: f64) -> Result<ChainSummary> {
    let mut params = Vec::new();
    for name in &rec.free_names {
        let i = rec
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::config("chain", format!("missing column `{name}`")))?;
        let col: Vec<f64> = rec.column(i).into_iter().skip(burn_in).collect();
        let (mean, sd) = mean_sd(&col);
        let f = inefficiency(&col)?;
        params.push(ParamSummary {
            name: name.clone(),
            mean,
            sd,
            inefficiency: f,
            ect: ect(f, seconds_per_iteration),
        });
    }
    Ok(ChainSummary {
        params,
        acceptance: acceptance_rate(&rec.accepted, burn_in),
        seconds_per_iteration,
    })
}

impl ChainSummary {
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(e.to_string());
        wr.write_record(["parameter", "mean", "sd", "if", "ect", "acceptance"])
            .map_err(io)?;
        for p in &self.params {
            wr.write_record([
                p.name.clone(),
                format_value(p.mean),
                format_value(p.sd),
                format_value(p.inefficiency),
                format_value(p.ect),
                format_value(self.acceptance),
            ])
            .map_err(io)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Mean and sample (n - 1) standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Linearly interpolated sample quantile.
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

pub fn iqr(xs: &[f64]) -> f64 {
    quantile(xs, 0.75) - quantile(xs, 0.25)
}

/// How one cell of the study computes the log-likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StudyCell {
    Filter(FilterConfig),
    /// Kalman filter; AR(1)-plus-noise only.
    Exact,
}

impl StudyCell {
    pub fn label(&self) -> String {
        match self {
            StudyCell::Filter(f) => f.variant.name().to_string(),
            StudyCell::Exact => "exact".into(),
        }
    }

    pub fn particles(&self) -> usize {
        match self {
            StudyCell::Filter(f) => f.particles,
            StudyCell::Exact => 0,
        }
    }
}

/// Median and SD of the replicate log-likelihoods on one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStat {
    pub median: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdRow {
    pub label: String,
    pub particles: usize,
    pub median_median: f64,
    pub iqr_median: f64,
    pub median_sd: f64,
    pub iqr_sd: f64,
    pub per_dataset: Vec<DatasetStat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdStudyReport {
    pub datasets: usize,
    pub reps: usize,
    pub rows: Vec<SdRow>,
}

impl SdStudyReport {
    /// One row per cell: median and IQR across datasets of the replicate
    /// medians and of the replicate SDs.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(e.to_string());
        wr.write_record([
            "filter",
            "particles",
            "median_median",
            "iqr_median",
            "median_sd",
            "iqr_sd",
        ])
        .map_err(io)?;
        for r in &self.rows {
            wr.write_record([
                r.label.clone(),
                r.particles.to_string(),
                format_value(r.median_median),
                format_value(r.iqr_median),
                format_value(r.median_sd),
                format_value(r.iqr_sd),
            ])
            .map_err(io)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Replicate log-likelihoods of one cell on one dataset. Replicate `r` uses
/// the seed `derive_seed(seed, [r])` whatever the dataset or cell.
pub fn replicate_logliks(
    model: &AnyModel,
    natural: &[f64],
    data: &Dataset,
    cell: &StudyCell,
    reps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    match cell {
        StudyCell::Exact => {
            if !matches!(model, AnyModel::Ar1(_)) {
                return Err(Error::config("cell", "the exact likelihood is only available for ar1"));
            }
            let v = kalman_loglik(&Ar1Noise.params(natural)?, &data.y)?;
            Ok(vec![v; reps])
        }
        StudyCell::Filter(cfg) => (0..reps)
            .into_par_iter()
            .map(|r| {
                Ok(model
                    .run_filter(natural, data, cfg, derive_seed(seed, &[r as u64]))?
                    .log_likelihood)
            })
            .collect(),
    }
}

/// Runs every cell `reps` times on every dataset at `natural`.
pub fn loglik_sd_study(
    model: &AnyModel,
    natural: &[f64],
    datasets: &[Dataset],
    cells: &[StudyCell],
    reps: usize,
    seed: u64,
    workers: usize,
) -> Result<SdStudyReport> {
    if reps < 2 {
        return Err(Error::config("reps", "need at least two replicates"));
    }
    if datasets.is_empty() {
        return Err(Error::config("datasets", "need at least one dataset"));
    }
    let pool = pool(workers)?;
    let mut rows = Vec::with_capacity(cells.len());
    for cell in cells {
        let per_dataset: Vec<DatasetStat> = pool.install(|| {
            datasets
                .iter()
                .map(|d| {
                    let v = replicate_logliks(model, natural, d, cell, reps, seed)?;
                    Ok(DatasetStat {
                        median: median(&v),
                        sd: mean_sd(&v).1,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let medians: Vec<f64> = per_dataset.iter().map(|s| s.median).collect();
        let sds: Vec<f64> = per_dataset.iter().map(|s| s.sd).collect();
        rows.push(SdRow {
            label: cell.label(),
            particles: cell.particles(),
            median_median: median(&medians),
            iqr_median: iqr(&medians),
            median_sd: median(&sds),
            iqr_sd: iqr(&sds),
            per_dataset,
        });
    }
    Ok(SdStudyReport {
        datasets: datasets.len(),
        reps,
        rows,
    })
}

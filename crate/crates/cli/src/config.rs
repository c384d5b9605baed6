//! Resolved run configuration and model defaults.

use std::collections::BTreeMap;
use std::path::Path;

use pfmcmc::filters::{FilterConfig, FilterVariant};
use pfmcmc::models::params::logit;
use pfmcmc::models::{AnyModel, Dataset, ModelConfig, Parameterization, PriorSpec};
use pfmcmc::parallel::{AveragedEngine, ExecutionMode};
use pfmcmc::resample::Resampler;
use pfmcmc::samplers::{ChainConfig, KalmanEngine, LikelihoodEngine, ParticleEngine, ProposalMixture, WarmupSummary};
use pfmcmc::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::args::{FilterOpts, ModelArgs, ModelKind};

pub fn model_config(a: &ModelArgs) -> ModelConfig {
    match a.model {
        ModelKind::Ar1 => ModelConfig::Ar1,
        ModelKind::Binomial => ModelConfig::Binomial { trials: a.trials },
        ModelKind::Sv => ModelConfig::Sv {
            leverage: a.leverage,
            outliers: a.outliers,
            outlier_prob: a.outlier_prob,
        },
        ModelKind::Garch => ModelConfig::Garch,
    }
}

pub fn filter_config(f: &FilterOpts) -> Result<FilterConfig> {
    let resampler = match f.resampler.as_str() {
        "stratified" => Resampler::Stratified,
        "multinomial" => Resampler::Multinomial,
        other => return Err(Error::config("resampler", format!("unknown resampler `{other}`"))),
    };
    Ok(FilterConfig {
        particles: f.particles,
        variant: FilterVariant::parse(&f.variant, f.eps)?,
        resampler,
        ..FilterConfig::default()
    })
}

/// Parameters used by the simulation studies; GARCH values are on the scale
/// of percentage returns.
pub fn default_theta(model: &ModelConfig) -> Vec<f64> {
    match model {
        ModelConfig::Ar1 => vec![0.0, 0.6, 1.0, 1.0],
        ModelConfig::Binomial { .. } => vec![0.0, 0.97, 0.25],
        ModelConfig::Sv { leverage: true, .. } => vec![0.0, 0.95, 0.05, -0.5],
        ModelConfig::Sv { .. } => vec![0.0, 0.95, 0.05],
        ModelConfig::Garch => vec![2.7, 0.495, 0.893, 0.0378],
    }
}

/// A data-driven starting point inside the prior support.
pub fn default_init(model: &ModelConfig, data: &Dataset) -> Vec<f64> {
    let n = data.len() as f64;
    let mean = data.y.iter().sum::<f64>() / n;
    let var = (data.y.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).max(1e-6);
    match model {
        ModelConfig::Ar1 => vec![mean, 0.5, var / 2.0, var / 2.0],
        ModelConfig::Binomial { trials } => {
            let p = (mean / f64::from(*trials)).clamp(0.01, 0.99);
            vec![logit(p), 0.9, 0.1]
        }
        ModelConfig::Sv { leverage, .. } => {
            let mut v = vec![var.ln(), 0.9, 0.05];
            if *leverage {
                v.push(0.0);
            }
            v
        }
        // state variance alpha / (1 - beta - gamma) = 0.9 var
        ModelConfig::Garch => vec![0.1 * var, 0.09 * var, 0.8, 0.1],
    }
}

/// Where a chain's likelihood comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Likelihood {
    Exact,
    Filter(FilterConfig),
}

/// Everything needed to regenerate a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    /// Dataset file, relative to the run directory.
    pub data: String,
    pub fixed: BTreeMap<String, f64>,
    pub prior: PriorSpec,
    pub likelihood: Likelihood,
    pub chain: ChainConfig,
}

impl RunConfig {
    pub fn parameterization(&self, model: &AnyModel) -> Result<Parameterization> {
        let mut p = model.parameterization();
        for (name, &v) in &self.fixed {
            p = p.fix(name, v)?;
        }
        Ok(p)
    }

    /// The likelihood engine as the chain saw it, including MP2 averaging.
    pub fn engine(&self, model: &AnyModel, data: &Dataset) -> Result<Box<dyn LikelihoodEngine>> {
        let base: Box<dyn LikelihoodEngine> = match &self.likelihood {
            Likelihood::Exact => {
                if !matches!(model, AnyModel::Ar1(_)) {
                    return Err(Error::config("exact", "the exact likelihood is only available for ar1"));
                }
                Box::new(KalmanEngine { data: data.clone() })
            }
            Likelihood::Filter(f) => Box::new(ParticleEngine {
                model: model.clone(),
                data: data.clone(),
                filter: *f,
            }),
        };
        Ok(match self.chain.mode {
            ExecutionMode::Mp2 { workers } => Box::new(Averaged { inner: base, workers }),
            _ => base,
        })
    }
}

/// Owning wrapper around [`AveragedEngine`].
struct Averaged {
    inner: Box<dyn LikelihoodEngine>,
    workers: usize,
}

impl LikelihoodEngine for Averaged {
    fn log_likelihood(&self, natural: &[f64], seed: u64) -> Result<f64> {
        AveragedEngine {
            inner: self.inner.as_ref(),
            workers: self.workers,
        }
        .log_likelihood(natural, seed)
    }
}

/// `chain.json`: the run configuration plus what the run produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSidecar {
    pub run: RunConfig,
    pub parameterization: Parameterization,
    pub iterations: usize,
    pub accepted: usize,
    pub seconds: f64,
    pub seconds_per_iteration: f64,
    pub warmup: Option<WarmupSummary>,
    pub final_proposal: Option<ProposalMixture>,
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::config(path.display().to_string(), e.to_string()))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

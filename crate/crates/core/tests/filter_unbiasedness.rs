//! The simulated likelihood is unbiased for every filter variant, model and
//! particle count. AR(1)-plus-noise is checked against the Kalman filter, the
//! other models against an average of large-swarm runs.

use pfmcmc::filters::kalman::kalman_loglik;
use pfmcmc::filters::{FilterConfig, FilterVariant};
use pfmcmc::models::{AnyModel, Ar1Noise, Dataset, ModelConfig, StateSpaceModel};
use pfmcmc::rng::{derive_seed, RandomStream};
use pfmcmc::Error;

const T: usize = 10;
const REPS: usize = 2000;
const PARTICLES: [usize; 3] = [5, 20, 100];
const REFERENCE_PARTICLES: usize = 100_000;
const REFERENCE_RUNS: usize = 8;

fn variants() -> [FilterVariant; 4] {
    [
        FilterVariant::Sir,
        FilterVariant::Fapf,
        FilterVariant::Papf,
        FilterVariant::PapfEps { epsilon: 0.1 },
    ]
}

/// Mean and standard error of `values`.
fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let v = values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Checks `E[p_hat / p_ref] = 1` within three standard errors for every
/// supported variant and particle count. `ref_se` is the relative standard
/// error of the reference itself.
fn check_grid(model: &AnyModel, theta: &[f64], data: &Dataset, log_ref: f64, ref_se: f64) {
    for variant in variants() {
        for m in PARTICLES {
            let cfg = FilterConfig::new(m, variant);
            let ratios: Result<Vec<f64>, Error> = (0..REPS)
                .map(|r| {
                    let out = model.run_filter(theta, data, &cfg, derive_seed(77, &[m as u64, r as u64]))?;
                    Ok((out.log_likelihood - log_ref).exp())
                })
                .collect();
            let ratios = match ratios {
                Ok(r) => r,
                Err(Error::UnsupportedVariant { .. }) => continue,
                Err(e) => panic!("{e}"),
            };
            let (mean, se) = mean_se(&ratios);
            let se = (se * se + ref_se * ref_se).sqrt();
            assert!(
                (mean - 1.0).abs() < 3.0 * se,
                "{} {} M={m}: mean ratio {mean:.4}, se {se:.4}",
                model.name(),
                variant.name()
            );
        }
    }
}

/// Likelihood-scale average of large-swarm SIR runs, with its relative SE.
fn reference(model: &AnyModel, theta: &[f64], data: &Dataset) -> (f64, f64) {
    let cfg = FilterConfig::new(REFERENCE_PARTICLES, FilterVariant::Sir);
    let logs: Vec<f64> = (0..REFERENCE_RUNS)
        .map(|r| {
            model
                .run_filter(theta, data, &cfg, derive_seed(5, &[r as u64]))
                .unwrap()
                .log_likelihood
        })
        .collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let (mean, se) = mean_se(&scaled);
    (top + mean.ln(), se / mean)
}

fn simulate(model: &AnyModel, theta: &[f64], seed: u64) -> Dataset {
    model.simulate(theta, T, &mut RandomStream::new(seed, 0)).unwrap()
}

#[test]
fn ar1_against_kalman() {
    let model = ModelConfig::Ar1.build().unwrap();
    let theta = [0.5, 0.9, 0.3, 0.5];
    let data = simulate(&model, &theta, 1);
    let exact = kalman_loglik(&Ar1Noise.params(&theta).unwrap(), &data.y).unwrap();
    check_grid(&model, &theta, &data, exact, 0.0);
}

#[test]
fn binomial_against_reference() {
    let model = ModelConfig::Binomial { trials: 20 }.build().unwrap();
    let theta = [-0.5, 0.9, 0.2];
    let data = simulate(&model, &theta, 2);
    let (log_ref, se) = reference(&model, &theta, &data);
    check_grid(&model, &theta, &data, log_ref, se);
}

#[test]
fn sv_with_leverage_and_outliers_against_reference() {
    let model = ModelConfig::Sv {
        leverage: true,
        outliers: true,
        outlier_prob: 0.03,
    }
    .build()
    .unwrap();
    let theta = [-0.5, 0.95, 0.05, -0.4];
    let data = simulate(&model, &theta, 3);
    let (log_ref, se) = reference(&model, &theta, &data);
    check_grid(&model, &theta, &data, log_ref, se);
}

#[test]
fn garch_against_reference() {
    let model = ModelConfig::Garch.build().unwrap();
    let theta = [1.0, 0.2, 0.3, 0.6];
    let data = simulate(&model, &theta, 4);
    let (log_ref, se) = reference(&model, &theta, &data);
    check_grid(&model, &theta, &data, log_ref, se);
}

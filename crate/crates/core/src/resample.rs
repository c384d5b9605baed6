//! Resampling kernels for the selection step of the particle filter.
//!
//! Indices are 0-based. Both kernels invert the weight CDF, traversing
//! particles in their natural index order.

use crate::rng::RandomStream;
use crate::weights::WeightVector;

/// Resampling scheme used in the selection step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resampler {
    #[default]
    Stratified,
    Multinomial,
}

impl Resampler {
    pub fn resample(self, w: &WeightVector, m: usize, rs: &mut RandomStream) -> Vec<usize> {
        match self {
            Resampler::Stratified => stratified_resample(w, m, rs),
            Resampler::Multinomial => multinomial_resample(w, m, rs),
        }
    }
}

/// Index of the last particle with positive mass; used to absorb rounding at
/// the top of the CDF.
fn last_positive(probs: &[f64]) -> usize {
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Stratified resampling with one uniform offset per stratum:
/// `u_m = (m + v_m) / M` for `m = 0..M`.
pub fn stratified_resample(w: &WeightVector, m: usize, rs: &mut RandomStream) -> Vec<usize> {
    let offsets: Vec<f64> = (0..m).map(|_| rs.uniform()).collect();
    stratified_from_offsets(w, &offsets)
}

/// Stratified resampling with caller-supplied offsets `v_m` in `[0, 1)`.
pub fn stratified_from_offsets(w: &WeightVector, offsets: &[f64]) -> Vec<usize> {
    let probs = w.normalized();
    let m = offsets.len();
    let cap = last_positive(probs);
    let mut out = Vec::with_capacity(m);
    let mut k = 0;
    let mut cum = probs[0];
    for (i, v) in offsets.iter().enumerate() {
        let u = (i as f64 + v) / m as f64;
        while u >= cum && k < cap {
            k += 1;
            cum += probs[k];
        }
        out.push(k);
    }
    out
}

/// Multinomial resampling: `M` independent inverse-CDF lookups.
pub fn multinomial_resample(w: &WeightVector, m: usize, rs: &mut RandomStream) -> Vec<usize> {
    let uniforms: Vec<f64> = (0..m).map(|_| rs.uniform()).collect();
    multinomial_from_uniforms(w, &uniforms)
}

pub fn multinomial_from_uniforms(w: &WeightVector, uniforms: &[f64]) -> Vec<usize> {
    let probs = w.normalized();
    let cap = last_positive(probs);
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for &p in probs {
        acc += p;
        cdf.push(acc);
    }
    uniforms
        .iter()
        .map(|&u| cdf.partition_point(|&c| c <= u).min(cap))
        .collect()
}

/// Number of copies of each index.
pub fn counts(indices: &[usize], n: usize) -> Vec<usize> {
    let mut c = vec![0; n];
    for &i in indices {
        c[i] += 1;
    }
    c
}

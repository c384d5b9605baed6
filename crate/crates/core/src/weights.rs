//! Log-domain weight arithmetic.

use crate::error::{Error, Result};

/// Normalized particle weights together with the log-mean of the raw weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    log_unnormalized: Vec<f64>,
    normalized: Vec<f64>,
    log_mean: f64,
}

impl WeightVector {
    /// Equal weights `1/m`.
    pub fn uniform(m: usize) -> Self {
        Self {
            log_unnormalized: vec![0.0; m],
            normalized: vec![1.0 / m as f64; m],
            log_mean: 0.0,
        }
    }

    /// Builds a weight vector from already normalized probabilities.
    pub fn from_probabilities(probs: &[f64]) -> Result<Self> {
        let logw: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
        normalize_log_weights(&logw)
    }

    pub fn len(&self) -> usize {
        self.normalized.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normalized.is_empty()
    }

    pub fn log_unnormalized(&self) -> &[f64] {
        &self.log_unnormalized
    }

    pub fn normalized(&self) -> &[f64] {
        &self.normalized
    }

    /// `log((1/M) sum_k w_k)`.
    pub fn log_mean(&self) -> f64 {
        self.log_mean
    }

    /// `log(sum_k w_k)`.
    pub fn log_sum(&self) -> f64 {
        self.log_mean + (self.len() as f64).ln()
    }

    /// Effective sample size `1 / sum pi_k^2`.
    pub fn ess(&self) -> f64 {
        1.0 / self.normalized.iter().map(|p| p * p).sum::<f64>()
    }
}

/// `log(sum exp(x))`, returning -inf for an empty or all -inf input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// `log((1/n) sum exp(x))`.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    log_sum_exp(xs) - (xs.len() as f64).ln()
}

/// `log(exp(a) + exp(b))`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Normalizes log-weights with the max-shift technique.
///
/// NaN entries are treated as zero weight. Fails with
/// [`Error::TotalWeightZero`] when no entry carries mass.
pub fn normalize_log_weights(logw: &[f64]) -> Result<WeightVector> {
    if logw.is_empty() {
        return Err(Error::config("weights", "empty weight vector"));
    }
    let log_unnormalized: Vec<f64> = logw
        .iter()
        .map(|&w| if w.is_nan() { f64::NEG_INFINITY } else { w })
        .collect();
    let max = log_unnormalized.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::TotalWeightZero);
    }
    if !max.is_finite() {
        return Err(Error::config("weights", "log-weight is +inf"));
    }
    let mut normalized: Vec<f64> = log_unnormalized.iter().map(|&w| (w - max).exp()).collect();
    let total: f64 = normalized.iter().sum();
    for p in &mut normalized {
        *p /= total;
    }
    let log_mean = max + total.ln() - (logw.len() as f64).ln();
    Ok(WeightVector {
        log_unnormalized,
        normalized,
        log_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn equal_weights() {
        let w = normalize_log_weights(&[0.0, 0.0]).unwrap();
        assert_eq!(w.normalized(), &[0.5, 0.5]);
        assert_eq!(w.log_mean(), 0.0);
    }

    #[test]
    fn one_to_three() {
        let w = normalize_log_weights(&[1f64.ln(), 3f64.ln()]).unwrap();
        assert_relative_eq!(w.normalized()[0], 0.25, epsilon = 1e-15);
        assert_relative_eq!(w.normalized()[1], 0.75, epsilon = 1e-15);
        assert_relative_eq!(w.log_mean(), 2f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn large_offset_does_not_overflow() {
        let w = normalize_log_weights(&[1000.0, 1000.0 + 3f64.ln()]).unwrap();
        assert_relative_eq!(w.normalized()[0], 0.25, epsilon = 1e-12);
        assert_relative_eq!(w.log_mean(), 1000.0 + 2f64.ln(), epsilon = 1e-12);
        let w = normalize_log_weights(&[-1e6, -1e6 + 1.0, 1e6]).unwrap();
        assert_eq!(w.normalized()[2], 1.0);
    }

    #[test]
    fn all_zero_weight_is_an_error() {
        let err = normalize_log_weights(&[f64::NEG_INFINITY; 3]).unwrap_err();
        assert_eq!(err, Error::TotalWeightZero);
        let err = normalize_log_weights(&[f64::NAN, f64::NEG_INFINITY]).unwrap_err();
        assert_eq!(err, Error::TotalWeightZero);
    }

    #[test]
    fn partially_dead_weights() {
        let w = normalize_log_weights(&[f64::NEG_INFINITY, 0.0]).unwrap();
        assert_eq!(w.normalized(), &[0.0, 1.0]);
        assert_relative_eq!(w.log_mean(), -(2f64.ln()), epsilon = 1e-15);
    }

    #[test]
    fn log_add_exp_matches_direct() {
        assert_relative_eq!(log_add_exp(1f64.ln(), 3f64.ln()), 4f64.ln(), epsilon = 1e-15);
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 2.0), 2.0);
        assert_relative_eq!(log_mean_exp(&[1f64.ln(), 3f64.ln()]), 2f64.ln(), epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn normalization_is_shift_invariant(
            logw in prop::collection::vec(-50.0f64..50.0, 1..40),
            shift in -1e5f64..1e5,
        ) {
            let a = normalize_log_weights(&logw).unwrap();
            let shifted: Vec<f64> = logw.iter().map(|w| w + shift).collect();
            let b = normalize_log_weights(&shifted).unwrap();
            let sum: f64 = a.normalized().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(a.normalized().iter().all(|&p| p >= 0.0));
            // adding the shift rounds each entry by up to half an ulp of |shift|
            let tol = 1e-12 + 4.0 * f64::EPSILON * shift.abs();
            for (p, q) in a.normalized().iter().zip(b.normalized()) {
                prop_assert!((p - q).abs() < tol);
            }
            prop_assert!((b.log_mean() - a.log_mean() - shift).abs() < 1e-9 * (1.0 + shift.abs()));
        }
    }
}

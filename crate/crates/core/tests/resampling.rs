//! Stratified resampling is unbiased and never noisier than multinomial.

use pfmcmc::resample::{counts, multinomial_resample, stratified_resample};
use pfmcmc::rng::RandomStream;
use pfmcmc::weights::WeightVector;
use proptest::prelude::*;

/// Per-index count means and variances over `reps` draws of `m` offspring.
fn count_moments(w: &WeightVector, m: usize, reps: usize, stratified: bool, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let n = w.len();
    let mut sum = vec![0.0; n];
    let mut sq = vec![0.0; n];
    for r in 0..reps {
        let mut rs = RandomStream::new(seed, r as u64);
        let idx = if stratified {
            stratified_resample(w, m, &mut rs)
        } else {
            multinomial_resample(w, m, &mut rs)
        };
        for (k, c) in counts(&idx, n).into_iter().enumerate() {
            sum[k] += c as f64;
            sq[k] += (c * c) as f64;
        }
    }
    let r = reps as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / r).collect();
    let var = sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| (q / r - m * m) * r / (r - 1.0))
        .collect();
    (mean, var)
}

#[test]
fn fixed_weights_unbiased_and_variance_dominated() {
    let w = WeightVector::from_probabilities(&[0.2, 0.3, 0.5]).unwrap();
    let m = 10;
    let reps = 10_000;
    let (ms, vs) = count_moments(&w, m, reps, true, 1);
    let (mm, vm) = count_moments(&w, m, reps, false, 2);
    for k in 0..3 {
        let target = m as f64 * w.normalized()[k];
        // multinomial SE from its known variance; stratified SE from the sample
        let se_m = (target * (1.0 - w.normalized()[k]) / reps as f64).sqrt();
        assert!((mm[k] - target).abs() < 3.0 * se_m, "multinomial {k}: {}", mm[k]);
        let se_s = (vs[k] / reps as f64).sqrt().max(1e-12);
        assert!(
            (ms[k] - target).abs() < 3.0 * se_s || vs[k] == 0.0 && ms[k] == target,
            "stratified {k}: {}",
            ms[k]
        );
        assert!(vs[k] <= vm[k], "index {k}: {} > {}", vs[k], vm[k]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stratified_variance_never_exceeds_multinomial(
        raw in prop::collection::vec(0.01f64..1.0, 2..8),
        m in 5usize..40,
        seed in 0u64..1000,
    ) {
        let w = WeightVector::from_probabilities(&raw).unwrap();
        let (_, vs) = count_moments(&w, m, 2000, true, seed);
        for (k, &p) in w.normalized().iter().enumerate() {
            // compare against the exact multinomial variance M p (1 - p)
            let vm = m as f64 * p * (1.0 - p);
            prop_assert!(vs[k] <= vm * 1.15 + 1e-9, "index {} var {} vs {}", k, vs[k], vm);
        }
    }

    #[test]
    fn stratified_counts_stay_near_expectation(
        raw in prop::collection::vec(0.01f64..1.0, 2..8),
        m in 1usize..60,
        seed in 0u64..1000,
    ) {
        // each stratum contributes at most one copy beyond its share, so the
        // count differs from M p by less than 2
        let w = WeightVector::from_probabilities(&raw).unwrap();
        let idx = stratified_resample(&w, m, &mut RandomStream::new(seed, 0));
        for (k, c) in counts(&idx, w.len()).into_iter().enumerate() {
            prop_assert!((c as f64 - m as f64 * w.normalized()[k]).abs() < 2.0);
        }
    }
}

//! Adaptive random walk Metropolis proposal.
//!
//! ```text
//! q_j(z' | z) = w1_j N(z, k1 S1) + (1 - w1_j) N(z, k2 S2_j)
//! k1 = 0.1^2 / d,   k2 = 2.38^2 / d
//! w1_j = 1 for j <= j0, 0.05 afterwards
//! ```
//!
//! `S2_j` is the sample covariance of the iterates so far, kept with a
//! streaming (Welford) update. Until it is positive definite only the fixed
//! component is used.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::mixture::Gaussian;
use crate::error::{Error, Result};
use crate::rng::RandomStream;

pub fn kappa1(d: usize) -> f64 {
    0.1 * 0.1 / d as f64
}

pub fn kappa2(d: usize) -> f64 {
    2.38 * 2.38 / d as f64
}

/// Default switch point `max(100, 10 d)`.
pub fn default_j0(d: usize) -> usize {
    (10 * d).max(100)
}

/// Weight of the fixed component after the switch point.
pub const LATE_FIXED_WEIGHT: f64 = 0.05;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArwmOptions {
    /// Iterations using only the fixed component; `None` means
    /// `max(100, 10 d)`.
    pub j0: Option<usize>,
    /// Fixed covariance `S1` as a row-major `d x d` matrix; `None` means the
    /// identity.
    pub sigma1: Option<Vec<f64>>,
}

/// Streaming mean and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningMoments {
    n: usize,
    mean: DVector<f64>,
    m2: DMatrix<f64>,
}

impl RunningMoments {
    pub fn new(d: usize) -> Self {
        Self {
            n: 0,
            mean: DVector::zeros(d),
            m2: DMatrix::zeros(d, d),
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let x = DVector::from_column_slice(x);
        let delta = &x - &self.mean;
        self.mean += &delta / self.n as f64;
        let delta2 = &x - &self.mean;
        self.m2 += &delta * delta2.transpose();
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Unbiased sample covariance, once at least two points were seen.
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        (self.n >= 2).then(|| &self.m2 / (self.n - 1) as f64)
    }
}

#[derive(Debug, Clone)]
pub struct Arwm {
    d: usize,
    j0: usize,
    fixed: Gaussian,
    moments: RunningMoments,
}

impl Arwm {
    pub fn new(d: usize, opts: &ArwmOptions) -> Result<Self> {
        if d == 0 {
            return Err(Error::config(
                "parameters",
                "nothing to sample: every parameter is fixed",
            ));
        }
        let sigma1 = match &opts.sigma1 {
            None => DMatrix::identity(d, d),
            Some(v) if v.len() == d * d => DMatrix::from_row_slice(d, d, v),
            Some(v) => {
                return Err(Error::config(
                    "sigma1",
                    format!("expected {} entries, got {}", d * d, v.len()),
                ))
            }
        };
        let fixed = Gaussian::new(DVector::zeros(d), sigma1 * kappa1(d))
            .map_err(|_| Error::config("sigma1", "must be symmetric positive definite"))?;
        Ok(Self {
            d,
            j0: opts.j0.unwrap_or_else(|| default_j0(d)),
            fixed,
            moments: RunningMoments::new(d),
        })
    }

    pub fn j0(&self) -> usize {
        self.j0
    }

    /// Records an iterate of the chain.
    pub fn observe(&mut self, z: &[f64]) {
        self.moments.push(z);
    }

    /// The adaptive component `N(0, k2 S2)` if `S2` is positive definite.
    fn adaptive(&self) -> Option<Gaussian> {
        let cov = self.moments.covariance()?;
        Gaussian::new(DVector::zeros(self.d), cov * kappa2(self.d)).ok()
    }

    /// Draws the proposal for iteration `j` (1-based) from the current point.
    pub fn propose(&self, z: &[f64], j: usize, rs: &mut RandomStream) -> Vec<f64> {
        let step = if j <= self.j0 || rs.uniform() < LATE_FIXED_WEIGHT {
            self.fixed.sample(rs)
        } else {
            match self.adaptive() {
                Some(g) => g.sample(rs),
                None => self.fixed.sample(rs),
            }
        };
        z.iter().zip(step).map(|(a, b)| a + b).collect()
    }
}

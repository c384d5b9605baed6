//! Adaptive independent Metropolis-Hastings proposal.
//!
//! ```text
//! q_j(z) = w1 g1(z) + w2 g2(z) + w3 g3(z) + w4 g4(z)
//! ```
//!
//! `g1` is a fixed estimate of the target, `g2` is `g1` with covariances
//! multiplied by 10, `g3` is a normal mixture refitted to the chain history at
//! checkpoints and `g4` is `g3` with covariances multiplied by 20. Until `g3`
//! exists the weights are `(0.8, 0.2, 0, 0)`, afterwards
//! `(0.15, 0.05, 0.7, 0.1)`. At the start of the second stage `g1` is replaced
//! by the current `g3`.

use serde::{Deserialize, Serialize};

use super::mixture::GaussianMixture;
use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::weights::log_sum_exp;

pub const FIXED_INFLATION: f64 = 10.0;
pub const ADAPTED_INFLATION: f64 = 20.0;
pub const INITIAL_WEIGHTS: [f64; 4] = [0.8, 0.2, 0.0, 0.0];
pub const ADAPTED_WEIGHTS: [f64; 4] = [0.15, 0.05, 0.7, 0.1];
pub const MAX_COMPONENTS: usize = 6;

/// Four-group proposal mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalMixture {
    g1: GaussianMixture,
    g2: GaussianMixture,
    g3: Option<GaussianMixture>,
    g4: Option<GaussianMixture>,
    weights: [f64; 4],
    stage: u8,
}

impl ProposalMixture {
    /// First-stage proposal built on the estimate `g1`.
    pub fn new(g1: GaussianMixture) -> Self {
        Self {
            g2: g1.scaled(FIXED_INFLATION),
            g1,
            g3: None,
            g4: None,
            weights: INITIAL_WEIGHTS,
            stage: 1,
        }
    }

    /// Overrides the group weights. Groups 3 and 4 may only carry weight once
    /// `g3` is set.
    pub fn with_weights(mut self, weights: [f64; 4]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::config(
                "weights",
                "group weights must be nonnegative and sum to 1",
            ));
        }
        if self.g3.is_none() && (weights[2] > 0.0 || weights[3] > 0.0) {
            return Err(Error::config("weights", "groups 3 and 4 need an adapted mixture"));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn weights(&self) -> [f64; 4] {
        self.weights
    }

    pub fn stage(&self) -> u8 {
        self.stage
    }

    pub fn dim(&self) -> usize {
        self.g1.dim()
    }

    pub fn fixed(&self) -> &GaussianMixture {
        &self.g1
    }

    pub fn adapted(&self) -> Option<&GaussianMixture> {
        self.g3.as_ref()
    }

    /// Installs a refitted `g3` (and its inflated copy `g4`).
    pub fn set_adapted(&mut self, g3: GaussianMixture) {
        self.g4 = Some(g3.scaled(ADAPTED_INFLATION));
        self.g3 = Some(g3);
        self.weights = ADAPTED_WEIGHTS;
    }

    /// Second stage: `g1` becomes the current `g3`.
    pub fn begin_stage_two(&mut self) {
        if let Some(g3) = &self.g3 {
            self.g1 = g3.clone();
            self.g2 = g3.scaled(FIXED_INFLATION);
        }
        self.stage = 2;
    }

    fn groups(&self) -> [(f64, Option<&GaussianMixture>); 4] {
        [
            (self.weights[0], Some(&self.g1)),
            (self.weights[1], Some(&self.g2)),
            (self.weights[2], self.g3.as_ref()),
            (self.weights[3], self.g4.as_ref()),
        ]
    }

    pub fn log_density(&self, z: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .groups()
            .iter()
            .filter_map(|(w, g)| match g {
                Some(g) if *w > 0.0 => Some(w.ln() + g.log_density(z)),
                _ => None,
            })
            .collect();
        log_sum_exp(&terms)
    }

    /// Ancestral draw: group, then component, then the normal.
    pub fn sample(&self, rs: &mut RandomStream) -> Vec<f64> {
        let u = rs.uniform();
        let groups = self.groups();
        let mut acc = 0.0;
        let mut chosen = None;
        for (w, g) in groups.iter() {
            if let Some(g) = g {
                if *w > 0.0 {
                    acc += w;
                    chosen = Some(*g);
                    if u < acc {
                        break;
                    }
                }
            }
        }
        chosen.unwrap_or(&self.g1).sample(rs)
    }
}

/// When to refit `g3`, with how many components, and when stage two starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AimhSchedule {
    /// Iterations after which `g3` is refitted.
    pub checkpoints: Vec<usize>,
    /// `k` components once `accepted / d` reaches `thresholds[k - 1]`.
    pub thresholds: Vec<f64>,
    pub max_components: usize,
    /// First checkpoint at or after which stage two begins; `None` means the
    /// first checkpoint at or after half the run.
    pub stage_two_at: Option<usize>,
}

/// Default refit iterations.
pub const DEFAULT_CHECKPOINTS: [usize; 12] = [100, 200, 500, 1000, 1500, 2000, 3000, 4000, 5000, 10000, 15000, 20000];
/// Default `accepted / d` thresholds for 1..=6 components.
pub const DEFAULT_THRESHOLDS: [f64; 6] = [0.0, 50.0, 150.0, 300.0, 600.0, 1000.0];

impl Default for AimhSchedule {
    fn default() -> Self {
        Self {
            checkpoints: DEFAULT_CHECKPOINTS.to_vec(),
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            max_components: MAX_COMPONENTS,
            stage_two_at: None,
        }
    }
}

/// What to do after an iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleStep {
    pub refit: bool,
    pub components: usize,
    pub begin_stage_two: bool,
}

impl AimhSchedule {
    /// Component count for `accepted` acceptances in dimension `d`.
    pub fn components(&self, accepted: usize, d: usize) -> usize {
        let ratio = accepted as f64 / d.max(1) as f64;
        let k = self.thresholds.iter().filter(|&&t| ratio >= t).count().max(1);
        k.min(self.max_components.clamp(1, MAX_COMPONENTS))
    }

    /// The checkpoint that starts stage two in a run of `n_iter` iterations.
    pub fn stage_two_checkpoint(&self, n_iter: usize) -> Option<usize> {
        let from = self.stage_two_at.unwrap_or(n_iter.div_ceil(2));
        self.checkpoints
            .iter()
            .copied()
            .filter(|&c| c >= from && c <= n_iter)
            .min()
    }

    /// Decision after iteration `j` of `n_iter`.
    pub fn step(&self, j: usize, n_iter: usize, accepted: usize, d: usize) -> ScheduleStep {
        let refit = self.checkpoints.contains(&j);
        ScheduleStep {
            refit,
            components: self.components(accepted, d),
            begin_stage_two: refit && self.stage_two_checkpoint(n_iter) == Some(j),
        }
    }

    /// Next checkpoint at or after `j`.
    pub fn next_checkpoint(&self, j: usize) -> Option<usize> {
        self.checkpoints.iter().copied().filter(|&c| c >= j).min()
    }
}

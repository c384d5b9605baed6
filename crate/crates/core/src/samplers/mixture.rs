//! Multivariate normal mixtures: density, sampling and maximum-likelihood
//! fitting by expectation-maximization.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::weights::log_sum_exp;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Diagonal loading added to every fitted covariance, relative to its mean
/// variance.
pub const REG_RELATIVE: f64 = 1e-8;
/// Absolute diagonal loading, so that constant columns stay positive definite.
pub const REG_FLOOR: f64 = 1e-12;

/// A multivariate normal with cached Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    log_norm: f64,
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::Fit(format!(
                "covariance is {}x{}, mean has {d} entries",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let sym = (&cov + cov.transpose()) * 0.5;
        let chol = sym
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Fit("covariance is not positive definite".into()))?
            .l();
        let log_det_half: f64 = chol.diagonal().iter().map(|v| v.ln()).sum();
        Ok(Self {
            mean,
            cov: sym,
            chol,
            log_norm: -0.5 * d as f64 * LN_2PI - log_det_half,
        })
    }

    pub fn standard(d: usize) -> Self {
        Self::new(DVector::zeros(d), DMatrix::identity(d, d)).expect("identity is positive definite")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Lower Cholesky factor of the covariance.
    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut w = [0.0f64; 16];
        let mut heap;
        let w: &mut [f64] = if d <= 16 {
            &mut w[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        // forward substitution L w = x - mean
        let mut q = 0.0;
        for i in 0..d {
            let s = x[i] - self.mean[i] - (0..i).map(|k| self.chol[(i, k)] * w[k]).sum::<f64>();
            w[i] = s / self.chol[(i, i)];
            q += w[i] * w[i];
        }
        self.log_norm - 0.5 * q
    }

    pub fn sample(&self, rs: &mut RandomStream) -> Vec<f64> {
        let d = self.dim();
        let z: Vec<f64> = (0..d).map(|_| rs.normal()).collect();
        (0..d)
            .map(|i| self.mean[i] + (0..=i).map(|k| self.chol[(i, k)] * z[k]).sum::<f64>())
            .collect()
    }

    /// The same normal with covariance multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            mean: self.mean.clone(),
            cov: &self.cov * c,
            chol: &self.chol * c.sqrt(),
            log_norm: self.log_norm - 0.5 * self.dim() as f64 * c.ln(),
        }
    }
}

/// Finite mixture of multivariate normals.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    components: Vec<Gaussian>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, components: Vec<Gaussian>) -> Result<Self> {
        if weights.is_empty() || weights.len() != components.len() {
            return Err(Error::Fit("mixture needs one weight per component".into()));
        }
        let d = components[0].dim();
        if components.iter().any(|c| c.dim() != d) {
            return Err(Error::Fit("mixture components differ in dimension".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Fit(
                "mixture weights must be nonnegative with positive sum".into(),
            ));
        }
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        Ok(Self {
            log_weights: weights.iter().map(|w| w.ln()).collect(),
            weights,
            components,
        })
    }

    pub fn single(g: Gaussian) -> Self {
        Self::new(vec![1.0], vec![g]).expect("one component")
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[Gaussian] {
        &self.components
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        if self.components.len() == 1 {
            return self.components[0].log_density(x);
        }
        let terms: Vec<f64> = self
            .log_weights
            .iter()
            .zip(&self.components)
            .map(|(lw, c)| lw + c.log_density(x))
            .collect();
        log_sum_exp(&terms)
    }

    pub fn sample(&self, rs: &mut RandomStream) -> Vec<f64> {
        let c = if self.components.len() == 1 {
            0
        } else {
            let u = rs.uniform();
            let mut acc = 0.0;
            let mut pick = self.components.len() - 1;
            for (i, w) in self.weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    pick = i;
                    break;
                }
            }
            pick
        };
        self.components[c].sample(rs)
    }

    /// Same weights and means with every covariance multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            weights: self.weights.clone(),
            log_weights: self.log_weights.clone(),
            components: self.components.iter().map(|g| g.scaled(c)).collect(),
        }
    }

    /// Mixture mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = DVector::zeros(self.dim());
        for (w, c) in self.weights.iter().zip(&self.components) {
            m += c.mean() * *w;
        }
        m.iter().copied().collect()
    }
}

/// Serializable form of a mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<Vec<f64>>>,
}

impl From<&GaussianMixture> for MixtureSpec {
    fn from(m: &GaussianMixture) -> Self {
        Self {
            weights: m.weights.clone(),
            means: m.components.iter().map(|c| c.mean.iter().copied().collect()).collect(),
            covariances: m
                .components
                .iter()
                .map(|c| c.cov.row_iter().map(|r| r.iter().copied().collect()).collect())
                .collect(),
        }
    }
}

impl TryFrom<&MixtureSpec> for GaussianMixture {
    type Error = Error;

    fn try_from(s: &MixtureSpec) -> Result<Self> {
        let comps = s
            .means
            .iter()
            .zip(&s.covariances)
            .map(|(m, c)| {
                let d = m.len();
                if c.len() != d || c.iter().any(|r| r.len() != d) {
                    return Err(Error::Fit("covariance shape does not match mean".into()));
                }
                Gaussian::new(DVector::from_column_slice(m), DMatrix::from_fn(d, d, |i, j| c[i][j]))
            })
            .collect::<Result<Vec<_>>>()?;
        GaussianMixture::new(s.weights.clone(), comps)
    }
}

impl Serialize for GaussianMixture {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MixtureSpec::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for GaussianMixture {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let spec = MixtureSpec::deserialize(d)?;
        GaussianMixture::try_from(&spec).map_err(serde::de::Error::custom)
    }
}

/// Sample mean and maximum-likelihood (divide by `n`) covariance of `rows`
/// under weights `w` (which need not be normalized).
fn weighted_moments(rows: &[Vec<f64>], w: &[f64], d: usize) -> (DVector<f64>, DMatrix<f64>, f64) {
    let total: f64 = w.iter().sum();
    let mut mean = DVector::zeros(d);
    for (r, &wi) in rows.iter().zip(w) {
        for k in 0..d {
            mean[k] += wi * r[k];
        }
    }
    mean /= total;
    let mut cov = DMatrix::zeros(d, d);
    for (r, &wi) in rows.iter().zip(w) {
        for a in 0..d {
            let da = r[a] - mean[a];
            for b in 0..=a {
                cov[(a, b)] += wi * da * (r[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            cov[(b, a)] = cov[(a, b)];
        }
    }
    cov /= total;
    (mean, cov, total)
}

fn regularize(mut cov: DMatrix<f64>) -> DMatrix<f64> {
    let d = cov.nrows();
    let load = REG_RELATIVE * cov.trace() / d as f64 + REG_FLOOR;
    for i in 0..d {
        cov[(i, i)] += load;
    }
    cov
}

/// Single normal fitted by maximum likelihood, regularized.
pub fn fit_gaussian(rows: &[Vec<f64>]) -> Result<Gaussian> {
    let d = check_rows(rows)?;
    let (mean, cov, _) = weighted_moments(rows, &vec![1.0; rows.len()], d);
    Gaussian::new(mean, regularize(cov))
}

fn check_rows(rows: &[Vec<f64>]) -> Result<usize> {
    let Some(first) = rows.first() else {
        return Err(Error::Fit("no rows to fit".into()));
    };
    let d = first.len();
    if d == 0 || rows.iter().any(|r| r.len() != d || r.iter().any(|v| !v.is_finite())) {
        return Err(Error::Fit("rows must be finite and of equal nonzero length".into()));
    }
    Ok(d)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding followed by Lloyd iterations; returns the cluster of
/// each row.
fn kmeans(rows: &[Vec<f64>], k: usize, rs: &mut RandomStream) -> Vec<usize> {
    let n = rows.len();
    let mut centers: Vec<Vec<f64>> = vec![rows[(rs.uniform() * n as f64) as usize % n].clone()];
    let mut dist: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let u = rs.uniform() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, d) in dist.iter().enumerate() {
                acc += d;
                if u < acc {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            (rs.uniform() * n as f64) as usize % n
        };
        centers.push(rows[next].clone());
        for (d, r) in dist.iter_mut().zip(rows) {
            *d = d.min(sq_dist(r, centers.last().unwrap()));
        }
    }
    let mut labels = vec![0usize; n];
    for _ in 0..100 {
        let mut changed = false;
        for (l, r) in labels.iter_mut().zip(rows) {
            let best = (0..k)
                .min_by(|&a, &b| sq_dist(r, &centers[a]).total_cmp(&sq_dist(r, &centers[b])))
                .unwrap();
            if best != *l {
                *l = best;
                changed = true;
            }
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = rows
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == c)
                .map(|(r, _)| r)
                .collect();
            if !members.is_empty() {
                for (j, v) in center.iter_mut().enumerate() {
                    *v = members.iter().map(|r| r[j]).sum::<f64>() / members.len() as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }
    labels
}

/// Maximum-likelihood mixture of `k` normals by EM from a k-means start.
/// Needs at least `10 d k` rows. Deterministic given `seed`.
pub fn fit_mixture(rows: &[Vec<f64>], k: usize, seed: u64) -> Result<GaussianMixture> {
    let d = check_rows(rows)?;
    let n = rows.len();
    if k == 0 {
        return Err(Error::Fit("need at least one component".into()));
    }
    if n < 10 * d * k {
        return Err(Error::Fit(format!(
            "{n} rows are too few for {k} components in dimension {d} (need {})",
            10 * d * k
        )));
    }
    if k == 1 {
        return Ok(GaussianMixture::single(fit_gaussian(rows)?));
    }
    let mut rs = RandomStream::new(seed, 0);
    let labels = kmeans(rows, k, &mut rs);
    let (_, global_cov, _) = weighted_moments(rows, &vec![1.0; n], d);
    let mut resp: Vec<Vec<f64>> = (0..k)
        .map(|c| labels.iter().map(|&l| if l == c { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut prev = f64::NEG_INFINITY;
    let mut mixture = None;
    for _ in 0..500 {
        // M step
        let mut weights = Vec::with_capacity(k);
        let mut comps = Vec::with_capacity(k);
        for r in &resp {
            let total: f64 = r.iter().sum();
            if total < (d + 1) as f64 {
                // starved component: restart it on the global moments
                let (mean, _, _) = weighted_moments(rows, &vec![1.0; n], d);
                weights.push(total.max(1.0));
                comps.push(Gaussian::new(mean, regularize(global_cov.clone()))?);
                continue;
            }
            let (mean, cov, total) = weighted_moments(rows, r, d);
            weights.push(total);
            comps.push(Gaussian::new(mean, regularize(cov))?);
        }
        let mix = GaussianMixture::new(weights, comps)?;
        // E step
        let mut loglik = 0.0;
        let mut terms = vec![0.0; k];
        for (i, row) in rows.iter().enumerate() {
            for (c, t) in terms.iter_mut().enumerate() {
                *t = mix.log_weights[c] + mix.components[c].log_density(row);
            }
            let lse = log_sum_exp(&terms);
            loglik += lse;
            for c in 0..k {
                resp[c][i] = (terms[c] - lse).exp();
            }
        }
        mixture = Some(mix);
        if (loglik - prev).abs() <= 1e-10 * loglik.abs().max(1.0) {
            break;
        }
        prev = loglik;
    }
    mixture.ok_or_else(|| Error::Fit("EM produced no mixture".into()))
}

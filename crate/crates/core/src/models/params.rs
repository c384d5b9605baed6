//! Parameter transforms between natural and unconstrained coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bijection from an unconstrained real line onto a parameter's support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    Identity,
    /// Positive parameters: `theta = exp(z)`.
    Log,
    /// Parameters on (0, 1): `theta = logistic(z)`.
    Logit,
    /// Parameters on `(lo, hi)`: `theta = lo + (hi - lo) logistic(z)`. With
    /// `(-1, 1)` this is the Fisher z transform scaled by two.
    ScaledLogit {
        lo: f64,
        hi: f64,
    },
}

#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `log(logistic(z) * (1 - logistic(z)))`, stable for large `|z|`.
#[inline]
fn log_logistic_derivative(z: f64) -> f64 {
    -z.abs() - 2.0 * (-z.abs()).exp().ln_1p()
}

impl Transform {
    /// Maps a natural value to the unconstrained line.
    pub fn to_unconstrained(self, name: &str, theta: f64) -> Result<f64> {
        let bad = || Error::Transform {
            name: name.to_string(),
            value: theta,
        };
        if !theta.is_finite() {
            return Err(bad());
        }
        match self {
            Transform::Identity => Ok(theta),
            Transform::Log => {
                if theta > 0.0 {
                    Ok(theta.ln())
                } else {
                    Err(bad())
                }
            }
            Transform::Logit => {
                if theta > 0.0 && theta < 1.0 {
                    Ok(logit(theta))
                } else {
                    Err(bad())
                }
            }
            Transform::ScaledLogit { lo, hi } => {
                if theta > lo && theta < hi {
                    Ok(logit((theta - lo) / (hi - lo)))
                } else {
                    Err(bad())
                }
            }
        }
    }

    pub fn from_unconstrained(self, z: f64) -> f64 {
        match self {
            Transform::Identity => z,
            Transform::Log => z.exp(),
            Transform::Logit => logistic(z),
            Transform::ScaledLogit { lo, hi } => lo + (hi - lo) * logistic(z),
        }
    }

    /// `log |d theta / d z|` at unconstrained point `z`.
    pub fn log_jacobian(self, z: f64) -> f64 {
        match self {
            Transform::Identity => 0.0,
            Transform::Log => z,
            Transform::Logit => log_logistic_derivative(z),
            Transform::ScaledLogit { lo, hi } => (hi - lo).ln() + log_logistic_derivative(z),
        }
    }
}

/// A parameter point in both coordinate systems.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    pub natural: Vec<f64>,
    pub unconstrained: Vec<f64>,
    /// `log |det d(natural)/d(unconstrained)|`.
    pub log_jacobian: f64,
}

/// Names and transforms of a model's parameters, with an optional subset held
/// fixed. Samplers move only the free coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameterization {
    names: Vec<String>,
    transforms: Vec<Transform>,
    fixed: Vec<Option<f64>>,
}

impl Parameterization {
    pub fn new(names: Vec<String>, transforms: Vec<Transform>) -> Self {
        assert_eq!(names.len(), transforms.len());
        let fixed = vec![None; names.len()];
        Self {
            names,
            transforms,
            fixed,
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn transforms(&self) -> &[Transform] {
        &self.transforms
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::config(name, "unknown parameter"))
    }

    /// Holds `name` at `value` so that it is no longer sampled.
    pub fn fix(mut self, name: &str, value: f64) -> Result<Self> {
        let i = self.index_of(name)?;
        self.fixed[i] = Some(value);
        Ok(self)
    }

    pub fn is_fixed(&self, i: usize) -> bool {
        self.fixed[i].is_some()
    }

    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.fixed[i].is_none()).collect()
    }

    pub fn free_names(&self) -> Vec<String> {
        self.free_indices().into_iter().map(|i| self.names[i].clone()).collect()
    }

    pub fn free_dim(&self) -> usize {
        self.fixed.iter().filter(|f| f.is_none()).count()
    }

    /// Mask over all parameters, `true` where the parameter is sampled.
    pub fn free_mask(&self) -> Vec<bool> {
        self.fixed.iter().map(|f| f.is_none()).collect()
    }

    /// Maps a full natural vector to the free unconstrained coordinates.
    pub fn to_unconstrained(&self, natural: &[f64]) -> Result<ParameterVector> {
        self.check_dim(natural.len())?;
        let mut z = Vec::with_capacity(self.free_dim());
        for i in self.free_indices() {
            z.push(self.transforms[i].to_unconstrained(&self.names[i], natural[i])?);
        }
        Ok(self.from_unconstrained(&z))
    }

    /// Maps free unconstrained coordinates to a full natural vector, filling
    /// fixed parameters with their held values.
    pub fn from_unconstrained(&self, z: &[f64]) -> ParameterVector {
        debug_assert_eq!(z.len(), self.free_dim());
        let mut natural = Vec::with_capacity(self.dim());
        let mut log_jacobian = 0.0;
        let mut zi = z.iter();
        for (i, t) in self.transforms.iter().enumerate() {
            match self.fixed[i] {
                Some(v) => natural.push(v),
                None => {
                    let &zv = zi.next().expect("free dimension mismatch");
                    natural.push(t.from_unconstrained(zv));
                    log_jacobian += t.log_jacobian(zv);
                }
            }
        }
        ParameterVector {
            natural,
            unconstrained: z.to_vec(),
            log_jacobian,
        }
    }

    /// Replaces the fixed entries of `natural` with their held values.
    pub fn apply_fixed(&self, natural: &[f64]) -> Vec<f64> {
        natural.iter().zip(&self.fixed).map(|(&v, f)| f.unwrap_or(v)).collect()
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(Error::config(
                "parameters",
                format!("expected {} values, got {n}", self.dim()),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn logit_at_one_half() {
        let z = Transform::Logit.to_unconstrained("phi", 0.5).unwrap();
        assert_eq!(z, 0.0);
        assert_relative_eq!(Transform::Logit.log_jacobian(z), -(4f64.ln()), epsilon = 1e-15);
    }

    #[test]
    fn log_at_one() {
        let z = Transform::Log.to_unconstrained("tau2", 1.0).unwrap();
        assert_eq!(z, 0.0);
        assert_eq!(Transform::Log.log_jacobian(z), 0.0);
    }

    #[test]
    fn boundary_values_are_rejected() {
        assert!(Transform::Logit.to_unconstrained("phi", 0.0).is_err());
        assert!(Transform::Logit.to_unconstrained("phi", 1.0).is_err());
        assert!(Transform::Log.to_unconstrained("tau2", 0.0).is_err());
        let rho = Transform::ScaledLogit { lo: -1.0, hi: 1.0 };
        assert!(rho.to_unconstrained("rho", -1.0).is_err());
        assert!(rho.to_unconstrained("rho", 0.3).is_ok());
    }

    #[test]
    fn fisher_z_matches_atanh() {
        let rho = Transform::ScaledLogit { lo: -1.0, hi: 1.0 };
        let z = rho.to_unconstrained("rho", 0.4).unwrap();
        assert_relative_eq!(z, 2.0 * 0.4f64.atanh(), epsilon = 1e-14);
    }

    #[test]
    fn fixed_parameters_are_held() {
        let p = Parameterization::new(
            vec!["mu".into(), "phi".into()],
            vec![Transform::Identity, Transform::Logit],
        )
        .fix("phi", 0.6)
        .unwrap();
        assert_eq!(p.free_dim(), 1);
        let v = p.from_unconstrained(&[1.5]);
        assert_eq!(v.natural, vec![1.5, 0.6]);
        assert_eq!(v.log_jacobian, 0.0);
        let back = p.to_unconstrained(&[1.5, 0.9]).unwrap();
        assert_eq!(back.unconstrained, vec![1.5]);
    }

    fn finite_difference_log_jacobian(t: Transform, z: f64) -> f64 {
        let h = 1e-6;
        let d = (t.from_unconstrained(z + h) - t.from_unconstrained(z - h)) / (2.0 * h);
        d.abs().ln()
    }

    proptest! {
        #[test]
        fn roundtrip_is_identity(z in -5.0f64..5.0) {
            for t in [
                Transform::Identity,
                Transform::Log,
                Transform::Logit,
                Transform::ScaledLogit { lo: -1.0, hi: 1.0 },
            ] {
                let theta = t.from_unconstrained(z);
                let back = t.to_unconstrained("x", theta).unwrap();
                prop_assert!((back - z).abs() < 1e-12,
                    "{t:?}: {z} -> {theta} -> {back}");
                prop_assert!(t.log_jacobian(z).is_finite());
            }
        }

        #[test]
        fn log_jacobian_matches_finite_differences(z in -6.0f64..6.0) {
            for t in [Transform::Log, Transform::Logit, Transform::ScaledLogit { lo: -1.0, hi: 1.0 }] {
                let fd = finite_difference_log_jacobian(t, z);
                prop_assert!((fd - t.log_jacobian(z)).abs() < 1e-6);
            }
        }
    }
}

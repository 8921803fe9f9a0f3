//! Correlated Gaussian sampling of the free body parameters.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::template::BodyParameters;
use crate::anthropometry::PARAM_COUNT;
use crate::error::{Error, Result};

/// Parameters drawn from the correlated Gaussian. Id 17 follows from the
/// independent ankle height; weight and id 7 are only measured.
pub const SAMPLED_IDS: [u8; 16] = [2, 3, 4, 5, 6, 8, 9, 10, 11, 12, 13, 14, 15, 16, 18, 19];
pub const DERIVED_IDS: [u8; 2] = [1, 7];

/// An independent normal variable outside the schema.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Latent {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledParameter {
    pub id: u8,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingModel {
    /// One entry per id in [`SAMPLED_IDS`], same order.
    pub parameters: Vec<SampledParameter>,
    /// Row-major correlation matrix over `parameters`.
    pub correlation: Vec<Vec<f64>>,
    /// Height of the lowest ring above the floor; sets id 17 as
    /// crotch height + rise − ankle height.
    pub ankle_height: Latent,
    /// Sideways arm offset; moves arms without reshaping them.
    pub arm_gap: Latent,
}

/// (id, mean, std, loading on girth, loading on stature).
const DEFAULTS: [(u8, f64, f64, f64, f64); 16] = [
    (2, 1650.0, 70.0, 0.10, 0.90),
    (3, 340.0, 20.0, 0.70, 0.15),
    (4, 930.0, 80.0, 0.85, 0.10),
    (5, 850.0, 100.0, 0.85, 0.05),
    (6, 1000.0, 80.0, 0.85, 0.15),
    (8, 760.0, 45.0, 0.00, 0.85),
    (9, 420.0, 25.0, 0.45, 0.45),
    (10, 600.0, 35.0, 0.10, 0.75),
    (11, 780.0, 90.0, 0.90, 0.05),
    (12, 1020.0, 80.0, 0.85, 0.15),
    (13, 280.0, 25.0, 0.15, 0.55),
    (14, 620.0, 35.0, 0.05, 0.80),
    (15, 300.0, 35.0, 0.80, 0.05),
    (16, 160.0, 10.0, 0.60, 0.25),
    (18, 380.0, 25.0, 0.70, 0.20),
    (19, 580.0, 55.0, 0.80, 0.05),
];

impl Default for SamplingModel {
    /// Two latent factors (girth and stature) with the loadings above; the
    /// remaining variance of each column is independent.
    fn default() -> Self {
        let parameters = DEFAULTS
            .iter()
            .map(|&(id, mean, std, _, _)| SampledParameter { id, mean, std })
            .collect();
        let correlation = DEFAULTS
            .iter()
            .map(|a| {
                DEFAULTS
                    .iter()
                    .map(|b| {
                        if a.0 == b.0 {
                            1.0
                        } else {
                            a.3 * b.3 + a.4 * b.4
                        }
                    })
                    .collect()
            })
            .collect();
        SamplingModel {
            parameters,
            correlation,
            ankle_height: Latent {
                mean: 60.0,
                std: 12.0,
            },
            arm_gap: Latent {
                mean: 40.0,
                std: 10.0,
            },
        }
    }
}

impl SamplingModel {
    /// The body at every mean (measured-only slots stay 0).
    pub fn mean_body(&self) -> BodyParameters {
        let mut values = [0.0; PARAM_COUNT];
        for p in &self.parameters {
            values[p.id as usize - 1] = p.mean;
        }
        Self::assemble(values, self.ankle_height.mean, self.arm_gap.mean)
    }

    fn assemble(mut values: [f64; PARAM_COUNT], ankle: f64, arm_gap: f64) -> BodyParameters {
        values[16] = values[7] + values[12] - ankle;
        BodyParameters { values, arm_gap }
    }

    pub fn validate(&self) -> Result<()> {
        let ids: Vec<u8> = self.parameters.iter().map(|p| p.id).collect();
        if ids != SAMPLED_IDS {
            return Err(Error::InvalidConfig(format!(
                "sampled parameters must be ids {SAMPLED_IDS:?} in order, got {ids:?}"
            )));
        }
        let latents = [("ankle_height", self.ankle_height), ("arm_gap", self.arm_gap)];
        let all = self
            .parameters
            .iter()
            .map(|p| (format!("parameter {}", p.id), p.mean, p.std))
            .chain(latents.iter().map(|(n, l)| (n.to_string(), l.mean, l.std)));
        for (name, mean, std) in all {
            if !(mean.is_finite() && mean > 0.0 && std.is_finite() && std >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name}: mean must be positive and std non-negative"
                )));
            }
        }
        self.correlation_factor().map(|_| ())
    }

    /// A square root L of the correlation matrix (C = L·Lᵀ), via the
    /// eigendecomposition so that singular but valid matrices work.
    pub fn correlation_factor(&self) -> Result<DMatrix<f64>> {
        let n = self.parameters.len();
        if self.correlation.len() != n || self.correlation.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidConfig(format!("correlation matrix must be {n}×{n}")));
        }
        let c = DMatrix::from_fn(n, n, |i, j| self.correlation[i][j]);
        for i in 0..n {
            if (c[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidConfig(format!(
                    "correlation diagonal entry {i} is {}, expected 1",
                    c[(i, i)]
                )));
            }
            for j in 0..i {
                if c[(i, j)] != c[(j, i)] || !c[(i, j)].is_finite() || c[(i, j)].abs() > 1.0 {
                    return Err(Error::InvalidConfig(format!(
                        "correlation entries ({i}, {j}) are not a symmetric value in [-1, 1]"
                    )));
                }
            }
        }
        let eig = SymmetricEigen::new(c);
        let min = eig.eigenvalues.min();
        if min < -1e-10 {
            return Err(Error::InvalidConfig(format!(
                "correlation matrix is not positive semidefinite (smallest eigenvalue {min:.3e})"
            )));
        }
        let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots))
    }

    /// One draw; measured-only slots are left at 0.
    pub(crate) fn draw(&self, factor: &DMatrix<f64>, rng: &mut impl Rng) -> BodyParameters {
        let n = self.parameters.len();
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = factor * z;
        let mut values = [0.0; PARAM_COUNT];
        for (i, p) in self.parameters.iter().enumerate() {
            values[p.id as usize - 1] = p.mean + p.std * x[i];
        }
        let mut latent = |l: Latent| l.mean + l.std * rng.sample::<f64, _>(StandardNormal);
        let ankle = latent(self.ankle_height);
        let arm_gap = latent(self.arm_gap);
        Self::assemble(values, ankle, arm_gap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_model_is_valid() {
        SamplingModel::default().validate().unwrap();
    }

    #[test]
    fn factor_reproduces_the_correlation() {
        let m = SamplingModel::default();
        let l = m.correlation_factor().unwrap();
        let c = &l * l.transpose();
        for i in 0..16 {
            for j in 0..16 {
                assert!((c[(i, j)] - m.correlation[i][j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn indefinite_correlation_is_rejected() {
        let mut m = SamplingModel::default();
        for i in 0..16 {
            for j in 0..16 {
                if i != j {
                    m.correlation[i][j] = -0.5;
                }
            }
        }
        let err = m.validate().unwrap_err();
        assert!(err.to_string().contains("positive semidefinite"), "{err}");
    }
}

use serde::{Deserialize, Serialize};

use super::linalg::symmetric_eigen;
use crate::error::{check_dim, Error, Result};
use crate::kinematics::{JointAngles, NUM_JOINTS};

/// Linear synergy basis: the top-`k` principal directions of the postures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub k: usize,
    pub mean: Vec<f64>,
    /// `k` orthonormal rows of length 19.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    /// Total variance of the training data (trace of the covariance).
    pub total_variance: f64,
    pub limits: Vec<[f64; 2]>,
}

pub fn fit_pca(data: &[JointAngles], k: usize, limits: &[(f64, f64); NUM_JOINTS]) -> Result<PcaModel> {
    let n = data.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let max = NUM_JOINTS.min(n);
    if k == 0 || k > max {
        return Err(Error::InvalidRank { k, max });
    }
    let d = NUM_JOINTS;
    let mut mean = vec![0.0; d];
    for q in data {
        for (m, v) in mean.iter_mut().zip(q.as_slice()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = vec![0.0; d * d];
    for q in data {
        let c: Vec<f64> = q.as_slice().iter().zip(&mean).map(|(v, m)| v - m).collect();
        for i in 0..d {
            for j in i..d {
                cov[i * d + j] += c[i] * c[j];
            }
        }
    }
    let denom = (n.max(2) - 1) as f64;
    for i in 0..d {
        for j in i..d {
            cov[i * d + j] /= denom;
            cov[j * d + i] = cov[i * d + j];
        }
    }
    let total_variance = (0..d).map(|i| cov[i * d + i]).sum();
    let (values, vectors) = symmetric_eigen(&cov, d);
    let mut components: Vec<Vec<f64>> = vectors.into_iter().take(k).collect();
    for row in components.iter_mut() {
        fix_sign(row);
    }
    Ok(PcaModel {
        k,
        mean,
        components,
        explained_variance: values.into_iter().take(k).map(|v| v.max(0.0)).collect(),
        total_variance,
        limits: limits.iter().map(|(lo, hi)| [*lo, *hi]).collect(),
    })
}

/// Flip `row` so that its largest-magnitude entry (first on ties) is positive.
pub fn fix_sign(row: &mut [f64]) {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if v.abs() > row[best].abs() {
            best = i;
        }
    }
    if row[best] < 0.0 {
        row.iter_mut().for_each(|v| *v = -*v);
    }
}

impl PcaModel {
    /// Unclamped `mean + zᵀ C`.
    pub fn decode_raw(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dim("pca latent", self.k, z.len())?;
        let mut q = self.mean.clone();
        for (zi, row) in z.iter().zip(&self.components) {
            for (qv, c) in q.iter_mut().zip(row) {
                *qv += zi * c;
            }
        }
        Ok(q)
    }

    pub fn decode(&self, z: &[f64]) -> Result<JointAngles> {
        let mut q = self.decode_raw(z)?;
        for (v, l) in q.iter_mut().zip(&self.limits) {
            *v = v.clamp(l[0], l[1]);
        }
        JointAngles::from_slice(&q)
    }

    pub fn encode(&self, q: &JointAngles) -> Vec<f64> {
        self.components
            .iter()
            .map(|row| {
                row.iter()
                    .zip(q.as_slice())
                    .zip(&self.mean)
                    .map(|((c, v), m)| c * (v - m))
                    .sum()
            })
            .collect()
    }

    /// Fraction of the training variance captured by the kept components.
    pub fn explained_fraction(&self) -> f64 {
        if self.total_variance <= 0.0 {
            return 1.0;
        }
        self.explained_variance.iter().sum::<f64>() / self.total_variance
    }
}

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use super::RepresentationError;
use crate::linalg::{dot, FeatureMatrix};

/// Principal component model of mean-centred data.
///
/// All `d` components are stored in descending eigenvalue order; projection uses the first
/// `retained` of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Orthonormal rows, each with its largest-magnitude entry positive.
    pub components: Vec<Vec<f64>>,
    /// Covariance eigenvalues, non-negative and descending.
    pub eigenvalues: Vec<f64>,
    pub target_variance: f64,
    pub retained: usize,
}

/// Smallest `k` whose leading eigenvalues explain at least `target` of the total.
pub fn retained_for_target(eigenvalues: &[f64], target: f64) -> usize {
    let total: f64 = eigenvalues.iter().sum();
    let mut cum = 0.0;
    for (k, &v) in eigenvalues.iter().enumerate() {
        cum += v;
        // relative slack absorbs summation round-off when the target is hit exactly
        if cum / total >= target - 1e-12 {
            return k + 1;
        }
    }
    eigenvalues.len()
}

pub fn pca_fit(data: &FeatureMatrix, target_variance: f64) -> Result<PcaModel, RepresentationError> {
    if !(target_variance > 0.0 && target_variance <= 1.0) {
        return Err(RepresentationError::InvalidTarget(target_variance));
    }
    let (n, d) = (data.nrows(), data.ncols());
    if n < 2 || d == 0 {
        return Err(RepresentationError::TooFewSamples { rows: n, cols: d });
    }
    let mean = data.column_means();
    let cov = data.covariance(&mean);
    let total: f64 = cov.diagonal().iter().sum();
    if !(total > 0.0) {
        return Err(RepresentationError::DegenerateData);
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let components: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let mut pivot = 0;
            for j in 1..d {
                if v[j].abs() > v[pivot].abs() {
                    pivot = j;
                }
            }
            if v[pivot] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    let retained = retained_for_target(&eigenvalues, target_variance);
    Ok(PcaModel {
        mean,
        components,
        eigenvalues,
        target_variance,
        retained,
    })
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Fraction of total variance explained by the first `k` components.
    pub fn explained_ratio(&self, k: usize) -> f64 {
        let total: f64 = self.eigenvalues.iter().sum();
        self.eigenvalues[..k].iter().sum::<f64>() / total
    }

    pub fn with_retained(mut self, k: usize) -> Self {
        self.retained = k.clamp(1, self.components.len());
        self
    }

    fn check_dim(&self, cols: usize) -> Result<(), RepresentationError> {
        if cols != self.dim() {
            return Err(RepresentationError::DimensionMismatch {
                expected: self.dim(),
                found: cols,
            });
        }
        Ok(())
    }

    /// Scores on the retained components.
    pub fn project(&self, data: &FeatureMatrix) -> Result<FeatureMatrix, RepresentationError> {
        self.project_k(data, self.retained)
    }

    pub fn project_k(&self, data: &FeatureMatrix, k: usize) -> Result<FeatureMatrix, RepresentationError> {
        self.check_dim(data.ncols())?;
        let mut out = FeatureMatrix::zeros(data.nrows(), k);
        let mut centered = vec![0.0; self.dim()];
        for i in 0..data.nrows() {
            for (c, (x, m)) in centered.iter_mut().zip(data.row(i).iter().zip(&self.mean)) {
                *c = x - m;
            }
            let dst = out.row_mut(i);
            for (j, comp) in self.components[..k].iter().enumerate() {
                dst[j] = dot(&centered, comp);
            }
        }
        Ok(out)
    }

    /// Maps scores on the first `scores.ncols()` components back to input space.
    pub fn reconstruct(&self, scores: &FeatureMatrix) -> FeatureMatrix {
        let k = scores.ncols();
        let mut out = FeatureMatrix::zeros(scores.nrows(), self.dim());
        for i in 0..scores.nrows() {
            let dst = out.row_mut(i);
            dst.copy_from_slice(&self.mean);
            for (j, comp) in self.components[..k].iter().enumerate() {
                let s = scores.get(i, j);
                for (d, c) in dst.iter_mut().zip(comp) {
                    *d += s * c;
                }
            }
        }
        out
    }
}

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::LdaError;
use crate::linalg::FeatureMatrix;

/// Gaussian discriminant with a shared covariance, plus the scatter matrices it came from.
///
/// `within_scatter` is already regularized: `S_W + λI` with `λ = 1e-6 · trace(S_W) / d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub n_classes: usize,
    pub dims: usize,
    pub means: Vec<Vec<f64>>,
    pub priors: Vec<f64>,
    pub within_scatter: Vec<f64>,
    pub between_scatter: Vec<f64>,
    pub regularization: f64,
    /// Per class: `Σ⁻¹ μ_k` and `−½ μ_kᵀ Σ⁻¹ μ_k + ln π_k`. Empty classes have no entry.
    coefficients: Vec<Option<(Vec<f64>, f64)>>,
}

pub fn lda_fit(x: &FeatureMatrix, rows: &[usize], labels: &[usize], n_classes: usize) -> Result<LdaModel, LdaError> {
    let d = x.ncols();
    if d == 0 {
        return Err(LdaError::NoFeatures);
    }
    let n = rows.len();
    let mut counts = vec![0usize; n_classes];
    let mut sums = vec![vec![0.0; d]; n_classes];
    for (&r, &l) in rows.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(x.row(r)) {
            *s += v;
        }
    }
    let present = counts.iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(LdaError::SingleClass);
    }
    if n <= present {
        return Err(LdaError::TooFewSamples {
            samples: n,
            classes: present,
        });
    }
    let means: Vec<Vec<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s.iter().map(|v| if c > 0 { v / c as f64 } else { 0.0 }).collect())
        .collect();
    let grand: Vec<f64> = (0..d)
        .map(|j| sums.iter().map(|s| s[j]).sum::<f64>() / n as f64)
        .collect();

    let mut sw = DMatrix::<f64>::zeros(d, d);
    let mut centred = vec![0.0; d];
    for (&r, &l) in rows.iter().zip(labels) {
        for ((c, v), m) in centred.iter_mut().zip(x.row(r)).zip(&means[l]) {
            *c = v - m;
        }
        for a in 0..d {
            let ca = centred[a];
            if ca == 0.0 {
                continue;
            }
            for b in a..d {
                sw[(a, b)] += ca * centred[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            sw[(a, b)] = sw[(b, a)];
        }
    }
    let regularization = 1e-6 * sw.trace() / d as f64;
    for a in 0..d {
        sw[(a, a)] += regularization;
    }
    let mut sb = DMatrix::<f64>::zeros(d, d);
    for (m, &c) in means.iter().zip(&counts) {
        if c == 0 {
            continue;
        }
        let diff = DVector::from_iterator(d, m.iter().zip(&grand).map(|(a, b)| a - b));
        sb += (c as f64) * &diff * diff.transpose();
    }

    let pooled = &sw / (n - present) as f64;
    let chol = pooled.clone().cholesky().ok_or(LdaError::SingularScatter)?;
    let coefficients = means
        .iter()
        .zip(&counts)
        .map(|(m, &c)| {
            (c > 0).then(|| {
                let mu = DVector::from_column_slice(m);
                let w = chol.solve(&mu);
                let bias = -0.5 * mu.dot(&w) + (c as f64 / n as f64).ln();
                (w.as_slice().to_vec(), bias)
            })
        })
        .collect();
    Ok(LdaModel {
        n_classes,
        dims: d,
        means,
        priors: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        within_scatter: sw.as_slice().to_vec(),
        between_scatter: sb.as_slice().to_vec(),
        regularization,
        coefficients,
    })
}

impl LdaModel {
    /// Discriminant score of each class; `−∞` for classes absent from training.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.coefficients
            .iter()
            .map(|c| match c {
                Some((w, b)) => b + w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>(),
                None => f64::NEG_INFINITY,
            })
            .collect()
    }

    /// Highest discriminant score; ties go to the lower class index.
    pub fn predict_row(&self, x: &[f64]) -> usize {
        let s = self.scores(x);
        let mut best = 0;
        for k in 1..s.len() {
            if s[k] > s[best] {
                best = k;
            }
        }
        best
    }

    /// Unit-length Fisher directions maximizing `wᵀS_B w / wᵀS_W w`, best first; at most
    /// `classes − 1` of them.
    pub fn directions(&self) -> Result<Vec<Vec<f64>>, LdaError> {
        let d = self.dims;
        let sw = DMatrix::from_column_slice(d, d, &self.within_scatter);
        let sb = DMatrix::from_column_slice(d, d, &self.between_scatter);
        let chol = sw.cholesky().ok_or(LdaError::SingularScatter)?;
        let l = chol.l();
        let l_inv = l.clone().try_inverse().ok_or(LdaError::SingularScatter)?;
        let m = &l_inv * sb * l_inv.transpose();
        let m = (&m + m.transpose()) * 0.5;
        let eig = SymmetricEigen::new(m);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let present = self.priors.iter().filter(|&&p| p > 0.0).count();
        let keep = (present - 1).min(d);
        let lt_inv = l_inv.transpose();
        Ok(order
            .into_iter()
            .take(keep)
            .map(|i| {
                let v = &lt_inv * eig.eigenvectors.column(i);
                let v = v.normalize();
                v.as_slice().to_vec()
            })
            .collect())
    }
}

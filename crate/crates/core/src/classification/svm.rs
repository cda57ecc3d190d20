//! Soft-margin SVM trained by SMO with maximal-violating-pair working-set selection.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ClassifyError;
use crate::linalg::{dot, squared_distance, FeatureMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => dot(a, b),
            Kernel::Rbf { gamma } => (-gamma * squared_distance(a, b)).exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoConfig {
    /// Stopping tolerance on the maximal KKT violation.
    pub tolerance: f64,
    /// Iteration budget; `None` scales it with the problem size.
    pub max_iterations: Option<usize>,
    /// Upper bound on cached kernel rows, in bytes.
    pub cache_bytes: usize,
}

impl Default for SmoConfig {
    fn default() -> Self {
        SmoConfig {
            tolerance: 1e-3,
            max_iterations: None,
            cache_bytes: 256 << 20,
        }
    }
}

/// LRU cache of kernel matrix rows.
struct KernelCache<'a> {
    x: &'a FeatureMatrix,
    rows: &'a [usize],
    kernel: Kernel,
    slots: Vec<Option<Vec<f64>>>,
    last_used: Vec<u64>,
    cached: Vec<usize>,
    capacity: usize,
    clock: u64,
}

impl<'a> KernelCache<'a> {
    fn new(x: &'a FeatureMatrix, rows: &'a [usize], kernel: Kernel, bytes: usize) -> Self {
        let n = rows.len();
        let capacity = (bytes / (8 * n.max(1))).max(2);
        KernelCache {
            x,
            rows,
            kernel,
            slots: vec![None; n],
            last_used: vec![0; n],
            cached: Vec::new(),
            capacity,
            clock: 0,
        }
    }

    fn row(&mut self, i: usize) -> &[f64] {
        self.clock += 1;
        self.last_used[i] = self.clock;
        if self.slots[i].is_none() {
            if self.cached.len() >= self.capacity {
                let (pos, _) = self
                    .cached
                    .iter()
                    .enumerate()
                    .min_by_key(|(_, &r)| self.last_used[r])
                    .expect("cache is non-empty");
                let victim = self.cached.swap_remove(pos);
                self.slots[victim] = None;
            }
            let xi = self.x.row(self.rows[i]);
            let values = self.rows.iter().map(|&r| self.kernel.eval(xi, self.x.row(r))).collect();
            self.slots[i] = Some(values);
            self.cached.push(i);
        }
        self.slots[i].as_deref().expect("row just cached")
    }
}

/// Solution of one two-class dual problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub kernel: Kernel,
    /// Support vectors, one row each.
    pub support_vectors: FeatureMatrix,
    /// `α_i · y_i` of each support vector.
    pub dual_coef: Vec<f64>,
    pub rho: f64,
    /// Explicit primal weights for the linear kernel.
    pub weights: Option<Vec<f64>>,
    pub iterations: usize,
}

/// Full dual solution, kept for constraint checks.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub y: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DualSolution {
    /// Largest violation of `0 ≤ α_i ≤ C_i` and of `Σ α_i y_i = 0`.
    pub fn constraint_violation(&self) -> (f64, f64) {
        let mut box_v: f64 = 0.0;
        for (a, c) in self.alpha.iter().zip(&self.upper) {
            box_v = box_v.max(-a).max(a - c);
        }
        let eq: f64 = self.alpha.iter().zip(&self.y).map(|(a, y)| a * y).sum();
        (box_v, eq.abs())
    }
}

impl BinarySvm {
    pub fn decision(&self, x: &[f64]) -> f64 {
        if let Some(w) = &self.weights {
            return dot(w, x) - self.rho;
        }
        let mut sum = 0.0;
        for (i, c) in self.dual_coef.iter().enumerate() {
            sum += c * self.kernel.eval(self.support_vectors.row(i), x);
        }
        sum - self.rho
    }
}

/// Solves the dual for `rows` of `x` with labels `y ∈ {+1, −1}` and per-row box bounds.
pub fn train_binary(
    x: &FeatureMatrix,
    rows: &[usize],
    y: &[f64],
    upper: &[f64],
    kernel: Kernel,
    cfg: &SmoConfig,
) -> Result<(BinarySvm, DualSolution), ClassifyError> {
    let n = rows.len();
    let max_iter = cfg.max_iterations.unwrap_or((100 * n).max(100_000));
    let mut alpha = vec![0.0; n];
    // gradient of ½αᵀQα − eᵀα
    let mut grad = vec![-1.0; n];
    let diag: Vec<f64> = rows.iter().map(|&r| kernel.eval(x.row(r), x.row(r))).collect();
    let mut cache = KernelCache::new(x, rows, kernel, cfg.cache_bytes);
    let is_up = |a: f64, y: f64, c: f64| (y > 0.0 && a < c) || (y < 0.0 && a > 0.0);
    let is_low = |a: f64, y: f64, c: f64| (y > 0.0 && a > 0.0) || (y < 0.0 && a < c);
    let mut iterations = 0;
    loop {
        let mut i = usize::MAX;
        let mut g_max = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut g_min = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if is_up(alpha[t], y[t], upper[t]) && v > g_max {
                g_max = v;
                i = t;
            }
            if is_low(alpha[t], y[t], upper[t]) && v < g_min {
                g_min = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || g_max - g_min < cfg.tolerance {
            break;
        }
        if iterations >= max_iter {
            return Err(ClassifyError::NonConvergence {
                iterations,
                violation: g_max - g_min,
            });
        }
        iterations += 1;
        let k_i: Vec<f64> = cache.row(i).to_vec();
        let k_j: &[f64] = cache.row(j);
        let (ci, cj) = (upper[i], upper[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let q_ij = y[i] * y[j] * k_i[j];
        if y[i] != y[j] {
            let mut quad = diag[i] + diag[j] + 2.0 * q_ij;
            if quad <= 0.0 {
                quad = 1e-12;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let mut quad = diag[i] + diag[j] - 2.0 * q_ij;
            if quad <= 0.0 {
                quad = 1e-12;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let d_i = (alpha[i] - old_i) * y[i];
        let d_j = (alpha[j] - old_j) * y[j];
        for t in 0..n {
            grad[t] += y[t] * (k_i[t] * d_i + k_j[t] * d_j);
        }
    }

    // ρ from free support vectors, else the midpoint of the feasible interval
    let (mut sum, mut free) = (0.0, 0usize);
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < upper[t] {
            sum += yg;
            free += 1;
        } else if (alpha[t] <= 0.0 && y[t] < 0.0) || (alpha[t] >= upper[t] && y[t] > 0.0) {
            ub = ub.min(yg);
        } else {
            lb = lb.max(yg);
        }
    }
    let rho = if free > 0 {
        sum / free as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else if ub.is_finite() {
        ub
    } else {
        lb
    };

    let sv: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    let support_vectors = x.select_rows(&sv.iter().map(|&t| rows[t]).collect::<Vec<_>>());
    let dual_coef: Vec<f64> = sv.iter().map(|&t| alpha[t] * y[t]).collect();
    let weights = match kernel {
        Kernel::Linear => {
            let mut w = vec![0.0; x.ncols()];
            for (k, c) in dual_coef.iter().enumerate() {
                for (wv, xv) in w.iter_mut().zip(support_vectors.row(k)) {
                    *wv += c * xv;
                }
            }
            Some(w)
        }
        Kernel::Rbf { .. } => None,
    };
    Ok((
        BinarySvm {
            kernel,
            support_vectors,
            dual_coef,
            rho,
            weights,
            iterations,
        },
        DualSolution {
            alpha,
            y: y.to_vec(),
            upper: upper.to_vec(),
        },
    ))
}

/// One-vs-one multiclass SVM over labels `0..n_classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvoSvm {
    pub n_classes: usize,
    pub c: f64,
    pub kernel: Kernel,
    /// Classifier for each pair `(a, b)` with `a < b`; positive decision votes for `a`.
    pub pairs: Vec<((usize, usize), BinarySvm)>,
}

/// Trains every pairwise problem; returns the model and each pair's dual solution.
pub fn train_ovo(
    x: &FeatureMatrix,
    rows: &[usize],
    labels: &[usize],
    n_classes: usize,
    c: f64,
    kernel: Kernel,
    class_weights: &[f64],
    cfg: &SmoConfig,
) -> Result<(OvoSvm, Vec<DualSolution>), ClassifyError> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (&r, &l) in rows.iter().zip(labels) {
        by_class.entry(l).or_default().push(r);
    }
    let mut pairs = Vec::new();
    let mut duals = Vec::new();
    for a in 0..n_classes {
        for b in a + 1..n_classes {
            let (ra, rb) = match (by_class.get(&a), by_class.get(&b)) {
                (Some(ra), Some(rb)) => (ra, rb),
                _ => continue,
            };
            // rows in their original order so the solution does not depend on label layout
            let mut sub: Vec<(usize, f64, f64)> = ra
                .iter()
                .map(|&r| (r, 1.0, c * class_weights[a]))
                .chain(rb.iter().map(|&r| (r, -1.0, c * class_weights[b])))
                .collect();
            sub.sort_by_key(|t| t.0);
            let sub_rows: Vec<usize> = sub.iter().map(|t| t.0).collect();
            let y: Vec<f64> = sub.iter().map(|t| t.1).collect();
            let upper: Vec<f64> = sub.iter().map(|t| t.2).collect();
            let (model, dual) = train_binary(x, &sub_rows, &y, &upper, kernel, cfg)?;
            pairs.push(((a, b), model));
            duals.push(dual);
        }
    }
    Ok((
        OvoSvm {
            n_classes,
            c,
            kernel,
            pairs,
        },
        duals,
    ))
}

impl OvoSvm {
    /// Majority vote. Among classes tied on votes, the one winning most contests against the
    /// other tied classes is chosen, then the lowest class index.
    pub fn predict_row(&self, x: &[f64]) -> usize {
        let mut votes = vec![0usize; self.n_classes];
        let mut winner: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for &((a, b), ref m) in &self.pairs {
            let w = if m.decision(x) > 0.0 { a } else { b };
            votes[w] += 1;
            winner.insert((a, b), w);
        }
        let best = *votes.iter().max().unwrap_or(&0);
        let tied: Vec<usize> = (0..self.n_classes).filter(|&k| votes[k] == best).collect();
        if tied.len() == 1 {
            return tied[0];
        }
        let mut best_class = tied[0];
        let mut best_wins = 0;
        for &k in &tied {
            let wins = tied
                .iter()
                .filter(|&&o| o != k)
                .filter(|&&o| winner.get(&(k.min(o), k.max(o))) == Some(&k))
                .count();
            if wins > best_wins {
                best_wins = wins;
                best_class = k;
            }
        }
        best_class
    }
}

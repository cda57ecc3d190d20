use serde::{Deserialize, Serialize};

use crate::linalg::{squared_distance, FeatureMatrix};

/// k-nearest-neighbour classifier over Euclidean distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub n_classes: usize,
    pub train: FeatureMatrix,
    pub labels: Vec<usize>,
}

impl KnnModel {
    pub fn fit(x: &FeatureMatrix, rows: &[usize], labels: &[usize], n_classes: usize, k: usize) -> KnnModel {
        KnnModel {
            k,
            n_classes,
            train: x.select_rows(rows),
            labels: labels.to_vec(),
        }
    }

    /// Training rows sorted by distance to `x`; equal distances keep training order.
    pub fn neighbours(&self, x: &[f64]) -> Vec<(f64, usize)> {
        let mut d: Vec<(f64, usize)> = self
            .train
            .rows_iter()
            .enumerate()
            .map(|(i, r)| (squared_distance(r, x), i))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d
    }

    /// Majority label among the `k` nearest; a tie goes to the tied label nearest to `x`.
    pub fn predict_row(&self, x: &[f64]) -> usize {
        let nb = self.neighbours(x);
        let k = self.k.min(nb.len());
        self.vote(&nb[..k])
    }

    pub(crate) fn vote(&self, nearest: &[(f64, usize)]) -> usize {
        let mut votes = vec![0usize; self.n_classes];
        for &(_, i) in nearest {
            votes[self.labels[i]] += 1;
        }
        let best = *votes.iter().max().unwrap_or(&0);
        nearest
            .iter()
            .map(|&(_, i)| self.labels[i])
            .find(|&l| votes[l] == best)
            .unwrap_or(0)
    }

    /// Predictions of every `k` in `ks` from one neighbour sort per row.
    pub fn predict_many_k(&self, x: &FeatureMatrix, rows: &[usize], ks: &[usize]) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::with_capacity(rows.len()); ks.len()];
        for &r in rows {
            let nb = self.neighbours(x.row(r));
            for (slot, &k) in out.iter_mut().zip(ks) {
                slot.push(self.vote(&nb[..k.min(nb.len())]));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_nn_reproduces_training_labels() {
        let x = FeatureMatrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [5.0, 5.0]]);
        let labels = [0, 1, 1, 2];
        let m = KnnModel::fit(&x, &[0, 1, 2, 3], &labels, 3, 1);
        for (i, &l) in labels.iter().enumerate() {
            assert_eq!(m.predict_row(x.row(i)), l);
        }
    }

    #[test]
    fn majority_wins_with_three_neighbours() {
        let x = FeatureMatrix::from_rows(&[[-1.0], [1.0], [1.1]]);
        let m = KnnModel::fit(&x, &[0, 1, 2], &[0, 1, 1], 2, 3);
        // the query is equidistant from the two nearest points of different classes
        assert_eq!(m.predict_row(&[0.0]), 1);
    }
}

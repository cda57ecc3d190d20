//! Fully connected network: tanh hidden layers, softmax output, cross-entropy loss,
//! mini-batch gradient descent with a step-decayed learning rate.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ClassifyError;
use crate::linalg::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// The learning rate is multiplied by `decay_factor` every `decay_every` epochs.
    pub decay_every: usize,
    pub decay_factor: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: vec![16],
            epochs: 200,
            batch_size: 32,
            learning_rate: 0.05,
            decay_every: 50,
            decay_factor: 0.5,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<(), ClassifyError> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(ClassifyError::InvalidConfig(format!(
                "hidden layout {:?} must have at least one layer and no empty layers",
                self.hidden
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 || !(self.learning_rate > 0.0) {
            return Err(ClassifyError::InvalidConfig(
                "batch size, epochs and learning rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros_like(&self) -> Layer {
        Layer {
            inputs: self.inputs,
            outputs: self.outputs,
            weights: vec![0.0; self.weights.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let w = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            out.push(self.bias[o] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>());
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
    pub n_classes: usize,
}

fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    z.iter_mut().for_each(|v| *v /= s);
}

impl MlpModel {
    /// Glorot-uniform weights, zero biases.
    pub fn init(inputs: usize, hidden: &[usize], n_classes: usize, seed: u64) -> MlpModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sizes = vec![inputs];
        sizes.extend_from_slice(hidden);
        sizes.push(n_classes);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (i, o) = (w[0], w[1]);
                let limit = (6.0 / (i + o) as f64).sqrt();
                Layer {
                    inputs: i,
                    outputs: o,
                    weights: (0..i * o).map(|_| rng.random_range(-limit..limit)).collect(),
                    bias: vec![0.0; o],
                }
            })
            .collect();
        MlpModel { layers, n_classes }
    }

    /// Activations of every layer; the last entry holds class probabilities.
    fn forward_all(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.outputs);
            layer.forward(acts.last().expect("input present"), &mut z);
            if li == last {
                softmax_in_place(&mut z);
            } else {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        acts
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        self.forward_all(x).pop().expect("output layer")
    }

    /// Most probable class; ties go to the lower index.
    pub fn predict_row(&self, x: &[f64]) -> usize {
        let p = self.probabilities(x);
        let mut best = 0;
        for k in 1..p.len() {
            if p[k] > p[best] {
                best = k;
            }
        }
        best
    }

    /// Mean cross-entropy over `rows` and its gradient with respect to every weight and bias.
    pub fn loss_and_gradient(&self, x: &FeatureMatrix, rows: &[usize], labels: &[usize]) -> (f64, Vec<Layer>) {
        let mut grads: Vec<Layer> = self.layers.iter().map(Layer::zeros_like).collect();
        let mut loss = 0.0;
        let scale = 1.0 / rows.len() as f64;
        for (&r, &label) in rows.iter().zip(labels) {
            let acts = self.forward_all(x.row(r));
            let probs = acts.last().expect("output layer");
            loss -= probs[label].max(1e-300).ln();
            // dL/dz at the softmax output
            let mut delta: Vec<f64> = probs.clone();
            delta[label] -= 1.0;
            for li in (0..self.layers.len()).rev() {
                let layer = &self.layers[li];
                let input = &acts[li];
                let g = &mut grads[li];
                for o in 0..layer.outputs {
                    let d = delta[o] * scale;
                    g.bias[o] += d;
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (gw, xi) in row.iter_mut().zip(input) {
                        *gw += d * xi;
                    }
                }
                if li > 0 {
                    let mut prev = vec![0.0; layer.inputs];
                    for o in 0..layer.outputs {
                        let w = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        for (p, wv) in prev.iter_mut().zip(w) {
                            *p += delta[o] * wv;
                        }
                    }
                    // tanh'(z) = 1 − a²
                    for (p, a) in prev.iter_mut().zip(input) {
                        *p *= 1.0 - a * a;
                    }
                    delta = prev;
                }
            }
        }
        (loss * scale, grads)
    }

    pub fn flat_parameters(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for l in &self.layers {
            v.extend_from_slice(&l.weights);
            v.extend_from_slice(&l.bias);
        }
        v
    }

    pub fn set_flat_parameters(&mut self, v: &[f64]) {
        let mut pos = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&v[pos..pos + nw]);
            pos += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&v[pos..pos + nb]);
            pos += nb;
        }
    }

    pub fn train(
        x: &FeatureMatrix,
        rows: &[usize],
        labels: &[usize],
        n_classes: usize,
        cfg: &MlpConfig,
        seed: u64,
    ) -> Result<MlpModel, ClassifyError> {
        cfg.validate()?;
        let mut model = MlpModel::init(x.ncols(), &cfg.hidden, n_classes, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_0a7c);
        let mut order: Vec<usize> = (0..rows.len()).collect();
        for epoch in 0..cfg.epochs {
            let lr = cfg.learning_rate * cfg.decay_factor.powi((epoch / cfg.decay_every.max(1)) as i32);
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for batch in order.chunks(cfg.batch_size) {
                let br: Vec<usize> = batch.iter().map(|&i| rows[i]).collect();
                let bl: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
                let (loss, grads) = model.loss_and_gradient(x, &br, &bl);
                epoch_loss += loss * batch.len() as f64;
                for (layer, g) in model.layers.iter_mut().zip(&grads) {
                    for (w, gw) in layer.weights.iter_mut().zip(&g.weights) {
                        *w -= lr * gw;
                    }
                    for (b, gb) in layer.bias.iter_mut().zip(&g.bias) {
                        *b -= lr * gb;
                    }
                }
            }
            if !epoch_loss.is_finite() {
                return Err(ClassifyError::DivergingLoss { epoch });
            }
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_hidden_layer_rejected() {
        let cfg = MlpConfig {
            hidden: vec![0],
            ..MlpConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(ClassifyError::InvalidConfig(_))));
    }

    #[test]
    fn probabilities_sum_to_one() {
        let m = MlpModel::init(3, &[4, 2], 3, 1);
        let p = m.probabilities(&[0.1, -2.0, 0.5]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

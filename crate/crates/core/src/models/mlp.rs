//! Two-layer perceptron (tanh hidden layer, softmax output) with manual
//! backpropagation.

use crate::models::{softmax_cross_entropy, Model, TrainableMask};
use crate::numerics::{ParamVector, RngStream};

/// A feature vector with an integer class label.
#[derive(Debug, Clone)]
pub struct ClassSample {
    pub x: Vec<f64>,
    pub label: usize,
}

/// input -> tanh hidden -> softmax over classes.
/// Flat layout: [W1 (hidden x in), b1, W2 (out x hidden), b2].
#[derive(Debug, Clone)]
pub struct Mlp2Model {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
}

impl Mlp2Model {
    pub fn new(input_dim: usize, hidden_dim: usize, num_classes: usize) -> Self {
        Self { input_dim, hidden_dim, num_classes }
    }

    fn w1_len(&self) -> usize {
        self.hidden_dim * self.input_dim
    }

    fn head_start(&self) -> usize {
        self.w1_len() + self.hidden_dim
    }

    fn forward(&self, w: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (h, d_in, out) = (self.hidden_dim, self.input_dim, self.num_classes);
        let b1 = &w[self.w1_len()..self.w1_len() + h];
        let mut hidden = vec![0.0; h];
        for u in 0..h {
            let row = &w[u * d_in..(u + 1) * d_in];
            let mut a = b1[u];
            for i in 0..d_in {
                a += row[i] * x[i];
            }
            hidden[u] = a.tanh();
        }
        let w2_start = self.head_start();
        let b2 = &w[w2_start + out * h..w2_start + out * h + out];
        let mut logits = vec![0.0; out];
        for o in 0..out {
            let row = &w[w2_start + o * h..w2_start + (o + 1) * h];
            let mut a = b2[o];
            for u in 0..h {
                a += row[u] * hidden[u];
            }
            logits[o] = a;
        }
        (hidden, logits)
    }
}

impl Model for Mlp2Model {
    type Sample = ClassSample;

    fn param_count(&self) -> usize {
        self.head_start() + self.num_classes * self.hidden_dim + self.num_classes
    }

    fn trainable_mask(&self) -> TrainableMask {
        TrainableMask::All
    }

    fn init_params(&self, rng: &mut RngStream) -> ParamVector {
        let mut v = vec![0.0; self.param_count()];
        let s1 = 1.0 / (self.input_dim as f64).sqrt();
        for x in v[..self.w1_len()].iter_mut() {
            *x = s1 * rng.normal();
        }
        let s2 = 1.0 / (self.hidden_dim as f64).sqrt();
        let w2_start = self.head_start();
        let w2_end = w2_start + self.num_classes * self.hidden_dim;
        for x in v[w2_start..w2_end].iter_mut() {
            *x = s2 * rng.normal();
        }
        ParamVector::from_vec(v)
    }

    fn private_loss_grad(&self, w: &[f64], sample: &Self::Sample) -> (f64, Vec<f64>) {
        let (h, d_in, out) = (self.hidden_dim, self.input_dim, self.num_classes);
        let (hidden, logits) = self.forward(w, &sample.x);
        let mut target = vec![0.0; out];
        target[sample.label] = 1.0;
        let (loss, dlogits) = softmax_cross_entropy(&logits, &target);

        let mut grad = vec![0.0; self.param_count()];
        let w2_start = self.head_start();
        // Head gradients.
        for o in 0..out {
            let d = dlogits[o];
            let gw2 = &mut grad[w2_start + o * h..w2_start + (o + 1) * h];
            for u in 0..h {
                gw2[u] = d * hidden[u];
            }
        }
        let gb2_start = w2_start + out * h;
        grad[gb2_start..gb2_start + out].copy_from_slice(&dlogits);
        // Hidden gradients via the chain rule.
        for u in 0..h {
            let mut dh = 0.0;
            for o in 0..out {
                dh += w[w2_start + o * h + u] * dlogits[o];
            }
            let da = dh * (1.0 - hidden[u] * hidden[u]);
            let gw1 = &mut grad[u * d_in..(u + 1) * d_in];
            for i in 0..d_in {
                gw1[i] = da * sample.x[i];
            }
            grad[self.w1_len() + u] = da;
        }
        (loss, grad)
    }

    fn public_loss_grad(&self, _w: &[f64], _sample: &Self::Sample) -> (f64, Vec<f64>) {
        (0.0, vec![0.0; self.param_count()])
    }
}

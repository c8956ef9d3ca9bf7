//! Linear and logistic regression with hand-derived per-sample gradients.

use crate::models::{Model, TrainableMask};
use crate::numerics::{ParamVector, RngStream};

/// A feature vector with a scalar regression target.
#[derive(Debug, Clone)]
pub struct RegressionSample {
    pub x: Vec<f64>,
    pub y: f64,
}

/// Least-squares linear regression: loss = 0.5 (w.x + b - y)^2.
/// Parameters are [w_0..w_{d-1}, b].
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub input_dim: usize,
}

impl LinearModel {
    pub fn new(input_dim: usize) -> Self {
        Self { input_dim }
    }

    fn predict(&self, w: &[f64], x: &[f64]) -> f64 {
        let mut s = w[self.input_dim];
        for i in 0..self.input_dim {
            s += w[i] * x[i];
        }
        s
    }
}

impl Model for LinearModel {
    type Sample = RegressionSample;

    fn param_count(&self) -> usize {
        self.input_dim + 1
    }

    fn trainable_mask(&self) -> TrainableMask {
        TrainableMask::All
    }

    fn init_params(&self, rng: &mut RngStream) -> ParamVector {
        let mut v: Vec<f64> = (0..self.input_dim).map(|_| 0.1 * rng.normal()).collect();
        v.push(0.0);
        ParamVector::from_vec(v)
    }

    fn private_loss_grad(&self, w: &[f64], sample: &Self::Sample) -> (f64, Vec<f64>) {
        let r = self.predict(w, &sample.x) - sample.y;
        let mut grad = Vec::with_capacity(self.input_dim + 1);
        for i in 0..self.input_dim {
            grad.push(r * sample.x[i]);
        }
        grad.push(r);
        (0.5 * r * r, grad)
    }

    fn public_loss_grad(&self, _w: &[f64], _sample: &Self::Sample) -> (f64, Vec<f64>) {
        (0.0, vec![0.0; self.param_count()])
    }
}

/// Binary logistic regression with the numerically stable logit loss.
/// Samples reuse [`RegressionSample`] with y in {0, 1}.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    pub input_dim: usize,
}

impl LogisticModel {
    pub fn new(input_dim: usize) -> Self {
        Self { input_dim }
    }

    fn score(&self, w: &[f64], x: &[f64]) -> f64 {
        let mut s = w[self.input_dim];
        for i in 0..self.input_dim {
            s += w[i] * x[i];
        }
        s
    }
}

impl Model for LogisticModel {
    type Sample = RegressionSample;

    fn param_count(&self) -> usize {
        self.input_dim + 1
    }

    fn trainable_mask(&self) -> TrainableMask {
        TrainableMask::All
    }

    fn init_params(&self, rng: &mut RngStream) -> ParamVector {
        let mut v: Vec<f64> = (0..self.input_dim).map(|_| 0.1 * rng.normal()).collect();
        v.push(0.0);
        ParamVector::from_vec(v)
    }

    fn private_loss_grad(&self, w: &[f64], sample: &Self::Sample) -> (f64, Vec<f64>) {
        let s = self.score(w, &sample.x);
        let y = sample.y;
        // loss = max(s, 0) - s y + ln(1 + exp(-|s|))
        let loss = s.max(0.0) - s * y + (-s.abs()).exp().ln_1p();
        let p = 1.0 / (1.0 + (-s).exp());
        let d = p - y;
        let mut grad = Vec::with_capacity(self.input_dim + 1);
        for i in 0..self.input_dim {
            grad.push(d * sample.x[i]);
        }
        grad.push(d);
        (loss, grad)
    }

    fn public_loss_grad(&self, _w: &[f64], _sample: &Self::Sample) -> (f64, Vec<f64>) {
        (0.0, vec![0.0; self.param_count()])
    }
}

//! Coordinate-classification keypoint head on a two-layer backbone.
//!
//! The flattened image feeds a tanh hidden layer; the head emits one logit
//! block per joint and axis, classified over quantized coordinate bins and
//! trained against Gaussian-smoothed targets. Predictions decode the argmax
//! bin back to continuous pixel coordinates.

use crate::data::KeypointSample;
use crate::error::{Error, Result};
use crate::models::coding::{bins_for, decode_axis, encode_axis};
use crate::models::{softmax_cross_entropy, Model, TrainableMask};
use crate::numerics::{ParamVector, RngStream};

/// Flat layout: [W1 (hidden x HW), b1, W2 (out x hidden), b2] with
/// out = joints * (bins_x + bins_y).
#[derive(Debug, Clone)]
pub struct KeypointCcModel {
    height: usize,
    width: usize,
    joints: usize,
    hidden_dim: usize,
    kappa: f64,
    smoothing_sigma_bins: f64,
    public_loss_weight: f64,
    mask: TrainableMask,
    bins_x: usize,
    bins_y: usize,
}

impl KeypointCcModel {
    pub fn new(
        height: usize,
        width: usize,
        joints: usize,
        hidden_dim: usize,
        kappa: f64,
        smoothing_sigma_bins: f64,
    ) -> Result<Self> {
        if height == 0 || width == 0 || joints == 0 || hidden_dim == 0 {
            return Err(Error::InvalidConfig("keypoint model dimensions must be positive".into()));
        }
        if kappa < 1.0 {
            return Err(Error::InvalidConfig(format!("splitting factor {kappa} must be >= 1")));
        }
        if smoothing_sigma_bins <= 0.0 {
            return Err(Error::InvalidConfig("smoothing sigma must be > 0".into()));
        }
        Ok(Self {
            height,
            width,
            joints,
            hidden_dim,
            kappa,
            smoothing_sigma_bins,
            public_loss_weight: 1.0,
            mask: TrainableMask::All,
            bins_x: bins_for(width, kappa),
            bins_y: bins_for(height, kappa),
        })
    }

    /// Scales l_pub; 0 turns the public component into an exact zero.
    pub fn with_public_loss_weight(mut self, weight: f64) -> Self {
        self.public_loss_weight = weight;
        self
    }

    pub fn with_mask(mut self, mask: TrainableMask) -> Self {
        self.mask = mask;
        self
    }

    /// Mask that trains only the classification head (W2, b2).
    pub fn frozen_head_mask(&self) -> TrainableMask {
        TrainableMask::Range { start: self.head_start(), end: self.param_count() }
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn bins(&self) -> (usize, usize) {
        (self.bins_x, self.bins_y)
    }

    fn input_dim(&self) -> usize {
        self.height * self.width
    }

    fn out_dim(&self) -> usize {
        self.joints * (self.bins_x + self.bins_y)
    }

    fn w1_len(&self) -> usize {
        self.hidden_dim * self.input_dim()
    }

    fn head_start(&self) -> usize {
        self.w1_len() + self.hidden_dim
    }

    fn forward(&self, w: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (h, d_in, out) = (self.hidden_dim, self.input_dim(), self.out_dim());
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

    /// Logit block offsets for joint j: x block then y block.
    fn block_ranges(&self, j: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let base = j * (self.bins_x + self.bins_y);
        (base..base + self.bins_x, base + self.bins_x..base + self.bins_x + self.bins_y)
    }

    /// Mean cross-entropy over all joint/axis blocks, with the gradient
    /// left out when only the loss is needed.
    fn task_loss_grad(
        &self,
        w: &[f64],
        image: &[f64],
        joints: &[(f64, f64)],
        want_grad: bool,
    ) -> (f64, Option<Vec<f64>>) {
        let (h, d_in, out) = (self.hidden_dim, self.input_dim(), self.out_dim());
        let (hidden, logits) = self.forward(w, image);
        let block_scale = 1.0 / (2.0 * self.joints as f64);

        let mut loss = 0.0;
        let mut dlogits = vec![0.0; out];
        for (j, &(x, y)) in joints.iter().enumerate() {
            let tx = encode_axis(x, self.width, self.kappa, self.smoothing_sigma_bins)
                .expect("generator keeps joints in frame");
            let ty = encode_axis(y, self.height, self.kappa, self.smoothing_sigma_bins)
                .expect("generator keeps joints in frame");
            let (rx, ry) = self.block_ranges(j);
            let (lx, gx) = softmax_cross_entropy(&logits[rx.clone()], &tx.weights);
            let (ly, gy) = softmax_cross_entropy(&logits[ry.clone()], &ty.weights);
            loss += block_scale * (lx + ly);
            for (slot, g) in dlogits[rx].iter_mut().zip(gx.iter()) {
                *slot = block_scale * g;
            }
            for (slot, g) in dlogits[ry].iter_mut().zip(gy.iter()) {
                *slot = block_scale * g;
            }
        }
        if !want_grad {
            return (loss, None);
        }

        let mut grad = vec![0.0; self.param_count()];
        let w2_start = self.head_start();
        let head_trainable = match self.mask {
            TrainableMask::All => true,
            TrainableMask::Range { start, end } => start < self.param_count() && end > w2_start,
        };
        let hidden_trainable = match self.mask {
            TrainableMask::All => true,
            TrainableMask::Range { start, .. } => start < w2_start,
        };
        if head_trainable {
            for o in 0..out {
                let d = dlogits[o];
                let gw2 = &mut grad[w2_start + o * h..w2_start + (o + 1) * h];
                for u in 0..h {
                    gw2[u] = d * hidden[u];
                }
            }
            let gb2 = w2_start + out * h;
            grad[gb2..gb2 + out].copy_from_slice(&dlogits);
        }
        if hidden_trainable {
            for u in 0..h {
                let mut dh = 0.0;
                for o in 0..out {
                    dh += w[w2_start + o * h + u] * dlogits[o];
                }
                let da = dh * (1.0 - hidden[u] * hidden[u]);
                let gw1 = &mut grad[u * d_in..(u + 1) * d_in];
                for i in 0..d_in {
                    gw1[i] = da * image[i];
                }
                grad[self.w1_len() + u] = da;
            }
        }
        self.mask.zero_frozen(&mut grad);
        (loss, Some(grad))
    }

    /// Decoded (x, y) per joint from the softmax of each logit block.
    pub fn predict_joints(&self, w: &[f64], image: &[f64]) -> Vec<(f64, f64)> {
        let (_, logits) = self.forward(w, image);
        (0..self.joints)
            .map(|j| {
                let (rx, ry) = self.block_ranges(j);
                let sx = softmax(&logits[rx]);
                let sy = softmax(&logits[ry]);
                (decode_axis(&sx, self.kappa), decode_axis(&sy, self.kappa))
            })
            .collect()
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut e: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = e.iter().sum();
    for v in &mut e {
        *v /= total;
    }
    e
}

impl Model for KeypointCcModel {
    type Sample = KeypointSample;

    fn param_count(&self) -> usize {
        self.head_start() + self.out_dim() * self.hidden_dim + self.out_dim()
    }

    fn trainable_mask(&self) -> TrainableMask {
        self.mask
    }

    fn init_params(&self, rng: &mut RngStream) -> ParamVector {
        let mut v = vec![0.0; self.param_count()];
        let s1 = 1.0 / (self.input_dim() as f64).sqrt();
        for x in v[..self.w1_len()].iter_mut() {
            *x = s1 * rng.normal();
        }
        let w2_start = self.head_start();
        let w2_end = w2_start + self.out_dim() * self.hidden_dim;
        let s2 = 1.0 / (self.hidden_dim as f64).sqrt();
        for x in v[w2_start..w2_end].iter_mut() {
            *x = s2 * rng.normal();
        }
        ParamVector::from_vec(v)
    }

    fn private_loss_grad(&self, w: &[f64], sample: &Self::Sample) -> (f64, Vec<f64>) {
        let (loss, grad) = self.task_loss_grad(w, &sample.image, &sample.joints, true);
        (loss, grad.unwrap())
    }

    fn public_loss_grad(&self, w: &[f64], sample: &Self::Sample) -> (f64, Vec<f64>) {
        if self.public_loss_weight == 0.0 {
            return (0.0, vec![0.0; self.param_count()]);
        }
        let (loss, grad) = self.task_loss_grad(w, &sample.public_image, &sample.joints, true);
        let mut grad = grad.unwrap();
        if self.public_loss_weight != 1.0 {
            for g in &mut grad {
                *g *= self.public_loss_weight;
            }
        }
        (self.public_loss_weight * loss, grad)
    }

    fn private_loss(&self, w: &[f64], sample: &Self::Sample) -> f64 {
        self.task_loss_grad(w, &sample.image, &sample.joints, false).0
    }
}

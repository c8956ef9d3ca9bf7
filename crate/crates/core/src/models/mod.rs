//! Desk-scale differentiable predictors with exact per-sample gradients.
//!
//! Every model exposes the feature-DP loss decomposition
//! l(w, x) = l_priv(w, x) + l_pub(w, psi(x)). Models without a public
//! view report a zero public component, so the same training loop drives
//! all of them.

pub mod coding;
mod keypoint;
mod mlp;
mod simple;

pub use keypoint::KeypointCcModel;
pub use mlp::{ClassSample, Mlp2Model};
pub use simple::{LinearModel, LogisticModel, RegressionSample};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, ParamVector, RngStream};

/// Which coordinates of the flat parameter vector receive updates.
/// Frozen coordinates have exactly-zero gradients and are excluded from
/// the noise dimension count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainableMask {
    All,
    /// Half-open index range of trainable coordinates.
    Range { start: usize, end: usize },
}

impl TrainableMask {
    #[inline]
    pub fn is_trainable(&self, i: usize) -> bool {
        match self {
            TrainableMask::All => true,
            TrainableMask::Range { start, end } => i >= *start && i < *end,
        }
    }

    pub fn trainable_count(&self, p: usize) -> usize {
        match self {
            TrainableMask::All => p,
            TrainableMask::Range { start, end } => end.min(&p).saturating_sub(*start),
        }
    }

    /// Zeroes frozen coordinates in place.
    pub fn zero_frozen(&self, g: &mut [f64]) {
        if let TrainableMask::Range { start, end } = self {
            for v in &mut g[..*start] {
                *v = 0.0;
            }
            for v in &mut g[(*end).min(g.len())..] {
                *v = 0.0;
            }
        }
    }
}

/// Which loss component a gradient is taken on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossView {
    /// l_priv(w, x): the raw-sample loss.
    Private,
    /// l_pub(w, psi(x)): the public-feature loss.
    Public,
    /// l = l_priv + l_pub, used for basis estimation on public samples.
    Full,
}

/// A differentiable predictor over a flat parameter vector.
pub trait Model: Sync {
    type Sample: Sync;

    fn param_count(&self) -> usize;

    fn trainable_mask(&self) -> TrainableMask;

    fn init_params(&self, rng: &mut RngStream) -> ParamVector;

    /// Loss and exact gradient of the private component. Frozen
    /// coordinates come back exactly zero.
    fn private_loss_grad(&self, w: &[f64], sample: &Self::Sample) -> (f64, Vec<f64>);

    /// Loss and exact gradient of the public component; models without a
    /// public view return (0, zeros).
    fn public_loss_grad(&self, w: &[f64], sample: &Self::Sample) -> (f64, Vec<f64>);

    fn private_loss(&self, w: &[f64], sample: &Self::Sample) -> f64 {
        self.private_loss_grad(w, sample).0
    }

    fn loss_grad(&self, w: &[f64], sample: &Self::Sample, view: LossView) -> (f64, Vec<f64>) {
        match view {
            LossView::Private => self.private_loss_grad(w, sample),
            LossView::Public => self.public_loss_grad(w, sample),
            LossView::Full => {
                let (lp, mut gp) = self.private_loss_grad(w, sample);
                let (lq, gq) = self.public_loss_grad(w, sample);
                for (a, b) in gp.iter_mut().zip(gq.iter()) {
                    *a += b;
                }
                (lp + lq, gp)
            }
        }
    }
}

/// Per-sample losses and the B x p matrix of un-aggregated gradients.
///
/// Rows are computed in parallel but land in batch order, so the result is
/// independent of the thread count.
pub fn loss_and_per_sample_grad<M: Model>(
    model: &M,
    w: &ParamVector,
    batch: &[&M::Sample],
    view: LossView,
) -> Result<(Vec<f64>, DenseMatrix)> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    if !w.is_finite() {
        return Err(Error::Contract("non-finite parameter vector".into()));
    }
    let rows: Vec<(f64, Vec<f64>)> = batch
        .par_iter()
        .map(|sample| model.loss_grad(w.as_slice(), sample, view))
        .collect();

    let p = model.param_count();
    let mut losses = Vec::with_capacity(batch.len());
    let mut grads = DenseMatrix::zeros(batch.len(), p);
    for (i, (loss, grad)) in rows.into_iter().enumerate() {
        if !loss.is_finite() || grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteForward { sample_index: i });
        }
        losses.push(loss);
        grads.row_mut(i).copy_from_slice(&grad);
    }
    Ok((losses, grads))
}

/// Batch gradient in one accumulation pass; reference point for the
/// per-sample/batch consistency invariant.
pub fn batch_mean_grad<M: Model>(
    model: &M,
    w: &ParamVector,
    batch: &[&M::Sample],
    view: LossView,
) -> Result<(f64, ParamVector)> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let p = model.param_count();
    let mut acc = vec![0.0; p];
    let mut loss_acc = 0.0;
    for sample in batch {
        let (loss, grad) = model.loss_grad(w.as_slice(), sample, view);
        loss_acc += loss;
        for (a, g) in acc.iter_mut().zip(grad.iter()) {
            *a += g;
        }
    }
    let inv = 1.0 / batch.len() as f64;
    for a in &mut acc {
        *a *= inv;
    }
    Ok((loss_acc * inv, ParamVector::from_vec(acc)))
}

pub(crate) fn softmax_cross_entropy(logits: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    debug_assert_eq!(logits.len(), target.len());
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    for e in &mut exps {
        *e /= total;
    }
    let lse = max + total.ln();
    // CE = lse - sum_b t_b z_b  (targets sum to 1)
    let mut loss = lse;
    for (t, z) in target.iter().zip(logits.iter()) {
        loss -= t * z;
    }
    // dCE/dz = softmax - target
    let grad = exps.iter().zip(target.iter()).map(|(p, t)| p - t).collect();
    (loss, grad)
}

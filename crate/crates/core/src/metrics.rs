//! Utility metrics: PCK over keypoint predictions and optimizer
//! diagnostics derived from step records.

use crate::error::{Error, Result};
use crate::optimizer::StepRecord;

/// Per-joint and mean correctness rates at one threshold.
#[derive(Debug, Clone)]
pub struct PckResult {
    pub per_joint: Vec<f64>,
    pub mean: f64,
    pub tau: f64,
    pub normalizer: f64,
}

/// Fraction of predicted joints within tau * normalizer of ground truth.
/// Boundary equality counts as correct.
pub fn pck(
    preds: &[Vec<(f64, f64)>],
    gts: &[Vec<(f64, f64)>],
    tau: f64,
    normalizer: f64,
) -> Result<PckResult> {
    if preds.len() != gts.len() {
        return Err(Error::DimMismatch(format!(
            "{} predictions vs {} ground truths",
            preds.len(),
            gts.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Contract("empty prediction set".into()));
    }
    if normalizer <= 0.0 {
        return Err(Error::Contract(format!("normalizer {normalizer} must be > 0")));
    }
    let joints = gts[0].len();
    if preds.iter().zip(gts.iter()).any(|(p, g)| p.len() != joints || g.len() != joints) {
        return Err(Error::DimMismatch("inconsistent joint counts".into()));
    }
    let radius = tau * normalizer;
    let mut hits = vec![0usize; joints];
    for (p_row, g_row) in preds.iter().zip(gts.iter()) {
        for j in 0..joints {
            let dx = p_row[j].0 - g_row[j].0;
            let dy = p_row[j].1 - g_row[j].1;
            if (dx * dx + dy * dy).sqrt() <= radius {
                hits[j] += 1;
            }
        }
    }
    let n = preds.len() as f64;
    let per_joint: Vec<f64> = hits.iter().map(|&h| h as f64 / n).collect();
    let mean = per_joint.iter().sum::<f64>() / joints as f64;
    Ok(PckResult { per_joint, mean, tau, normalizer })
}

/// Frame diagonal in pixels; the desk stand-in for PCKh's head-segment
/// normalizer (reported as PCK@tau*diag).
pub fn frame_diagonal(height: usize, width: usize) -> f64 {
    ((height * height + width * width) as f64).sqrt()
}

/// Per-step ratio of the clipped signal norm to the injected noise norm.
/// Steps without noise report +inf as a documented sentinel.
pub fn snr_series(history: &[StepRecord]) -> Vec<f64> {
    history
        .iter()
        .map(|r| {
            if r.noise_norm == 0.0 {
                f64::INFINITY
            } else {
                r.signal_norm / r.noise_norm
            }
        })
        .collect()
}

/// Quartile summary of an SNR series.
#[derive(Debug, Clone, Copy)]
pub struct SnrSummary {
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

pub fn snr_summary(series: &[f64]) -> SnrSummary {
    SnrSummary {
        q25: quantile(series, 0.25),
        median: quantile(series, 0.5),
        q75: quantile(series, 0.75),
    }
}

/// Linear-interpolation quantile over a copy of the data. NaNs are not
/// expected; infinities sort high.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    assert!(!xs.is_empty(), "quantile of an empty slice");
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if v.len() == 1 {
        return v[0];
    }
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        v[lo]
    } else {
        let t = pos - lo as f64;
        // Interpolating with an infinite endpoint stays infinite.
        if v[hi].is_infinite() {
            if t == 0.0 {
                v[lo]
            } else {
                v[hi]
            }
        } else {
            v[lo] + t * (v[hi] - v[lo])
        }
    }
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

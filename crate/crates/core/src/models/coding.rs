//! Coordinate classification coding: quantize continuous coordinates into
//! bins with a splitting factor, smooth the one-hot target with a Gaussian,
//! and decode argmax bins back to continuous coordinates.

use crate::error::{Error, Result};

/// Number of bins for an axis of the given pixel extent under splitting
/// factor kappa.
pub fn bins_for(extent: usize, kappa: f64) -> usize {
    (extent as f64 * kappa).ceil() as usize
}

/// Gaussian-smoothed discrete target distribution over one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedTarget {
    pub weights: Vec<f64>,
    pub mode_bin: usize,
}

impl SmoothedTarget {
    /// Checks the distribution invariants: sums to 1 within 1e-9 and the
    /// mode sits at the quantized ground-truth bin.
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Contract(format!("target weights sum to {sum}, not 1")));
        }
        let argmax = argmax_lowest(&self.weights);
        if argmax != self.mode_bin {
            return Err(Error::Contract(format!(
                "target mode at bin {argmax}, expected {}",
                self.mode_bin
            )));
        }
        Ok(())
    }
}

/// Encodes one coordinate axis: bin b* = floor(coord * kappa), unnormalized
/// weights exp(-(b - b*)^2 / (2 s^2)) over all bins, normalized to sum 1.
pub fn encode_axis(
    coord: f64,
    extent: usize,
    kappa: f64,
    sigma_bins: f64,
) -> Result<SmoothedTarget> {
    if !(0.0..extent as f64).contains(&coord) {
        return Err(Error::Contract(format!(
            "coordinate {coord} outside frame [0, {extent})"
        )));
    }
    if kappa < 1.0 {
        return Err(Error::Contract(format!("splitting factor {kappa} must be >= 1")));
    }
    if sigma_bins <= 0.0 {
        return Err(Error::Contract(format!("smoothing sigma {sigma_bins} must be > 0")));
    }
    let bins = bins_for(extent, kappa);
    let mode_bin = ((coord * kappa).floor() as usize).min(bins - 1);
    let inv = 1.0 / (2.0 * sigma_bins * sigma_bins);
    let mut weights: Vec<f64> = (0..bins)
        .map(|b| {
            let d = b as f64 - mode_bin as f64;
            (-d * d * inv).exp()
        })
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(SmoothedTarget { weights, mode_bin })
}

/// Encodes an (x, y) keypoint into per-axis smoothed targets.
pub fn encode_targets(
    x: f64,
    y: f64,
    width: usize,
    height: usize,
    kappa: f64,
    sigma_bins: f64,
) -> Result<(SmoothedTarget, SmoothedTarget)> {
    let tx = encode_axis(x, width, kappa, sigma_bins)?;
    let ty = encode_axis(y, height, kappa, sigma_bins)?;
    Ok((tx, ty))
}

/// Decodes one axis distribution: argmax bin (ties go to the lower index)
/// mapped back to the bin center (b + 0.5) / kappa.
pub fn decode_axis(dist: &[f64], kappa: f64) -> f64 {
    let b = argmax_lowest(dist);
    (b as f64 + 0.5) / kappa
}

/// Decodes per-axis distributions into continuous (x, y).
pub fn decode_coords(dist_x: &[f64], dist_y: &[f64], kappa: f64) -> (f64, f64) {
    (decode_axis(dist_x, kappa), decode_axis(dist_y, kappa))
}

fn argmax_lowest(xs: &[f64]) -> usize {
    let mut best = 0usize;
    let mut best_val = xs[0];
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    best
}

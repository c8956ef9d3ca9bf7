//! Synthetic keypoint scenes, the public blur feature map, and the
//! public/private split.

mod blur;
mod io;

pub use blur::blur_psi;
pub use io::{read_dataset, write_dataset, DatasetHeader};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// One scene: a grayscale image in [0,1], its ground-truth joints in pixel
/// units (x right, y down), and the deterministic public variant psi(image).
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointSample {
    pub image: Vec<f64>,
    pub public_image: Vec<f64>,
    pub joints: Vec<(f64, f64)>,
}

/// Blur parameters for the public feature map. The paper-scale kernel is
/// scaled down proportionally to the desk frame.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BlurParams {
    pub kernel_size: usize,
    pub sigma: f64,
}

impl Default for BlurParams {
    fn default() -> Self {
        Self { kernel_size: 9, sigma: 3.0 }
    }
}

/// Generator parameters for synthetic scenes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenParams {
    pub n: usize,
    pub height: usize,
    pub width: usize,
    pub joints: usize,
    /// Peak-to-peak amplitude of the uniform background noise.
    pub noise_level: f64,
    pub blob_sigma: f64,
    pub blob_amplitude: f64,
    pub min_separation: f64,
    pub margin: f64,
    pub blur: BlurParams,
}

impl GenParams {
    pub fn desk_default(n: usize, height: usize, width: usize, joints: usize) -> Self {
        Self {
            n,
            height,
            width,
            joints,
            noise_level: 0.1,
            blob_sigma: 1.6,
            blob_amplitude: 0.75,
            min_separation: 7.0,
            margin: 3.0,
            blur: BlurParams::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.height < 16 || self.width < 16 {
            return Err(Error::InvalidConfig("frame must be at least 16x16".into()));
        }
        if self.joints == 0 {
            return Err(Error::InvalidConfig("need at least one joint".into()));
        }
        if self.noise_level < 0.0 {
            return Err(Error::InvalidConfig("noise level must be >= 0".into()));
        }
        // Learnability floor: blob peak at least 3x the background noise std.
        let noise_std = self.noise_level / 12f64.sqrt();
        if self.blob_amplitude < 3.0 * noise_std {
            return Err(Error::InvalidConfig(format!(
                "blob amplitude {} below 3x noise std {}",
                self.blob_amplitude, noise_std
            )));
        }
        let usable_w = self.width as f64 - 1.0 - 2.0 * self.margin;
        let usable_h = self.height as f64 - 1.0 - 2.0 * self.margin;
        if usable_w <= 0.0 || usable_h <= 0.0 {
            return Err(Error::InfeasibleGeometry("margin leaves no room for joints".into()));
        }
        Ok(())
    }
}

/// Generates n scenes. Each sample derives its own child stream, so
/// generation is order-independent under parallelism and reproducible
/// from the seed alone.
pub fn generate(rng: &RngStream, params: &GenParams) -> Result<Vec<KeypointSample>> {
    params.validate()?;
    (0..params.n)
        .into_par_iter()
        .map(|i| generate_one(&mut rng.derive(i as u64), params))
        .collect()
}

fn generate_one(rng: &mut RngStream, p: &GenParams) -> Result<KeypointSample> {
    let joints = place_joints(rng, p)?;
    let mut image = vec![0.0; p.height * p.width];
    let inv = 1.0 / (2.0 * p.blob_sigma * p.blob_sigma);
    for r in 0..p.height {
        for c in 0..p.width {
            let mut v = 0.0;
            for &(jx, jy) in &joints {
                let dx = c as f64 - jx;
                let dy = r as f64 - jy;
                v += p.blob_amplitude * (-(dx * dx + dy * dy) * inv).exp();
            }
            image[r * p.width + c] = v;
        }
    }
    if p.noise_level > 0.0 {
        for v in &mut image {
            *v = (*v + p.noise_level * rng.next_f64()).clamp(0.0, 1.0);
        }
    }
    let public_image =
        blur_psi(&image, p.height, p.width, p.blur.kernel_size, p.blur.sigma)?;
    Ok(KeypointSample { image, public_image, joints })
}

fn place_joints(rng: &mut RngStream, p: &GenParams) -> Result<Vec<(f64, f64)>> {
    const MAX_ATTEMPTS: usize = 1000;
    let lo_x = p.margin;
    let hi_x = p.width as f64 - 1.0 - p.margin;
    let lo_y = p.margin;
    let hi_y = p.height as f64 - 1.0 - p.margin;
    let mut joints: Vec<(f64, f64)> = Vec::with_capacity(p.joints);
    for _ in 0..p.joints {
        let mut attempts = 0;
        loop {
            let x = rng.uniform(lo_x, hi_x);
            let y = rng.uniform(lo_y, hi_y);
            let ok = joints
                .iter()
                .all(|&(jx, jy)| ((x - jx).powi(2) + (y - jy).powi(2)).sqrt() >= p.min_separation);
            if ok {
                joints.push((x, y));
                break;
            }
            attempts += 1;
            if attempts >= MAX_ATTEMPTS {
                return Err(Error::InfeasibleGeometry(format!(
                    "could not place {} joints with separation {} in a {}x{} frame",
                    p.joints, p.min_separation, p.width, p.height
                )));
            }
        }
    }
    Ok(joints)
}

/// Disjoint public/private split of a dataset.
#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub s_pub: Vec<KeypointSample>,
    pub s_priv: Vec<KeypointSample>,
}

/// Uniform random split: m samples become the public subset, the rest stay
/// private. Deterministic per stream.
pub fn split(samples: Vec<KeypointSample>, m: usize, rng: &mut RngStream) -> Result<SplitDataset> {
    let n = samples.len();
    if m >= n {
        return Err(Error::Contract(format!("public size {m} must be below dataset size {n}")));
    }
    let perm = rng.permutation(n);
    let mut is_pub = vec![false; n];
    for &i in perm.iter().take(m) {
        is_pub[i] = true;
    }
    let mut s_pub = Vec::with_capacity(m);
    let mut s_priv = Vec::with_capacity(n - m);
    for (i, sample) in samples.into_iter().enumerate() {
        if is_pub[i] {
            s_pub.push(sample);
        } else {
            s_priv.push(sample);
        }
    }
    Ok(SplitDataset { s_pub, s_priv })
}

/// Mean absolute discrete Laplacian; the blur invariant test uses this as
/// a high-frequency energy measure.
pub fn mean_abs_laplacian(image: &[f64], height: usize, width: usize) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for r in 1..height - 1 {
        for c in 1..width - 1 {
            let lap = 4.0 * image[r * width + c]
                - image[(r - 1) * width + c]
                - image[(r + 1) * width + c]
                - image[r * width + c - 1]
                - image[r * width + c + 1];
            total += lap.abs();
            count += 1;
        }
    }
    total / count as f64
}

//! Separable Gaussian blur: the public feature map psi.

use crate::error::{Error, Result};

/// Blurs the whole frame with a normalized separable Gaussian kernel and
/// edge-replication padding. Summation order is fixed (kernel taps
/// ascending, rows then columns), so output is bit-stable.
pub fn blur_psi(
    image: &[f64],
    height: usize,
    width: usize,
    kernel_size: usize,
    sigma: f64,
) -> Result<Vec<f64>> {
    if kernel_size % 2 == 0 {
        return Err(Error::Contract(format!("kernel size {kernel_size} must be odd")));
    }
    if sigma <= 0.0 {
        return Err(Error::Contract(format!("blur sigma {sigma} must be > 0")));
    }
    if image.len() != height * width {
        return Err(Error::DimMismatch(format!(
            "image buffer {} does not match {height}x{width}",
            image.len()
        )));
    }

    let c = (kernel_size / 2) as isize;
    let mut kernel = Vec::with_capacity(kernel_size);
    let mut total = 0.0;
    for t in 0..kernel_size {
        let d = t as isize - c;
        let v = (-((d * d) as f64) / (2.0 * sigma * sigma)).exp();
        kernel.push(v);
        total += v;
    }
    for v in &mut kernel {
        *v /= total;
    }

    let clamp = |x: isize, hi: usize| -> usize { x.max(0).min(hi as isize - 1) as usize };

    // Horizontal pass.
    let mut tmp = vec![0.0; height * width];
    for r in 0..height {
        for col in 0..width {
            let mut acc = 0.0;
            for (t, &kv) in kernel.iter().enumerate() {
                let sc = clamp(col as isize + t as isize - c, width);
                acc += kv * image[r * width + sc];
            }
            tmp[r * width + col] = acc;
        }
    }
    // Vertical pass.
    let mut out = vec![0.0; height * width];
    for r in 0..height {
        for col in 0..width {
            let mut acc = 0.0;
            for (t, &kv) in kernel.iter().enumerate() {
                let sr = clamp(r as isize + t as isize - c, height);
                acc += kv * tmp[sr * width + col];
            }
            out[r * width + col] = acc.clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_is_invariant() {
        let img = vec![0.37; 32 * 32];
        let out = blur_psi(&img, 32, 32, 9, 3.0).unwrap();
        for v in out {
            assert!((v - 0.37).abs() < 1e-12);
        }
    }

    #[test]
    fn impulse_response_is_the_kernel() {
        let (h, w, ks, sigma) = (31usize, 31usize, 9usize, 3.0f64);
        let mut img = vec![0.0; h * w];
        img[15 * w + 15] = 1.0;
        let out = blur_psi(&img, h, w, ks, sigma).unwrap();
        // Build the expected normalized 2D kernel values away from edges.
        let c = ks / 2;
        let mut k1 = Vec::new();
        let mut total = 0.0;
        for t in 0..ks {
            let d = t as f64 - c as f64;
            let v = (-d * d / (2.0 * sigma * sigma)).exp();
            k1.push(v);
            total += v;
        }
        for v in &mut k1 {
            *v /= total;
        }
        for di in 0..ks {
            for dj in 0..ks {
                let r = 15 + di - c;
                let col = 15 + dj - c;
                let expect = k1[di] * k1[dj];
                let got = out[r * w + col];
                assert!((got - expect).abs() < 1e-12, "at ({r},{col}): {got} vs {expect}");
            }
        }
    }

    #[test]
    fn matches_direct_2d_convolution_oracle() {
        let (h, w) = (32usize, 32usize);
        let mut state = 987654321u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let img: Vec<f64> = (0..h * w).map(|_| next()).collect();
        let got = blur_psi(&img, h, w, 9, 3.0).unwrap();
        let want = featproj_oracles::gaussian_blur_direct(&img, h, w, 9, 3.0);
        for i in 0..h * w {
            assert!((got[i] - want[i]).abs() < 1e-10, "pixel {i}: {} vs {}", got[i], want[i]);
        }
    }

    #[test]
    fn even_kernel_rejected() {
        let img = vec![0.0; 16 * 16];
        assert!(blur_psi(&img, 16, 16, 8, 3.0).is_err());
    }

    #[test]
    fn deterministic_across_runs() {
        let img: Vec<f64> = (0..32 * 32).map(|i| (i as f64 * 0.7).sin().abs()).collect();
        let a = blur_psi(&img, 32, 32, 9, 3.0).unwrap();
        let b = blur_psi(&img, 32, 32, 9, 3.0).unwrap();
        assert_eq!(a, b);
    }
}

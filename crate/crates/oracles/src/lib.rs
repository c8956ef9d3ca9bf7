//! Independent reference implementations used as test oracles.
//!
//! Nothing in here shares code with featproj-core: the eigensolver comes
//! from nalgebra, the accountant math is evaluated term-by-term in 256-bit
//! floating point, convolution is the naive quadruple loop, and gradients
//! are central finite differences. Interfaces are plain slices so this
//! crate stays decoupled from the library's types.

use astro_float::{BigFloat, Consts, RoundingMode};
use nalgebra::DMatrix;

const PREC: usize = 256;
const RM: RoundingMode = RoundingMode::ToEven;

fn big(v: f64) -> BigFloat {
    BigFloat::from_f64(v, PREC)
}

fn to_f64(x: &BigFloat) -> f64 {
    // astro-float prints enough digits for an exact f64 round-trip.
    format!("{x}").parse::<f64>().expect("big float formats as a number")
}

/// Renyi divergence of the Poisson-subsampled Gaussian mechanism at integer
/// order alpha, evaluated term-by-term in 256-bit arithmetic:
///
///   eps(alpha) = ln( sum_{j=0}^{alpha} C(alpha,j) (1-q)^(alpha-j) q^j
///                    exp(j(j-1) / (2 sigma^2)) ) / (alpha - 1)
pub fn rdp_subsampled_gaussian(q: f64, sigma: f64, alpha: u32) -> f64 {
    assert!(alpha >= 2, "integer orders start at 2");
    assert!((0.0..=1.0).contains(&q));
    assert!(sigma > 0.0);
    if q == 0.0 {
        return 0.0;
    }
    if q == 1.0 {
        return alpha as f64 / (2.0 * sigma * sigma);
    }

    let mut cc = Consts::new().expect("constants cache");
    let qb = big(q);
    let one_minus_q = big(1.0).sub(&qb, PREC, RM);
    let two_sigma_sq = big(2.0).mul(&big(sigma), PREC, RM).mul(&big(sigma), PREC, RM);

    // Running binomial coefficient C(alpha, j), exact until rounding at 256 bits.
    let mut binom = big(1.0);
    let mut sum = big(0.0);
    for j in 0..=alpha {
        if j > 0 {
            let num = big((alpha - j + 1) as f64);
            let den = big(j as f64);
            binom = binom.mul(&num, PREC, RM).div(&den, PREC, RM);
        }
        let mut term = binom.clone();
        for _ in 0..(alpha - j) {
            term = term.mul(&one_minus_q, PREC, RM);
        }
        for _ in 0..j {
            term = term.mul(&qb, PREC, RM);
        }
        let expo_num = big((j as f64) * (j as f64 - 1.0));
        let expo = expo_num.div(&two_sigma_sq, PREC, RM);
        let e = expo.exp(PREC, RM, &mut cc);
        term = term.mul(&e, PREC, RM);
        sum = sum.add(&term, PREC, RM);
    }
    let ln_sum = sum.ln(PREC, RM, &mut cc);
    let eps = ln_sum.div(&big((alpha - 1) as f64), PREC, RM);
    to_f64(&eps).max(0.0)
}

/// Composes T identical steps over an integer order grid and converts to
/// (epsilon, delta)-DP: min_alpha [ T * eps_alpha + ln(1/delta) / (alpha-1) ].
pub fn rdp_epsilon(q: f64, sigma: f64, steps: u64, delta: f64, orders: &[u32]) -> f64 {
    assert!(!orders.is_empty());
    assert!(delta > 0.0 && delta < 1.0);
    let ln_inv_delta = -delta.ln();
    orders
        .iter()
        .map(|&a| {
            steps as f64 * rdp_subsampled_gaussian(q, sigma, a)
                + ln_inv_delta / (a as f64 - 1.0)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Full symmetric eigendecomposition via nalgebra, eigenvalues descending.
/// Eigenvectors are returned as an n x n row-major matrix whose columns are
/// the eigenvectors (no sign convention applied).
pub fn sym_eig_full(data: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(data.len(), n * n);
    let m = DMatrix::from_row_slice(n, n, data);
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = vec![0.0; n * n];
    for (out_col, &src_col) in order.iter().enumerate() {
        for row in 0..n {
            vecs[row * n + out_col] = eig.eigenvectors[(row, src_col)];
        }
    }
    (vals, vecs)
}

/// Naive 2D Gaussian convolution with edge replication: builds the full
/// 2D kernel from (kernel_size, sigma) and applies the quadruple loop.
pub fn gaussian_blur_direct(
    image: &[f64],
    height: usize,
    width: usize,
    kernel_size: usize,
    sigma: f64,
) -> Vec<f64> {
    assert_eq!(image.len(), height * width);
    assert!(kernel_size % 2 == 1);
    let c = (kernel_size / 2) as isize;
    let mut kernel = vec![0.0; kernel_size * kernel_size];
    let mut total = 0.0;
    for ki in 0..kernel_size {
        for kj in 0..kernel_size {
            let di = ki as isize - c;
            let dj = kj as isize - c;
            let v = (-((di * di + dj * dj) as f64) / (2.0 * sigma * sigma)).exp();
            kernel[ki * kernel_size + kj] = v;
            total += v;
        }
    }
    for v in &mut kernel {
        *v /= total;
    }

    let clamp = |x: isize, hi: usize| -> usize { x.max(0).min(hi as isize - 1) as usize };
    let mut out = vec![0.0; height * width];
    for i in 0..height {
        for j in 0..width {
            let mut acc = 0.0;
            for ki in 0..kernel_size {
                for kj in 0..kernel_size {
                    let si = clamp(i as isize + ki as isize - c, height);
                    let sj = clamp(j as isize + kj as isize - c, width);
                    acc += image[si * width + sj] * kernel[ki * kernel_size + kj];
                }
            }
            out[i * width + j] = acc;
        }
    }
    out
}

/// Central finite-difference gradient of a scalar function.
pub fn central_diff_grad<F: Fn(&[f64]) -> f64>(f: F, w: &[f64], h: f64) -> Vec<f64> {
    let mut grad = vec![0.0; w.len()];
    let mut probe = w.to_vec();
    for i in 0..w.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe);
        probe[i] = orig - h;
        let down = f(&probe);
        probe[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    grad
}

//! Renyi-DP accounting for the Poisson-subsampled Gaussian mechanism.
//!
//! Works on an integer order grid. Each order's divergence is the
//! binomial-expansion value
//!
//!   eps(alpha) = ln( sum_{j=0}^{alpha} C(alpha,j) (1-q)^(alpha-j) q^j
//!                    exp(j(j-1) / (2 sigma^2)) ) / (alpha - 1)
//!
//! evaluated in log-space so small q and large alpha cannot overflow.
//! Composition over T steps multiplies each order's value by T; conversion
//! to (epsilon, delta) takes min_alpha [ T eps_alpha + ln(1/delta)/(alpha-1) ].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default order grid: every integer in 2..=64 plus the tail orders 128 and
/// 256 that matter at small sampling rates.
pub fn default_orders() -> Vec<u32> {
    let mut orders: Vec<u32> = (2..=64).collect();
    orders.extend_from_slice(&[128, 256]);
    orders
}

/// Privacy parameters for one training run. `sigma` is the unitless noise
/// multiplier: the injected noise has standard deviation sigma * clip_norm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrivacySpec {
    pub epsilon: f64,
    pub delta: f64,
    pub clip_norm: f64,
    pub sigma: f64,
    /// Per-step Poisson sampling rate q = B / n.
    pub sample_rate: f64,
    pub steps: usize,
    pub orders: Vec<u32>,
}

impl PrivacySpec {
    /// Builds a spec with sigma calibrated so the accounted epsilon after
    /// `steps` steps stays at or below `epsilon`.
    pub fn calibrated(
        epsilon: f64,
        delta: f64,
        clip_norm: f64,
        sample_rate: f64,
        steps: usize,
    ) -> Result<Self> {
        let orders = default_orders();
        let sigma = calibrate_sigma(epsilon, delta, sample_rate, steps, &orders)?;
        Ok(Self { epsilon, delta, clip_norm, sigma, sample_rate, steps, orders })
    }

    /// Accounted epsilon after `steps_taken` steps at this spec's sigma.
    pub fn accounted_epsilon(&self, steps_taken: usize) -> Result<f64> {
        let curve = RdpCurve::subsampled_gaussian(self.sample_rate, self.sigma, &self.orders)?;
        curve.compose_and_convert(steps_taken, self.delta)
    }

    /// delta is conventionally kept below 1/n; this is a documented check,
    /// not an error.
    pub fn delta_warning(&self, dataset_size: usize) -> Option<String> {
        if dataset_size > 0 && self.delta >= 1.0 / dataset_size as f64 {
            Some(format!(
                "delta = {} is not below 1/n = {} for n = {}",
                self.delta,
                1.0 / dataset_size as f64,
                dataset_size
            ))
        } else {
            None
        }
    }
}

/// Per-order RDP values for one mechanism invocation.
#[derive(Debug, Clone)]
pub struct RdpCurve {
    orders: Vec<u32>,
    eps_per_order: Vec<f64>,
}

impl RdpCurve {
    pub fn subsampled_gaussian(q: f64, sigma: f64, orders: &[u32]) -> Result<Self> {
        if orders.is_empty() {
            return Err(Error::Contract("empty RDP order grid".into()));
        }
        let mut prev = 1u32;
        for &a in orders {
            if a < 2 || a <= prev && prev != 1 {
                return Err(Error::Contract("orders must be ascending integers >= 2".into()));
            }
            prev = a;
        }
        let eps_per_order = orders
            .iter()
            .map(|&a| rdp_subsampled_gaussian(q, sigma, a))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { orders: orders.to_vec(), eps_per_order })
    }

    pub fn orders(&self) -> &[u32] {
        &self.orders
    }

    pub fn values(&self) -> &[f64] {
        &self.eps_per_order
    }

    /// min over the grid of T * eps_alpha + ln(1/delta) / (alpha - 1).
    pub fn compose_and_convert(&self, steps: usize, delta: f64) -> Result<f64> {
        if self.orders.is_empty() {
            return Err(Error::Contract("empty RDP order grid".into()));
        }
        if steps == 0 {
            return Ok(0.0);
        }
        if !(0.0..1.0).contains(&delta) || delta == 0.0 {
            return Err(Error::Contract(format!("delta = {delta} outside (0, 1)")));
        }
        let ln_inv_delta = -delta.ln();
        let eps = self
            .orders
            .iter()
            .zip(self.eps_per_order.iter())
            .map(|(&a, &e)| steps as f64 * e + ln_inv_delta / (a as f64 - 1.0))
            .fold(f64::INFINITY, f64::min);
        Ok(eps)
    }
}

/// RDP of one Poisson-subsampled Gaussian step at integer order alpha.
///
/// q = 0 spends nothing; q = 1 collapses the binomial sum to j = alpha,
/// giving exactly the pure Gaussian value alpha / (2 sigma^2).
pub fn rdp_subsampled_gaussian(q: f64, sigma: f64, alpha: u32) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Contract(format!("sampling rate q = {q} outside [0, 1]")));
    }
    if alpha < 2 {
        return Err(Error::Contract(format!("integer order alpha = {alpha} must be >= 2")));
    }
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(Error::Contract(format!("sigma = {sigma} must be finite and >= 0")));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    if sigma == 0.0 {
        return Err(Error::InfinitePrivacyLoss { q });
    }
    if q == 1.0 {
        return Ok(alpha as f64 / (2.0 * sigma * sigma));
    }

    // Log-space binomial expansion with a running log-binomial coefficient.
    let a = alpha as usize;
    let ln_q = q.ln();
    let ln_1mq = (-q).ln_1p();
    let inv_2s2 = 1.0 / (2.0 * sigma * sigma);
    let mut ln_terms = Vec::with_capacity(a + 1);
    let mut ln_binom = 0.0f64;
    for j in 0..=a {
        if j > 0 {
            ln_binom += ((a - j + 1) as f64).ln() - (j as f64).ln();
        }
        let jf = j as f64;
        ln_terms.push(ln_binom + (a - j) as f64 * ln_1mq + jf * ln_q + jf * (jf - 1.0) * inv_2s2);
    }
    let max = ln_terms.iter().fold(f64::NEG_INFINITY, |m, &t| m.max(t));
    let sum_exp: f64 = ln_terms.iter().map(|&t| (t - max).exp()).sum();
    let lse = max + sum_exp.ln();
    // The sum is an expectation of exp(...) >= 1, so the value is >= 0 up
    // to rounding; clamp the rounding.
    Ok((lse / (alpha as f64 - 1.0)).max(0.0))
}

/// Composed, converted epsilon for (q, sigma, T, delta) over an order grid.
pub fn accounted_epsilon(
    q: f64,
    sigma: f64,
    steps: usize,
    delta: f64,
    orders: &[u32],
) -> Result<f64> {
    RdpCurve::subsampled_gaussian(q, sigma, orders)?.compose_and_convert(steps, delta)
}

/// Search bracket for the noise multiplier.
pub const SIGMA_LO: f64 = 0.3;
pub const SIGMA_HI: f64 = 1e4;

/// Finds the smallest bracketed sigma whose accounted epsilon meets the
/// target. Binary search biased so the returned sigma satisfies the budget:
/// accounted(sigma) <= epsilon_target, terminating once the shortfall is
/// within 1e-4 * epsilon_target.
pub fn calibrate_sigma(
    epsilon_target: f64,
    delta: f64,
    q: f64,
    steps: usize,
    orders: &[u32],
) -> Result<f64> {
    if epsilon_target <= 0.0 {
        return Err(Error::Contract(format!("epsilon target {epsilon_target} must be > 0")));
    }
    let eval = |sigma: f64| accounted_epsilon(q, sigma, steps, delta, orders);

    let floor = eval(SIGMA_HI)?;
    if floor > epsilon_target {
        return Err(Error::CalibrationInfeasible { target: epsilon_target, floor });
    }
    let mut lo = SIGMA_LO;
    let mut hi = SIGMA_HI;
    if eval(lo)? <= epsilon_target {
        // Even the smallest sigma in the bracket meets the budget.
        return Ok(lo);
    }

    let mut eps_hi = floor;
    for _ in 0..200 {
        if epsilon_target - eps_hi <= 1e-4 * epsilon_target {
            break;
        }
        let mid = (lo * hi).sqrt();
        let eps_mid = eval(mid)?;
        if eps_mid <= epsilon_target {
            hi = mid;
            eps_hi = eps_mid;
        } else {
            lo = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q1_alpha2_sigma1_is_exactly_one() {
        assert_eq!(rdp_subsampled_gaussian(1.0, 1.0, 2).unwrap(), 1.0);
    }

    #[test]
    fn q1_equals_pure_gaussian_at_every_order() {
        for &alpha in &[2u32, 3, 7, 32, 64, 256] {
            for &sigma in &[0.5, 1.0, 2.5] {
                let got = rdp_subsampled_gaussian(1.0, sigma, alpha).unwrap();
                assert_eq!(got, alpha as f64 / (2.0 * sigma * sigma));
            }
        }
    }

    #[test]
    fn q0_spends_nothing() {
        assert_eq!(rdp_subsampled_gaussian(0.0, 1.7, 11).unwrap(), 0.0);
    }

    #[test]
    fn sigma_zero_with_sampling_is_infinite_loss() {
        match rdp_subsampled_gaussian(0.5, 0.0, 2) {
            Err(Error::InfinitePrivacyLoss { q }) => assert_eq!(q, 0.5),
            other => panic!("expected infinite-loss error, got {other:?}"),
        }
    }

    #[test]
    fn monotone_in_q_and_sigma() {
        let qs = [0.001, 0.01, 0.05, 0.2, 0.5, 0.9, 1.0];
        for w in qs.windows(2) {
            let a = rdp_subsampled_gaussian(w[0], 1.3, 8).unwrap();
            let b = rdp_subsampled_gaussian(w[1], 1.3, 8).unwrap();
            assert!(a <= b, "q monotonicity violated: eps({}) = {a} > eps({}) = {b}", w[0], w[1]);
        }
        let sigmas = [0.5, 0.8, 1.2, 2.0, 5.0];
        for w in sigmas.windows(2) {
            let a = rdp_subsampled_gaussian(0.02, w[0], 8).unwrap();
            let b = rdp_subsampled_gaussian(0.02, w[1], 8).unwrap();
            assert!(a >= b, "sigma monotonicity violated");
        }
    }

    #[test]
    fn small_q_matches_extended_precision_oracle() {
        let got = rdp_subsampled_gaussian(0.01, 1.2, 8).unwrap();
        let want = featproj_oracles::rdp_subsampled_gaussian(0.01, 1.2, 8);
        assert!(
            (got - want).abs() <= 1e-9 * want.max(1e-300),
            "library {got} vs oracle {want}"
        );
    }

    #[test]
    fn convert_single_order_plugin_arithmetic() {
        // T = 1, single order alpha = 2, eps_2 = 1.0, delta = e^-1:
        // 1.0 + ln(e) / (2 - 1) = 2.0
        let curve = RdpCurve { orders: vec![2], eps_per_order: vec![1.0] };
        let eps = curve.compose_and_convert(1, (-1.0f64).exp()).unwrap();
        assert!((eps - 2.0).abs() < 1e-12);
    }

    #[test]
    fn doubling_steps_never_decreases_epsilon() {
        let orders = default_orders();
        let curve = RdpCurve::subsampled_gaussian(0.02, 1.5, &orders).unwrap();
        let mut prev = 0.0;
        for t in [1usize, 2, 4, 8, 64, 512] {
            let eps = curve.compose_and_convert(t, 4e-5).unwrap();
            assert!(eps >= prev);
            prev = eps;
        }
    }

    #[test]
    fn adding_orders_never_increases_epsilon() {
        let small: Vec<u32> = (2..=16).collect();
        let big = default_orders();
        let a = accounted_epsilon(0.02, 1.5, 500, 4e-5, &small).unwrap();
        let b = accounted_epsilon(0.02, 1.5, 500, 4e-5, &big).unwrap();
        assert!(b <= a + 1e-15);
    }

    #[test]
    fn grid_minimum_matches_oracle() {
        let orders: Vec<u32> = (2..=64).collect();
        let got = accounted_epsilon(0.02, 1.5, 500, 4e-5, &orders).unwrap();
        let want = featproj_oracles::rdp_epsilon(0.02, 1.5, 500, 4e-5, &orders);
        assert!((got - want).abs() <= 1e-9 * want, "library {got} vs oracle {want}");
    }

    #[test]
    fn empty_grid_is_a_contract_violation() {
        assert!(RdpCurve::subsampled_gaussian(0.1, 1.0, &[]).is_err());
    }

    #[test]
    fn calibration_round_trip_on_desk_grid() {
        let orders = default_orders();
        let (q, steps, delta) = (0.03, 240, 4e-5);
        for &eps in &[0.2, 0.4, 0.6, 0.8] {
            let sigma = calibrate_sigma(eps, delta, q, steps, &orders).unwrap();
            let achieved = accounted_epsilon(q, sigma, steps, delta, &orders).unwrap();
            assert!(achieved <= eps, "eps {eps}: achieved {achieved} over budget at sigma {sigma}");
            let violated = accounted_epsilon(q, 0.99 * sigma, steps, delta, &orders).unwrap();
            assert!(violated > eps, "eps {eps}: 0.99 sigma still meets the budget");
        }
    }

    #[test]
    fn tighter_budget_needs_more_noise() {
        let orders = default_orders();
        let s02 = calibrate_sigma(0.2, 4e-5, 0.03, 240, &orders).unwrap();
        let s08 = calibrate_sigma(0.8, 4e-5, 0.03, 240, &orders).unwrap();
        assert!(s02 > s08);
    }

    #[test]
    fn calibration_matches_closed_form_single_step_full_batch() {
        // T = 1, q = 1, single order alpha = 2: eps = 1/sigma^2 + ln(1/delta).
        // Invert analytically and compare.
        let delta = 1e-3;
        let orders = vec![2u32];
        let sigma_true = 2.0f64;
        let target = 1.0 / (sigma_true * sigma_true) + (1.0f64 / delta).ln();
        let sigma = calibrate_sigma(target, delta, 1.0, 1, &orders).unwrap();
        assert!(
            (sigma - sigma_true).abs() <= 1e-3 * sigma_true,
            "calibrated {sigma} vs analytic {sigma_true}"
        );
    }

    #[test]
    fn infeasible_target_reports_floor() {
        let orders = default_orders();
        match calibrate_sigma(1e-6, 4e-5, 0.03, 240, &orders) {
            Err(Error::CalibrationInfeasible { target, floor }) => {
                assert_eq!(target, 1e-6);
                assert!(floor > 1e-6);
            }
            other => panic!("expected infeasible error, got {other:?}"),
        }
    }

    #[test]
    fn delta_warning_fires_when_delta_too_large() {
        let spec = PrivacySpec {
            epsilon: 0.8,
            delta: 1e-2,
            clip_norm: 0.1,
            sigma: 1.0,
            sample_rate: 0.03,
            steps: 100,
            orders: default_orders(),
        };
        assert!(spec.delta_warning(2000).is_some());
        assert!(spec.delta_warning(50).is_none());
    }
}

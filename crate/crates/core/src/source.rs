//! Laplacian coefficient source and its closed-form quantization
//! statistics.
//!
//! All closed forms assume a rounding offset of 1/2. With
//! `tau = exp(-lambda * q_step / 2)` the probability of a non-zero level is
//! `tau` and the mean absolute quantization error is
//! `(1 - tau) / (lambda * (1 + tau))`.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quant::Block;
use crate::scalar::Scalar;
use crate::scan::check_dims;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplacianParams<T> {
    pub sigma: T,
    pub lambda_lap: T,
}

impl<T: Scalar> LaplacianParams<T> {
    pub fn from_sigma(sigma: T) -> Result<Self> {
        Ok(Self {
            sigma,
            lambda_lap: lambda_from_sigma(sigma)?,
        })
    }
}

/// `sqrt(2) / sigma`.
pub fn lambda_from_sigma<T: Scalar>(sigma: T) -> Result<T> {
    if !(sigma > T::zero()) || !sigma.is_finite() {
        return Err(Error::Domain(format!("sigma must be positive and finite, got {sigma}")));
    }
    Ok(T::SQRT_2() / sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormStats<T> {
    pub tau: T,
    pub p_nz: T,
    pub d_expected: T,
    pub d_zero: T,
    pub d_nonzero: T,
    /// Exact `log2((1 + p_nz) / (1 - p_nz))`.
    pub r0_hat: T,
}

fn check_positive<T: Scalar>(name: &str, v: T) -> Result<()> {
    if !(v > T::zero()) || !v.is_finite() {
        return Err(Error::Domain(format!("{name} must be positive and finite, got {v}")));
    }
    Ok(())
}

pub fn closed_form_stats<T: Scalar>(lambda_lap: T, q_step: T) -> Result<ClosedFormStats<T>> {
    check_positive("lambda", lambda_lap)?;
    check_positive("q_step", q_step)?;
    let half = T::lit(0.5);
    let a = half * lambda_lap * q_step;
    let tau = (-a).exp();
    // 1 - tau without cancellation for small steps
    let one_minus_tau = -(-a).exp_m1();
    let inv = T::one() / lambda_lap;

    let d_zero = inv * one_minus_tau - half * q_step * tau;
    // tau^2 (2 - tau - 1/tau) / (1 - tau^2) == -tau (1 - tau) / (1 + tau)
    let d_nonzero = half * q_step * tau - inv * tau * one_minus_tau / (T::one() + tau);
    let d_expected = inv * one_minus_tau / (T::one() + tau);

    Ok(ClosedFormStats {
        tau,
        p_nz: tau,
        d_expected,
        d_zero,
        d_nonzero,
        r0_hat: exact_r0(tau),
    })
}

fn exact_r0<T: Scalar>(p: T) -> T {
    ((p).ln_1p() - (-p).ln_1p()) / T::LN_2()
}

/// Bits per coefficient predicted from the non-zero probability.
///
/// `taylor_order == 0` evaluates the exact logarithm; orders 1..=3 keep that
/// many odd terms of its series `(2 / ln 2) (p + p^3/3 + p^5/5 + ...)`.
pub fn rate_from_pnz<T: Scalar>(p_nz: T, taylor_order: u32) -> Result<T> {
    if !(p_nz >= T::zero() && p_nz < T::one()) {
        return Err(Error::Domain(format!("p_nz must lie in [0, 1), got {p_nz}")));
    }
    match taylor_order {
        0 => Ok(exact_r0(p_nz)),
        1..=3 => {
            let p2 = p_nz * p_nz;
            let mut term = p_nz;
            let mut sum = T::zero();
            for k in 0..taylor_order {
                sum = sum + term / T::from_int(2 * k as i64 + 1);
                term = term * p2;
            }
            Ok(T::lit(2.0) / T::LN_2() * sum)
        }
        _ => Err(Error::Domain(format!("taylor order must be 0..=3, got {taylor_order}"))),
    }
}

/// Slope/intercept form of the self-information of a quantized level:
/// zero costs `b0` bits, a non-zero level `l` costs `beta1 * |l| + b1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfInfoParams<T> {
    pub b0: T,
    pub beta1: T,
    pub b1: T,
}

pub fn self_info_params<T: Scalar>(lambda_lap: T, q_step: T) -> Result<SelfInfoParams<T>> {
    check_positive("lambda", lambda_lap)?;
    check_positive("q_step", q_step)?;
    let lq = lambda_lap * q_step;
    let a = T::lit(0.5) * lq;
    let b0 = -(-(-a).exp_m1()).log2();
    let beta1 = lq * T::LOG2_E();
    // log2(e^a - e^-a) = a log2(e) + log2(1 - e^(-2a))
    let b1 = T::one() - (a * T::LOG2_E() + (-(-(a + a)).exp_m1()).log2());
    Ok(SelfInfoParams { b0, beta1, b1 })
}

pub fn self_info_rate<T: Scalar>(level: i64, lambda_lap: T, q_step: T) -> Result<T> {
    let p = self_info_params(lambda_lap, q_step)?;
    Ok(if level == 0 {
        p.b0
    } else {
        p.beta1 * T::from_int(level.abs()) + p.b1
    })
}

/// Uniform variate in the open interval (0, 1) from the top 53 bits.
#[inline]
fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Deterministic i.i.d. Laplacian block, inverse-CDF sampled from a ChaCha
/// stream keyed by `seed`.
pub fn sample_block<T: Scalar>(sigma: T, width: usize, height: usize, seed: u64) -> Result<Block<T>> {
    check_dims(width, height)?;
    let lambda = lambda_from_sigma(sigma.as_f64()).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = (0..width * height)
        .map(|_| {
            let u = open_unit(rng.next_u64());
            let x = if u < 0.5 {
                (2.0 * u).ln() / lambda
            } else {
                -(2.0 * (1.0 - u)).ln() / lambda
            };
            T::lit(x)
        })
        .collect();
    Block::new(coeffs, width, height)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::laplacian_numeric_stats;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    #[allow(clippy::approx_constant)]
    fn lambda_examples() {
        assert_relative_eq!(lambda_from_sigma(2f64.sqrt()).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(lambda_from_sigma(1.0f64).unwrap(), 1.41421356, epsilon = 1e-8);
        assert!(matches!(lambda_from_sigma(0.0f64), Err(Error::Domain(_))));
        assert!(lambda_from_sigma(-1.0f64).is_err());
    }

    #[test]
    fn reference_point() {
        let s = closed_form_stats(2f64.sqrt(), 1.0).unwrap();
        assert_relative_eq!(s.tau, 0.493068691395, epsilon = 1e-11);
        assert_relative_eq!(s.d_expected, 0.240079085427, epsilon = 1e-11);
        assert_relative_eq!(s.d_zero, 0.111920220213, epsilon = 1e-11);
        assert_relative_eq!(s.d_nonzero, 0.128158865215, epsilon = 1e-11);
        assert_eq!(s.p_nz, s.tau);
    }

    #[test]
    fn literal_form_agrees_with_stable_form() {
        for lq in [0.1, 0.7, 1.5, 4.0, 12.0] {
            let lambda = 0.8f64;
            let q = lq / lambda;
            let s = closed_form_stats(lambda, q).unwrap();
            let t = s.tau;
            let literal = (1.0 / lambda) * (1.0 - t + t * t * (2.0 - t - 1.0 / t) / (1.0 - t * t));
            assert_relative_eq!(s.d_expected, literal, max_relative = 1e-12);
            assert_relative_eq!(s.d_expected, s.d_zero + s.d_nonzero, max_relative = 1e-12);
        }
    }

    #[test]
    fn vanishing_step() {
        let s = closed_form_stats(1.0f64, 1e-9).unwrap();
        assert!((s.p_nz - 1.0).abs() < 1e-8);
        assert!(s.d_expected.abs() < 1e-9);
    }

    #[test]
    fn huge_step() {
        let s = closed_form_stats(1.0f64, 40.0).unwrap();
        assert_relative_eq!(s.p_nz, (-20f64).exp(), max_relative = 1e-12);
        // reference from high-precision quadrature
        assert_relative_eq!(s.d_expected, 0.999999995878, max_relative = 1e-11);
        assert_relative_eq!(s.d_zero, 0.999999956716, max_relative = 1e-11);
        assert_relative_eq!(s.d_nonzero, 3.91619188348e-8, max_relative = 1e-9);
    }

    #[test]
    fn closed_form_rejects_bad_input() {
        assert!(closed_form_stats(0.0f64, 1.0).is_err());
        assert!(closed_form_stats(1.0f64, -1.0).is_err());
    }

    #[test]
    fn closed_form_matches_quadrature() {
        for i in 0..12 {
            let lq = 0.05 * (400f64).powf(i as f64 / 11.0);
            for lambda in [0.05, 1.0, 7.0] {
                let q = lq / lambda;
                let c = closed_form_stats(lambda, q).unwrap();
                let n = laplacian_numeric_stats(lambda, q);
                assert_relative_eq!(c.p_nz, n.p_nz, max_relative = 1e-9);
                assert_relative_eq!(c.d_zero, n.d_zero, max_relative = 1e-6);
                assert_relative_eq!(c.d_nonzero, n.d_nonzero, max_relative = 1e-6);
                assert_relative_eq!(c.d_expected, n.d_expected(), max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn rate_examples() {
        for order in 0..=3 {
            assert_eq!(rate_from_pnz(0.0f64, order).unwrap(), 0.0);
        }
        assert_relative_eq!(rate_from_pnz(0.49307f64, 0).unwrap(), 1.558423355, epsilon = 1e-8);
        assert_relative_eq!(rate_from_pnz(0.1f64, 1).unwrap(), 0.2885390082, epsilon = 1e-9);
        assert!(rate_from_pnz(1.0f64, 0).is_err());
        assert!(rate_from_pnz(0.5f64, 4).is_err());
    }

    #[test]
    fn self_info_examples() {
        let l = 2f64.sqrt();
        assert_relative_eq!(self_info_rate(0, l, 1.0).unwrap(), 0.980137825862, epsilon = 1e-10);
        assert_relative_eq!(self_info_rate(1, l, 1.0).unwrap(), 2.4219967316, epsilon = 1e-9);
        assert_relative_eq!(self_info_rate(-2, l, 1.0).unwrap(), 4.46227562479, epsilon = 1e-9);
        assert_relative_eq!(self_info_rate(5, l, 1.0).unwrap(), 10.5831123044, epsilon = 1e-9);
        let p = self_info_params(l, 1.0).unwrap();
        assert_relative_eq!(p.beta1, 2.04027889319, epsilon = 1e-10);
        assert_relative_eq!(p.b1, 0.381717838404, epsilon = 1e-10);
    }

    #[test]
    fn self_info_probabilities_sum_to_one() {
        for (lambda, q) in [(2f64.sqrt(), 1.0), (0.3, 1.0), (1.0, 4.0), (0.5, 0.4)] {
            // the tail beyond |l| = 200 is below 1e-17 for these products
            let total: f64 = (-200i64..=200)
                .map(|l| 2f64.powf(-self_info_rate(l, lambda, q).unwrap()))
                .sum();
            assert!((total - 1.0).abs() < 1e-9, "lambda {lambda} q {q}: {total}");
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_block(1.0f64, 4, 4, 7).unwrap();
        let b = sample_block(1.0f64, 4, 4, 7).unwrap();
        assert_eq!(a, b);
        let c = sample_block(1.0f64, 4, 4, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sampling_mean_absolute_value() {
        let b = sample_block(1.0f64, 16, 16, 1).unwrap();
        let n = b.len() as f64;
        let mean = b.coeffs().iter().map(|c| c.abs()).sum::<f64>() / n;
        // |X| is exponential with mean sigma/sqrt(2) and the same standard deviation
        let expect = 1.0 / 2f64.sqrt();
        let se = expect / n.sqrt();
        assert!((mean - expect).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn sampling_rejects_bad_config() {
        assert!(matches!(sample_block(0.0f64, 4, 4, 1), Err(Error::Config(_))));
        assert!(matches!(sample_block(1.0f64, 40, 4, 1), Err(Error::Config(_))));
    }

    #[test]
    fn f32_closed_forms_track_f64() {
        let a = closed_form_stats(1.3f32, 0.9).unwrap();
        let b = closed_form_stats(1.3f64, 0.9).unwrap();
        assert!((a.d_expected as f64 - b.d_expected).abs() < 1e-6);
        assert!((a.tau as f64 - b.tau).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn order3_never_exceeds_exact(p in 0.0001f64..0.9999) {
            let exact = rate_from_pnz(p, 0).unwrap();
            let t3 = rate_from_pnz(p, 3).unwrap();
            let t2 = rate_from_pnz(p, 2).unwrap();
            let t1 = rate_from_pnz(p, 1).unwrap();
            // series and ln_1p forms agree to an ulp or so for tiny p
            prop_assert!(t1 <= t2 && t2 <= t3 && t3 <= exact * (1.0 + 1e-14));
        }

        #[test]
        fn self_info_increases_with_magnitude(l in 1i64..500, lambda in 0.01f64..10.0, q in 0.01f64..10.0) {
            let a = self_info_rate(l, lambda, q).unwrap();
            let b = self_info_rate(l + 1, lambda, q).unwrap();
            prop_assert!(b > a);
        }

        #[test]
        fn tau_depends_on_product_only(sigma in 0.1f64..50.0, q in 0.1f64..50.0) {
            let a = closed_form_stats(lambda_from_sigma(sigma).unwrap(), q).unwrap();
            let b = closed_form_stats(lambda_from_sigma(2.0 * sigma).unwrap(), 2.0 * q).unwrap();
            prop_assert!((a.tau - b.tau).abs() <= 1e-14);
        }
    }
}

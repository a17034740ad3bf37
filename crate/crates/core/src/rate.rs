//! Bit-cost surrogates and the linear block rate model
//! `R = alpha * L0 + beta * L1 + gamma * R_LP + epsilon`.
//!
//! The surrogate coder is stateless: a significance bin per scanned
//! position, then sign and a Golomb-Rice remainder for non-zero indices.
//! Every bin counts one bit.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scan::{check_dims, dim_slot, DiagonalScan, SLOTS};

pub const MAX_RICE_PARAM: u32 = 8;

/// Golomb-Rice code length of `value` with parameter `g`.
#[inline]
pub fn rice_bits(value: u64, g: u32) -> u64 {
    (value >> g) + 1 + g as u64
}

/// Surrogate cost of one quantization index, in bits.
pub fn surrogate_coeff_bits(index: i64, rice_g: u32) -> Result<f64> {
    if rice_g > MAX_RICE_PARAM {
        return Err(Error::Config(format!(
            "rice parameter must be at most {MAX_RICE_PARAM}, got {rice_g}"
        )));
    }
    Ok(surrogate_bits_unchecked(index.unsigned_abs(), rice_g) as f64)
}

#[inline]
pub(crate) fn surrogate_bits_unchecked(magnitude: u64, g: u32) -> u64 {
    if magnitude == 0 {
        1
    } else {
        2 + rice_bits(magnitude - 1, g)
    }
}

/// Prefix group of one last-position coordinate.
#[inline]
fn lp_group(c: usize) -> usize {
    if c < 4 {
        c
    } else {
        let lg = usize::BITS as usize - 1 - c.leading_zeros() as usize;
        2 * lg + ((c >> (lg - 1)) & 1)
    }
}

/// Truncated-unary prefix plus fixed-length suffix for one coordinate.
#[inline]
pub fn last_pos_coord_bits(c: usize) -> u32 {
    let g = lp_group(c);
    let suffix = ((g >> 1) as i64 - 1).max(0) as usize;
    (g + 1 + suffix) as u32
}

/// Bits for signalling the last non-zero position `(x, y)`.
pub fn last_pos_bits(x: usize, y: usize, width: usize, height: usize) -> Result<f64> {
    check_dims(width, height)?;
    if x >= width || y >= height {
        return Err(Error::Domain(format!(
            "last position ({x}, {y}) outside a {width}x{height} block"
        )));
    }
    Ok((last_pos_coord_bits(x) + last_pos_coord_bits(y)) as f64)
}

/// Last-position bits indexed by scan position for one block size.
#[derive(Debug, Clone, PartialEq)]
pub struct LastPosTable {
    bits: Vec<u32>,
}

impl LastPosTable {
    pub fn new(scan: &DiagonalScan) -> Self {
        let bits = (0..scan.len())
            .map(|s| {
                let (x, y) = scan.position(s);
                last_pos_coord_bits(x) + last_pos_coord_bits(y)
            })
            .collect();
        Self { bits }
    }

    pub fn cached(width: usize, height: usize) -> Result<&'static LastPosTable> {
        static TABLE: [OnceLock<LastPosTable>; SLOTS] = [const { OnceLock::new() }; SLOTS];
        let scan = DiagonalScan::cached(width, height)?;
        Ok(TABLE[dim_slot(width, height)].get_or_init(|| LastPosTable::new(scan)))
    }

    #[inline]
    pub fn bits(&self, scan_pos: usize) -> u32 {
        self.bits[scan_pos]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateModelParams<T> {
    pub alpha: T,
    pub beta: T,
    pub gamma: T,
    pub epsilon: T,
}

impl<T: Scalar> RateModelParams<T> {
    pub fn new(alpha: T, beta: T, gamma: T, epsilon: T) -> Self {
        Self {
            alpha,
            beta,
            gamma,
            epsilon,
        }
    }

    /// `alpha > 0 && beta > 0`, which the pruning and departure analysis
    /// rely on.
    pub fn is_admissible(&self) -> bool {
        self.alpha > T::zero() && self.beta > T::zero()
    }
}

pub fn block_rate_estimate<T: Scalar>(l0: T, l1: T, r_lp: T, params: &RateModelParams<T>) -> T {
    params.alpha * l0 + params.beta * l1 + params.gamma * r_lp + params.epsilon
}

/// `(#non-zero, sum |index|)`.
pub fn count_norms(indices: &[i64]) -> (u64, u64) {
    indices.iter().fold((0, 0), |(l0, l1), &v| {
        (l0 + (v != 0) as u64, l1 + v.unsigned_abs())
    })
}

/// Highest scan position holding a non-zero index.
pub fn last_nonzero(indices: &[i64]) -> Option<usize> {
    indices.iter().rposition(|&v| v != 0)
}

/// Total surrogate bits of a block whose indices are given in scan order.
///
/// Zero for an all-zero block; otherwise cbf + last position + one
/// surrogate code per position from `last_pos` down to DC.
pub fn block_actual_bits(
    indices: &[i64],
    last_pos: Option<usize>,
    scan: &DiagonalScan,
    rice_g: u32,
    r_cbf: f64,
) -> Result<f64> {
    if indices.len() != scan.len() {
        return Err(Error::Contract(format!(
            "{} indices for a block of {} coefficients",
            indices.len(),
            scan.len()
        )));
    }
    if rice_g > MAX_RICE_PARAM {
        return Err(Error::Config(format!("rice parameter {rice_g} above {MAX_RICE_PARAM}")));
    }
    let actual_last = last_nonzero(indices);
    match (last_pos, actual_last) {
        (_, None) => Ok(0.0),
        (None, Some(p)) => Err(Error::Contract(format!(
            "non-zero index at scan {p} but no last position given"
        ))),
        (Some(lp), Some(p)) if p > lp => Err(Error::Contract(format!(
            "non-zero index at scan {p} beyond last position {lp}"
        ))),
        (Some(lp), Some(_)) => {
            if lp >= scan.len() {
                return Err(Error::Contract(format!("last position {lp} outside the block")));
            }
            let (x, y) = scan.position(lp);
            let coeff: u64 = indices[..=lp]
                .iter()
                .map(|v| surrogate_bits_unchecked(v.unsigned_abs(), rice_g))
                .sum();
            Ok(r_cbf + last_pos_bits(x, y, scan.width(), scan.height())? + coeff as f64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockRateObservation<T> {
    pub l0_norm: T,
    pub l1_norm: T,
    pub r_lp: T,
    pub actual_bits: T,
}

impl<T: Scalar> BlockRateObservation<T> {
    /// Observation for a block coded with the surrogate coder.
    pub fn from_indices(indices: &[i64], scan: &DiagonalScan, rice_g: u32, r_cbf: f64) -> Result<Self> {
        let last = last_nonzero(indices);
        let (l0, l1) = count_norms(indices);
        let r_lp = match last {
            Some(p) => LastPosTable::cached(scan.width(), scan.height())?.bits(p) as f64,
            None => 0.0,
        };
        let bits = block_actual_bits(indices, last, scan, rice_g, r_cbf)?;
        Ok(Self {
            l0_norm: T::lit(l0 as f64),
            l1_norm: T::lit(l1 as f64),
            r_lp: T::lit(r_lp),
            actual_bits: T::lit(bits),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport<T> {
    pub params: RateModelParams<T>,
    pub r_squared: T,
    pub rms_bits: T,
    pub observations: usize,
}

pub const REGRESSOR_NAMES: [&str; 4] = ["intercept", "l0_norm", "l1_norm", "r_lp"];

/// Ordinary least squares over the columns `(1, L0, L1, R_LP)`, solved with
/// a Householder QR factorization.
pub fn fit_rate_params<T: Scalar>(observations: &[BlockRateObservation<T>]) -> Result<FitReport<T>> {
    const P: usize = 4;
    let n = observations.len();
    if n < P {
        return Err(Error::Fit(format!(
            "need at least {P} observations to fit {P} parameters, got {n}"
        )));
    }
    // column-major design matrix
    let mut a: Vec<Vec<T>> = vec![
        vec![T::one(); n],
        observations.iter().map(|o| o.l0_norm).collect(),
        observations.iter().map(|o| o.l1_norm).collect(),
        observations.iter().map(|o| o.r_lp).collect(),
    ];
    let y: Vec<T> = observations.iter().map(|o| o.actual_bits).collect();
    let col_norms: Vec<T> = a.iter().map(|c| norm(c)).collect();
    let mut qty = y.clone();
    let mut diag = [T::zero(); P];

    for k in 0..P {
        let alpha_k = norm(&a[k][k..]);
        let tol = T::lit(1e-10) * col_norms[k].max(T::one());
        if alpha_k <= tol {
            let names: Vec<&str> = REGRESSOR_NAMES[..k].to_vec();
            return Err(Error::Fit(format!(
                "rank-deficient design: column `{}` is linearly dependent on {:?}",
                REGRESSOR_NAMES[k], names
            )));
        }
        let sign = if a[k][k] >= T::zero() { T::one() } else { -T::one() };
        let mut v: Vec<T> = a[k][k..].to_vec();
        v[0] = v[0] + sign * alpha_k;
        let vnorm2: T = v.iter().map(|&x| x * x).sum();
        let reflect = |col: &mut [T]| {
            let dot: T = v.iter().zip(col.iter()).map(|(&vi, &ci)| vi * ci).sum();
            let f = (dot + dot) / vnorm2;
            for (ci, &vi) in col.iter_mut().zip(v.iter()) {
                *ci = *ci - f * vi;
            }
        };
        for col in a.iter_mut().skip(k) {
            reflect(&mut col[k..]);
        }
        reflect(&mut qty[k..]);
        diag[k] = a[k][k];
    }

    // back substitution on the upper triangle
    let mut coef = [T::zero(); P];
    for i in (0..P).rev() {
        let mut s = qty[i];
        for j in (i + 1)..P {
            s = s - a[j][i] * coef[j];
        }
        coef[i] = s / diag[i];
    }
    let params = RateModelParams {
        epsilon: coef[0],
        alpha: coef[1],
        beta: coef[2],
        gamma: coef[3],
    };

    let mean = y.iter().copied().sum::<T>() / T::lit(n as f64);
    let mut ss_res = T::zero();
    let mut ss_tot = T::zero();
    for o in observations {
        let r = o.actual_bits - block_rate_estimate(o.l0_norm, o.l1_norm, o.r_lp, &params);
        ss_res = ss_res + r * r;
        let d = o.actual_bits - mean;
        ss_tot = ss_tot + d * d;
    }
    let r_squared = if ss_tot > T::zero() {
        T::one() - ss_res / ss_tot
    } else {
        T::one()
    };
    Ok(FitReport {
        params,
        r_squared,
        rms_bits: (ss_res / T::lit(n as f64)).sqrt(),
        observations: n,
    })
}

fn norm<T: Scalar>(v: &[T]) -> T {
    let scale = v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    if scale == T::zero() {
        return T::zero();
    }
    v.iter().map(|&x| (x / scale) * (x / scale)).sum::<T>().sqrt() * scale
}

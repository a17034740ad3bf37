//! Scalar quantization, the two-quantizer state machine and level
//! reconstruction.
//!
//! Dependent quantization keeps two reconstruction grids: `Q0` places
//! levels on even multiples of the step, `Q1` on odd multiples. Which grid
//! applies to a coefficient is decided by a four-state machine driven by
//! the parity of the previously coded index (in reverse scan order).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scan::{check_dims, DiagonalScan};

/// Packed transition table: two bits per `(state, parity)` pair.
pub const STATE_TRANSITION_TABLE: u32 = 32040;

/// Default multiplier relating the Lagrangian to the squared step.
pub const DEFAULT_PHI: f64 = 0.0897;

/// A block of transform coefficients in raster order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block<T> {
    coeffs: Vec<T>,
    width: usize,
    height: usize,
}

impl<T: Scalar> Block<T> {
    pub fn new(coeffs: Vec<T>, width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        if coeffs.len() != width * height {
            return Err(Error::Config(format!(
                "block {width}x{height} needs {} coefficients, got {}",
                width * height,
                coeffs.len()
            )));
        }
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::Domain(format!("coefficient {i} is not finite")));
        }
        Ok(Self {
            coeffs,
            width,
            height,
        })
    }

    /// Builds a block from coefficients listed in scan order.
    pub fn from_scan_order(scan_coeffs: &[T], width: usize, height: usize) -> Result<Self> {
        let scan = DiagonalScan::cached(width, height)?;
        if scan_coeffs.len() != scan.len() {
            return Self::new(scan_coeffs.to_vec(), width, height);
        }
        let mut coeffs = vec![T::zero(); scan.len()];
        for (s, &c) in scan_coeffs.iter().enumerate() {
            coeffs[scan.raster(s)] = c;
        }
        Self::new(coeffs, width, height)
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::new(vec![T::zero(); width * height], width, height)
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn scan(&self) -> &'static DiagonalScan {
        DiagonalScan::cached(self.width, self.height).expect("validated at construction")
    }

    /// Coefficients rearranged into scan order.
    pub fn scan_ordered(&self) -> Vec<T> {
        let scan = self.scan();
        (0..scan.len()).map(|s| self.coeffs[scan.raster(s)]).collect()
    }
}

/// Per-run quantization knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantConfig<T> {
    pub q_step: T,
    /// Rounding offset used by hard-decision quantization.
    pub f_offset: T,
    /// Informational only; `None` when the step was given directly.
    pub qp: Option<i32>,
    pub lambda_rd: T,
    pub phi: T,
    /// Bits for the coded-block-flag transition out of the uncoded state.
    pub r_cbf: T,
    /// Bits charged for the sign of every non-zero index.
    pub sign_bits: T,
}

/// `q_step = 2^((qp - 4) / 6)`.
pub fn q_step_from_qp<T: Scalar>(qp: i32) -> T {
    T::lit(2f64.powf((qp as f64 - 4.0) / 6.0))
}

impl<T: Scalar> QuantConfig<T> {
    /// Configuration with `lambda = phi * q_step^2` and the default bit
    /// charges (one bit each for the cbf transition and for a sign).
    pub fn with_step(q_step: T, phi: T) -> Result<Self> {
        let cfg = Self {
            q_step,
            f_offset: T::lit(0.5),
            qp: None,
            lambda_rd: phi * q_step * q_step,
            phi,
            r_cbf: T::one(),
            sign_bits: T::one(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_qp(qp: i32, phi: T) -> Result<Self> {
        let mut cfg = Self::with_step(q_step_from_qp(qp), phi)?;
        cfg.qp = Some(qp);
        Ok(cfg)
    }

    /// Replaces `phi` and recomputes the Lagrangian.
    pub fn set_phi(&mut self, phi: T) {
        self.phi = phi;
        self.lambda_rd = phi * self.q_step * self.q_step;
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q_step > T::zero()) || !self.q_step.is_finite() {
            return Err(Error::Config(format!("q_step must be positive, got {}", self.q_step)));
        }
        if !(self.f_offset >= T::zero() && self.f_offset < T::one()) {
            return Err(Error::Config(format!(
                "rounding offset must lie in [0, 1), got {}",
                self.f_offset
            )));
        }
        if !(self.lambda_rd >= T::zero()) {
            return Err(Error::Config(format!("lambda must be non-negative, got {}", self.lambda_rd)));
        }
        let expect = self.phi * self.q_step * self.q_step;
        let tol = T::lit(1e-12) * expect.abs().max(T::min_positive_value());
        if (self.lambda_rd - expect).abs() > tol.max(T::epsilon() * T::lit(4.0) * expect.abs()) {
            return Err(Error::Config(format!(
                "lambda {} is not phi * q_step^2 = {}",
                self.lambda_rd, expect
            )));
        }
        if !(self.r_cbf >= T::zero()) || !(self.sign_bits >= T::zero()) {
            return Err(Error::Config("bit charges must be non-negative".into()));
        }
        Ok(())
    }
}

/// Decoder state: one of the four coded states or the uncoded marker used
/// by the trellis before the first non-zero index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateId(u8);

impl StateId {
    pub const UNCODED: StateId = StateId(4);

    pub fn coded(value: u8) -> Result<Self> {
        if value < 4 {
            Ok(StateId(value))
        } else {
            Err(Error::Contract(format!("coded state must be in 0..4, got {value}")))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn is_coded(self) -> bool {
        self.0 < 4
    }

    /// 0 selects `Q0` (even levels), 1 selects `Q1` (odd levels).
    pub fn quantizer(self) -> u8 {
        debug_assert!(self.is_coded());
        self.0 >> 1
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_coded() {
            write!(f, "{}", self.0)
        } else {
            f.write_str("uncoded")
        }
    }
}

/// `sign(c) * floor(|c| / q_step + f_offset)`.
#[inline]
pub fn scalar_quantize<T: Scalar>(c: T, q_step: T, f_offset: T) -> i64 {
    let mag = (c.abs() / q_step + f_offset).floor();
    let mag = mag.to_i64().unwrap_or(i64::MAX);
    if c < T::zero() {
        -mag
    } else {
        mag
    }
}

#[inline]
pub(crate) fn next_state_raw(state: u8, parity: u8) -> u8 {
    ((STATE_TRANSITION_TABLE >> (((state as u32) << 2) + ((parity as u32) << 1))) & 3) as u8
}

pub fn next_state(st: StateId, parity: u8) -> Result<StateId> {
    if !st.is_coded() {
        return Err(Error::Contract(
            "the uncoded state has no decoder transition".into(),
        ));
    }
    if parity > 1 {
        return Err(Error::Contract(format!("parity must be 0 or 1, got {parity}")));
    }
    Ok(StateId(next_state_raw(st.0, parity)))
}

#[inline]
pub(crate) fn parity_of(index: i64) -> u8 {
    (index & 1) as u8
}

/// `2 * index - (st >> 1) * sign(index)`.
#[inline]
pub fn reconstruct_level(index: i64, st: StateId) -> i64 {
    2 * index - (st.quantizer() as i64) * index.signum()
}

/// Index that carries a non-negative level on the quantizer matching the
/// level's parity: levels 1 and 2 map to 1, 3 and 4 to 2, and so on.
#[inline]
pub fn index_of_level(level: i64) -> i64 {
    debug_assert!(level >= 0);
    (level + 1) / 2
}

/// `(c - q_step * level(index, st))^2`.
#[inline]
pub fn branch_distortion<T: Scalar>(c: T, index: i64, st: StateId, q_step: T) -> T {
    let e = c - q_step * T::from_int(reconstruct_level(index, st));
    e * e
}

/// Output of [`dequantize_block`], all vectors in scan order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dequantized<T> {
    pub levels: Vec<i64>,
    /// State each position was reconstructed with.
    pub states: Vec<StateId>,
    pub coeffs: Vec<T>,
    /// State after the lowest scan position has been processed.
    pub final_state: StateId,
}

/// Decoder-side reconstruction. `indices` is in scan order; processing runs
/// from the highest scan position down to 0 starting in state 0.
pub fn dequantize_block<T: Scalar>(indices: &[i64], q_step: T) -> Dequantized<T> {
    let n = indices.len();
    let mut levels = vec![0i64; n];
    let mut states = vec![StateId(0); n];
    let mut coeffs = vec![T::zero(); n];
    let mut st = 0u8;
    for i in (0..n).rev() {
        let idx = indices[i];
        let level = reconstruct_level(idx, StateId(st));
        states[i] = StateId(st);
        levels[i] = level;
        coeffs[i] = T::from_int(level) * q_step;
        st = next_state_raw(st, parity_of(idx));
    }
    Dequantized {
        levels,
        states,
        coeffs,
        final_state: StateId(st),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Hand-derived from the state diagram: row = state, column = parity.
    const FIXTURE: [[u8; 2]; 4] = [[0, 2], [2, 0], [1, 3], [3, 1]];

    #[test]
    fn transitions_match_fixture() {
        for s in 0..4u8 {
            for p in 0..2u8 {
                let got = next_state(StateId::coded(s).unwrap(), p).unwrap();
                assert_eq!(got.value(), FIXTURE[s as usize][p as usize], "({s},{p})");
            }
        }
    }

    #[test]
    fn uncoded_has_no_transition() {
        assert!(matches!(next_state(StateId::UNCODED, 0), Err(Error::Contract(_))));
        assert!(StateId::coded(4).is_err());
    }

    #[test]
    fn scalar_quantize_examples() {
        assert_eq!(scalar_quantize(3.7, 1.0, 0.5), 4);
        assert_eq!(scalar_quantize(-3.2, 1.0, 0.5), -3);
        assert_eq!(scalar_quantize(0.0, 7.0, 0.9), 0);
        assert_eq!(scalar_quantize(0.49, 1.0, 0.5), 0);
        assert_eq!(scalar_quantize(2.6, 2.0, 0.0), 1);
    }

    #[test]
    fn reconstruct_examples() {
        let st = |v| StateId::coded(v).unwrap();
        assert_eq!(reconstruct_level(3, st(2)), 5);
        assert_eq!(reconstruct_level(-2, st(3)), -3);
        for s in 0..4 {
            assert_eq!(reconstruct_level(0, st(s)), 0);
        }
    }

    #[test]
    fn distortion_examples() {
        let st = |v| StateId::coded(v).unwrap();
        assert_eq!(branch_distortion(2.0, 1, st(0), 1.0), 0.0);
        assert!((branch_distortion(2.6f64, 1, st(2), 1.0) - 2.56).abs() < 1e-12);
        for s in 0..4 {
            assert!((branch_distortion(-0.4f64, 0, st(s), 1.0) - 0.16).abs() < 1e-12);
        }
    }

    #[test]
    fn dequantize_traces_the_state_machine() {
        // scan order [2, 0, 1] == indices [1, 0, 2] from the highest position down
        let out = dequantize_block(&[2i64, 0, 1], 1.0f64);
        assert_eq!(out.levels, vec![4, 0, 2]);
        assert_eq!(out.coeffs, vec![4.0, 0.0, 2.0]);
        let states: Vec<u8> = out.states.iter().map(|s| s.value()).collect();
        assert_eq!(states, vec![1, 2, 0]);
        assert_eq!(out.final_state.value(), 2);
    }

    #[test]
    fn dequantize_zero_path() {
        let out = dequantize_block(&[0i64; 16], 3.0f64);
        assert!(out.coeffs.iter().all(|&c| c == 0.0));
        assert_eq!(out.final_state.value(), 0);
    }

    #[test]
    fn qp_mapping() {
        assert!((q_step_from_qp::<f64>(4) - 1.0).abs() < 1e-15);
        assert!((q_step_from_qp::<f64>(22) - 8.0).abs() < 1e-12);
        let cfg = QuantConfig::<f64>::from_qp(37, DEFAULT_PHI).unwrap();
        assert!((cfg.lambda_rd - DEFAULT_PHI * cfg.q_step * cfg.q_step).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(QuantConfig::<f64>::with_step(0.0, 0.1).is_err());
        let mut c = QuantConfig::<f64>::with_step(2.0, 0.1).unwrap();
        c.lambda_rd = 1.0;
        assert!(c.validate().is_err());
        c.set_phi(0.25);
        assert!(c.validate().is_ok());
        assert_eq!(c.lambda_rd, 1.0);
    }

    #[test]
    fn block_validation() {
        assert!(Block::new(vec![0.0f64; 3], 2, 2).is_err());
        assert!(Block::new(vec![0.0f64, f64::NAN, 0.0, 0.0], 2, 2).is_err());
        assert!(Block::new(vec![0.0f64; 132], 33, 4).is_err());
        let b = Block::from_scan_order(&[1.0f64, 2.0, 3.0, 4.0], 2, 2).unwrap();
        assert_eq!(b.coeffs(), &[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(b.scan_ordered(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    proptest! {
        #[test]
        fn level_parity_follows_quantizer(idx in -500i64..500, s in 0u8..4) {
            prop_assume!(idx != 0);
            let level = reconstruct_level(idx, StateId::coded(s).unwrap());
            prop_assert_eq!(level % 2 == 0, s >> 1 == 0);
            prop_assert_eq!(level.signum(), idx.signum());
        }

        #[test]
        fn quantizer_is_odd(c in -1.0e4f64..1.0e4, q in 0.01f64..100.0, f in 0.0f64..0.99) {
            prop_assert_eq!(scalar_quantize(c, q, f), -scalar_quantize(-c, q, f));
        }

        #[test]
        fn index_of_level_inverts_reconstruction(level in 1i64..1000) {
            let idx = index_of_level(level);
            let st = StateId::coded(if level % 2 == 0 { 0 } else { 2 }).unwrap();
            prop_assert_eq!(reconstruct_level(idx, st), level);
        }
    }
}

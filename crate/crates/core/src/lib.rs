//! Dependent (trellis-coded) quantization of transform coefficient blocks.
//!
//! The crate covers the Laplacian source model with its closed-form rate
//! and distortion statistics, the two-quantizer state machine, a surrogate
//! entropy coder with a fitted linear block rate model, the Viterbi search
//! with operation counters, an exhaustive oracle, and the low-complexity
//! variants (postponed departure point and candidate pruning).
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` / `*32` aliases below pin the common instantiations.

// `!(x > 0)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod brute;
pub mod error;
pub mod fast;
pub mod quadrature;
pub mod quant;
pub mod rate;
pub mod scalar;
pub mod scan;
pub mod source;
pub mod trellis;

pub use brute::{brute_force_search, evaluate_indices, BRUTE_FORCE_GUARD};
pub use error::{Error, Result};
pub use fast::{
    accelerated_search, analytic_k_factor, delta_distortion, delta_rate_linear, departure_delta_j, departure_point,
    departure_threshold, find_departure_point, prune_candidates, DepartureConfig, LpDelta, PruneCase, PruneDecision,
};
pub use quant::{
    branch_distortion, dequantize_block, index_of_level, next_state, q_step_from_qp, reconstruct_level, scalar_quantize,
    Block, QuantConfig, StateId, DEFAULT_PHI,
};
pub use rate::{
    block_actual_bits, block_rate_estimate, count_norms, fit_rate_params, last_pos_bits, surrogate_coeff_bits,
    BlockRateObservation, FitReport, RateModelParams,
};
pub use scalar::Scalar;
pub use scan::DiagonalScan;
pub use source::{closed_form_stats, lambda_from_sigma, rate_from_pnz, sample_block, self_info_rate, ClosedFormStats, LaplacianParams};
pub use trellis::{
    build_candidates, hdq_quantize, rd_cost, tcq_search, tcq_search_with, CandidateSet, HdqResult, OpCounters, RateMode,
    SearchOptions, StageTally, SurvivorRule, TrellisResult,
};

pub type Block64 = Block<f64>;
pub type QuantConfig64 = QuantConfig<f64>;
pub type RateModelParams64 = RateModelParams<f64>;
pub type RateMode64 = RateMode<f64>;
pub type TrellisResult64 = TrellisResult<f64>;
pub type DepartureConfig64 = DepartureConfig<f64>;

pub type Block32 = Block<f32>;
pub type QuantConfig32 = QuantConfig<f32>;
pub type RateModelParams32 = RateModelParams<f32>;
pub type RateMode32 = RateMode<f32>;
pub type TrellisResult32 = TrellisResult<f32>;
pub type DepartureConfig32 = DepartureConfig<f32>;

//! Low-complexity search: a postponed trellis start ("departure point")
//! and per-stage candidate pruning, plus the cost-difference primitives
//! both are derived from.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quant::{index_of_level, scalar_quantize, Block, QuantConfig};
use crate::rate::{LastPosTable, RateModelParams};
use crate::scalar::Scalar;
use crate::trellis::{build_candidates, natural_start, run_trellis, CandidateSet, RateMode, SearchOptions, TrellisResult};

/// Which last-position difference enters the exact threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpDelta {
    /// Treat the last-position bits of both candidates as equal.
    #[default]
    Zero,
    /// Use the true table difference between the two positions.
    Lookup,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DepartureConfig<T> {
    /// `T = q_step * k_factor` at every position.
    Bound { k_factor: T },
    /// Per-position threshold at which dropping the coefficient stops
    /// paying off under the linear rate model.
    Exact { params: RateModelParams<T>, lp_delta: LpDelta },
}

pub const SAFE_K_FACTOR: f64 = 2.0;
pub const RISKY_K_FACTOR: f64 = 2.5;

/// `sqrt(phi * alpha) + phi * beta / 4`.
pub fn analytic_k_factor<T: Scalar>(phi: T, params: &RateModelParams<T>) -> T {
    (phi * params.alpha).sqrt() + phi * params.beta / T::lit(4.0)
}

impl<T: Scalar> DepartureConfig<T> {
    pub fn bound(k_factor: T) -> Result<Self> {
        if !(k_factor >= T::zero()) || !k_factor.is_finite() {
            return Err(Error::Config(format!("k factor must be finite and non-negative, got {k_factor}")));
        }
        Ok(DepartureConfig::Bound { k_factor })
    }

    pub fn safe() -> Self {
        DepartureConfig::Bound {
            k_factor: T::lit(SAFE_K_FACTOR),
        }
    }

    pub fn risky() -> Self {
        DepartureConfig::Bound {
            k_factor: T::lit(RISKY_K_FACTOR),
        }
    }

    /// Threshold zero: the trellis starts at the natural position.
    pub fn disabled() -> Self {
        DepartureConfig::Bound { k_factor: T::zero() }
    }

    pub fn analytic(phi: T, params: &RateModelParams<T>) -> Result<Self> {
        if !params.is_admissible() {
            return Err(Error::Config("analytic k factor needs alpha, beta > 0".into()));
        }
        Self::bound(analytic_k_factor(phi, params))
    }

    pub fn exact(params: RateModelParams<T>, lp_delta: LpDelta) -> Result<Self> {
        if !params.is_admissible() {
            return Err(Error::Config("exact departure needs alpha, beta > 0".into()));
        }
        Ok(DepartureConfig::Exact { params, lp_delta })
    }
}

/// Magnitude threshold below which a coefficient at the departure
/// candidate is zeroed. `l_level` and `r_lp_delta` only matter in exact mode.
pub fn departure_threshold<T: Scalar>(cfg: &QuantConfig<T>, dep: &DepartureConfig<T>, l_level: i64, r_lp_delta: T) -> Result<T> {
    match dep {
        DepartureConfig::Bound { k_factor } => Ok(cfg.q_step * *k_factor),
        DepartureConfig::Exact { params, .. } => {
            if l_level < 1 {
                return Err(Error::Domain(format!("exact threshold needs a non-zero level, got {l_level}")));
            }
            let ql = cfg.q_step * T::from_int(l_level);
            let idx = T::from_int(index_of_level(l_level));
            let rate = params.alpha + params.beta * idx + params.gamma * r_lp_delta;
            Ok(T::lit(0.5) * (ql + cfg.lambda_rd * rate / ql))
        }
    }
}

/// Walks the non-zero pre-quantized coefficients from the top of the scan
/// and returns the first one whose magnitude exceeds `threshold(pos, c_abs,
/// level, next_nonzero_below)`. `None` when every coefficient is dropped.
pub fn find_departure_point_by<T, F>(block: &Block<T>, cfg: &QuantConfig<T>, mut threshold: F) -> Result<Option<usize>>
where
    T: Scalar,
    F: FnMut(usize, T, i64, Option<usize>) -> Result<T>,
{
    let c = block.scan_ordered();
    let half = T::lit(0.5);
    let levels: Vec<i64> = c.iter().map(|&x| scalar_quantize(x.abs(), cfg.q_step, half)).collect();
    let mut cur = levels.iter().rposition(|&l| l != 0);
    while let Some(i) = cur {
        let below = levels[..i].iter().rposition(|&l| l != 0);
        let t = threshold(i, c[i].abs(), levels[i], below)?;
        if c[i].abs() > t {
            return Ok(Some(i));
        }
        cur = below;
    }
    Ok(None)
}

/// Departure point under a fixed threshold.
pub fn find_departure_point<T: Scalar>(block: &Block<T>, cfg: &QuantConfig<T>, threshold: T) -> Result<Option<usize>> {
    if !(threshold >= T::zero()) {
        return Err(Error::Domain(format!("threshold must be non-negative, got {threshold}")));
    }
    find_departure_point_by(block, cfg, |_, _, _, _| Ok(threshold))
}

/// Departure point for a departure configuration.
pub fn departure_point<T: Scalar>(block: &Block<T>, cfg: &QuantConfig<T>, dep: &DepartureConfig<T>) -> Result<Option<usize>> {
    match dep {
        DepartureConfig::Bound { .. } => find_departure_point(block, cfg, departure_threshold(cfg, dep, 1, T::zero())?),
        DepartureConfig::Exact { lp_delta, .. } => {
            let lp = LastPosTable::cached(block.width(), block.height())?;
            find_departure_point_by(block, cfg, |i, _, level, below| {
                let delta = match (lp_delta, below) {
                    (LpDelta::Zero, _) => T::zero(),
                    (LpDelta::Lookup, Some(j)) => T::from_int(lp.bits(i) as i64 - lp.bits(j) as i64),
                    (LpDelta::Lookup, None) => T::from_int(lp.bits(i) as i64),
                };
                departure_threshold(cfg, dep, level, delta)
            })
        }
    }
}

/// Distortion gain of moving the reconstruction from level `l` to `l + delta_l`
/// (positive when the move lowers distortion).
pub fn delta_distortion<T: Scalar>(c_abs: T, l_level: i64, delta_l: i64, q_step: T) -> T {
    let dl = T::from_int(delta_l);
    -(q_step * q_step) * dl * dl + T::lit(2.0) * q_step * (c_abs - T::from_int(l_level) * q_step) * dl
}

/// Rate gain of moving from index `from` to index `to` under the linear model.
pub fn delta_rate_linear<T: Scalar>(from: i64, to: i64, params: &RateModelParams<T>) -> T {
    let eta = match (from != 0, to != 0) {
        (false, true) => 1,
        (true, false) => -1,
        _ => 0,
    };
    let dl = to.unsigned_abs() as i64 - from.unsigned_abs() as i64;
    -params.alpha * T::from_int(eta) - params.beta * T::from_int(dl)
}

/// Cost change of zeroing the coefficient at position `i` (level `l_level`)
/// so that the last non-zero moves down to `j`. Non-positive means
/// dropping `i` does not hurt.
pub fn departure_delta_j<T: Scalar>(
    c_abs: T,
    l_level: i64,
    params: &RateModelParams<T>,
    cfg: &QuantConfig<T>,
    r_lp_i: T,
    r_lp_j: T,
) -> Result<T> {
    if l_level < 1 {
        return Err(Error::Domain(format!("level must be at least 1, got {l_level}")));
    }
    let ql = cfg.q_step * T::from_int(l_level);
    let dd = -(ql * ql - T::lit(2.0) * ql * c_abs);
    let idx = T::from_int(index_of_level(l_level));
    let dr = -(params.alpha + params.beta * idx + params.gamma * (r_lp_i - r_lp_j));
    Ok(dd + cfg.lambda_rd * dr)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneCase {
    /// Pre-quantized level 0.
    Zero,
    /// Pre-quantized level 1 or 2.
    Small,
    /// Pre-quantized level above 2.
    Large,
}

impl PruneCase {
    pub fn id(self) -> u8 {
        match self {
            PruneCase::Zero => 1,
            PruneCase::Small => 2,
            PruneCase::Large => 3,
        }
    }

    pub fn from_level(l_level: i64) -> Self {
        match l_level {
            l if l <= 0 => PruneCase::Zero,
            1 | 2 => PruneCase::Small,
            _ => PruneCase::Large,
        }
    }

    /// Same classification from the magnitude, without a division.
    pub fn from_magnitude<T: Scalar>(c_abs: T, q_step: T) -> Self {
        if c_abs < T::lit(0.5) * q_step {
            PruneCase::Zero
        } else if c_abs < T::lit(2.5) * q_step {
            PruneCase::Small
        } else {
            PruneCase::Large
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PruneDecision {
    pub kept_levels: CandidateSet,
    pub dropped_levels: CandidateSet,
    pub case_id: PruneCase,
}

/// Cases 1 and 2 drop the two largest levels, case 3 drops level 0.
pub fn prune_candidates(candidates: &CandidateSet, l_level: i64) -> Result<PruneDecision> {
    let expected: &[i64] = if l_level > 2 {
        &[0, l_level - 2, l_level - 1, l_level, l_level + 1]
    } else {
        &[0, 1, 2, 3, 4]
    };
    if candidates.levels() != expected || l_level < 0 {
        return Err(Error::Contract(format!(
            "candidate set {:?} was not built for level {l_level}",
            candidates.levels()
        )));
    }
    let case_id = PruneCase::from_level(l_level);
    let (kept, dropped): (&[i64], &[i64]) = match case_id {
        PruneCase::Zero | PruneCase::Small => (&expected[..3], &expected[3..]),
        PruneCase::Large => (&expected[1..], &expected[..1]),
    };
    Ok(PruneDecision {
        kept_levels: CandidateSet::from_levels(kept, l_level),
        dropped_levels: CandidateSet::from_levels(dropped, l_level),
        case_id,
    })
}

/// Trellis search starting at the departure point, optionally with pruned
/// candidate sets.
pub fn accelerated_search<T: Scalar>(
    block: &Block<T>,
    cfg: &QuantConfig<T>,
    rate: &RateMode<T>,
    departure: &DepartureConfig<T>,
    prune: bool,
) -> Result<TrellisResult<T>> {
    cfg.validate()?;
    let c = block.scan_ordered();
    let start = match departure {
        DepartureConfig::Bound { k_factor } if *k_factor == T::zero() => natural_start(&c, cfg.q_step),
        _ => departure_point(block, cfg, departure)?,
    };
    run_trellis(block, &c, cfg, rate, start, prune, SearchOptions::default())
}

/// Pre-quantized level the trellis classifies a magnitude with.
pub fn pre_level<T: Scalar>(c_abs: T, q_step: T) -> i64 {
    build_candidates(c_abs, q_step).pre_level()
}

//! Viterbi search over the dependent-quantization trellis.
//!
//! Stages are scan positions, visited from the highest admitted position
//! down to DC. Each stage has five nodes: the four decoder states and an
//! "uncoded" node standing for "no non-zero index emitted yet". Leaving the
//! uncoded node happens on the first non-zero index, which is always
//! reconstructed with `Q0` (the decoder starts in state 0) and charges the
//! cbf transition plus the last-position bits on top of the index itself.
//!
//! Every coded node offers three branches: the zero index and the two
//! candidate levels of its quantizer. The uncoded node offers staying
//! uncoded plus the two `Q0` candidates. Branch metrics are computed once
//! per distinct candidate level and shared between nodes.

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fast::{prune_candidates, PruneCase};
use crate::quant::{index_of_level, next_state_raw, scalar_quantize, Block, QuantConfig, StateId};
use crate::rate::{surrogate_bits_unchecked, LastPosTable, RateModelParams};
use crate::scalar::Scalar;

pub(crate) const UNCODED: usize = 4;
const NODES: usize = 5;

/// How index bits are charged inside the search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RateMode<T> {
    /// Stateless significance + sign + Rice code with the given parameter.
    Surrogate { rice_g: u32 },
    /// `alpha * [index != 0] + beta * |index|` from a fitted block model.
    LinearModel(RateModelParams<T>),
}

impl<T: Scalar> RateMode<T> {
    /// Bits for an index magnitude emitted at a coded state.
    #[inline]
    pub fn index_bits(&self, magnitude: u64, cfg: &QuantConfig<T>) -> T {
        match self {
            RateMode::Surrogate { rice_g } => {
                if magnitude == 0 {
                    T::one()
                } else {
                    // the surrogate code carries one sign bin; swap in the configured charge
                    T::from_int(surrogate_bits_unchecked(magnitude, *rice_g) as i64 - 1) + cfg.sign_bits
                }
            }
            RateMode::LinearModel(p) => {
                if magnitude == 0 {
                    T::zero()
                } else {
                    p.alpha + p.beta * T::from_int(magnitude as i64)
                }
            }
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if let RateMode::Surrogate { rice_g } = self {
            if *rice_g > crate::rate::MAX_RICE_PARAM {
                return Err(crate::Error::Config(format!(
                    "rice parameter {rice_g} above {}",
                    crate::rate::MAX_RICE_PARAM
                )));
            }
        }
        Ok(())
    }
}

/// Branch-metric and add-compare-select tallies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounters {
    pub branches: u64,
    pub dist_evals: u64,
    pub rate_evals: u64,
    pub adds: u64,
    pub compares: u64,
    pub selects: u64,
    pub stages: u64,
}

impl Add for OpCounters {
    type Output = OpCounters;

    fn add(self, o: OpCounters) -> OpCounters {
        OpCounters {
            branches: self.branches + o.branches,
            dist_evals: self.dist_evals + o.dist_evals,
            rate_evals: self.rate_evals + o.rate_evals,
            adds: self.adds + o.adds,
            compares: self.compares + o.compares,
            selects: self.selects + o.selects,
            stages: self.stages + o.stages,
        }
    }
}

impl AddAssign for OpCounters {
    fn add_assign(&mut self, o: OpCounters) {
        *self = *self + o;
    }
}

impl std::iter::Sum for OpCounters {
    fn sum<I: Iterator<Item = OpCounters>>(iter: I) -> Self {
        iter.fold(OpCounters::default(), Add::add)
    }
}

/// Counters of a single trellis stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTally {
    pub scan_pos: usize,
    /// Nodes holding a finite cost when the stage was entered.
    pub live_nodes: u8,
    pub prune_case: Option<PruneCase>,
    pub counters: OpCounters,
}

impl StageTally {
    /// All five nodes were reachable, i.e. neither warm-up nor start point.
    pub fn is_middle(&self) -> bool {
        self.live_nodes as usize == NODES
    }
}

/// Up to five non-negative candidate levels for one coefficient magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CandidateSet {
    levels: [i64; 5],
    len: u8,
    pre_level: i64,
}

impl CandidateSet {
    pub(crate) fn from_levels(levels: &[i64], pre_level: i64) -> Self {
        let mut arr = [0i64; 5];
        arr[..levels.len()].copy_from_slice(levels);
        Self {
            levels: arr,
            len: levels.len() as u8,
            pre_level,
        }
    }

    pub fn levels(&self) -> &[i64] {
        &self.levels[..self.len as usize]
    }

    /// Scalar-quantized level (rounding offset 1/2) the set was built around.
    pub fn pre_level(&self) -> i64 {
        self.pre_level
    }

    pub fn contains(&self, level: i64) -> bool {
        self.levels().contains(&level)
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Candidate levels around the pre-quantized level `l`:
/// `{0, l-2, l-1, l, l+1}` when `l > 2`, otherwise `{0, 1, 2, 3, 4}`.
pub fn build_candidates<T: Scalar>(c_abs: T, q_step: T) -> CandidateSet {
    let l = scalar_quantize(c_abs.abs(), q_step, T::lit(0.5));
    if l > 2 {
        CandidateSet::from_levels(&[0, l - 2, l - 1, l, l + 1], l)
    } else {
        CandidateSet::from_levels(&[0, 1, 2, 3, 4], l)
    }
}

/// `distortion + lambda * bits`.
#[inline]
pub fn rd_cost<T: Scalar>(distortion: T, bits: T, lambda_rd: T) -> T {
    distortion + lambda_rd * bits
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrellisResult<T> {
    /// Signed quantization index per scan position.
    pub indices: Vec<i64>,
    /// Decoder state each position is reconstructed with.
    pub states: Vec<StateId>,
    pub total_cost: T,
    pub total_bits: T,
    pub total_distortion: T,
    pub counters: OpCounters,
    /// Scan index of the last non-zero index.
    pub last_pos: Option<usize>,
    /// Highest scan position admitted into the trellis.
    pub start_pos: Option<usize>,
    pub stages: Vec<StageTally>,
}

impl<T: Scalar> TrellisResult<T> {
    pub fn l1_norm(&self) -> u64 {
        self.indices.iter().map(|v| v.unsigned_abs()).sum()
    }
}

/// Survivor selection rule. Anything other than `MinCost` exists only to
/// exercise the oracle harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[allow(clippy::manual_non_exhaustive)]
pub enum SurvivorRule {
    #[default]
    MinCost,
    #[doc(hidden)]
    Inverted,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SearchOptions {
    pub survivor: SurvivorRule,
}

/// Highest scan position whose pre-quantized level is non-zero.
pub(crate) fn natural_start<T: Scalar>(scan_coeffs: &[T], q_step: T) -> Option<usize> {
    let half = T::lit(0.5);
    scan_coeffs
        .iter()
        .rposition(|&c| scalar_quantize(c.abs(), q_step, half) != 0)
}

/// Full-complexity search: every position from the last non-zero
/// pre-quantized coefficient down to DC is a stage.
pub fn tcq_search<T: Scalar>(block: &Block<T>, cfg: &QuantConfig<T>, rate: &RateMode<T>) -> Result<TrellisResult<T>> {
    tcq_search_with(block, cfg, rate, SearchOptions::default())
}

pub fn tcq_search_with<T: Scalar>(
    block: &Block<T>,
    cfg: &QuantConfig<T>,
    rate: &RateMode<T>,
    opts: SearchOptions,
) -> Result<TrellisResult<T>> {
    let c = block.scan_ordered();
    let start = natural_start(&c, cfg.q_step);
    run_trellis(block, &c, cfg, rate, start, false, opts)
}

#[derive(Clone, Copy)]
struct BackRef {
    pred: u8,
    magnitude: u32,
}

const NO_BACK: BackRef = BackRef {
    pred: u8::MAX,
    magnitude: 0,
};

/// Lazily evaluated branch metrics of one candidate level.
#[derive(Clone, Copy)]
struct Metric<T> {
    level: i64,
    dist: Option<T>,
    bits: Option<T>,
}

pub(crate) fn run_trellis<T: Scalar>(
    block: &Block<T>,
    c: &[T],
    cfg: &QuantConfig<T>,
    rate: &RateMode<T>,
    start: Option<usize>,
    prune: bool,
    opts: SearchOptions,
) -> Result<TrellisResult<T>> {
    cfg.validate()?;
    rate.validate()?;
    let n = c.len();
    let q = cfg.q_step;
    let lambda = cfg.lambda_rd;
    let lp = LastPosTable::cached(block.width(), block.height())?;

    let Some(start) = start else {
        let d: T = c.iter().map(|&x| x * x).sum();
        return Ok(TrellisResult {
            indices: vec![0; n],
            states: vec![StateId::coded(0)?; n],
            total_cost: d,
            total_bits: T::zero(),
            total_distortion: d,
            counters: OpCounters::default(),
            last_pos: None,
            start_pos: None,
            stages: Vec::new(),
        });
    };

    let prefix: T = c[start + 1..].iter().map(|&x| x * x).sum();
    let inf = T::infinity();
    let mut cost = [inf; NODES];
    cost[UNCODED] = prefix;
    let mut back: Vec<[BackRef; NODES]> = vec![[NO_BACK; NODES]; start + 1];
    let mut stages = Vec::with_capacity(start + 1);
    let mut counters = OpCounters::default();

    for s in (0..=start).rev() {
        let ca = c[s].abs();
        let cand = build_candidates(ca, q);
        let (kept, case) = if prune {
            let d = prune_candidates(&cand, cand.pre_level())?;
            (d.kept_levels, Some(d.case_id))
        } else {
            (cand, None)
        };
        // slot 0 always holds level 0; the uncoded self-loop needs its
        // distortion even when pruning drops the coded zero branches
        let coded_zero = kept.contains(0);
        let mut metrics = [Metric {
            level: 0,
            dist: None,
            bits: None,
        }; 5];
        for (m, &l) in metrics.iter_mut().zip(cand.levels()) {
            m.level = l;
        }
        let mut nonzero = [0usize; 4];
        let mut n_nonzero = 0;
        for (slot, &l) in cand.levels().iter().enumerate() {
            if l != 0 && kept.contains(l) {
                nonzero[n_nonzero] = slot;
                n_nonzero += 1;
            }
        }

        let mut tally = OpCounters {
            stages: 1,
            ..OpCounters::default()
        };
        let live = cost.iter().filter(|x| x.is_finite()).count() as u8;

        let mut next = [inf; NODES];
        let mut entering = [0u32; NODES];
        let mut stage_back = [NO_BACK; NODES];
        let mut acs = |dest: usize, j: T, br: BackRef, tally: &mut OpCounters| {
            relax(&mut next, &mut stage_back, &mut entering, tally, dest, j, br, opts.survivor)
        };

        for (src, &base) in cost.iter().enumerate() {
            if !base.is_finite() {
                continue;
            }
            let (quantizer, from) = if src == UNCODED { (0, 0u8) } else { ((src >> 1) as i64, src as u8) };

            if src == UNCODED {
                let d = dist_of(&mut metrics[0], ca, q, &mut tally);
                acs(UNCODED, base + d, BackRef { pred: src as u8, magnitude: 0 }, &mut tally);
            } else if coded_zero {
                let d = dist_of(&mut metrics[0], ca, q, &mut tally);
                let b = bits_of(&mut metrics[0], rate, cfg, &mut tally);
                let dest = next_state_raw(from, 0) as usize;
                acs(dest, base + d + lambda * b, BackRef { pred: src as u8, magnitude: 0 }, &mut tally);
            }

            for &slot in &nonzero[..n_nonzero] {
                let level = metrics[slot].level;
                if level % 2 != quantizer {
                    continue;
                }
                let mag = index_of_level(level);
                let dest = next_state_raw(from, (mag & 1) as u8) as usize;
                let d = dist_of(&mut metrics[slot], ca, q, &mut tally);
                let mut b = bits_of(&mut metrics[slot], rate, cfg, &mut tally);
                if src == UNCODED {
                    b = b + cfg.r_cbf + T::from_int(lp.bits(s) as i64);
                }
                acs(
                    dest,
                    base + d + lambda * b,
                    BackRef {
                        pred: src as u8,
                        magnitude: mag as u32,
                    },
                    &mut tally,
                );
            }
        }

        cost = next;
        back[s] = stage_back;
        counters += tally;
        stages.push(StageTally {
            scan_pos: s,
            live_nodes: live,
            prune_case: case,
            counters: tally,
        });
    }

    // terminal choice: uncoded first so ties favour the all-zero path
    let mut best = UNCODED;
    for node in [0usize, 1, 2, 3] {
        if cost[node] < cost[best] {
            best = node;
        }
    }
    let total_cost = cost[best];

    let mut indices = vec![0i64; n];
    let mut states = vec![StateId::coded(0)?; n];
    let mut cur = best;
    for s in 0..=start {
        let br = back[s][cur];
        debug_assert!(br.pred != u8::MAX, "broken survivor chain at stage {s}");
        let mag = br.magnitude as i64;
        indices[s] = if c[s] < T::zero() { -mag } else { mag };
        let pred = br.pred as usize;
        states[s] = StateId::coded(if pred == UNCODED { 0 } else { pred as u8 })?;
        cur = pred;
    }
    debug_assert_eq!(cur, UNCODED);

    let last_pos = indices.iter().rposition(|&v| v != 0);
    let mut distortion = prefix;
    for s in 0..=start {
        let level = crate::quant::reconstruct_level(indices[s], states[s]);
        let e = c[s] - q * T::from_int(level);
        distortion = distortion + e * e;
    }
    let bits = match last_pos {
        None => T::zero(),
        Some(last) => {
            let mut b = cfg.r_cbf + T::from_int(lp.bits(last) as i64);
            for &v in &indices[..=last] {
                b = b + rate.index_bits(v.unsigned_abs(), cfg);
            }
            b
        }
    };

    Ok(TrellisResult {
        indices,
        states,
        total_cost,
        total_bits: bits,
        total_distortion: distortion,
        counters,
        last_pos,
        start_pos: Some(start),
        stages,
    })
}

#[inline]
fn dist_of<T: Scalar>(m: &mut Metric<T>, ca: T, q: T, tally: &mut OpCounters) -> T {
    if let Some(d) = m.dist {
        return d;
    }
    tally.dist_evals += 1;
    let e = ca - q * T::from_int(m.level);
    let d = e * e;
    m.dist = Some(d);
    d
}

#[inline]
fn bits_of<T: Scalar>(m: &mut Metric<T>, rate: &RateMode<T>, cfg: &QuantConfig<T>, tally: &mut OpCounters) -> T {
    if let Some(b) = m.bits {
        return b;
    }
    tally.rate_evals += 1;
    let b = rate.index_bits(index_of_level(m.level) as u64, cfg);
    m.bits = Some(b);
    b
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn relax<T: Scalar>(
    next: &mut [T; NODES],
    back: &mut [BackRef; NODES],
    entering: &mut [u32; NODES],
    tally: &mut OpCounters,
    dest: usize,
    j: T,
    br: BackRef,
    rule: SurvivorRule,
) {
    tally.branches += 1;
    tally.adds += 1;
    entering[dest] += 1;
    if entering[dest] == 1 {
        next[dest] = j;
        back[dest] = br;
        return;
    }
    tally.compares += 1;
    tally.selects += 1;
    let cur = back[dest];
    let better = match rule {
        SurvivorRule::MinCost => {
            j < next[dest]
                || (j == next[dest]
                    && (br.magnitude < cur.magnitude
                        || (br.magnitude == cur.magnitude && br.pred < cur.pred)))
        }
        SurvivorRule::Inverted => j > next[dest],
    };
    if better {
        next[dest] = j;
        back[dest] = br;
    }
}

/// Hard-decision quantization of a block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HdqResult {
    /// Signed levels in scan order.
    pub levels: Vec<i64>,
    pub last_pos: Option<usize>,
    pub l0_norm: u64,
    pub l1_norm: u64,
}

/// Per-coefficient rounding with the configured offset; no rate awareness.
pub fn hdq_quantize<T: Scalar>(block: &Block<T>, cfg: &QuantConfig<T>) -> HdqResult {
    let levels: Vec<i64> = block
        .scan_ordered()
        .iter()
        .map(|&c| scalar_quantize(c, cfg.q_step, cfg.f_offset))
        .collect();
    let (l0_norm, l1_norm) = crate::rate::count_norms(&levels);
    HdqResult {
        last_pos: levels.iter().rposition(|&v| v != 0),
        levels,
        l0_norm,
        l1_norm,
    }
}

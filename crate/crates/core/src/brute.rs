//! Exhaustive optimality oracle.
//!
//! Enumerates every path the trellis could take (the same candidate sets
//! and the same three choices per node) and scores each complete index
//! sequence from scratch: reconstruction by decoder replay, bits by the
//! block-level rate functions. Nothing is shared with the Viterbi code
//! beyond candidate construction.

use crate::error::{Error, Result};
use crate::quant::{dequantize_block, index_of_level, Block, QuantConfig};
use crate::rate::{block_actual_bits, count_norms, last_nonzero, last_pos_bits};
use crate::scalar::Scalar;
use crate::trellis::{build_candidates, natural_start, RateMode, TrellisResult};

/// Largest number of complete paths the oracle will score.
pub const BRUTE_FORCE_GUARD: f64 = 1e7;

/// Number of complete paths over `stages` trellis stages.
pub fn brute_force_combinations(stages: usize) -> f64 {
    3f64.powi(stages as i32)
}

/// Fails with a size error when a block of `len` coefficients could exceed
/// the guard.
pub fn check_guard(len: usize) -> Result<()> {
    let combinations = brute_force_combinations(len);
    if combinations > BRUTE_FORCE_GUARD {
        return Err(Error::Size {
            combinations,
            guard: BRUTE_FORCE_GUARD,
        });
    }
    Ok(())
}

/// Scores an index sequence (scan order) from scratch.
/// Returns `(distortion, bits)`.
pub fn evaluate_indices<T: Scalar>(
    block: &Block<T>,
    indices: &[i64],
    cfg: &QuantConfig<T>,
    rate: &RateMode<T>,
) -> Result<(T, T)> {
    let c = block.scan_ordered();
    let rec = dequantize_block(indices, cfg.q_step);
    let distortion = c
        .iter()
        .zip(&rec.coeffs)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<T>();
    let last = last_nonzero(indices);
    let bits = match (rate, last) {
        (_, None) => T::zero(),
        (RateMode::Surrogate { rice_g }, Some(_)) => {
            let surrogate = block_actual_bits(indices, last, block.scan(), *rice_g, cfg.r_cbf.as_f64())?;
            let (l0, _) = count_norms(indices);
            // block_actual_bits charges one bit per sign
            T::lit(surrogate) + (cfg.sign_bits - T::one()) * T::from_int(l0 as i64)
        }
        (RateMode::LinearModel(p), Some(lp)) => {
            let (l0, l1) = count_norms(&indices[..=lp]);
            let (x, y) = block.scan().position(lp);
            let r_lp = last_pos_bits(x, y, block.width(), block.height())?;
            p.alpha * T::from_int(l0 as i64) + p.beta * T::from_int(l1 as i64) + cfg.r_cbf + T::lit(r_lp)
        }
    };
    Ok((distortion, bits))
}

struct Search<'a, T> {
    c: &'a [T],
    cands: Vec<[i64; 5]>,
    indices: Vec<i64>,
    best: Option<(T, u64, Vec<i64>)>,
    block: &'a Block<T>,
    cfg: &'a QuantConfig<T>,
    rate: &'a RateMode<T>,
}

impl<T: Scalar> Search<'_, T> {
    /// `state` is `None` while still uncoded.
    fn descend(&mut self, pos: usize, state: Option<u8>) -> Result<()> {
        let quantizer = state.map_or(0, |s| (s >> 1) as i64);
        let cand = self.cands[pos];
        let mut choices = [0i64; 3];
        let mut n = 1;
        for &l in &cand {
            if l != 0 && l % 2 == quantizer && n < 3 {
                choices[n] = index_of_level(l);
                n += 1;
            }
        }
        for &mag in &choices[..n] {
            self.indices[pos] = if self.c[pos] < T::zero() { -mag } else { mag };
            let next = match state {
                None if mag == 0 => None,
                None => Some(crate::quant::next_state_raw(0, (mag & 1) as u8)),
                Some(s) => Some(crate::quant::next_state_raw(s, (mag & 1) as u8)),
            };
            if pos == 0 {
                self.score()?;
            } else {
                self.descend(pos - 1, next)?;
            }
        }
        self.indices[pos] = 0;
        Ok(())
    }

    fn score(&mut self) -> Result<()> {
        let (d, b) = evaluate_indices(self.block, &self.indices, self.cfg, self.rate)?;
        let j = d + self.cfg.lambda_rd * b;
        let (_, l1) = count_norms(&self.indices);
        let better = match &self.best {
            None => true,
            Some((bj, bl1, bidx)) => j < *bj || (j == *bj && (l1 < *bl1 || (l1 == *bl1 && self.indices < *bidx))),
        };
        if better {
            self.best = Some((j, l1, self.indices.clone()));
        }
        Ok(())
    }
}

/// Global minimum-cost index sequence by exhaustive enumeration.
pub fn brute_force_search<T: Scalar>(block: &Block<T>, cfg: &QuantConfig<T>, rate: &RateMode<T>) -> Result<TrellisResult<T>> {
    cfg.validate()?;
    let c = block.scan_ordered();
    let start = natural_start(&c, cfg.q_step);
    let stages = start.map_or(0, |s| s + 1);
    check_guard(stages)?;

    let mut search = Search {
        c: &c,
        cands: c
            .iter()
            .map(|&x| {
                let set = build_candidates(x.abs(), cfg.q_step);
                let mut a = [0i64; 5];
                a[..set.len()].copy_from_slice(set.levels());
                a
            })
            .collect(),
        indices: vec![0; c.len()],
        best: None,
        block,
        cfg,
        rate,
    };
    match start {
        Some(s) => search.descend(s, None)?,
        None => search.score()?,
    }
    let (total_cost, _, indices) = search.best.expect("at least one path is scored");
    let (total_distortion, total_bits) = evaluate_indices(block, &indices, cfg, rate)?;
    let rec = dequantize_block::<T>(&indices, cfg.q_step);
    Ok(TrellisResult {
        last_pos: last_nonzero(&indices),
        states: rec.states,
        indices,
        total_cost,
        total_bits,
        total_distortion,
        counters: Default::default(),
        start_pos: start,
        stages: Vec::new(),
    })
}

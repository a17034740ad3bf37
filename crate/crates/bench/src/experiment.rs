//! The four experiment families. Every block is generated from a seed
//! derived from `(seed, stream, qp, sigma, shape, block index)`, so cells
//! can run in parallel and still produce identical bytes.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tcq_core::quadrature::laplacian_numeric_stats;
use tcq_core::rate::BlockRateObservation;
use tcq_core::trellis::SearchOptions;
use tcq_core::*;

use crate::config::{ExperimentConfig, FitSource, KMode, RateModeKind};
use crate::error::{BenchError, Result};

const STREAM_BENCH: u64 = 1;
const STREAM_FIT: u64 = 2;
const STREAM_ORACLE: u64 = 3;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one generated block.
pub fn block_seed(seed: u64, stream: u64, qp: i32, sigma_idx: usize, shape_idx: usize, block: usize) -> u64 {
    [stream, qp as i64 as u64, sigma_idx as u64, shape_idx as u64, block as u64]
        .iter()
        .fold(splitmix(seed), |acc, &v| splitmix(acc ^ v))
}

pub fn quant_config(cfg: &ExperimentConfig, qp: i32) -> Result<QuantConfig64> {
    let mut q = QuantConfig::from_qp(qp, cfg.phi)?;
    q.r_cbf = cfg.r_cbf;
    q.sign_bits = cfg.sign_bits;
    Ok(q)
}

fn now_secs(reproducible: bool) -> Option<u64> {
    if reproducible {
        return None;
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .ok()
        .map(|d| d.as_secs())
}

fn median(sorted: &[i64]) -> f64 {
    match sorted.len() {
        0 => 0.0,
        n if n % 2 == 1 => sorted[n / 2] as f64,
        n => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) as f64,
    }
}

fn ratio_savings(accel: u64, full: u64) -> f64 {
    if full == 0 {
        0.0
    } else {
        1.0 - accel as f64 / full as f64
    }
}

// ---------------------------------------------------------------- fit

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub qp: i32,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub r_squared: f64,
    pub rms_bits: f64,
    pub observations: usize,
}

impl FitRow {
    pub fn params(&self) -> RateModelParams64 {
        RateModelParams::new(self.alpha, self.beta, self.gamma, self.epsilon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub generated_at: Option<u64>,
    pub config: ExperimentConfig,
    pub fits: Vec<FitRow>,
}

/// Fits the block rate model once per QP, pooling every sigma and shape.
pub fn run_fit(cfg: &ExperimentConfig, reproducible: bool) -> Result<FitReport> {
    cfg.validate()?;
    let fits = cfg
        .qp_list
        .iter()
        .map(|&qp| fit_qp(cfg, qp))
        .collect::<Result<Vec<_>>>()?;
    Ok(FitReport {
        generated_at: now_secs(reproducible),
        config: cfg.clone(),
        fits,
    })
}

fn fit_qp(cfg: &ExperimentConfig, qp: i32) -> Result<FitRow> {
    let qcfg = quant_config(cfg, qp)?;
    let rate = RateMode::Surrogate { rice_g: cfg.rice_g };
    let mut jobs = Vec::new();
    for (si, &sigma) in cfg.sigma_list.iter().enumerate() {
        for (hi, &[w, h]) in cfg.block_shapes.iter().enumerate() {
            for b in 0..cfg.blocks_per_cell {
                jobs.push((sigma, w, h, block_seed(cfg.seed, STREAM_FIT, qp, si, hi, b)));
            }
        }
    }
    let obs = jobs
        .par_iter()
        .map(|&(sigma, w, h, seed)| -> Result<BlockRateObservation<f64>> {
            let block = sample_block(sigma, w, h, seed)?;
            let indices = match cfg.fit_source {
                FitSource::Tcq => tcq_search(&block, &qcfg, &rate)?.indices,
                FitSource::Hdq => hdq_quantize(&block, &qcfg).levels,
            };
            Ok(BlockRateObservation::from_indices(&indices, block.scan(), cfg.rice_g, cfg.r_cbf)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_rate_params(&obs).map_err(|e| BenchError::Fit(format!("qp {qp}: {e}")))?;
    if !fit.params.is_admissible() {
        return Err(BenchError::Fit(format!(
            "qp {qp}: fitted alpha {} and beta {} must both be positive",
            fit.params.alpha, fit.params.beta
        )));
    }
    Ok(FitRow {
        qp,
        alpha: fit.params.alpha,
        beta: fit.params.beta,
        gamma: fit.params.gamma,
        epsilon: fit.params.epsilon,
        r_squared: fit.r_squared,
        rms_bits: fit.rms_bits,
        observations: fit.observations,
    })
}

/// Linear-model parameters per QP, or an empty map when nothing needs them.
pub fn resolve_params(cfg: &ExperimentConfig) -> Result<(BTreeMap<i32, RateModelParams64>, Vec<FitRow>)> {
    if !cfg.needs_params() {
        return Ok((BTreeMap::new(), Vec::new()));
    }
    if let Some([a, b, g, e]) = cfg.model_params {
        let p = RateModelParams::new(a, b, g, e);
        return Ok((cfg.qp_list.iter().map(|&qp| (qp, p)).collect(), Vec::new()));
    }
    let fits = match &cfg.params_from {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
            let report: FitReport =
                toml::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
            report.fits
        }
        None => run_fit(cfg, true)?.fits,
    };
    let mut map = BTreeMap::new();
    for &qp in &cfg.qp_list {
        let row = fits
            .iter()
            .find(|r| r.qp == qp)
            .ok_or_else(|| BenchError::Config(format!("no rate model parameters for qp {qp}")))?;
        map.insert(qp, row.params());
    }
    Ok((map, fits))
}

fn rate_mode(cfg: &ExperimentConfig, params: Option<&RateModelParams64>) -> Result<RateMode64> {
    match cfg.rate_mode {
        RateModeKind::Surrogate => Ok(RateMode::Surrogate { rice_g: cfg.rice_g }),
        RateModeKind::LinearModel => params
            .map(|p| RateMode::LinearModel(*p))
            .ok_or_else(|| BenchError::Config("linear_model rate mode needs parameters".into())),
    }
}

fn departure(cfg: &ExperimentConfig, params: Option<&RateModelParams64>) -> Result<DepartureConfig64> {
    if let Some(k) = cfg.bound_factor() {
        return Ok(DepartureConfig::bound(k)?);
    }
    let p = params.ok_or_else(|| BenchError::Config("model-driven departure needs parameters".into()))?;
    Ok(match cfg.k_mode {
        KMode::Exact => DepartureConfig::exact(*p, cfg.lp_delta)?,
        _ => DepartureConfig::analytic(cfg.phi, p)?,
    })
}

// ---------------------------------------------------------------- bench

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub qp: i32,
    pub sigma: f64,
    pub width: usize,
    pub height: usize,
    pub blocks: usize,
    /// Bound-mode factor in effect; absent in exact mode.
    pub k_factor: Option<f64>,
    pub mean_cost_full: f64,
    pub mean_cost_accel: f64,
    /// `(accel - full) / full` of the mean costs.
    pub rel_cost_delta: f64,
    /// Mean over blocks of the per-block relative delta.
    pub mean_block_rel_delta: f64,
    pub full: OpCounters,
    pub accel: OpCounters,
    pub branch_savings: f64,
    /// Savings over all BMU and ACS operations together.
    pub op_savings: f64,
    pub accel_middle_stages: u64,
    pub accel_middle_branch_min: u64,
    pub accel_middle_branch_max: u64,
    pub hdq_last_median: f64,
    pub tcq_last_median: f64,
    pub accel_last_median: f64,
    pub wall_ms_full: f64,
    pub wall_ms_accel: f64,
}

impl CellRow {
    pub fn savings_from_counters(&self) -> f64 {
        ratio_savings(self.accel.branches, self.full.branches)
    }
}

/// Last-position counts; `scan_pos = -1` counts all-zero blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistRow {
    pub qp: i32,
    pub sigma: f64,
    pub width: usize,
    pub height: usize,
    pub scan_pos: i64,
    pub hdq: u64,
    pub tcq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub generated_at: Option<u64>,
    pub config: ExperimentConfig,
    pub fits: Vec<FitRow>,
    pub cells: Vec<CellRow>,
    pub histograms: Vec<HistRow>,
}

struct BlockOutcome {
    cost_full: f64,
    cost_accel: f64,
    full: OpCounters,
    accel: OpCounters,
    middle: Vec<u64>,
    hdq_last: i64,
    tcq_last: i64,
    accel_last: i64,
    ns_full: u128,
    ns_accel: u128,
}

pub fn run_bench(cfg: &ExperimentConfig, reproducible: bool) -> Result<BenchReport> {
    cfg.validate()?;
    let (params, fits) = resolve_params(cfg)?;
    let mut cells = Vec::new();
    let mut histograms = Vec::new();
    for &qp in &cfg.qp_list {
        let qcfg = quant_config(cfg, qp)?;
        let p = params.get(&qp);
        let rate = rate_mode(cfg, p)?;
        let dep = departure(cfg, p)?;
        let k_factor = match dep {
            DepartureConfig::Bound { k_factor } => Some(k_factor),
            DepartureConfig::Exact { .. } => None,
        };
        for (si, &sigma) in cfg.sigma_list.iter().enumerate() {
            for (hi, &[w, h]) in cfg.block_shapes.iter().enumerate() {
                let outcomes = (0..cfg.blocks_per_cell)
                    .into_par_iter()
                    .map(|b| {
                        let seed = block_seed(cfg.seed, STREAM_BENCH, qp, si, hi, b);
                        bench_block(&sample_block(sigma, w, h, seed)?, &qcfg, &rate, &dep, cfg.pruning)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let (row, hist) = reduce_cell(qp, sigma, w, h, k_factor, &outcomes, reproducible);
                cells.push(row);
                histograms.extend(hist);
            }
        }
    }
    Ok(BenchReport {
        generated_at: now_secs(reproducible),
        config: cfg.clone(),
        fits,
        cells,
        histograms,
    })
}

fn bench_block(
    block: &Block64,
    qcfg: &QuantConfig64,
    rate: &RateMode64,
    dep: &DepartureConfig64,
    prune: bool,
) -> Result<BlockOutcome> {
    let t0 = Instant::now();
    let full = tcq_search(block, qcfg, rate)?;
    let t1 = Instant::now();
    let accel = accelerated_search(block, qcfg, rate, dep, prune)?;
    let t2 = Instant::now();
    let hdq = hdq_quantize(block, qcfg);
    let pos = |p: Option<usize>| p.map_or(-1, |v| v as i64);
    Ok(BlockOutcome {
        cost_full: full.total_cost,
        cost_accel: accel.total_cost,
        full: full.counters,
        accel: accel.counters,
        middle: accel
            .stages
            .iter()
            .filter(|s| s.is_middle())
            .map(|s| s.counters.branches)
            .collect(),
        hdq_last: pos(hdq.last_pos),
        tcq_last: pos(full.last_pos),
        accel_last: pos(accel.last_pos),
        ns_full: (t1 - t0).as_nanos(),
        ns_accel: (t2 - t1).as_nanos(),
    })
}

fn reduce_cell(
    qp: i32,
    sigma: f64,
    width: usize,
    height: usize,
    k_factor: Option<f64>,
    outcomes: &[BlockOutcome],
    reproducible: bool,
) -> (CellRow, Vec<HistRow>) {
    let n = outcomes.len();
    let mut full = OpCounters::default();
    let mut accel = OpCounters::default();
    let (mut jf, mut ja, mut rel, mut ns_f, mut ns_a) = (0.0, 0.0, 0.0, 0u128, 0u128);
    let (mut mid_n, mut mid_min, mut mid_max) = (0u64, u64::MAX, 0u64);
    let (mut hdq, mut tcq, mut acc) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for o in outcomes {
        full += o.full;
        accel += o.accel;
        jf += o.cost_full;
        ja += o.cost_accel;
        if o.cost_full > 0.0 {
            rel += (o.cost_accel - o.cost_full) / o.cost_full;
        }
        ns_f += o.ns_full;
        ns_a += o.ns_accel;
        for &b in &o.middle {
            mid_n += 1;
            mid_min = mid_min.min(b);
            mid_max = mid_max.max(b);
        }
        hdq.push(o.hdq_last);
        tcq.push(o.tcq_last);
        acc.push(o.accel_last);
    }
    hdq.sort_unstable();
    tcq.sort_unstable();
    acc.sort_unstable();
    let mean_full = jf / n as f64;
    let mean_accel = ja / n as f64;
    let ops = |c: &OpCounters| c.dist_evals + c.rate_evals + c.adds + c.compares + c.selects;
    let ms = |ns: u128| if reproducible { 0.0 } else { ns as f64 / 1e6 };

    let row = CellRow {
        qp,
        sigma,
        width,
        height,
        blocks: n,
        k_factor,
        mean_cost_full: mean_full,
        mean_cost_accel: mean_accel,
        rel_cost_delta: if mean_full > 0.0 { (mean_accel - mean_full) / mean_full } else { 0.0 },
        mean_block_rel_delta: rel / n as f64,
        full,
        accel,
        branch_savings: ratio_savings(accel.branches, full.branches),
        op_savings: ratio_savings(ops(&accel), ops(&full)),
        accel_middle_stages: mid_n,
        accel_middle_branch_min: if mid_n == 0 { 0 } else { mid_min },
        accel_middle_branch_max: mid_max,
        hdq_last_median: median(&hdq),
        tcq_last_median: median(&tcq),
        accel_last_median: median(&acc),
        wall_ms_full: ms(ns_f),
        wall_ms_accel: ms(ns_a),
    };

    let mut counts: BTreeMap<i64, (u64, u64)> = BTreeMap::new();
    for &p in &hdq {
        counts.entry(p).or_default().0 += 1;
    }
    for &p in &tcq {
        counts.entry(p).or_default().1 += 1;
    }
    let hist = counts
        .into_iter()
        .map(|(scan_pos, (h, t))| HistRow {
            qp,
            sigma,
            width,
            height,
            scan_pos,
            hdq: h,
            tcq: t,
        })
        .collect();
    (row, hist)
}

// ---------------------------------------------------------------- oracle

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub qp: i32,
    pub width: usize,
    pub height: usize,
    /// Raster-order coefficients.
    pub coeffs: Vec<f64>,
    pub tcq_cost: f64,
    pub oracle_cost: f64,
    pub tcq_indices: Vec<i64>,
    pub oracle_indices: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub generated_at: Option<u64>,
    pub draws: usize,
    pub mismatches: usize,
    pub max_rel_error: f64,
    pub passed: bool,
    pub counterexample: Option<Counterexample>,
}

pub const ORACLE_TOLERANCE: f64 = 1e-9;

/// Compares the trellis with exhaustive search on `oracle_draws` blocks per
/// (QP, shape), cycling through the configured sigmas.
pub fn run_oracle(cfg: &ExperimentConfig, survivor: SurvivorRule, reproducible: bool) -> Result<OracleReport> {
    cfg.validate()?;
    for &[w, h] in &cfg.block_shapes {
        tcq_core::brute::check_guard(w * h)?;
    }
    let (params, _) = resolve_params(cfg)?;
    let opts = SearchOptions { survivor };
    let mut draws = 0;
    let mut mismatches = 0;
    let mut max_rel: f64 = 0.0;
    let mut first: Option<Counterexample> = None;
    for &qp in &cfg.qp_list {
        let qcfg = quant_config(cfg, qp)?;
        let rate = rate_mode(cfg, params.get(&qp))?;
        for (hi, &[w, h]) in cfg.block_shapes.iter().enumerate() {
            let results = (0..cfg.oracle_draws)
                .into_par_iter()
                .map(|d| -> Result<(f64, Option<Counterexample>)> {
                    let si = d % cfg.sigma_list.len();
                    let seed = block_seed(cfg.seed, STREAM_ORACLE, qp, si, hi, d);
                    let block = sample_block(cfg.sigma_list[si], w, h, seed)?;
                    let t = tcq_search_with(&block, &qcfg, &rate, opts)?;
                    let o = brute_force_search(&block, &qcfg, &rate)?;
                    let diff = (t.total_cost - o.total_cost).abs();
                    let rel = if diff == 0.0 { 0.0 } else { diff / o.total_cost.abs().max(f64::MIN_POSITIVE) };
                    let cx = (rel > ORACLE_TOLERANCE).then(|| Counterexample {
                        qp,
                        width: w,
                        height: h,
                        coeffs: block.coeffs().to_vec(),
                        tcq_cost: t.total_cost,
                        oracle_cost: o.total_cost,
                        tcq_indices: t.indices,
                        oracle_indices: o.indices,
                    });
                    Ok((rel, cx))
                })
                .collect::<Result<Vec<_>>>()?;
            for (rel, cx) in results {
                draws += 1;
                max_rel = max_rel.max(rel);
                if let Some(cx) = cx {
                    mismatches += 1;
                    first.get_or_insert(cx);
                }
            }
        }
    }
    Ok(OracleReport {
        generated_at: now_secs(reproducible),
        draws,
        mismatches,
        max_rel_error: max_rel,
        passed: mismatches == 0,
        counterexample: first,
    })
}

// ---------------------------------------------------------------- stats

pub const SELF_INFO_LEVELS: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub sigma: f64,
    pub qp: i32,
    pub q_step: f64,
    pub lambda_lap: f64,
    pub tau: f64,
    pub p_nz: f64,
    pub d_expected: f64,
    pub d_zero: f64,
    pub d_nonzero: f64,
    pub numeric_p_nz: f64,
    pub numeric_d_zero: f64,
    pub numeric_d_nonzero: f64,
    /// Largest relative gap between a closed form and its integral.
    pub max_rel_error: f64,
    pub r0_exact: f64,
    pub r0_taylor1: f64,
    pub r0_taylor2: f64,
    pub r0_taylor3: f64,
    /// Self-information rate for levels `0..=8`.
    pub self_info: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub generated_at: Option<u64>,
    pub rows: Vec<StatsRow>,
}

pub fn stats_row(sigma: f64, qp: i32) -> Result<StatsRow> {
    let q = q_step_from_qp::<f64>(qp);
    let lam = lambda_from_sigma(sigma)?;
    let c = closed_form_stats(lam, q)?;
    let n = laplacian_numeric_stats(lam, q);
    let rel = |a: f64, b: f64| if a == b { 0.0 } else { (a - b).abs() / b.abs() };
    let max_rel_error = [
        rel(c.p_nz, n.p_nz),
        rel(c.d_zero, n.d_zero),
        rel(c.d_nonzero, n.d_nonzero),
        rel(c.d_expected, n.d_expected()),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    Ok(StatsRow {
        sigma,
        qp,
        q_step: q,
        lambda_lap: lam,
        tau: c.tau,
        p_nz: c.p_nz,
        d_expected: c.d_expected,
        d_zero: c.d_zero,
        d_nonzero: c.d_nonzero,
        numeric_p_nz: n.p_nz,
        numeric_d_zero: n.d_zero,
        numeric_d_nonzero: n.d_nonzero,
        max_rel_error,
        r0_exact: rate_from_pnz(c.p_nz, 0)?,
        r0_taylor1: rate_from_pnz(c.p_nz, 1)?,
        r0_taylor2: rate_from_pnz(c.p_nz, 2)?,
        r0_taylor3: rate_from_pnz(c.p_nz, 3)?,
        self_info: (0..SELF_INFO_LEVELS as i64)
            .map(|l| self_info_rate(l, lam, q))
            .collect::<tcq_core::Result<Vec<_>>>()?,
    })
}

pub fn run_stats(cfg: &ExperimentConfig, reproducible: bool) -> Result<StatsReport> {
    cfg.validate()?;
    let grid: Vec<(f64, i32)> = cfg
        .sigma_list
        .iter()
        .flat_map(|&s| cfg.qp_list.iter().map(move |&qp| (s, qp)))
        .collect();
    let rows = grid
        .par_iter()
        .map(|&(s, qp)| stats_row(s, qp))
        .collect::<Result<Vec<_>>>()?;
    Ok(StatsReport {
        generated_at: now_secs(reproducible),
        rows,
    })
}

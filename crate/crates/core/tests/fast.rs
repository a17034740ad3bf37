use proptest::prelude::*;
use proptest::strategy::ValueTree;
use tcq_core::fast::{pre_level, SAFE_K_FACTOR};
use tcq_core::rate::LastPosTable;
use tcq_core::*;

const SURR: RateMode64 = RateMode::Surrogate { rice_g: 0 };

fn block(seed: u64, qp: i32, scale: f64, w: usize, h: usize) -> (Block64, QuantConfig64) {
    let cfg = QuantConfig::from_qp(qp, DEFAULT_PHI).unwrap();
    (sample_block(cfg.q_step * scale, w, h, seed).unwrap(), cfg)
}

#[test]
fn disabled_accelerations_reproduce_full_search() {
    for seed in 0..50 {
        let (b, cfg) = block(seed, 27 + (seed % 3) as i32 * 5, 3.0, 8, 8);
        let full = tcq_search(&b, &cfg, &SURR).unwrap();
        let acc = accelerated_search(&b, &cfg, &SURR, &DepartureConfig::disabled(), false).unwrap();
        assert_eq!(full, acc);
    }
}

#[test]
fn pruned_stages_stay_in_band() {
    let mut seen = [false; 3];
    for seed in 0..100 {
        let (b, cfg) = block(seed, 32, 4.0, 8, 8);
        let r = accelerated_search(&b, &cfg, &SURR, &DepartureConfig::disabled(), true).unwrap();
        for st in r.stages.iter().filter(|s| s.is_middle()) {
            let case = st.prune_case.unwrap();
            let k = st.counters;
            assert!((10..=15).contains(&k.branches));
            match case {
                PruneCase::Zero | PruneCase::Small => {
                    assert_eq!([k.branches, k.compares, k.dist_evals, k.rate_evals], [10, 5, 3, 3])
                }
                PruneCase::Large => assert_eq!([k.branches, k.compares, k.dist_evals, k.rate_evals], [11, 6, 5, 4]),
            }
            seen[case.id() as usize - 1] = true;
        }
    }
    assert_eq!(seen, [true; 3]);
}

#[test]
fn accelerated_counters_never_exceed_full() {
    for seed in 0..60 {
        let (b, cfg) = block(seed, 22 + (seed % 4) as i32 * 5, 2.0, 8, 8);
        let full = tcq_search(&b, &cfg, &SURR).unwrap();
        for prune in [false, true] {
            let r = accelerated_search(&b, &cfg, &SURR, &DepartureConfig::safe(), prune).unwrap();
            let (a, f) = (r.counters, full.counters);
            assert!(a.branches <= f.branches && a.adds <= f.adds && a.compares <= f.compares);
            assert!(a.selects <= f.selects && a.dist_evals <= f.dist_evals && a.rate_evals <= f.rate_evals);
            assert!(a.stages <= f.stages);
            assert_eq!(dequantize_block::<f64>(&r.indices, cfg.q_step).states, r.states);
        }
    }
}

#[test]
fn risky_factor_trades_cost_for_branches() {
    for seed in 0..200 {
        let (b, cfg) = block(seed, 22 + (seed % 4) as i32 * 5, 1.5, 8, 8);
        let safe = accelerated_search(&b, &cfg, &SURR, &DepartureConfig::safe(), false).unwrap();
        let risky = accelerated_search(&b, &cfg, &SURR, &DepartureConfig::risky(), false).unwrap();
        assert!(risky.counters.branches <= safe.counters.branches);
        assert!(risky.total_cost >= safe.total_cost - 1e-9 * safe.total_cost);
    }
}

#[test]
fn exact_mode_search_is_decodable() {
    let p = RateModelParams::new(2.6, 1.3, 0.9, 0.4);
    for lp in [LpDelta::Zero, LpDelta::Lookup] {
        let dep = DepartureConfig::exact(p, lp).unwrap();
        for seed in 0..30 {
            let (b, cfg) = block(seed, 32, 2.0, 8, 8);
            let r = accelerated_search(&b, &cfg, &RateMode::LinearModel(p), &dep, true).unwrap();
            assert_eq!(dequantize_block::<f64>(&r.indices, cfg.q_step).states, r.states);
        }
    }
}

#[test]
fn dominated_candidates_in_case_one() {
    let q = 1.0;
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let strat = (0.0f64..0.5, 0.01f64..8.0, 0.01f64..8.0);
    let mut checked = 0;
    for _ in 0..10_000 {
        let (c, alpha, beta) = strat.new_tree(&mut runner).unwrap().current();
        let params = RateModelParams::new(alpha, beta, 0.0, 0.0);
        let l = pre_level(c, q);
        assert_eq!(l, 0);
        let d = prune_candidates(&build_candidates(c, q), l).unwrap();
        for &dropped in d.dropped_levels.levels() {
            assert!(delta_distortion(c, 0, dropped, q) <= 0.0);
            assert!(delta_rate_linear(0, index_of_level(dropped), &params) <= 0.0);
            checked += 1;
        }
    }
    assert_eq!(checked, 20_000);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn zero_offset_maximizes_distortion_gain(l in 0i64..20, frac in -0.49f64..0.49, dl in -6i64..6) {
        let c = (l as f64 + frac).max(0.0);
        prop_assume!(dl != 0);
        prop_assert!(delta_distortion(c, l, dl, 1.0) < delta_distortion(c, l, 0, 1.0));
    }

    /// Dropping a position certified by the exact threshold never costs more
    /// than keeping it as the last non-zero coefficient.
    #[test]
    fn exact_departure_is_pairwise_safe(seed in 0u64..100_000, qp in 22i32..38, alpha in 0.5f64..4.0, beta in 0.3f64..3.0, gamma in 0.0f64..1.5) {
        let cfg = QuantConfig::from_qp(qp, DEFAULT_PHI).unwrap();
        let b = sample_block(cfg.q_step * 1.2, 8, 8, seed).unwrap();
        let params = RateModelParams::new(alpha, beta, gamma, 0.0);
        let lp = LastPosTable::cached(8, 8).unwrap();
        let c = b.scan_ordered();
        let levels: Vec<i64> = c.iter().map(|&x| scalar_quantize(x.abs(), cfg.q_step, 0.5)).collect();
        let dep = DepartureConfig::exact(params, LpDelta::Lookup).unwrap();
        let start = departure_point(&b, &cfg, &dep).unwrap();
        // every pre-quantized non-zero above the departure point was dropped
        let dropped: Vec<usize> = (0..c.len()).filter(|&i| levels[i] != 0 && start.is_none_or(|s| i > s)).collect();
        for &i in &dropped {
            let j = levels[..i].iter().rposition(|&v| v != 0);
            let (r_i, r_j) = (lp.bits(i) as f64, j.map_or(0.0, |j| lp.bits(j) as f64));
            let (ca, l) = (c[i].abs(), levels[i]);
            let keep = (ca - cfg.q_step * l as f64).powi(2)
                + cfg.lambda_rd * (alpha + beta * index_of_level(l) as f64 + gamma * r_i);
            let drop = ca * ca + cfg.lambda_rd * gamma * r_j;
            prop_assert!(drop <= keep + 1e-9 * keep, "pos {}: drop {} keep {}", i, drop, keep);
        }
    }

    #[test]
    fn bound_threshold_scales_with_step(k in 0.0f64..4.0, qp in 0i32..51) {
        let cfg = QuantConfig::from_qp(qp, DEFAULT_PHI).unwrap();
        let t = departure_threshold(&cfg, &DepartureConfig::bound(k).unwrap(), 1, 0.0).unwrap();
        prop_assert!((t - k * cfg.q_step).abs() <= 1e-12 * t.max(1.0));
    }
}

#[test]
fn safe_factor_postpones_departure() {
    let mut postponed = 0;
    for seed in 0..100 {
        let (b, cfg) = block(seed, 37, 1.0, 8, 8);
        let natural = find_departure_point(&b, &cfg, 0.0).unwrap();
        let safe = find_departure_point(&b, &cfg, SAFE_K_FACTOR * cfg.q_step).unwrap();
        assert!(safe <= natural);
        postponed += (safe < natural) as u32;
    }
    assert!(postponed > 0);
}

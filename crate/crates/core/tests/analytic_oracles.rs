use prismlab_core::analytic::*;
use prismlab_core::attack::circular_x;
use prismlab_core::channel::ChannelState;
use prismlab_core::{PrismConfig, TimingConstants};

fn choose(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Enumerates every R-subset of W slots and counts those touching the
/// first `c` slots.
fn p_sample_enumerated(c: u32, w: u32, r: u32) -> f64 {
    let row_mask = (1u32 << c) - 1;
    let (mut hit, mut all) = (0u64, 0u64);
    for subset in 0u32..(1 << w) {
        if subset.count_ones() == r {
            all += 1;
            if subset & row_mask != 0 {
                hit += 1;
            }
        }
    }
    hit as f64 / all as f64
}

#[test]
fn p_sample_matches_subset_enumeration() {
    for w in 1..=12 {
        for r in 0..=w {
            for c in 0..=w {
                let got = p_sample(c, w, r).unwrap();
                let want = if r == 0 { 0.0 } else { p_sample_enumerated(c, w, r) };
                assert!((got - want).abs() < 1e-12, "c={c} W={w} R={r}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn p_sample_large_window_matches_symmetric_identity() {
    // C(W-c, R)/C(W, R) = C(W-R, c)/C(W, c).
    for (w, r) in [(65u32, 3u32), (72, 7), (200, 9), (1000, 20)] {
        for c in [1u32, 2, 5, 17, w / 2] {
            let miss = choose(u64::from(w - r), u64::from(c)) / choose(u64::from(w), u64::from(c));
            let got = p_sample(c, w, r).unwrap();
            assert!((got - (1.0 - miss)).abs() < 1e-10, "c={c} W={w} R={r}");
        }
    }
    assert!(p_sample(3, 72, 73).is_err());
    assert_eq!(p_sample(70, 72, 3).unwrap(), 1.0);
}

/// Root of f(p) = p by bisection, an oracle independent of the iteration.
fn shq_fixed_point_bisect(w: u32, r: u32, l: u32, x: u32) -> f64 {
    let k = f64::from(l) * f64::from(w) / f64::from(x);
    let (wf, rf) = (f64::from(w), f64::from(r));
    let g = |p: f64| k * (rf - 1.0 + p.powi(r as i32)) / (wf + k * rf) - p;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn shq_fixed_point_matches_bisection() {
    for (w, r, l) in [(72u32, 3u32, 25u32), (72, 7, 41), (48, 9, 79), (72, 4, 12), (96, 2, 3)] {
        for x in [w, 2 * w, 5 * w, (l + 1) * w] {
            let got = p_shq_fixed_point(w, r, l, x).unwrap();
            let want = shq_fixed_point_bisect(w, r, l, x);
            assert!((got - want).abs() < 1e-9, "({w},{r},{l}) X={x}: {got} vs {want}");
        }
    }
}

#[test]
fn shq_fixed_point_example_at_lookback_edge() {
    let p = p_shq_fixed_point(72, 3, 25, 26 * 72).unwrap();
    assert!((p - 0.025_68).abs() < 5e-5, "{p}");
    assert_eq!(p_shq_fixed_point(72, 3, 0, 72).unwrap(), 0.0);
    assert!(p_shq_fixed_point(72, 3, 25, 71).is_err());
}

#[test]
fn mitigation_probability_decomposes() {
    for (w, r, l, x) in [(72u32, 3u32, 25u32, 144u32), (72, 7, 41, 72), (48, 9, 79, 1000)] {
        let p = p_shq_fixed_point(w, r, l, x).unwrap();
        let (wf, rf) = (f64::from(w), f64::from(r));
        // Default pick when no sample intersects, plus every sampled SHQ hit.
        let want = (1.0 - p.powi(r as i32)) / wf + rf / wf * p;
        assert!((p_mitigate(w, r, l, x).unwrap() - want).abs() < 1e-15);
    }
    // Without history only the default pick remains.
    assert!((p_mitigate(72, 3, 0, 144).unwrap() - 1.0 / 72.0).abs() < 1e-15);
}

/// Fraction of a circular-X attacker's activations that find the row
/// SHQ-resident, measured after the history has warmed up.
fn simulated_shq_residency(w: u32, r: u32, l: u32, x: u32, windows: u64) -> f64 {
    let mut cfg = PrismConfig::new(w, r, l);
    cfg.trr_interval_acts = 0;
    let mut ch = ChannelState::prism(&cfg, &TimingConstants::default(), 1, 0x5eed).unwrap();
    let warm = u64::from(2 * l + 2);
    let (mut resident, mut seen) = (0u64, 0u64);
    for t in 0..warm + windows {
        for s in 0..w {
            let row = circular_x(t, s, w, x);
            if t >= warm {
                seen += 1;
                resident += u64::from(ch.banks()[0].shq_contains(row));
            }
            ch.step(0, row).unwrap();
        }
    }
    resident as f64 / seen as f64
}

#[test]
fn shq_fixed_point_tracks_direct_simulation() {
    for (r, l) in [(3u32, 25u32), (5, 33), (7, 41)] {
        for x in [72u32, 144, 288, 576] {
            let model = p_shq_fixed_point(72, r, l, x).unwrap();
            let sim = simulated_shq_residency(72, r, l, x, 20_000);
            assert!(
                (model - sim).abs() <= 0.02,
                "R={r} L={l} X={x}: model {model:.4} sim {sim:.4}"
            );
        }
    }
}

#[test]
fn markov_residency_closed_form() {
    let p = p_shq_markov(72, 7, 41).unwrap();
    let lp = 41.0 * 6.0 / 72.0;
    assert!((p - lp / (1.0 + lp)).abs() < 1e-15);
    assert_eq!(p_shq_markov(72, 1, 0).unwrap(), 0.0);
}

#[test]
fn ssq_bound_values() {
    let got: Vec<u32> = (1..=9).map(ssq_min_size).collect();
    assert_eq!(got, vec![1, 3, 4, 6, 7, 9, 10, 12, 13]);
}

#[test]
fn dos_bound_matches_slot_accounting() {
    for (w, r, want) in [(72u32, 4u32, 1.39), (72, 7, 1.68), (48, 9, 2.31)] {
        let b = dos_bound_with_cost(w, r, 7.0);
        // R stalls of 7 slots for every W served activations.
        let direct = f64::from(w + 7 * r) / f64::from(w);
        assert!((b.slowdown - direct).abs() < 1e-12);
        assert!((b.slowdown - want).abs() < 0.005, "({w},{r}) {}", b.slowdown);
        assert!((b.loss - 7.0 * f64::from(r) / f64::from(w + 7 * r)).abs() < 1e-12);
    }
    let exact = dos_bound(72, 7, &TimingConstants::default());
    assert!(exact.c_rfm > 7.29 && exact.slowdown > 1.70);
}

#[test]
fn storage_accounting() {
    assert_eq!(storage_bytes(&PrismConfig::preset(1000).unwrap()).total_bytes, 152);
    assert_eq!(storage_bytes(&PrismConfig::preset(500).unwrap()).total_bytes, 625);
    assert_eq!(storage_bytes(&PrismConfig::preset(500).unwrap()).shq_entries, 246);
}

#[test]
fn intersection_reach_of_500_preset() {
    let reach = intersection_reach(72, 7, 41).unwrap();
    assert!(reach >= 0.98, "{reach}");
    let direct = 1.0 - (65.0f64 / 72.0).powi(41);
    assert!((reach - direct).abs() < 1e-15);
}

#[test]
fn residency_grows_with_history_and_shrinks_with_x() {
    for r in 2..=9u32 {
        let mut prev = -1.0;
        for l in 1..=45u32 {
            let p = p_shq_fixed_point(72, r, l, 144).unwrap();
            assert!(p > prev);
            prev = p;
        }
        let mut prev = 2.0;
        for x in (72..=72 * 46).step_by(37) {
            let p = p_shq_fixed_point(72, r, 45, x).unwrap();
            assert!(p < prev);
            prev = p;
        }
    }
}

#[test]
fn abo_lookup() {
    for (q, v) in ABO_ACT_TABLE {
        let a = abo_act_q(q, 3);
        assert_eq!(a.activations, v);
        assert!(a.warning(q).is_none());
    }
    assert_eq!(abo_act_q(1, 3).activations, 3);
    let odd = abo_act_q(12, 3);
    assert_eq!(odd.activations, 12);
    assert!(odd.warning(12).is_some());
}

#[test]
fn supported_threshold_adds_adjustments() {
    let cfg = PrismConfig::preset(500).unwrap();
    let b = min_supported_trh(
        &cfg,
        &TimingConstants::default(),
        &MttfTarget::default(),
        &ModelOptions::default(),
    )
    .unwrap();
    assert_eq!(b.t_hat, b.t_required_max.div_ceil(2));
    assert_eq!(b.t_supported, b.t_hat + 4 + 12);
    assert_eq!(b.worst().t_required, b.t_required_max);
    assert!(b.per_x.iter().all(|r| r.t_required <= b.t_required_max));
}

#[test]
fn stricter_mttf_raises_threshold_modestly() {
    let cfg = PrismConfig::new(72, 4, 12);
    let t = TimingConstants::default();
    let opt = ModelOptions::default();
    let base = min_supported_trh(&cfg, &t, &MttfTarget::default(), &opt)
        .unwrap()
        .t_supported;
    let strict = MttfTarget {
        per_bank_years: 1e6,
        ..MttfTarget::default()
    };
    let high = min_supported_trh(&cfg, &t, &strict, &opt).unwrap().t_supported;
    assert!(high > base);
    assert!((high as f64) < 1.15 * base as f64);
}

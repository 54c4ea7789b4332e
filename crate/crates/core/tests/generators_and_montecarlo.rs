use std::path::Path;

use prismlab_core::analytic::p_mitigate;
use prismlab_core::attack::*;
use prismlab_core::montecarlo::*;
use prismlab_core::types::ROWS_PER_BANK;
use prismlab_core::{PrismConfig, RowId, TimingConstants};

fn acts(events: &[TraceEvent]) -> Vec<(usize, u32)> {
    events
        .iter()
        .filter_map(|e| match *e {
            TraceEvent::Act { bank, row } => Some((bank, row.get())),
            TraceEvent::Idle { .. } => None,
        })
        .collect()
}

#[test]
fn eact_examples() {
    let origin = Path::new("inline");
    let one = EactTiming {
        t_pre_ns: 0.0,
        t_rc_ns: 48.0,
    };
    let out = parse_trace("ACT 0 5 48\nACT 0 5 48\n", origin, Some(one), None).unwrap();
    assert_eq!(acts(&out), vec![(0, 5), (0, 5)]);

    let press = EactTiming {
        t_pre_ns: 48.0,
        t_rc_ns: 48.0,
    };
    let out = parse_trace("ACT 1 9 96\n", origin, Some(press), None).unwrap();
    assert_eq!(acts(&out), vec![(1, 9); 3]);
}

#[test]
fn fractional_eact_accumulates_per_row() {
    let t = EactTiming {
        t_pre_ns: 0.0,
        t_rc_ns: 48.0,
    };
    // 1.5 equivalent activations per record: 1, 2, 1, 2 on one row.
    let out = parse_trace(
        "ACT 0 1 72\nACT 0 1 72\nACT 0 1 72\nACT 0 1 72\n",
        Path::new("x"),
        Some(t),
        None,
    )
    .unwrap();
    assert_eq!(out.len(), 6);
    // A second row keeps its own remainder.
    let out = parse_trace("ACT 0 1 72\nACT 0 2 72\n", Path::new("x"), Some(t), None).unwrap();
    assert_eq!(acts(&out), vec![(0, 1), (0, 2)]);
}

#[test]
fn trace_without_eact_is_identity() {
    let text = "# header\nACT 0 3\nIDLE 0\nACT 2 131071 500 # trailing\n\nACT 1 0\n";
    let out = parse_trace(text, Path::new("t"), None, None).unwrap();
    assert_eq!(out.len(), 4);
    assert_eq!(acts(&out), vec![(0, 3), (2, 131_071), (1, 0)]);
    let err = parse_trace("ACT 0 131072\n", Path::new("t"), None, None).unwrap_err();
    assert!(err.to_string().contains("17-bit"), "{err}");
    assert!(parse_trace("ACT 0 1\nPRE 0\n", Path::new("t"), None, None)
        .unwrap_err()
        .to_string()
        .contains(":2"));
}

#[test]
fn permutation_statistics() {
    let a = RowPermutation::new(0x1234_5678_9abc_def0);
    let again = RowPermutation::new(0x1234_5678_9abc_def0);
    let b = RowPermutation::new(0x0fed_cba9_8765_4321);
    let mut image = vec![false; ROWS_PER_BANK as usize];
    let (mut moved, mut differs) = (0u32, 0u32);
    for v in 0..u64::from(ROWS_PER_BANK) {
        let row = RowId::wrapping(v);
        let pa = a.apply(row);
        assert_eq!(pa, again.apply(row));
        assert_eq!(a.invert(pa), row);
        assert!(!image[pa.index()]);
        image[pa.index()] = true;
        moved += u32::from(pa != row);
        differs += u32::from(pa != b.apply(row));
    }
    let n = f64::from(ROWS_PER_BANK);
    assert!(f64::from(moved) / n >= 0.99);
    assert!(f64::from(differs) / n >= 0.99);
}

#[test]
fn randomized_trace_uses_the_permutation() {
    let key = 99;
    let out = parse_trace("ACT 0 10\nACT 0 11\n", Path::new("t"), None, Some(key)).unwrap();
    let p = RowPermutation::new(key);
    assert_eq!(
        acts(&out),
        vec![
            (0, p.apply(RowId::wrapping(10)).get()),
            (0, p.apply(RowId::wrapping(11)).get())
        ]
    );
}

#[test]
fn circular_round_robin_is_fair() {
    for (w, l, x) in [(72u32, 3u32, 100u32), (48, 2, 7), (72, 1, 1000)] {
        let horizon = u64::from((l + 1) * w * x);
        let p = AttackPattern::circular_x(x, w, horizon, vec![0]).unwrap();
        let mut count = vec![0u64; x as usize];
        for a in p.iter() {
            if let Access::Act { row, .. } = a {
                count[row.index()] += 1;
            }
        }
        let (lo, hi) = (count.iter().min().unwrap(), count.iter().max().unwrap());
        assert!(hi - lo <= 1, "W={w} X={x}: {lo}..{hi}");
        // Odd horizons too.
        let p = p.with_horizon(horizon / 3 + 1);
        let mut count = vec![0u64; x as usize];
        for a in p.iter() {
            if let Access::Act { row, .. } = a {
                count[row.index()] += 1;
            }
        }
        assert!(count.iter().max().unwrap() - count.iter().min().unwrap() <= 1);
    }
}

#[test]
fn boundary_burst_reaches_bound_exactly() {
    for r in 2..=9 {
        let rep = boundary_burst(r).unwrap();
        assert_eq!(rep.peak_ssq as u32, rep.bound, "R={r}");
        assert_eq!(rep.intersecting_samples, 2 * u64::from(r));
    }
}

#[test]
fn chained_alert_budgets() {
    let got: Vec<u32> = [4, 8, 16, 32]
        .iter()
        .map(|&q| chained_alert(q, 4).unwrap().measured)
        .collect();
    assert_eq!(got, vec![7, 10, 12, 15]);
    let single = chained_alert(1, 4).unwrap();
    assert_eq!(single.measured, 3);
    let mut cfg = PrismConfig::preset(500).unwrap();
    cfg.pmq_capacity = 16;
    let covered = chained_alert_with(&cfg, ChainSchedule::Covered, 1).unwrap();
    assert!(covered.measured >= 12);
}

#[test]
fn lookback_edge_gives_default_rate_only() {
    let cfg = PrismConfig::new(72, 3, 25);
    let x = 26 * 72;
    let t = TimingConstants::default();
    let a = AttackPattern::circular_x(x, 72, 300_000, vec![0]).unwrap();
    let s = run_epochs(&cfg, &t, &a, 4, 7, &EpochOptions::default()).unwrap();
    assert_eq!(s.intersections, 0);
    let n = s.windows as f64;
    let p = 1.0 / 72.0;
    let sigma = (p * (1.0 - p) / n).sqrt();
    assert!((s.mitigation_frequency() - p).abs() < 3.0 * sigma);
}

#[test]
fn x_equals_w_matches_model() {
    let cfg = PrismConfig::new(72, 3, 25);
    let t = TimingConstants::default();
    let a = AttackPattern::circular_x(72, 72, t.activation_budget(), vec![0]).unwrap();
    let s = run_epochs(&cfg, &t, &a, 2, 11, &EpochOptions::default()).unwrap();
    let model = p_mitigate(72, 3, 25, 72).unwrap();
    assert!((model - 0.0278).abs() < 0.0005);
    assert!((s.mitigation_frequency() - model).abs() / model < 0.05);
}

/// Probability that `n` Bernoulli(1 - p) trials contain a run of `t`
/// consecutive failures to mitigate.
fn run_probability(n: usize, t: usize, p: f64) -> f64 {
    // state[k]: current run length k < t, no escape yet.
    let mut state = vec![0.0; t];
    state[0] = 1.0;
    let mut escaped = 0.0;
    for _ in 0..n {
        let mut next = vec![0.0; t];
        for (k, &mass) in state.iter().enumerate() {
            next[0] += mass * p;
            if k + 1 == t {
                escaped += mass * (1.0 - p);
            } else {
                next[k + 1] += mass * (1.0 - p);
            }
        }
        state = next;
    }
    escaped
}

#[test]
fn escape_rate_matches_run_length_model() {
    // Without history each of the W rows is mitigated with probability 1/W
    // per window, independently enough for a per-row run-length model.
    let cfg = PrismConfig::new(72, 3, 0);
    let t = TimingConstants::default();
    let windows = 2000usize;
    let a = AttackPattern::circular_x(72, 72, (windows * 72) as u64, vec![0]).unwrap();
    let s = run_epochs(&cfg, &t, &a, 300, 5, &EpochOptions::default()).unwrap();
    let threshold = 560usize;
    let per_row = run_probability(windows, threshold, 1.0 / 72.0);
    let predicted = 1.0 - (1.0 - per_row).powi(72);
    let e = empirical_escape(&s, threshold as u64);
    assert!(e.lo <= predicted && predicted <= e.hi, "{e:?} vs {predicted}");

    assert_eq!(empirical_escape(&s, 1).p, 1.0);
    let beyond = empirical_escape(&s, (windows + 1) as u64);
    assert_eq!(beyond.p, 0.0);
    assert!(beyond.below_resolution);
    assert!(beyond.hi > 0.0);
}

#[test]
fn epochs_are_deterministic_per_seed() {
    let cfg = PrismConfig::preset(500).unwrap();
    let t = TimingConstants::default();
    let a = AttackPattern::circular_x(300, 72, 50_000, vec![0, 1]).unwrap();
    let one = run_epochs(&cfg, &t, &a, 6, 3, &EpochOptions::default()).unwrap();
    let two = run_epochs(&cfg, &t, &a, 6, 3, &EpochOptions::default()).unwrap();
    assert_eq!(one, two);
    let other = run_epochs(&cfg, &t, &a, 6, 4, &EpochOptions::default()).unwrap();
    assert_ne!(one.intersections, other.intersections);
}

#[test]
fn disabling_trr_never_helps_the_defender() {
    let cfg = PrismConfig::preset(1000).unwrap();
    let t = TimingConstants::default();
    let a = AttackPattern::circular_x(144, 72, 200_000, vec![0]).unwrap();
    let with = run_epochs(&cfg, &t, &a, 4, 1, &EpochOptions::default()).unwrap();
    let without = run_epochs(
        &cfg,
        &t,
        &a,
        4,
        1,
        &EpochOptions {
            trr: false,
            horizon: None,
        },
    )
    .unwrap();
    assert!(without.rfms.mean >= with.rfms.mean);
}

const GRID: &str = r#"
window = 72
samples = [3, 5]
lookback = [10, 25]
X = 144

[montecarlo]
epochs = 2
horizon = 20000
"#;

#[test]
fn sweep_is_reproducible() {
    let grid = SweepGrid::from_toml_str(GRID).unwrap();
    assert_eq!(grid.point_count(), 4);
    let a = sweep(&grid, 42, None).unwrap();
    let b = sweep(&grid, 42, None).unwrap();
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    write_sweep_csv(&mut ca, &grid, 42, &a).unwrap();
    write_sweep_csv(&mut cb, &grid, 42, &b).unwrap();
    assert_eq!(ca, cb);
    let text = String::from_utf8(ca).unwrap();
    assert!(text.starts_with(&format!("# schema: {SWEEP_SCHEMA}")), "{text}");
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 5);
    assert!(a.iter().all(|r| r.status == "ok" && r.mc_p_m.is_some()));
}

#[test]
fn single_point_sweep_and_invalid_points() {
    let grid = SweepGrid::from_toml_str("window = 72\nsamples = [7]\nlookback = 41\n").unwrap();
    let rows = sweep(&grid, 1, None).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].t_supported, Some(488));

    let grid = SweepGrid::from_toml_str("window = [8, 72]\nsamples = 3\nlookback = 5\n").unwrap();
    let rows = sweep(&grid, 1, None).unwrap();
    assert!(rows[0].status.starts_with("invalid"));
    assert_eq!(rows[0].t_supported, None);
    assert_eq!(rows[1].status, "ok");
}

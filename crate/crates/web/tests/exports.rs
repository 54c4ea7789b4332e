use prismlab_web::{circular_counters, residency_curve, threshold_surface, MAX_SIM_ACTS};

#[test]
fn surface_layout_and_monotonicity() {
    let s = threshold_surface(72, 3, 5, 20, 25, 1e4).unwrap();
    assert_eq!(s.len(), 3 * 6);
    // R = 3, L = 25 is the last entry of the first row.
    assert_eq!(s[5], 962.0);
    for r in 0..3 {
        for l in 0..5 {
            assert!(s[r * 6 + l + 1] <= s[r * 6 + l]);
        }
    }
    assert!(threshold_surface(72, 5, 3, 1, 2, 1e4).is_err());
    assert!(threshold_surface(72, 3, 3, 1, 2, -1.0).is_err());
}

#[test]
fn invalid_surface_points_are_nan() {
    // W = 12 admits R <= 3 only.
    let s = threshold_surface(12, 3, 4, 5, 5, 1e4).unwrap();
    assert!(s[0].is_finite());
    assert!(s[1].is_nan());
}

#[test]
fn residency_curve_spans_the_lookback() {
    let c = residency_curve(72, 7, 41, 50).unwrap();
    assert_eq!(c.len() % 3, 0);
    assert_eq!(c[0], 72.0);
    assert_eq!(c[c.len() - 3], 42.0 * 72.0);
    let p: Vec<f64> = c.chunks(3).map(|t| t[1]).collect();
    assert!(p.windows(2).all(|w| w[1] < w[0]));
    assert!(residency_curve(16, 5, 3, 10).is_err());
}

#[test]
fn counters_from_a_short_run() {
    let c = circular_counters(72, 7, 41, 7, 20_000, false, 1).unwrap();
    assert_eq!(c.len(), 9);
    assert!(c[0] > 0.0 && c[1] > 0.0);
    assert_eq!(c[3], 0.0);
    assert!(c[8] > 1.0);
    assert_eq!(c, circular_counters(72, 7, 41, 7, 20_000, false, 1).unwrap());
    assert!(circular_counters(72, 7, 41, 7, MAX_SIM_ACTS + 1, true, 1).is_err());
    assert!(circular_counters(72, 7, 41, 0, 10, true, 1).is_err());
}

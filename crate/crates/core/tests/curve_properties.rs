mod common;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rdpg_isomap::curve::{self, ArcLengthParam, ParametricCurve};

fn hw() -> ParametricCurve {
    ParametricCurve::hardy_weinberg()
}

#[test]
fn hardy_weinberg_total_length() {
    // speed is sqrt(6 u^2 + 2) with u = 2 tau - 1
    let oracle = 2f64.sqrt() + (2.0 + 3f64.sqrt()).ln() / 6f64.sqrt();
    assert_abs_diff_eq!(hw().arc_length(0.0, 1.0).unwrap(), oracle, epsilon = 1e-8);
}

#[test]
fn arc_length_table_inverse_round_trip() {
    let table = ArcLengthParam::new(&hw()).unwrap();
    for i in 0..=200 {
        let tau = i as f64 / 200.0;
        let t = table.length_at(tau).unwrap();
        assert_abs_diff_eq!(t, hw().arc_length(0.0, tau).unwrap(), epsilon = 1e-9);
        assert_abs_diff_eq!(table.invert(t).unwrap(), tau, epsilon = 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn arc_length_is_additive(a in 0.0..1.0f64, b in 0.0..1.0f64, c in 0.0..1.0f64) {
        let mut v = [a, b, c];
        v.sort_by(f64::total_cmp);
        let c0 = hw();
        let whole = c0.arc_length(v[0], v[2]).unwrap();
        let parts = c0.arc_length(v[0], v[1]).unwrap() + c0.arc_length(v[1], v[2]).unwrap();
        prop_assert!((whole - parts).abs() <= 1e-8);
    }

    #[test]
    fn arc_length_dominates_chord(a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let c0 = hw();
        let chord = (c0.evaluate(b).unwrap() - c0.evaluate(a).unwrap()).norm();
        let arc = c0.arc_length(a.min(b), a.max(b)).unwrap();
        prop_assert!(arc + 1e-9 >= chord);
    }

    #[test]
    fn arc_length_is_reparametrization_free(a in 0.0..1.0f64, b in 0.0..1.0f64) {
        // psi(phi(tau)) with phi(tau) = (tau + tau^2) / 2
        let composed = ParametricCurve::polynomial(vec![
            vec![0.0, 0.0, 0.25, 0.5, 0.25],
            vec![0.0, 1.0, 0.5, -1.0, -0.5],
            vec![1.0, -1.0, -0.75, 0.5, 0.25],
        ]).unwrap();
        let phi = |t: f64| 0.5 * (t + t * t);
        let (lo, hi) = (a.min(b), a.max(b));
        let direct = hw().arc_length(phi(lo), phi(hi)).unwrap();
        prop_assert!((composed.arc_length(lo, hi).unwrap() - direct).abs() <= 1e-8);
    }

    #[test]
    fn covering_radius_matches_gap_formula(t in prop::collection::vec(0.0..1.6f64, 1..40)) {
        let r = curve::covering_radius(1.6, &t).unwrap();
        let oracle = common::gap_covering_radius(1.6, &t);
        prop_assert!(r <= oracle + 1e-12);
        prop_assert!(r >= oracle - 1.6 / 1e4);
    }

    #[test]
    fn frechet_mean_within_range(t in prop::collection::vec(0.0..2.0f64, 1..30)) {
        let m = curve::frechet_mean_arclength(&t).unwrap();
        let lo = t.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(m >= lo - 1e-12 && m <= hi + 1e-12);
    }
}

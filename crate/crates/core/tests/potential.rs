use std::f64::consts::{PI, TAU};

use approx::assert_abs_diff_eq;
use hillspec::potential::{
    concatenate_blocks, sup_distance, BlockLayout, Potential, PotentialKind,
};
use hillspec::Error;
use proptest::prelude::*;

fn coeffs() -> impl Strategy<Value = (f64, f64, Vec<f64>)> {
    (
        0.5..8.0f64,
        -2.0..2.0f64,
        prop::collection::vec(-2.0..2.0f64, 0..6),
    )
}

#[test]
fn cosine_series_evaluates_its_terms() {
    let v = Potential::cosine_series(2.0, 0.5, vec![1.0, 0.0, -0.25]).unwrap();
    for x in [-3.1, 0.0, 0.4, 1.7, 9.2] {
        let want = 0.5 + (PI * x).cos() - 0.25 * (3.0 * PI * x).cos();
        assert_abs_diff_eq!(v.eval(x), want, epsilon = 1e-12);
    }
    assert_eq!(v.kind(), PotentialKind::CosineSeries);
    assert_abs_diff_eq!(v.sup_bound(), 1.75);
}

#[test]
fn constructors_reject_bad_input() {
    assert!(Potential::cosine_series(0.0, 0.0, vec![1.0]).is_err());
    assert!(Potential::cosine_series(1.0, f64::NAN, vec![]).is_err());
    assert!(Potential::constant_with_period(1.0, -1.0).is_err());
    assert!(Potential::samples(1.0, vec![0.0, 0.5], vec![1.0]).is_err());
    assert!(Potential::samples(1.0, vec![0.5, 0.2], vec![1.0, 2.0]).is_err());
    assert!(Potential::samples(1.0, vec![0.0, 1.0], vec![1.0, 2.0]).is_err());
    let v = Potential::constant(1.0);
    assert!(v.scale(0.0).is_err());
    assert!(v.scale(-1.0).is_err());
    assert!(v.with_period_multiple(0).is_err());
}

#[test]
fn samples_interpolate_periodically() {
    let v = Potential::samples(2.0, vec![0.0, 1.0, 2.0], vec![0.0, 4.0, 0.0]).unwrap();
    assert_abs_diff_eq!(v.eval(0.5), 2.0, epsilon = 1e-14);
    assert_abs_diff_eq!(v.eval(1.5), 2.0, epsilon = 1e-14);
    assert_abs_diff_eq!(v.eval(-0.5), 2.0, epsilon = 1e-14);
    assert_abs_diff_eq!(v.eval(5.0), 4.0, epsilon = 1e-14);
    assert_eq!(v.breakpoints(0.0, 4.0), vec![1.0, 2.0, 3.0]);
}

#[test]
fn shifted_and_scaled() {
    let v = Potential::cosine_series(1.0, 0.0, vec![2.0]).unwrap();
    let w = v.scale(3.0).unwrap().shift(-1.0).unwrap();
    assert_abs_diff_eq!(w.eval(0.0), 5.0, epsilon = 1e-14);
    assert_abs_diff_eq!(w.eval(0.5), -7.0, epsilon = 1e-14);
}

#[test]
fn add_cosines_needs_a_series() {
    let v = Potential::cosine_series(1.0, 0.0, vec![2.0]).unwrap();
    let w = v.add_cosines(&[(3, 0.5), (1, -1.0)]).unwrap();
    assert_eq!(w.cosine_coefficients().unwrap().1, &[1.0, 0.0, 0.5]);
    assert!(v.add_cosines(&[(0, 1.0)]).is_err());
    let s = Potential::samples(1.0, vec![0.0], vec![1.0]).unwrap();
    assert!(s.add_cosines(&[(1, 1.0)]).is_err());
}

#[test]
fn json_documents() {
    let v = Potential::from_json(
        r#"{"kind":"cosine_series","period":6.283185307179586,"coeffs":[2.0]}"#,
    )
    .unwrap();
    assert_abs_diff_eq!(v.eval(PI), -2.0, epsilon = 1e-12);
    let c = Potential::from_json(r#"{"kind":"constant","value":-3}"#).unwrap();
    assert_eq!(c.period(), 1.0);
    assert_eq!(c.eval(0.3), -3.0);
    assert!(Potential::from_json(r#"{"kind":"cosine_series","period":-1,"coeffs":[]}"#).is_err());
    assert!(matches!(Potential::from_json("{"), Err(Error::Json(_))));
}

fn small_concatenation() -> (Potential, Potential) {
    let base = Potential::cosine_series(1.0, 0.0, vec![1.0]).unwrap();
    let vp = base.with_period_multiple(2).unwrap();
    let blocks = vec![
        vp.add_cosines(&[(1, 0.1)]).unwrap(),
        vp.shift(0.05).unwrap(),
        vp.add_cosines(&[(3, -0.1)]).unwrap(),
    ];
    let layout = BlockLayout::new(2.0, 3, 3, 24.0).unwrap();
    (
        concatenate_blocks(&layout, blocks, &base, 0.5).unwrap(),
        base,
    )
}

#[test]
fn concatenation_layout_and_values() {
    let (v, base) = small_concatenation();
    let cc = v.as_concatenation().unwrap();
    assert_eq!(cc.layout().anchors, vec![0.0, 8.0, 16.0, 24.0]);
    assert_eq!(cc.layout().block_interval(1), (8.0, 14.0));
    assert_eq!(cc.layout().connector_interval(2), (22.0, 24.0));
    // inside block 1: base shifted by 0.05
    assert_abs_diff_eq!(v.eval(9.3), base.eval(9.3) + 0.05, epsilon = 1e-14);
    assert_abs_diff_eq!(v.eval(9.3 + 24.0), v.eval(9.3), epsilon = 1e-12);
    // continuity at every segment boundary
    for &p in &cc.layout().segment_points() {
        assert_abs_diff_eq!(v.eval(p - 1e-9), v.eval(p + 1e-9), epsilon = 1e-7);
    }
    assert!(sup_distance(&v, &base, 0.0, 24.0, 5000) < 0.2);
    assert!(v.sup_bound() >= sup_distance(&v, &Potential::constant(0.0), 0.0, 24.0, 5000));
}

#[test]
fn concatenation_checks() {
    let base = Potential::cosine_series(1.0, 0.0, vec![1.0]).unwrap();
    let far = base.shift(1.0).unwrap().with_period_multiple(2).unwrap();
    let layout = BlockLayout::new(2.0, 3, 1, 8.0).unwrap();
    assert!(matches!(
        concatenate_blocks(&layout, vec![far], &base, 0.5),
        Err(Error::Connector { .. })
    ));
    let odd = Potential::cosine_series(1.5, 0.0, vec![1.0]).unwrap();
    assert!(matches!(
        concatenate_blocks(&layout, vec![odd], &base, 0.5),
        Err(Error::Layout(_))
    ));
    assert!(BlockLayout::new(2.0, 0, 1, 8.0).is_err());
    assert!(BlockLayout::new(2.0, 3, 2, 8.0).is_err());
}

#[test]
fn concatenation_json_round_trip() {
    let (v, _) = small_concatenation();
    let w = Potential::from_json(&v.to_json().unwrap()).unwrap();
    assert_eq!(w.period(), v.period());
    for i in 0..200 {
        let x = 0.123 * i as f64;
        assert_eq!(w.eval(x), v.eval(x));
    }
}

proptest! {
    #[test]
    fn json_round_trip((t, m, c) in coeffs(), x in -20.0..20.0f64) {
        let v = Potential::cosine_series(t, m, c).unwrap();
        let w = Potential::from_json(&v.to_json().unwrap()).unwrap();
        prop_assert_eq!(w.eval(x), v.eval(x));
        prop_assert_eq!(w.period(), v.period());
    }

    #[test]
    fn sup_bound_dominates((t, m, c) in coeffs(), x in -20.0..20.0f64) {
        let v = Potential::cosine_series(t, m, c).unwrap();
        prop_assert!(v.eval(x).abs() <= v.sup_bound() + 1e-12);
        prop_assert!(v.eval(x).abs() <= v.tightened_sup_bound(256) + 1e-12);
        prop_assert!(v.tightened_sup_bound(256) <= v.sup_bound());
    }

    #[test]
    fn periodic((t, m, c) in coeffs(), x in -20.0..20.0f64) {
        let v = Potential::cosine_series(t, m, c).unwrap();
        prop_assert!((v.eval(x + t) - v.eval(x)).abs() < 1e-9);
    }

    #[test]
    fn period_multiple_is_the_same_function((t, m, c) in coeffs(), n in 1usize..6, x in -20.0..20.0f64) {
        let v = Potential::cosine_series(t, m, c).unwrap();
        let w = v.with_period_multiple(n).unwrap();
        prop_assert!((w.period() - n as f64 * t).abs() < 1e-12);
        prop_assert!((w.eval(x) - v.eval(x)).abs() < 1e-9);
    }

    #[test]
    fn samples_period_multiple(n in 1usize..5, x in -5.0..5.0f64) {
        let v = Potential::samples(1.0, vec![0.0, 0.3, 0.7], vec![1.0, -1.0, 0.5]).unwrap();
        let w = v.with_period_multiple(n).unwrap();
        prop_assert!((w.eval(x) - v.eval(x)).abs() < 1e-12);
    }

    #[test]
    fn cosine_phase(k in 1usize..5, x in 0.0..TAU) {
        let mut c = vec![0.0; k];
        c[k - 1] = 1.0;
        let v = Potential::cosine_series(TAU, 0.0, c).unwrap();
        prop_assert!((v.eval(x) - (k as f64 * x).cos()).abs() < 1e-12);
    }
}

use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use hillspec::potential::Potential;
use hillspec::propagator::{
    free_transfer, log_spectral_radius_from_trace, monodromy, solve_on_grid,
    spectral_radius_from_trace, transfer_matrix, transfer_path, PropagationSettings, SL2Matrix,
};
use proptest::prelude::*;

fn st() -> PropagationSettings {
    PropagationSettings::default()
}

fn series() -> impl Strategy<Value = Potential> {
    (
        0.5..4.0f64,
        -1.0..1.0f64,
        prop::collection::vec(-1.5..1.5f64, 1..5),
    )
        .prop_map(|(t, m, c)| Potential::cosine_series(t, m, c).unwrap())
}

#[test]
fn sl2_basics() {
    let m = SL2Matrix::new(2.0, 3.0, 1.0, 2.0);
    assert_eq!(m.det(), 1.0);
    assert_eq!(m.trace(), 4.0);
    assert_abs_diff_eq!(
        (m * m.inverse()).max_abs_diff(&SL2Matrix::IDENTITY),
        0.0,
        epsilon = 1e-14
    );
    assert_abs_diff_eq!(
        m.pow(5).max_abs_diff(&(m * m * m * m * m)),
        0.0,
        epsilon = 1e-9
    );
    assert_abs_diff_eq!(m.hs_norm(), (18.0f64).sqrt(), epsilon = 1e-14);
    assert!(m.op_norm() <= m.hs_norm() && m.op_norm() >= m.hs_norm() / 2f64.sqrt());
    let r = SL2Matrix::rotation(0.3);
    assert_abs_diff_eq!(r.op_norm(), 1.0, epsilon = 1e-14);
    assert_abs_diff_eq!(spectral_radius_from_trace(1.5), 1.0);
    assert_abs_diff_eq!(spectral_radius_from_trace(-2.5), 2.0, epsilon = 1e-14);
    assert_eq!(log_spectral_radius_from_trace(f64::INFINITY), f64::INFINITY);
}

#[test]
fn free_closed_forms() {
    let v = Potential::constant(0.0);
    for &(e, t) in &[
        (4.0, 0.7),
        (0.0, 1.3),
        (-2.0, 0.9),
        (50.0, 2.0),
        (-9.0, 1.5),
    ] {
        let m = transfer_matrix(&v, e, 0.3, 0.3 + t, &st()).unwrap();
        assert!(
            m.max_abs_diff(&free_transfer(e, t)) < 1e-9 * m.max_abs().max(1.0),
            "E={e}"
        );
    }
}

#[test]
fn monodromy_examples() {
    let free = Potential::constant_with_period(0.0, PI).unwrap();
    assert_abs_diff_eq!(
        monodromy(&free, 4.0, 1.1, &st()).unwrap().trace(),
        2.0,
        epsilon = 1e-9
    );
    let v = Potential::cosine_series(2.0 * PI, 0.0, vec![2.0]).unwrap();
    assert!(monodromy(&v, -5.0, 0.0, &st()).unwrap().trace().abs() > 2.0);
}

#[test]
fn bad_settings_are_rejected() {
    let v = Potential::constant(0.0);
    let bad = PropagationSettings {
        rel_tol: 0.0,
        ..st()
    };
    assert!(transfer_matrix(&v, 1.0, 0.0, 1.0, &bad).is_err());
}

#[test]
fn path_and_solutions_agree() {
    let v = Potential::cosine_series(1.0, 0.0, vec![1.0, 0.5]).unwrap();
    let ts = [0.0, 0.4, 1.1, 2.5];
    let path = transfer_path(&v, 3.0, &ts, &st()).unwrap();
    for (k, &t) in ts.iter().enumerate() {
        let m = transfer_matrix(&v, 3.0, 0.0, t, &st()).unwrap();
        assert!(m.max_abs_diff(&path[k]) < 1e-9);
    }
    let sol = solve_on_grid(&v, 3.0, [0.0, 1.0], &ts, &st()).unwrap();
    assert_abs_diff_eq!(sol[2][1], path[2].d, epsilon = 1e-14);
}

#[test]
fn kinks_of_samples_are_respected() {
    // a triangle wave: the integrator has to break at the nodes
    let v = Potential::samples(1.0, vec![0.0, 0.5], vec![0.0, 2.0]).unwrap();
    let m = monodromy(&v, 1.0, 0.0, &st()).unwrap();
    let tight = PropagationSettings {
        rel_tol: 1e-13,
        abs_tol: 1e-15,
        ..st()
    };
    let m2 = monodromy(&v, 1.0, 0.0, &tight).unwrap();
    assert!(m.max_abs_diff(&m2) < 1e-9);
    assert!(m.det_drift().abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cocycle(v in series(), e in -10.0..10.0f64, s in 0.0..1.0f64, u in 0.0..1.0f64, t in 0.0..1.0f64) {
        let p = v.period();
        let (s, u, t) = (s * p, u * p, t * p);
        let direct = transfer_matrix(&v, e, t, s, &st()).unwrap();
        let split = transfer_matrix(&v, e, u, s, &st()).unwrap() * transfer_matrix(&v, e, t, u, &st()).unwrap();
        prop_assert!(direct.max_abs_diff(&split) < 1e-8 * direct.max_abs().max(1.0));
    }

    #[test]
    fn inverse_and_determinant(v in series(), e in -10.0..10.0f64, s in 0.0..3.0f64, t in 0.0..3.0f64) {
        let fwd = transfer_matrix(&v, e, s, t, &st()).unwrap();
        let back = transfer_matrix(&v, e, t, s, &st()).unwrap();
        prop_assert!(back.max_abs_diff(&fwd.inverse()) < 1e-8 * fwd.max_abs().max(1.0).powi(2));
        prop_assert!(fwd.det_drift().abs() < 1e-9);
    }

    #[test]
    fn trace_is_base_independent(v in series(), e in -10.0..10.0f64, b1 in 0.0..5.0f64, b2 in 0.0..5.0f64) {
        let t1 = monodromy(&v, e, b1, &st()).unwrap().trace();
        let t2 = monodromy(&v, e, b2, &st()).unwrap().trace();
        prop_assert!((t1 - t2).abs() < 1e-8 * t1.abs().max(1.0));
    }

    #[test]
    fn free_random(e in -25.0..100.0f64, t in 0.01..3.0f64) {
        let v = Potential::constant(0.0);
        let m = transfer_matrix(&v, e, 0.0, t, &st()).unwrap();
        let f = free_transfer(e, t);
        prop_assert!(m.max_abs_diff(&f) < 1e-9 * f.max_abs().max(1.0));
    }
}

use approx::assert_abs_diff_eq;
use hillspec::limitperiodic::*;
use hillspec::potential::Potential;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn level(n: usize, period: f64, epsilon: f64, delta: f64) -> Hd0Level {
    let scale = 2f64.powi(n as i32);
    Hd0Level {
        n,
        potential: Potential::constant_with_period(0.0, period).unwrap(),
        period,
        nn: 1,
        epsilon,
        epsilon_terms: None,
        big_lambda: scale,
        r: scale,
        lambdas: vec![1.0],
        measures: vec![delta],
        delta,
        construction: None,
    }
}

fn synthetic() -> Hd0Schedule {
    let l0 = level(0, 1.0, 1.0, 3.0);
    let mut l1 = level(1, 4.0, 0.0, 0.8);
    l1.epsilon = next_epsilon_terms(&l0, 1).min();
    let mut l2 = level(2, 16.0, 0.0, 0.01);
    l2.epsilon = next_epsilon_terms(&l1, 2).min();
    Hd0Schedule {
        epsilon0: 1.0,
        depth: 2,
        levels: vec![l0, l1, l2],
        stopped: None,
    }
}

#[test]
fn first_step_halves() {
    let l0 = level(0, 1.0, 1.0, 3.0);
    let t = next_epsilon_terms(&l0, 1);
    assert_eq!(t.min(), 0.5);
    assert!(t.gordon.is_none() && t.spectral.is_none());
}

#[test]
fn later_steps_take_the_minimum() {
    let l1 = level(1, 4.0, 0.5, 0.8);
    let t = next_epsilon_terms(&l1, 2);
    assert_eq!(t.halving, 0.25);
    assert_eq!(t.gordon, Some(0.5 * 2f64.powf(-4.0)));
    assert_eq!(t.spectral, Some(0.8 / 8.0));
    assert_eq!(t.min(), 0.03125);
}

#[test]
fn epsilon_and_tail_checks() {
    let s = synthetic();
    assert!(check_epsilons(&s).iter().all(|c| c.exact));
    let tails = check_tails(&s);
    assert_eq!(tails.len(), 2);
    // level 1: Λ₁·ε₂ = 2·0.03125 < 0.4
    assert_abs_diff_eq!(tails[0].lhs, 0.0625);
    assert!(tails[0].holds);
    // level 2 has an empty tail
    assert_eq!(tails[1].lhs, 0.0);
    let mut bad = s.clone();
    bad.levels[2].epsilon *= 1.0 + 1e-15;
    assert!(!check_epsilons(&bad)[1].exact);
    assert_eq!(s.tail_sum(0), s.levels[1].epsilon + s.levels[2].epsilon);
    assert!(s.level(3).is_err());
}

#[test]
fn gordon_examples() {
    let v = Potential::cosine_series(2.0, 0.0, vec![1.0, 0.5]).unwrap();
    assert!(gordon_defect(&v, 2.0, 64).defect < 1e-12);
    let c = Potential::cosine_series(2.0 * std::f64::consts::PI, 0.0, vec![1.0]).unwrap();
    let rep = gordon_defect(&c, std::f64::consts::PI, 64);
    assert_abs_diff_eq!(rep.defect, 2.0, epsilon = 1e-9);
    assert!(rep.grid_points >= 2 * 64 * 3);
    let rep = rep.against(2, 3.0);
    assert_eq!(rep.bound, Some(0.125));
    assert_abs_diff_eq!(rep.ratio.unwrap(), 16.0, epsilon = 1e-8);
}

#[test]
fn cover_sum_examples() {
    let c = cover_sum(&[(-2.0, 2.0)], 0.0, 3.0, 0.5).unwrap();
    assert_abs_diff_eq!(c.sum, 2.0);
    let e = cover_sum(&[], 0.01, 3.0, 0.5).unwrap();
    assert_abs_diff_eq!(e.sum, 2.0 * 0.02f64.sqrt(), epsilon = 1e-15);
    assert_eq!(e.intervals, vec![(-3.0, -2.98), (2.98, 3.0)]);
    assert!(cover_sum(&[], 0.01, 3.0, 0.0).is_err());
    assert!(cover_sum(&[], -0.01, 3.0, 0.5).is_err());
}

#[test]
fn cover_containment() {
    let c = cover_sum(&[(0.0, 0.1), (0.12, 0.2)], 0.04, 1.0, 1.0).unwrap();
    assert!(cover_contains(&c, &[(0.05, 0.18)], 0.0));
    assert!(!cover_contains(&c, &[(0.2, 0.3)], 0.0));
    assert!(cover_contains(&c, &[(0.2, 0.3)], 0.1));
}

#[test]
fn hausdorff_bound_preconditions() {
    let s = synthetic();
    let bs = hillspec::floquet::BandSettings::default();
    assert!(hausdorff_upper_bound(&s, 0, 0.5, 1.0, 1, &bs).is_err());
    assert!(hausdorff_upper_bound(&s, 3, 0.5, 1.0, 1, &bs).is_err());
    assert!(hausdorff_upper_bound(&s, 1, 0.5, 3.0, 1, &bs).is_err());
    // free operator of period 4: bands [0, π²/16] and [π²/16, π²/4] clipped at 2
    let c = hausdorff_upper_bound(&s, 1, 0.5, 1.0, 1, &bs).unwrap();
    let edge = std::f64::consts::PI.powi(2) / 16.0;
    assert_eq!(c.intervals.len(), 4);
    assert_abs_diff_eq!(c.intervals[0].0, -0.4, epsilon = 1e-6);
    assert_abs_diff_eq!(c.intervals[0].1, edge + 0.4, epsilon = 1e-6);
    assert_abs_diff_eq!(c.intervals[1].1, 2.4, epsilon = 1e-6);
    assert!(c.bound.unwrap() > 0.0);
}

#[test]
fn schedule_arguments_are_checked() {
    let v = Potential::cosine_series(1.0, 0.0, vec![2.0]).unwrap();
    let st = Hd0Settings::desk();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(hd0_sequence(&v, 0.0, 1, &[0], &st, &mut rng).is_err());
    assert!(hd0_sequence(&v, 0.5, 0, &[], &st, &mut rng).is_err());
    assert!(hd0_sequence(&v, 0.5, 2, &[0], &st, &mut rng).is_err());
}

#[test]
fn an_underflowing_step_stops_the_schedule() {
    let v = Potential::cosine_series(1.0, 0.0, vec![2.0]).unwrap();
    let st = Hd0Settings {
        epsilon_floor: 10.0,
        ..Hd0Settings::desk()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let s = hd0_sequence(&v, 0.5, 2, &[0, 0], &st, &mut rng).unwrap();
    assert_eq!(s.completed(), 0);
    assert!(s.stopped.unwrap().contains("level 1"));
    assert!(s.levels[0].delta > 0.0);
}

#[test]
fn schedule_json_round_trip() {
    let s = synthetic();
    let text = serde_json::to_string(&s).unwrap();
    let back: Hd0Schedule = serde_json::from_str(&text).unwrap();
    assert_eq!(back.levels.len(), 3);
    assert_eq!(back.levels[2].epsilon, s.levels[2].epsilon);
}

proptest! {
    #[test]
    fn cover_sum_decreases_in_alpha(
        bands in prop::collection::vec((-0.9..0.9f64, 0.0..0.05f64), 0..8),
        delta in 0.0..0.05f64,
        a1 in 0.05..1.0f64,
        a2 in 0.05..1.0f64,
    ) {
        let bands: Vec<(f64, f64)> = bands.into_iter().map(|(a, w)| (a, a + w)).collect();
        let (lo, hi) = if a1 < a2 { (a1, a2) } else { (a2, a1) };
        let s1 = cover_sum(&bands, delta, 1.0, lo).unwrap();
        let s2 = cover_sum(&bands, delta, 1.0, hi).unwrap();
        prop_assert!(s1.sum >= s2.sum - 1e-12);
        prop_assert!(s1.intervals.iter().all(|&(a, b)| b - a <= s1.mesh + 1e-15));
        prop_assert!(cover_contains(&s1, &bands, 0.0));
    }

    #[test]
    fn gordon_defect_is_nonnegative(t in 0.1..5.0f64, c in prop::collection::vec(-1.0..1.0f64, 1..4)) {
        let v = Potential::cosine_series(1.3, 0.0, c).unwrap();
        let rep = gordon_defect(&v, t, 16);
        prop_assert!(rep.defect >= 0.0);
        prop_assert!(rep.defect <= 2.0 * v.sup_bound() + 1e-12);
    }
}

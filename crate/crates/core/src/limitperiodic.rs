//! Iterated thin-spectrum perturbations converging to a limit-periodic
//! potential, with the diagnostics that can be evaluated on finitely many
//! levels: the step-size recursion, tail sums, Gordon defects and
//! Hausdorff cover sums.
//!
//! Level `n` uses `Λ_n = r_n = 2ⁿ` and the step
//!
//! ```text
//! ε_n = min(ε_{n−1}/2, ½·n^{−T_{n−1}}, δ_{n−1}/(4Λ_{n−1}))
//! ```
//!
//! where `δ_n` is the largest spectral measure of `λV_n` in `[−r_n, r_n]`
//! over couplings in `[Λ_n⁻¹, Λ_n]`. The first level halves `ε_0` and
//! nothing else. The limit `V_∞` itself is never built.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StageExt};
use crate::floquet::{band_structure, spectrum_measure, BandSettings};
use crate::potential::Potential;
use crate::thinspec::{lambda_grid, prepare_cover, ThinSpecSettings};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hd0Settings {
    pub thin: ThinSpecSettings,
    /// Break-point spacing target as a fraction of `ε_n`; the thin-spectrum
    /// default applies when absent.
    pub spacing_fraction: Option<f64>,
    /// Couplings in the grid over which `δ_n` is maximized.
    pub lambda_points: usize,
    /// Steps below this stop the schedule.
    pub epsilon_floor: f64,
    pub bands: BandSettings,
}

impl Default for Hd0Settings {
    fn default() -> Self {
        Hd0Settings {
            thin: ThinSpecSettings::default(),
            spacing_fraction: None,
            lambda_points: 9,
            epsilon_floor: 1e-14,
            bands: BandSettings::default(),
        }
    }
}

impl Hd0Settings {
    /// Per-level thin-spectrum settings as in [`ThinSpecSettings::desk`].
    pub fn desk() -> Self {
        Hd0Settings {
            spacing_fraction: Some(0.5),
            ..Self::default()
        }
    }

    fn thin_for(&self, epsilon: f64) -> ThinSpecSettings {
        let mut s = self.thin.clone();
        if let Some(f) = self.spacing_fraction {
            s.spacing_target = Some(f * epsilon);
        }
        s
    }
}

/// The three candidates whose minimum is `ε_n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonTerms {
    /// `ε_{n−1}/2`.
    pub halving: f64,
    /// `½·n^{−T_{n−1}}`; absent on the first level.
    pub gordon: Option<f64>,
    /// `δ_{n−1}/(4Λ_{n−1})`; absent on the first level.
    pub spectral: Option<f64>,
}

impl EpsilonTerms {
    pub fn min(&self) -> f64 {
        [Some(self.halving), self.gordon, self.spectral]
            .into_iter()
            .flatten()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Summary of the thin-spectrum construction behind a level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelConstruction {
    pub nprime: usize,
    pub ell: usize,
    pub ntilde: usize,
    pub eta: f64,
    pub sup_deviation: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Hd0Level {
    pub n: usize,
    pub potential: Potential,
    pub period: f64,
    /// Period ratio `T_n/T_{n−1}`; 1 on level 0.
    pub nn: usize,
    pub epsilon: f64,
    /// Absent on level 0, whose `ε` is the input radius.
    pub epsilon_terms: Option<EpsilonTerms>,
    pub big_lambda: f64,
    pub r: f64,
    pub lambdas: Vec<f64>,
    /// `Leb(σ(H_{λV_n}) ∩ [−r_n, r_n])` for each coupling in `lambdas`.
    pub measures: Vec<f64>,
    pub delta: f64,
    pub construction: Option<LevelConstruction>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Hd0Schedule {
    pub epsilon0: f64,
    pub depth: usize,
    /// Levels `0..` actually completed.
    pub levels: Vec<Hd0Level>,
    /// Why fewer than `depth` levels were produced.
    pub stopped: Option<String>,
}

impl Hd0Schedule {
    pub fn completed(&self) -> usize {
        self.levels.len().saturating_sub(1)
    }

    pub fn level(&self, n: usize) -> Result<&Hd0Level> {
        self.levels.get(n).ok_or_else(|| {
            Error::invalid(format!(
                "level {n} is missing; the schedule has levels 0..={}",
                self.completed()
            ))
        })
    }

    /// `Σ_{j>n} ε_j` over the computed levels.
    pub fn tail_sum(&self, n: usize) -> f64 {
        self.levels.iter().skip(n + 1).fold(0.0, |acc, l| acc + l.epsilon)
    }
}

/// `ε_n` from the data of level `n − 1`.
pub fn next_epsilon_terms(prev: &Hd0Level, n: usize) -> EpsilonTerms {
    let halving = 0.5 * prev.epsilon;
    if n <= 1 {
        return EpsilonTerms {
            halving,
            gordon: None,
            spectral: None,
        };
    }
    EpsilonTerms {
        halving,
        gordon: Some(0.5 * (n as f64).powf(-prev.period)),
        spectral: Some(prev.delta / (4.0 * prev.big_lambda)),
    }
}

fn measure_level(
    v: &Potential,
    big_lambda: f64,
    r: f64,
    settings: &Hd0Settings,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let lambdas = lambda_grid(big_lambda, settings.lambda_points);
    let measures = lambdas
        .par_iter()
        .map(|&l| spectrum_measure(v, l, r, &settings.bands))
        .collect::<Result<Vec<_>>>()?;
    let delta = measures.iter().copied().fold(0.0, f64::max);
    Ok((lambdas, measures, delta))
}

/// Runs the schedule for `depth` levels. `n_schedule[n − 1]` is the `N` of
/// level `n`, where 0 asks for the smallest admissible one. The run stops
/// early, keeping the finished levels, when a step falls below
/// `settings.epsilon_floor`.
pub fn hd0_sequence<G: Rng + ?Sized>(
    v0: &Potential,
    epsilon0: f64,
    depth: usize,
    n_schedule: &[usize],
    settings: &Hd0Settings,
    rng: &mut G,
) -> Result<Hd0Schedule> {
    if !(epsilon0 > 0.0 && epsilon0.is_finite()) {
        return Err(Error::invalid(format!(
            "epsilon0 must be positive, got {epsilon0}"
        )));
    }
    if depth == 0 {
        return Err(Error::invalid("depth must be at least 1"));
    }
    if n_schedule.len() < depth {
        return Err(Error::invalid(format!(
            "N schedule has {} entries for depth {depth}",
            n_schedule.len()
        )));
    }
    let (lambdas, measures, delta) =
        measure_level(v0, 1.0, 1.0, settings).stage("level 0: spectral measure")?;
    let mut levels = vec![Hd0Level {
        n: 0,
        potential: v0.clone(),
        period: v0.period(),
        nn: 1,
        epsilon: epsilon0,
        epsilon_terms: None,
        big_lambda: 1.0,
        r: 1.0,
        lambdas,
        measures,
        delta,
        construction: None,
    }];
    let mut stopped = None;
    for n in 1..=depth {
        let prev = levels.last().expect("level 0 exists");
        let terms = next_epsilon_terms(prev, n);
        let epsilon = terms.min();
        if !(epsilon >= settings.epsilon_floor) {
            stopped = Some(format!(
                "level {n}: step {epsilon:e} is below the floor {:e} (terms {terms:?})",
                settings.epsilon_floor
            ));
            break;
        }
        let scale = 2f64.powi(n as i32);
        let stage = format!("level {n}");
        let cover = prepare_cover(
            &prev.potential,
            epsilon,
            scale,
            scale,
            &settings.thin_for(epsilon),
            rng,
        )
        .stage(&stage)?;
        let nn = match n_schedule[n - 1] {
            0 => cover.min_n(),
            k => k,
        };
        let plan = cover.assemble(nn).stage(&stage)?;
        let (lambdas, measures, delta) = measure_level(&plan.result, scale, scale, settings)
            .stage(&format!("level {n}: spectral measure"))?;
        levels.push(Hd0Level {
            n,
            period: plan.result.period(),
            nn,
            epsilon,
            epsilon_terms: Some(terms),
            big_lambda: scale,
            r: scale,
            lambdas,
            measures,
            delta,
            construction: Some(LevelConstruction {
                nprime: plan.cover.nprime,
                ell: plan.ell(),
                ntilde: plan.ntilde,
                eta: plan.eta(),
                sup_deviation: plan.sup_deviation,
            }),
            potential: plan.result,
        });
    }
    Ok(Hd0Schedule {
        epsilon0,
        depth,
        levels,
        stopped,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpsilonCheck {
    pub n: usize,
    pub recorded: f64,
    pub recomputed: f64,
    pub exact: bool,
}

/// Recomputes every `ε_n` from the recorded data of level `n − 1`.
pub fn check_epsilons(schedule: &Hd0Schedule) -> Vec<EpsilonCheck> {
    schedule
        .levels
        .windows(2)
        .map(|w| {
            let recomputed = next_epsilon_terms(&w[0], w[1].n).min();
            EpsilonCheck {
                n: w[1].n,
                recorded: w[1].epsilon,
                recomputed,
                exact: recomputed == w[1].epsilon,
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailCheck {
    pub n: usize,
    /// `Λ_n·Σ_{j>n} ε_j`.
    pub lhs: f64,
    /// `δ_n/2`.
    pub rhs: f64,
    pub holds: bool,
}

/// `Λ_n·Σ_{j>n} ε_j < δ_n/2` for each completed level `n ≥ 1`.
pub fn check_tails(schedule: &Hd0Schedule) -> Vec<TailCheck> {
    schedule
        .levels
        .iter()
        .skip(1)
        .map(|l| {
            let lhs = l.big_lambda * schedule.tail_sum(l.n);
            let rhs = 0.5 * l.delta;
            TailCheck {
                n: l.n,
                lhs,
                rhs,
                holds: lhs < rhs,
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GordonReport {
    pub test_period: f64,
    /// `max |V(x) − V(x + T)|` over the grid on `[−T, T]`.
    pub defect: f64,
    /// Grid points per unit length.
    pub grid_density: usize,
    pub grid_points: usize,
    /// `n^{−T_n}`, when compared against a level.
    pub bound: Option<f64>,
    pub ratio: Option<f64>,
}

impl GordonReport {
    /// Attaches the level-`n` target `n^{−T_n}`.
    pub fn against(mut self, n: usize, period: f64) -> Self {
        let bound = (n as f64).powf(-period);
        self.bound = Some(bound);
        self.ratio = Some(self.defect / bound);
        self
    }
}

/// Sampled Gordon defect of `v` at the test period `t_test`.
pub fn gordon_defect(v: &Potential, t_test: f64, grid_density: usize) -> GordonReport {
    let density = grid_density.max(1);
    let steps = ((2.0 * t_test * density as f64).ceil() as usize).max(1);
    let defect = (0..=steps)
        .into_par_iter()
        .map(|i| {
            let x = -t_test + 2.0 * t_test * i as f64 / steps as f64;
            (v.eval(x) - v.eval(x + t_test)).abs()
        })
        .reduce(|| 0.0, f64::max);
    GordonReport {
        test_period: t_test,
        defect,
        grid_density: density,
        grid_points: steps + 1,
        bound: None,
        ratio: None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverSum {
    pub alpha: f64,
    pub window: (f64, f64),
    /// Upper bound on the interval lengths.
    pub mesh: f64,
    pub intervals: Vec<(f64, f64)>,
    pub sum: f64,
    /// `e^{−√T_n}`, the scale in the comparison bound; absent for a bare
    /// cover.
    pub scale: Option<f64>,
    pub bound: Option<f64>,
}

/// `Σ |I|^α` over the `δ/2`-neighbourhoods of `bands` and the two edge
/// intervals `[−r, −r + 2δ]`, `[r − 2δ, r]`.
pub fn cover_sum(bands: &[(f64, f64)], delta: f64, r: f64, alpha: f64) -> Result<CoverSum> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!(
            "alpha must lie in (0, 1], got {alpha}"
        )));
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::invalid(format!(
            "delta must be nonnegative, got {delta}"
        )));
    }
    let mut intervals: Vec<(f64, f64)> = bands
        .iter()
        .map(|&(lo, hi)| (lo - 0.5 * delta, hi + 0.5 * delta))
        .collect();
    intervals.push((-r, -r + 2.0 * delta));
    intervals.push((r - 2.0 * delta, r));
    let sum = intervals
        .iter()
        .map(|&(a, b)| {
            let len = b - a;
            if len > 0.0 {
                len.powf(alpha)
            } else {
                0.0
            }
        })
        .sum();
    let longest = bands.iter().map(|b| b.1 - b.0).fold(delta, f64::max);
    Ok(CoverSum {
        alpha,
        window: (-r, r),
        mesh: longest + delta,
        intervals,
        sum,
        scale: None,
        bound: None,
    })
}

/// The level-`n` cover of `Σ_{∞,λ} ∩ [−r_j, r_j]` and its comparison bound
/// `((1/π)T_n√(Λ_n(‖V_0‖∞ + ε_0) + r_n) + 3)·2^α·e^{−α√T_n}`.
pub fn hausdorff_upper_bound(
    schedule: &Hd0Schedule,
    n: usize,
    alpha: f64,
    lambda: f64,
    j: usize,
    settings: &BandSettings,
) -> Result<CoverSum> {
    if n < j {
        return Err(Error::invalid(format!(
            "level {n} is below the window index {j}"
        )));
    }
    let level = schedule.level(n)?;
    if !(lambda >= 1.0 / level.big_lambda && lambda <= level.big_lambda) {
        return Err(Error::invalid(format!(
            "coupling {lambda} lies outside [{}, {}]",
            1.0 / level.big_lambda,
            level.big_lambda
        )));
    }
    let r = level.r;
    let bs = band_structure(&level.potential.scale(lambda)?, r, settings)
        .stage(&format!("level {n}: bands at lambda = {lambda}"))?;
    let bands: Vec<(f64, f64)> = bs
        .bands
        .iter()
        .map(|b| (b.lo.max(-r), b.hi.min(r)))
        .filter(|b| b.1 >= b.0)
        .collect();
    let mut cover = cover_sum(&bands, level.delta, r, alpha)?;
    let v0 = &schedule.level(0)?.potential;
    let t = level.period;
    let count = t / PI * (level.big_lambda * (v0.sup_bound() + schedule.epsilon0) + r).sqrt();
    let scale = (-t.sqrt()).exp();
    cover.scale = Some(scale);
    cover.bound = Some((count + 3.0) * 2f64.powf(alpha) * scale.powf(alpha));
    Ok(cover)
}

/// Whether every band lies in the union of the cover intervals, each widened
/// by `slack` on both sides.
pub fn cover_contains(cover: &CoverSum, bands: &[(f64, f64)], slack: f64) -> bool {
    let mut widened: Vec<(f64, f64)> = cover
        .intervals
        .iter()
        .map(|&(a, b)| (a - slack, b + slack))
        .collect();
    widened.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(widened.len());
    for (a, b) in widened {
        match merged.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => merged.push((a, b)),
        }
    }
    bands
        .iter()
        .all(|&(lo, hi)| merged.iter().any(|&(a, b)| a <= lo && hi <= b))
}

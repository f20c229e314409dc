//! Periodic perturbations with exponentially thin spectrum.
//!
//! Starting from a `T`-periodic `V`, the construction promotes `V` to a
//! longer period `T′ = N′T`, finds a finite family of `T′`-periodic
//! potentials `W_1, …, W_ℓ` near `V` whose resolvent sets jointly cover the
//! window `[−R, R]` for every coupling in `[Λ⁻¹, Λ]`, and then concatenates
//! long runs of each `W_j`. Inside a run of `W_j` the transfer matrices grow
//! at rate `L(E, λW_j)`, which forces every band of the concatenation to be
//! short.
//!
//! Two ways of producing the family are available. [`CoverStrategy::ShiftFamily`]
//! opens all gaps by a random perturbation and then translates the result in
//! small steps, as in the classical argument. [`CoverStrategy::SiteGreedy`]
//! opens one gap at a time with a single cosine at a new frequency plus a
//! constant shift, and keeps adding such potentials until the Lyapunov
//! exponent clears a target everywhere on the `(E, λ)` grid. The latter needs
//! far fewer potentials for the same window.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StageExt};
use crate::floquet::{
    band_structure, conjugator_from_fixed_point, lyapunov, mobius_fixed_point_with_margin,
    BandSettings, BandStructure, EdgeKind, FastSettings, LemmaConstants, MonodromyFit,
};
use crate::potential::{concatenate_blocks, sup_distance, BlockLayout, Potential};
use crate::propagator::{monodromy, transfer_matrix, PropagationSettings};

/// `n` log-spaced couplings in `[Λ⁻¹, Λ]`.
pub fn lambda_grid(big_lambda: f64, n: usize) -> Vec<f64> {
    if n <= 1 || big_lambda == 1.0 {
        return vec![1.0];
    }
    let l = big_lambda.ln();
    (0..n)
        .map(|i| (-l + 2.0 * l * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive, got {x}")))
    }
}

fn check_coupling_range(big_lambda: f64) -> Result<()> {
    if big_lambda.is_finite() && big_lambda >= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "Lambda must be at least 1, got {big_lambda}"
        )))
    }
}

/// `N′`-break points of `λV` in `[−R, R]`, grouped by band of `σ(H_{λV})`.
///
/// Inside a band `D_T` runs monotonically between `±2`, and `D_{N′T} = ±2`
/// exactly where `D_T = 2cos(πj/N′)`, so each band carries `N′ + 1` break
/// points including its edges. A band crossing `±R` is cut there, and the cut
/// is listed as a break point.
pub fn break_points(
    v: &Potential,
    lambda: f64,
    nprime: usize,
    r: f64,
    settings: &BandSettings,
) -> Result<Vec<Vec<f64>>> {
    if nprime == 0 {
        return Err(Error::invalid("N' must be positive"));
    }
    let lv = v.scale(lambda)?;
    let bs = band_structure(&lv, r, settings)?;
    let prop = &settings.propagation;
    let mut out = Vec::with_capacity(bs.bands.len());
    for band in &bs.bands {
        let start = if band.lo_kind == EdgeKind::Periodic {
            2.0
        } else {
            -2.0
        };
        let mut pts = vec![band.lo];
        for j in 1..nprime {
            let level = 2.0 * (PI * j as f64 / nprime as f64).cos();
            let level = if start > 0.0 { level } else { -level };
            // D − level changes sign across the band; bisect on that sign
            let (mut a, mut b) = (band.lo, band.hi);
            let sa = start - level;
            for _ in 0..settings.max_bisect {
                if b - a <= settings.edge_tol {
                    break;
                }
                let m = 0.5 * (a + b);
                let dm = crate::floquet::discriminant(&lv, m, prop)?;
                if (dm - level) * sa > 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            pts.push(0.5 * (a + b));
        }
        pts.push(band.hi);
        pts.retain(|&e| (-r..=r).contains(&e));
        // a band crossing the window edge is cut there
        if band.lo < -r && band.hi > -r {
            pts.push(-r);
        }
        if band.lo < r && band.hi > r {
            pts.push(r);
        }
        pts.sort_by(f64::total_cmp);
        if !pts.is_empty() {
            out.push(pts);
        }
    }
    Ok(out)
}

/// Largest distance between consecutive `N′`-break points of `λV` inside
/// `[−R, R]`. Open gaps of `λV` are not counted.
pub fn break_point_spacing(
    v: &Potential,
    lambda: f64,
    nprime: usize,
    r: f64,
    settings: &BandSettings,
) -> Result<f64> {
    Ok(break_points(v, lambda, nprime, r, settings)?
        .iter()
        .flat_map(|pts| pts.windows(2).map(|w| w[1] - w[0]))
        .fold(0.0, f64::max))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapSearch {
    /// Smallest acceptable gap length.
    pub gap_min: f64,
    pub max_tries: usize,
}

impl Default for GapSearch {
    fn default() -> Self {
        GapSearch {
            gap_min: 1e-6,
            max_tries: 20,
        }
    }
}

/// Shortest gap of a band structure that meets `[−R, R]`, or `None` when no
/// gap does.
pub fn min_gap(bs: &BandStructure, r: f64) -> Option<f64> {
    bs.gaps()
        .into_iter()
        .filter(|&(a, b)| b >= -r && a <= r)
        .map(|(a, b)| b - a)
        .min_by(f64::total_cmp)
}

/// A potential within `ε/(9Λ)` of `v` for which every gap of `λv` meeting
/// `[−R, R]` has length at least `gap_min`. Returns it with its shortest
/// gap. `v` is returned unchanged when it already qualifies; otherwise random
/// cosines at the frequencies `v` does not use are added.
#[allow(clippy::too_many_arguments)]
pub fn open_gaps_perturbation<G: Rng + ?Sized>(
    v: &Potential,
    lambda: f64,
    r: f64,
    epsilon: f64,
    big_lambda: f64,
    search: &GapSearch,
    settings: &BandSettings,
    rng: &mut G,
) -> Result<(Potential, f64)> {
    check_positive("epsilon", epsilon)?;
    check_positive("lambda", lambda)?;
    check_coupling_range(big_lambda)?;
    let gap_of = |w: &Potential| -> Result<f64> {
        let bs = band_structure(&w.scale(lambda)?, r, settings)?;
        Ok(min_gap(&bs, r).unwrap_or(f64::INFINITY))
    };
    let g0 = gap_of(v)?;
    if g0 >= search.gap_min {
        return Ok((v.clone(), g0));
    }
    let (_, coeffs) = v
        .cosine_coefficients()
        .ok_or_else(|| Error::invalid("gap opening needs a cosine series"))?;
    let t = v.period();
    let m_max = (t * (r + lambda * v.sup_bound()).max(0.0).sqrt() / PI).ceil() as usize + 1;
    let free: Vec<usize> = (1..=m_max)
        .filter(|&m| coeffs.get(m - 1).is_none_or(|&a| a == 0.0))
        .collect();
    if free.is_empty() {
        return Err(Error::invalid("no free frequency to perturb"));
    }
    let budget = 0.98 * epsilon / (9.0 * big_lambda);
    let mut best = (v.clone(), g0);
    for _ in 0..search.max_tries {
        let mut weights: Vec<f64> = free
            .iter()
            .map(|_| {
                let w = rng.random_range(0.5..1.0);
                if rng.random_bool(0.5) {
                    w
                } else {
                    -w
                }
            })
            .collect();
        let total: f64 = weights.iter().map(|w| w.abs()).sum();
        for w in &mut weights {
            *w *= budget / total;
        }
        let terms: Vec<(usize, f64)> = free.iter().copied().zip(weights).collect();
        let cand = v.add_cosines(&terms)?;
        let g = gap_of(&cand)?;
        if g > best.1 {
            best = (cand, g);
        }
        if best.1 >= search.gap_min {
            return Ok(best);
        }
    }
    Err(Error::GapSearchExhausted {
        tries: search.max_tries,
        best_gap: best.1,
        best: Box::new(best.0),
    })
}

/// Translates `U_i = V′ + iγ`, `i = −k..k`, whose spectra at `λ₀` leave no
/// point of `[−R, R]` uncovered.
#[derive(Clone, Debug, Serialize)]
pub struct ShiftFamily {
    pub family: Vec<Potential>,
    pub gamma: f64,
    pub gamma0: f64,
    pub k: usize,
}

/// Intersection of two sorted lists of disjoint closed intervals.
fn intersect(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if lo <= hi {
            out.push((lo, hi));
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// Number of points in the grid check of [`resolvent_cover_family`].
pub const COVER_GRID_POINTS: usize = 10_000;

pub fn resolvent_cover_family(
    vp: &Potential,
    lambda0: f64,
    r: f64,
    epsilon: f64,
    big_lambda: f64,
    settings: &BandSettings,
) -> Result<ShiftFamily> {
    check_positive("epsilon", epsilon)?;
    check_positive("lambda0", lambda0)?;
    check_coupling_range(big_lambda)?;
    let lv = vp.scale(lambda0)?;
    let bs = band_structure(&lv, r, settings)?;
    let gamma0 = min_gap(&bs, r).unwrap_or(f64::INFINITY);
    if !(gamma0 > 0.0) {
        return Err(Error::invalid(format!(
            "a gap meeting the window is closed (gamma0 = {gamma0})"
        )));
    }
    let gamma = (epsilon / 3.0).min(gamma0 / (2.0 * big_lambda));
    let k = (epsilon / (3.0 * gamma)).ceil() as usize;
    let reach = lambda0 * gamma * k as f64;
    let wide = band_structure(&lv, r + reach, settings)?;
    let bands: Vec<(f64, f64)> = wide.bands.iter().map(|b| (b.lo, b.hi)).collect();
    let ki = k as i64;
    let mut uncovered = vec![(-r, r)];
    for i in -ki..=ki {
        let s = lambda0 * gamma * i as f64;
        let shifted: Vec<(f64, f64)> = bands.iter().map(|&(a, b)| (a + s, b + s)).collect();
        uncovered = intersect(&uncovered, &shifted);
    }
    if let Some(&(lo, hi)) = uncovered.first() {
        return Err(Error::CoverFailure { lo, hi });
    }
    for n in 0..COVER_GRID_POINTS {
        let e = -r + 2.0 * r * n as f64 / (COVER_GRID_POINTS - 1) as f64;
        let covered = (-ki..=ki).any(|i| !wide.contains(e - lambda0 * gamma * i as f64));
        if !covered {
            return Err(Error::CoverFailure { lo: e, hi: e });
        }
    }
    let family = (-ki..=ki)
        .map(|i| vp.shift(gamma * i as f64))
        .collect::<Result<Vec<_>>>()?;
    Ok(ShiftFamily {
        family,
        gamma,
        gamma0,
        k,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovGrid {
    pub e_points: usize,
    pub lambda_points: usize,
    /// Factor applied to the grid minimum.
    pub safety: f64,
    pub fast: FastSettings,
    pub propagation: PropagationSettings,
}

impl Default for LyapunovGrid {
    fn default() -> Self {
        LyapunovGrid {
            e_points: 401,
            lambda_points: 17,
            safety: 0.9,
            fast: FastSettings::default(),
            propagation: PropagationSettings::default(),
        }
    }
}

impl LyapunovGrid {
    fn energies(&self, r: f64) -> Vec<f64> {
        let n = self.e_points.max(2);
        (0..n)
            .map(|i| -r + 2.0 * r * i as f64 / (n - 1) as f64)
            .collect()
    }
}

/// The uniform Lyapunov floor of a family over an `(E, λ)` grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovFloor {
    /// `safety · grid_min`.
    pub eta: f64,
    pub grid_min: f64,
    /// `(E, λ)` where the grid minimum is attained.
    pub argmin: (f64, f64),
    pub lambdas: Vec<f64>,
    pub e_points: usize,
    pub e_spacing: f64,
}

/// `η = safety · min_{(E, λ)} max_j L(E, λW_j)` over a grid of
/// `[−R, R] × [Λ⁻¹, Λ]`.
pub fn min_max_lyapunov(
    family: &[Potential],
    big_lambda: f64,
    r: f64,
    grid: &LyapunovGrid,
) -> Result<LyapunovFloor> {
    if family.is_empty() {
        return Err(Error::invalid("empty family"));
    }
    check_positive("R", r)?;
    check_coupling_range(big_lambda)?;
    let lambdas = lambda_grid(big_lambda, grid.lambda_points);
    let es = grid.energies(r);
    let pad = 1e-9 * (1.0 + r);
    let jobs: Vec<(usize, &Potential)> = (0..lambdas.len())
        .flat_map(|k| family.iter().map(move |w| (k, w)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(k, w)| -> Result<(usize, Vec<f64>)> {
            let fit = MonodromyFit::new(
                &w.scale(lambdas[k])?,
                -r - pad,
                r + pad,
                &grid.fast,
                &grid.propagation,
            )?;
            Ok((k, es.iter().map(|&e| fit.lyapunov(e)).collect()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = vec![vec![0.0_f64; es.len()]; lambdas.len()];
    for (k, row) in rows {
        for (b, l) in best[k].iter_mut().zip(row) {
            *b = b.max(l);
        }
    }
    let mut grid_min = f64::INFINITY;
    let mut argmin = (0.0, 0.0);
    for (k, row) in best.iter().enumerate() {
        for (i, &l) in row.iter().enumerate() {
            if l < grid_min {
                grid_min = l;
                argmin = (es[i], lambdas[k]);
            }
        }
    }
    let eta = grid.safety * grid_min;
    if !(eta > 0.0) {
        return Err(Error::NoLyapunovFloor { minimum: grid_min });
    }
    Ok(LyapunovFloor {
        eta,
        grid_min,
        argmin,
        lambdas,
        e_points: es.len(),
        e_spacing: es[1] - es[0],
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverStrategy {
    SiteGreedy,
    ShiftFamily,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteCover {
    /// Cosine amplitude as a fraction of `ε`.
    pub amplitude_fraction: f64,
    /// Distance kept from the `ε`-ball, as a fraction of `ε`.
    pub margin_fraction: f64,
    pub shift_points: usize,
    /// Lyapunov exponent a grid point needs from some member to count as
    /// covered.
    pub eta_target: f64,
    pub max_family: usize,
}

impl Default for SiteCover {
    fn default() -> Self {
        SiteCover {
            amplitude_fraction: 0.48,
            margin_fraction: 0.04,
            shift_points: 13,
            eta_target: 0.005,
            max_family: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThinSpecSettings {
    pub strategy: CoverStrategy,
    /// Candidate values of `N′`, tried in increasing order.
    pub nprime_candidates: Vec<usize>,
    /// Required break-point spacing; `ε/9` when absent.
    pub spacing_target: Option<f64>,
    pub spacing_lambda_points: usize,
    pub lyapunov: LyapunovGrid,
    pub site: SiteCover,
    pub gap_search: GapSearch,
    /// Couplings `λ₀` used by [`CoverStrategy::ShiftFamily`].
    pub shift_lambda_points: usize,
    pub bands: BandSettings,
}

impl Default for ThinSpecSettings {
    fn default() -> Self {
        ThinSpecSettings {
            strategy: CoverStrategy::SiteGreedy,
            nprime_candidates: vec![2, 4, 8, 16, 24, 32, 48, 64, 72, 96, 128, 192, 256, 384, 512],
            spacing_target: None,
            spacing_lambda_points: 9,
            lyapunov: LyapunovGrid::default(),
            site: SiteCover::default(),
            gap_search: GapSearch::default(),
            shift_lambda_points: 3,
            bands: BandSettings::default(),
        }
    }
}

impl ThinSpecSettings {
    /// Settings sized for a single workstation: break points need only be
    /// `ε/2` apart, which the shifted single-cosine sites can bridge.
    pub fn desk(epsilon: f64) -> Self {
        ThinSpecSettings {
            spacing_target: Some(0.5 * epsilon),
            ..Self::default()
        }
    }
}

/// Everything of the construction that does not depend on `N`.
#[derive(Clone, Debug, Serialize)]
pub struct ThinCover {
    pub base: Potential,
    pub epsilon: f64,
    pub r: f64,
    pub big_lambda: f64,
    pub nprime: usize,
    pub tprime: f64,
    pub spacing_target: f64,
    /// `(λ, break-point spacing)` at the chosen `N′`.
    pub spacing: Vec<(f64, f64)>,
    pub strategy: CoverStrategy,
    pub family: Vec<Potential>,
    /// `(frequency index, amplitude, shift)` of each site-cover member.
    pub sites: Vec<(usize, f64, f64)>,
    pub gamma: Option<f64>,
    pub gamma0: Option<f64>,
    pub k: Option<usize>,
    pub floor: LyapunovFloor,
}

/// Smallest candidate `N′` whose break-point spacing is below the target for
/// every coupling of a grid of `[Λ⁻¹, Λ]`.
pub fn choose_nprime(
    v: &Potential,
    r: f64,
    big_lambda: f64,
    target: f64,
    settings: &ThinSpecSettings,
) -> Result<(usize, Vec<(f64, f64)>)> {
    let lambdas = lambda_grid(big_lambda, settings.spacing_lambda_points);
    let mut cands: Vec<usize> = settings
        .nprime_candidates
        .iter()
        .copied()
        .filter(|&n| n as f64 > 1.0 / v.period())
        .collect();
    cands.sort_unstable();
    for &np in &cands {
        let mut rows = Vec::with_capacity(lambdas.len());
        let mut ok = true;
        for &lam in &lambdas {
            let s = break_point_spacing(v, lam, np, r, &settings.bands)?;
            rows.push((lam, s));
            if s >= target {
                ok = false;
                break;
            }
        }
        if ok {
            return Ok((np, rows));
        }
    }
    Err(Error::invalid(format!(
        "no candidate N' brings the break-point spacing below {target}"
    )))
}

/// Runs every `N`-independent stage: choice of `N′`, the cover family and
/// its Lyapunov floor.
pub fn prepare_cover<G: Rng + ?Sized>(
    v: &Potential,
    epsilon: f64,
    r: f64,
    big_lambda: f64,
    settings: &ThinSpecSettings,
    rng: &mut G,
) -> Result<ThinCover> {
    check_positive("epsilon", epsilon)?;
    check_positive("R", r)?;
    check_coupling_range(big_lambda)?;
    let target = settings.spacing_target.unwrap_or(epsilon / 9.0);
    let (nprime, spacing) =
        choose_nprime(v, r, big_lambda, target, settings).stage("choosing N'")?;
    let vp = v.with_period_multiple(nprime)?;
    let tprime = vp.period();
    let mut cover = ThinCover {
        base: v.clone(),
        epsilon,
        r,
        big_lambda,
        nprime,
        tprime,
        spacing_target: target,
        spacing,
        strategy: settings.strategy,
        family: Vec::new(),
        sites: Vec::new(),
        gamma: None,
        gamma0: None,
        k: None,
        floor: LyapunovFloor {
            eta: 0.0,
            grid_min: 0.0,
            argmin: (0.0, 0.0),
            lambdas: Vec::new(),
            e_points: 0,
            e_spacing: 0.0,
        },
    };
    match settings.strategy {
        CoverStrategy::ShiftFamily => {
            let mut gamma = f64::INFINITY;
            let mut gamma0 = f64::INFINITY;
            let mut k = 0;
            for lam0 in lambda_grid(big_lambda, settings.shift_lambda_points) {
                let (q, _) = open_gaps_perturbation(
                    &vp,
                    lam0,
                    r,
                    epsilon,
                    big_lambda,
                    &settings.gap_search,
                    &settings.bands,
                    rng,
                )
                .stage("opening gaps")?;
                let fam = resolvent_cover_family(&q, lam0, r, epsilon, big_lambda, &settings.bands)
                    .stage("shift family")?;
                gamma = gamma.min(fam.gamma);
                gamma0 = gamma0.min(fam.gamma0);
                k = k.max(fam.k);
                cover.family.extend(fam.family);
            }
            cover.gamma = Some(gamma);
            cover.gamma0 = Some(gamma0);
            cover.k = Some(k);
        }
        CoverStrategy::SiteGreedy => {
            let (family, sites) =
                site_greedy(&vp, epsilon, r, big_lambda, settings).stage("site cover")?;
            let s = &settings.site;
            if s.shift_points > 1 {
                let cmax = epsilon * (1.0 - s.amplitude_fraction - s.margin_fraction);
                cover.gamma = Some(2.0 * cmax / (s.shift_points - 1) as f64);
            }
            cover.family = family;
            cover.sites = sites;
        }
    }
    cover.floor = min_max_lyapunov(&cover.family, big_lambda, r, &settings.lyapunov)
        .stage("Lyapunov floor")?;
    Ok(cover)
}

type Sites = (Vec<Potential>, Vec<(usize, f64, f64)>);

/// Greedy choice of single-cosine sites `V′ + a·cos(2πmx/T′) + c`.
///
/// The Lyapunov exponent of a shifted site is read off the unshifted one via
/// `L(E, λ(W + c)) = L(E − λc, λW)`, so each frequency is fitted once per
/// coupling.
fn site_greedy(
    vp: &Potential,
    epsilon: f64,
    r: f64,
    big_lambda: f64,
    settings: &ThinSpecSettings,
) -> Result<Sites> {
    let s = &settings.site;
    let grid = &settings.lyapunov;
    let a = s.amplitude_fraction * epsilon;
    let cmax = epsilon * (1.0 - s.amplitude_fraction - s.margin_fraction);
    if !(a > 0.0 && cmax >= 0.0) {
        return Err(Error::invalid(
            "site amplitude must leave room inside the epsilon ball",
        ));
    }
    let shifts: Vec<f64> = if s.shift_points <= 1 || cmax == 0.0 {
        vec![0.0]
    } else {
        (0..s.shift_points)
            .map(|i| -cmax + 2.0 * cmax * i as f64 / (s.shift_points - 1) as f64)
            .collect()
    };
    let tp = vp.period();
    let top = r + big_lambda * (vp.sup_bound() + epsilon);
    let m_max = (tp * top.sqrt() / PI).ceil() as usize + 1;
    let lambdas = lambda_grid(big_lambda, grid.lambda_points);
    let es = grid.energies(r);
    let lo = -r - big_lambda * cmax - 1e-6;
    let hi = r + big_lambda * cmax + 1e-6;

    // coverage bitsets: one per candidate over the (λ, E) grid
    let npts = lambdas.len() * es.len();
    let words = npts.div_ceil(64);
    let jobs: Vec<(usize, usize)> = (1..=m_max)
        .flat_map(|m| (0..lambdas.len()).map(move |k| (m, k)))
        .collect();
    let tables = jobs
        .par_iter()
        .map(|&(m, k)| -> Result<Vec<Vec<u64>>> {
            let w = vp.add_cosines(&[(m, a)])?.scale(lambdas[k])?;
            let fit = MonodromyFit::new(&w, lo, hi, &grid.fast, &grid.propagation)?;
            Ok(shifts
                .iter()
                .map(|&c| {
                    let mut bits = vec![0u64; words];
                    for (i, &e) in es.iter().enumerate() {
                        if fit.lyapunov(e - lambdas[k] * c) >= s.eta_target {
                            let p = k * es.len() + i;
                            bits[p / 64] |= 1 << (p % 64);
                        }
                    }
                    bits
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cand: Vec<(usize, f64, Vec<u64>)> = Vec::new();
    for (ci, &c) in shifts.iter().enumerate() {
        for m in 1..=m_max {
            let mut bits = vec![0u64; words];
            for k in 0..lambdas.len() {
                let t = &tables[(m - 1) * lambdas.len() + k][ci];
                for (b, x) in bits.iter_mut().zip(t) {
                    *b |= x;
                }
            }
            cand.push((m, c, bits));
        }
    }
    let mut uncovered = vec![u64::MAX; words];
    if npts % 64 != 0 {
        uncovered[words - 1] = (1u64 << (npts % 64)) - 1;
    }
    let count =
        |u: &[u64], b: &[u64]| -> u32 { u.iter().zip(b).map(|(x, y)| (x & y).count_ones()).sum() };
    let mut family = Vec::new();
    let mut sites = Vec::new();
    while uncovered.iter().any(|&w| w != 0) {
        if family.len() >= s.max_family {
            break;
        }
        // ties go to the smaller shift, then the lower frequency
        let best = cand
            .iter()
            .enumerate()
            .map(|(i, (_, c, b))| (count(&uncovered, b), -c.abs(), i))
            .max_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)).then(y.2.cmp(&x.2)))
            .expect("candidates");
        if best.0 == 0 {
            break;
        }
        let (m, c, bits) = &cand[best.2];
        for (u, b) in uncovered.iter_mut().zip(bits) {
            *u &= !b;
        }
        family.push(vp.add_cosines(&[(*m, a)])?.shift(*c)?);
        sites.push((*m, a, *c));
    }
    if let Some(p) = (0..npts).find(|&p| uncovered[p / 64] >> (p % 64) & 1 == 1) {
        let i = p % es.len();
        let e = es[i];
        let h = es[1] - es[0];
        return Err(Error::CoverFailure {
            lo: (e - h).max(-r),
            hi: (e + h).min(r),
        });
    }
    Ok((family, sites))
}

impl ThinCover {
    /// A cover from an explicit family, bypassing the search stages.
    #[allow(clippy::too_many_arguments)]
    pub fn from_family(
        base: &Potential,
        epsilon: f64,
        r: f64,
        big_lambda: f64,
        nprime: usize,
        family: Vec<Potential>,
        floor: LyapunovFloor,
    ) -> Result<Self> {
        check_positive("epsilon", epsilon)?;
        if family.is_empty() || nprime == 0 {
            return Err(Error::invalid("family and N' must be nonempty"));
        }
        Ok(ThinCover {
            base: base.clone(),
            epsilon,
            r,
            big_lambda,
            nprime,
            tprime: base.period() * nprime as f64,
            spacing_target: f64::NAN,
            spacing: Vec::new(),
            strategy: CoverStrategy::SiteGreedy,
            family,
            sites: Vec::new(),
            gamma: None,
            gamma0: None,
            k: None,
            floor,
        })
    }

    pub fn ell(&self) -> usize {
        self.family.len()
    }

    /// The `N` giving exactly `ntilde` repeats per block.
    pub fn n_for_repeats(&self, ntilde: usize) -> usize {
        self.ell() * self.nprime * (ntilde + 2)
    }

    /// Smallest usable `N`, which gives `Ñ = 3`.
    pub fn min_n(&self) -> usize {
        self.n_for_repeats(MIN_NTILDE)
    }

    /// Lays out the family for `T̃ = N·T` and assembles `Ṽ`.
    pub fn assemble(&self, n: usize) -> Result<ThinSpecPlan> {
        let ell = self.ell();
        let unit = ell * self.nprime;
        let ntilde = (n / unit).saturating_sub(2);
        if ntilde < MIN_NTILDE {
            return Err(Error::NTooSmall {
                minimum: self.min_n(),
                ell,
                nprime: self.nprime,
            });
        }
        let ttilde = n as f64 * self.base.period();
        let layout = BlockLayout::new(self.tprime, ntilde + 1, ell, ttilde)?;
        let result = concatenate_blocks(&layout, self.family.clone(), &self.base, self.epsilon)
            .stage("assembly")?;
        let dev = sup_distance(&result, &self.base, 0.0, ttilde, SUP_CHECK_POINTS);
        if !(dev < self.epsilon) {
            return Err(Error::Connector {
                mismatch: dev,
                epsilon: self.epsilon,
            });
        }
        Ok(ThinSpecPlan {
            cover: self.clone(),
            n,
            ntilde,
            ttilde,
            layout,
            result,
            sup_deviation: dev,
        })
    }
}

/// `Ñ ≥ (Ñ + 3)/2` is what turns block growth into growth over a fixed
/// fraction of the period.
pub const MIN_NTILDE: usize = 3;

/// Sample count of the `‖Ṽ − V‖∞ < ε` check.
pub const SUP_CHECK_POINTS: usize = 10_000;

#[derive(Clone, Debug, Serialize)]
pub struct ThinSpecPlan {
    #[serde(flatten)]
    pub cover: ThinCover,
    pub n: usize,
    pub ntilde: usize,
    pub ttilde: f64,
    pub layout: BlockLayout,
    pub result: Potential,
    /// `max |Ṽ − V|` on the sample grid.
    pub sup_deviation: f64,
}

impl ThinSpecPlan {
    pub fn ell(&self) -> usize {
        self.cover.ell()
    }

    pub fn eta(&self) -> f64 {
        self.cover.floor.eta
    }
}

/// The full pipeline for a single `N`.
#[allow(clippy::too_many_arguments)]
pub fn build_thin_potential<G: Rng + ?Sized>(
    v: &Potential,
    epsilon: f64,
    r: f64,
    big_lambda: f64,
    n: usize,
    settings: &ThinSpecSettings,
    rng: &mut G,
) -> Result<ThinSpecPlan> {
    if n < 1 {
        return Err(Error::invalid("N must be positive"));
    }
    prepare_cover(v, epsilon, r, big_lambda, settings, rng)?.assemble(n)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeasureRow {
    pub lambda: f64,
    pub measure: f64,
    pub bands: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ThinSpecReport {
    pub n: usize,
    pub ttilde: f64,
    pub measures: Vec<MeasureRow>,
    pub max_measure: f64,
    pub worst_lambda: f64,
    /// `e^{−√T̃}`.
    pub target: f64,
    /// `C·T̃·e^{−ηT̃/(4ℓ)}`, when constants were supplied.
    pub bound_rhs: Option<f64>,
    /// Band midpoints `(λ, E)` of the thin operator, for spot checks.
    pub in_band: Vec<(f64, f64)>,
}

/// `C = √(R + Q)/(π·C0)` with `Q = Λ(‖V‖∞ + ε)`: the band-count factor times
/// the band-length constant.
pub fn spectrum_bound_constant(plan: &ThinSpecPlan, constants: &LemmaConstants) -> f64 {
    let c = &plan.cover;
    let q = c.big_lambda * (c.base.sup_bound() + c.epsilon);
    (c.r + q).sqrt() / (PI * constants.c0)
}

/// Measures `σ(H_{λṼ}) ∩ [−R, R]` over the given couplings.
pub fn verify_thin(
    plan: &ThinSpecPlan,
    lambdas: &[f64],
    constants: Option<&LemmaConstants>,
    samples_per_lambda: usize,
    settings: &BandSettings,
) -> Result<ThinSpecReport> {
    let c = &plan.cover;
    let (lo, hi) = (1.0 / c.big_lambda, c.big_lambda);
    let slack = 1e-12;
    if let Some(&bad) = lambdas
        .iter()
        .find(|&&l| !(l >= lo * (1.0 - slack) && l <= hi * (1.0 + slack)))
    {
        return Err(Error::invalid(format!(
            "coupling {bad} lies outside [{lo}, {hi}]"
        )));
    }
    let mut measures = Vec::with_capacity(lambdas.len());
    let mut in_band = Vec::new();
    for &lam in lambdas {
        let bs = band_structure(&plan.result.scale(lam)?, c.r, settings)
            .stage(&format!("bands at lambda = {lam}"))?;
        measures.push(MeasureRow {
            lambda: lam,
            measure: bs.measure(),
            bands: bs.bands.len(),
        });
        let inside: Vec<_> = bs
            .bands
            .iter()
            .filter(|b| b.lo >= -c.r && b.hi <= c.r && b.hi > b.lo)
            .collect();
        let take = samples_per_lambda.min(inside.len());
        for s in 0..take {
            let b = inside[(2 * s + 1) * inside.len() / (2 * take)];
            in_band.push((lam, 0.5 * (b.lo + b.hi)));
        }
    }
    let (max_measure, worst_lambda) = measures.iter().map(|m| (m.measure, m.lambda)).fold(
        (f64::NEG_INFINITY, f64::NAN),
        |a, b| if b.0 > a.0 { b } else { a },
    );
    let t = plan.ttilde;
    let bound_rhs = constants.map(|k| {
        spectrum_bound_constant(plan, k) * t * (-plan.eta() * t / (4.0 * plan.ell() as f64)).exp()
    });
    Ok(ThinSpecReport {
        n: plan.n,
        ttilde: t,
        measures,
        max_measure,
        worst_lambda,
        target: (-t.sqrt()).exp(),
        bound_rhs,
        in_band,
    })
}

/// Transfer growth across the run of the block with the largest Lyapunov
/// exponent at `(E, λ)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalGrowth {
    /// 0-based block index.
    pub block: usize,
    pub lyapunov: f64,
    pub meets_floor: bool,
    /// `‖A_E(s_j + t − 2T′ ← s_{j−1} + t)‖`.
    pub norm: f64,
    /// `e^{ÑT′L}`.
    pub lower: f64,
    pub holds: bool,
}

/// Relative slack of the growth checks.
pub const GROWTH_TOL: f64 = 1e-6;

fn best_block(
    plan: &ThinSpecPlan,
    lambda: f64,
    e: f64,
    prop: &PropagationSettings,
) -> Result<(usize, f64)> {
    plan.cover
        .family
        .iter()
        .enumerate()
        .map(|(j, w)| Ok((j, lyapunov(&w.scale(lambda)?, e, prop)?)))
        .try_fold((0, f64::NEG_INFINITY), |acc, x: Result<(usize, f64)>| {
            let x = x?;
            Ok(if x.1 > acc.1 { x } else { acc })
        })
}

pub fn local_growth(
    plan: &ThinSpecPlan,
    lambda: f64,
    e: f64,
    t: f64,
    prop: &PropagationSettings,
) -> Result<LocalGrowth> {
    let (j, l) = best_block(plan, lambda, e, prop)?;
    let tp = plan.cover.tprime;
    let a = plan.layout.anchors[j] + t;
    let b = plan.layout.anchors[j + 1] + t - 2.0 * tp;
    let m = transfer_matrix(&plan.result.scale(lambda)?, e, a, b, prop)?;
    let norm = m.op_norm();
    let lower = (plan.ntilde as f64 * tp * l).exp();
    Ok(LocalGrowth {
        block: j,
        lyapunov: l,
        meets_floor: l >= plan.eta(),
        norm,
        lower,
        holds: norm >= lower * (1.0 - GROWTH_TOL),
    })
}

/// Norms of the conjugators of `Φ_E` at both ends of a block run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConjugatorGrowth {
    pub block: usize,
    pub lyapunov: f64,
    pub left: f64,
    pub right: f64,
    /// `e^{T̃η/(4ℓ)}`.
    pub lower: f64,
    pub holds: bool,
}

pub fn conjugator_growth(
    plan: &ThinSpecPlan,
    lambda: f64,
    e: f64,
    t: f64,
    prop: &PropagationSettings,
) -> Result<ConjugatorGrowth> {
    let (j, l) = best_block(plan, lambda, e, prop)?;
    let lv = plan.result.scale(lambda)?;
    let phi = monodromy(&lv, e, 0.0, prop)?;
    let z0 = mobius_fixed_point_with_margin(&phi, 0.0)?;
    let tp = plan.cover.tprime;
    let norm_at = |s: f64| -> Result<f64> {
        let z = transfer_matrix(&lv, e, 0.0, s, prop)?.mobius(z0);
        Ok(conjugator_from_fixed_point(z).op_norm())
    };
    let left = norm_at(plan.layout.anchors[j] + t)?;
    let right = norm_at(plan.layout.anchors[j + 1] + t - 2.0 * tp)?;
    let lower = (plan.ttilde * plan.eta() / (4.0 * plan.ell() as f64)).exp();
    Ok(ConjugatorGrowth {
        block: j,
        lyapunov: l,
        left,
        right,
        lower,
        holds: left.max(right) >= lower * (1.0 - GROWTH_TOL),
    })
}

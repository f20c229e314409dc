use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{conjugator_from_fixed_point, mobius_fixed_point_with_margin, ELLIPTIC_MARGIN};
use crate::error::{Error, Result};
use crate::potential::Potential;
use crate::propagator::{monodromy, solve_on_grid, transfer_path, PropagationSettings};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadSettings {
    /// Initial number of trapezoid points per period.
    pub n0: usize,
    pub rel_tol: f64,
    pub max_n: usize,
    /// Distance of `|D|` from 2 below which the energy counts as a band edge.
    pub margin: f64,
    pub propagation: PropagationSettings,
}

impl Default for QuadSettings {
    fn default() -> Self {
        QuadSettings {
            n0: 64,
            rel_tol: 1e-6,
            max_n: 1 << 16,
            margin: ELLIPTIC_MARGIN,
            propagation: PropagationSettings::default(),
        }
    }
}

/// Periodic trapezoid integrals over one period of `1/Im z_E(t)` and of
/// `‖M_E(t)‖²` (operator norm), refined by doubling until both settle.
fn elliptic_integrals(v: &Potential, e: f64, q: &QuadSettings) -> Result<(f64, f64)> {
    let t = v.period();
    let phi = monodromy(v, e, 0.0, &q.propagation)?;
    let d = phi.trace();
    if d.abs() > 2.0 {
        return Err(Error::NotElliptic { trace: d });
    }
    let z0 = mobius_fixed_point_with_margin(&phi, q.margin).map_err(|_| Error::EdgeProximity {
        energy: e,
        discriminant: d,
    })?;
    let terms = |z: Complex64| {
        let m = conjugator_from_fixed_point(z);
        let op = m.op_norm();
        (1.0 / z.im, op * op)
    };
    let sample = |ts: &[f64]| -> Result<(f64, f64)> {
        let mut grid = Vec::with_capacity(ts.len() + 1);
        grid.push(0.0);
        grid.extend_from_slice(ts);
        let path = transfer_path(v, e, &grid, &q.propagation)?;
        Ok(path[1..].iter().fold((0.0, 0.0), |acc, a| {
            let (x, y) = terms(a.mobius(z0));
            (acc.0 + x, acc.1 + y)
        }))
    };
    let n0 = q.n0.max(2);
    let first: Vec<f64> = (1..n0).map(|k| t * k as f64 / n0 as f64).collect();
    let (s0, m0) = terms(z0);
    let (s1, m1) = sample(&first)?;
    let mut sum = (s0 + s1, m0 + m1);
    let mut n = n0;
    let mut est = (sum.0 * t / n as f64, sum.1 * t / n as f64);
    while n < q.max_n {
        let mids: Vec<f64> = (0..n).map(|k| t * (k as f64 + 0.5) / n as f64).collect();
        let (a, b) = sample(&mids)?;
        sum = (sum.0 + a, sum.1 + b);
        n *= 2;
        let next = (sum.0 * t / n as f64, sum.1 * t / n as f64);
        let settled = |old: f64, new: f64| (new - old).abs() <= q.rel_tol * new.abs();
        let done = settled(est.0, next.0) && settled(est.1, next.1);
        est = next;
        if done {
            break;
        }
    }
    Ok(est)
}

/// `dk/dE = (1/(2πT))·∫₀ᵀ dt / Im z_E(t)` at an energy inside a band.
pub fn ids_derivative(v: &Potential, e: f64, q: &QuadSettings) -> Result<f64> {
    let (inv_im, _) = elliptic_integrals(v, e, q)?;
    Ok(inv_im / (2.0 * PI * v.period()))
}

/// `∫_lo^hi (dk/dE) dE` over a band, using `E = lo + (hi − lo)(1 − cos θ)/2`
/// to absorb the square-root behaviour at the edges, and `n` midpoint nodes
/// in `θ`.
pub fn ids_mass(v: &Potential, lo: f64, hi: f64, n: usize, q: &QuadSettings) -> Result<f64> {
    if !(lo < hi) {
        return Err(Error::invalid(format!("empty band [{lo}, {hi}]")));
    }
    let n = n.max(1);
    let w = hi - lo;
    let mut total = 0.0;
    for k in 0..n {
        let th = PI * (k as f64 + 0.5) / n as f64;
        let e = lo + 0.5 * w * (1.0 - th.cos());
        total += ids_derivative(v, e, q)? * 0.5 * w * th.sin();
    }
    Ok(total * PI / n as f64)
}

/// The constants of the density-of-states lower bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaConstants {
    pub q: f64,
    pub r: f64,
    pub c1: f64,
    pub c0: f64,
}

impl LemmaConstants {
    pub fn new(q: f64, r: f64, c1: f64) -> Result<Self> {
        if !(q >= 0.0 && q.is_finite()) {
            return Err(Error::invalid(format!("Q must be nonnegative, got {q}")));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::invalid(format!("R must be positive, got {r}")));
        }
        if !(c1 > 0.0 && c1.is_finite()) {
            return Err(Error::invalid(format!("C1 must be positive, got {c1}")));
        }
        Ok(LemmaConstants {
            q,
            r,
            c1,
            c0: 1.0 / (6.0 * c1 + 3.0),
        })
    }

    /// Constants with `C1` from [`estimate_c1`].
    pub fn estimate<G: Rng + ?Sized>(
        v: &Potential,
        q: f64,
        r: f64,
        probes: usize,
        rng: &mut G,
        settings: &PropagationSettings,
    ) -> Result<Self> {
        Self::new(q, r, estimate_c1(v, r, probes, rng, settings)?)
    }
}

/// Brute-force estimate of the constant in `|u′(x)|² ≤ C1·∫_{x−1}^{x+1}|u|²`
/// for solutions at energies in `[−R, R]`: twice the largest ratio seen over
/// `probes` random solutions, each scanned over `x ∈ [1, 3]`.
pub fn estimate_c1<G: Rng + ?Sized>(
    v: &Potential,
    r: f64,
    probes: usize,
    rng: &mut G,
    settings: &PropagationSettings,
) -> Result<f64> {
    if probes == 0 {
        return Err(Error::invalid("C1 estimate needs at least one probe"));
    }
    const STEPS: usize = 128;
    let xs: Vec<f64> = (0..=4 * STEPS).map(|i| i as f64 / STEPS as f64).collect();
    let h = 1.0 / STEPS as f64;
    let mut worst = 0.0_f64;
    for _ in 0..probes {
        let e = rng.random_range(-r..=r);
        let angle = rng.random_range(0.0..PI);
        let sol = solve_on_grid(v, e, [angle.cos(), angle.sin()], &xs, settings)?;
        let sq: Vec<f64> = sol.iter().map(|s| s[1] * s[1]).collect();
        for i in STEPS..=3 * STEPS {
            let window = &sq[i - STEPS..=i + STEPS];
            let mass = simpson(window, h);
            if mass > 0.0 {
                worst = worst.max(sol[i][0] * sol[i][0] / mass);
            }
        }
    }
    Ok(2.0 * worst)
}

fn simpson(f: &[f64], h: f64) -> f64 {
    let n = f.len() - 1;
    debug_assert!(n % 2 == 0);
    let inner: f64 = f[1..n]
        .iter()
        .enumerate()
        .map(|(i, y)| if i % 2 == 0 { 4.0 * y } else { 2.0 * y })
        .sum();
    h / 3.0 * (f[0] + inner + f[n])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdsBoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Relative slack granted to `lhs ≥ rhs` for quadrature error.
const BOUND_TOL: f64 = 1e-9;

/// Compares `dk/dE` with `(C0/T)·∫₀ᵀ ‖M_E(t)‖² dt`.
pub fn verify_ids_bound(
    v: &Potential,
    e: f64,
    constants: &LemmaConstants,
    q: &QuadSettings,
) -> Result<IdsBoundCheck> {
    let t = v.period();
    if t < 1.0 {
        return Err(Error::invalid(format!("period {t} is below 1")));
    }
    if v.sup_bound() > constants.q {
        return Err(Error::invalid(format!(
            "potential bound {} exceeds Q = {}",
            v.sup_bound(),
            constants.q
        )));
    }
    if e.abs() > constants.r {
        return Err(Error::invalid(format!(
            "|E| = {} exceeds R = {}",
            e.abs(),
            constants.r
        )));
    }
    let (inv_im, m_sq) = elliptic_integrals(v, e, q)?;
    let lhs = inv_im / (2.0 * PI * t);
    let rhs = constants.c0 / t * m_sq;
    Ok(IdsBoundCheck {
        lhs,
        rhs,
        holds: lhs >= rhs - BOUND_TOL * rhs.abs(),
    })
}

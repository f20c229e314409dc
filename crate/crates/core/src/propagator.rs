//! Transfer matrices of `−y″ + Vy = Ey` acting on the state `(y′, y)`.
//!
//! Propagation uses the Dormand–Prince 5(4) pair with an error estimate
//! measured against the size of the whole matrix. The determinant is never
//! renormalised; [`SL2Matrix::det_drift`] reports how far it has wandered.

use std::ops::Mul;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::Potential;

/// A real 2×2 matrix `[[a, b], [c, d]]`, nominally of unit determinant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SL2Matrix {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl SL2Matrix {
    pub const IDENTITY: SL2Matrix = SL2Matrix {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 1.0,
    };

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        SL2Matrix { a, b, c, d }
    }

    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        SL2Matrix::new(c, -s, s, c)
    }

    /// Kahan's fused determinant, accurate even when `ad` and `bc` nearly cancel.
    pub fn det(&self) -> f64 {
        let w = self.b * self.c;
        let err = (-self.b).mul_add(self.c, w);
        self.a.mul_add(self.d, -w) + err
    }

    pub fn det_drift(&self) -> f64 {
        self.det() - 1.0
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    /// Exact inverse (adjugate over determinant).
    pub fn inverse(&self) -> Self {
        let det = self.det();
        SL2Matrix::new(self.d / det, -self.b / det, -self.c / det, self.a / det)
    }

    /// Hilbert–Schmidt (Frobenius) norm.
    pub fn hs_norm(&self) -> f64 {
        (self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d).sqrt()
    }

    /// Operator norm, the largest singular value.
    pub fn op_norm(&self) -> f64 {
        let q = (self.a + self.d).hypot(self.b - self.c);
        let p = (self.a - self.d).hypot(self.b + self.c);
        0.5 * (q + p)
    }

    pub fn max_abs(&self) -> f64 {
        self.a
            .abs()
            .max(self.b.abs())
            .max(self.c.abs())
            .max(self.d.abs())
    }

    pub fn max_abs_diff(&self, other: &SL2Matrix) -> f64 {
        (self.a - other.a)
            .abs()
            .max((self.b - other.b).abs())
            .max((self.c - other.c).abs())
            .max((self.d - other.d).abs())
    }

    pub fn pow(&self, mut n: u64) -> Self {
        let mut base = *self;
        let mut acc = SL2Matrix::IDENTITY;
        while n > 0 {
            if n & 1 == 1 {
                acc = acc * base;
            }
            n >>= 1;
            if n > 0 {
                base = base * base;
            }
        }
        acc
    }

    /// Spectral radius computed from the trace, assuming unit determinant.
    pub fn spectral_radius(&self) -> f64 {
        spectral_radius_from_trace(self.trace())
    }

    /// The Möbius action `z ↦ (az + b)/(cz + d)`.
    pub fn mobius(&self, z: Complex64) -> Complex64 {
        (z * self.a + self.b) / (z * self.c + self.d)
    }

    pub fn scaled(&self, s: f64) -> Self {
        SL2Matrix::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }
}

/// `ρ = (|D| + √(D² − 4))/2` for `|D| > 2`, else 1.
pub fn spectral_radius_from_trace(tr: f64) -> f64 {
    let t = tr.abs();
    if t <= 2.0 {
        1.0
    } else if t > 1e150 {
        t
    } else {
        (t + ((t - 2.0) * (t + 2.0)).sqrt()) / 2.0
    }
}

/// `log ρ` without overflow for huge traces.
pub fn log_spectral_radius_from_trace(tr: f64) -> f64 {
    let t = tr.abs();
    if t <= 2.0 {
        0.0
    } else if t > 1e150 {
        t.ln()
    } else {
        // log((t + √(t²−4))/2) = acosh(t/2)
        (t / 2.0).acosh()
    }
}

impl Mul for SL2Matrix {
    type Output = SL2Matrix;

    #[inline]
    fn mul(self, r: SL2Matrix) -> SL2Matrix {
        SL2Matrix::new(
            self.a * r.a + self.b * r.c,
            self.a * r.b + self.b * r.d,
            self.c * r.a + self.d * r.c,
            self.c * r.b + self.d * r.d,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagationSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub det_tol: f64,
}

impl Default for PropagationSettings {
    fn default() -> Self {
        PropagationSettings {
            rel_tol: 1e-12,
            abs_tol: 1e-14,
            max_step: 0.25,
            det_tol: 1e-9,
        }
    }
}

impl PropagationSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if ok(self.rel_tol) && ok(self.abs_tol) && ok(self.max_step) && ok(self.det_tol) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "propagation settings must be positive: {self:?}"
            )))
        }
    }

    /// The same settings with both tolerances divided by `factor`.
    pub fn tightened(&self, factor: f64) -> Self {
        PropagationSettings {
            rel_tol: self.rel_tol / factor,
            abs_tol: self.abs_tol / factor,
            ..*self
        }
    }
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

type State = [f64; 4];

#[inline]
fn deriv(q: f64, s: &State) -> State {
    // d/dx (y′, y) = ((V − E) y, y′), applied to both columns
    [q * s[2], q * s[3], s[0], s[1]]
}

#[inline]
fn axpy(y: &State, terms: &[(f64, &State)]) -> State {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..4 {
            out[i] += c * k[i];
        }
    }
    out
}

fn to_state(m: &SL2Matrix) -> State {
    [m.a, m.b, m.c, m.d]
}

fn from_state(s: &State) -> SL2Matrix {
    SL2Matrix::new(s[0], s[1], s[2], s[3])
}

/// Propagates `y` across a smooth stretch `[x0, x1]` (either orientation).
/// `h_hint` carries the last accepted step size between calls.
fn dopri<P: Profile + ?Sized>(
    v: &P,
    e: f64,
    x0: f64,
    x1: f64,
    y: State,
    st: &PropagationSettings,
    h_hint: &mut f64,
) -> Result<State> {
    let span = x1 - x0;
    if span == 0.0 {
        return Ok(y);
    }
    let dir = span.signum();
    let q_of = |x: f64| v.eval(x) - e;
    let mut x = x0;
    let mut y = y;
    let mut h = h_hint.abs().min(st.max_step).min(span.abs());
    if !(h > 0.0) {
        let q = q_of(x0).abs();
        h = (0.1 / (1.0 + q).sqrt()).min(st.max_step).min(span.abs());
    }
    let mut k1 = deriv(q_of(x), &y);
    let mut steps = 0usize;
    loop {
        let remaining = (x1 - x) * dir;
        if remaining <= 1e-15 * (1.0 + x1.abs()) {
            break;
        }
        let last = h >= remaining;
        let hs = if last { remaining } else { h } * dir;
        let k2 = deriv(q_of(x + C2 * hs), &axpy(&y, &[(hs * A21, &k1)]));
        let k3 = deriv(
            q_of(x + C3 * hs),
            &axpy(&y, &[(hs * A31, &k1), (hs * A32, &k2)]),
        );
        let k4 = deriv(
            q_of(x + C4 * hs),
            &axpy(&y, &[(hs * A41, &k1), (hs * A42, &k2), (hs * A43, &k3)]),
        );
        let k5 = deriv(
            q_of(x + C5 * hs),
            &axpy(
                &y,
                &[
                    (hs * A51, &k1),
                    (hs * A52, &k2),
                    (hs * A53, &k3),
                    (hs * A54, &k4),
                ],
            ),
        );
        let x_new = if last { x1 } else { x + hs };
        let q_new = q_of(x_new);
        let k6 = deriv(
            q_new,
            &axpy(
                &y,
                &[
                    (hs * A61, &k1),
                    (hs * A62, &k2),
                    (hs * A63, &k3),
                    (hs * A64, &k4),
                    (hs * A65, &k5),
                ],
            ),
        );
        let y_new = axpy(
            &y,
            &[
                (hs * B1, &k1),
                (hs * B3, &k3),
                (hs * B4, &k4),
                (hs * B5, &k5),
                (hs * B6, &k6),
            ],
        );
        let k7 = deriv(q_new, &y_new);
        let scale_y = y
            .iter()
            .chain(y_new.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        let sc = st.abs_tol + st.rel_tol * scale_y;
        let mut err = 0.0_f64;
        for i in 0..4 {
            let ei =
                hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            err = err.max(ei.abs() / sc);
        }
        if !err.is_finite() {
            return Err(Error::StepControl {
                from: x0,
                to: x1,
                reason: format!("non-finite error estimate at x = {x}"),
            });
        }
        let used = hs.abs();
        if err <= 1.0 {
            x = x_new;
            y = y_new;
            k1 = k7;
            let grow = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            // keep the natural step as the hint, not a clipped final one
            if !last || used >= h {
                h = (used * grow).min(st.max_step);
            }
            if last {
                break;
            }
        } else {
            h = used * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
        }
        if h < 1e-13 * (1.0 + x.abs()) {
            return Err(Error::StepControl {
                from: x0,
                to: x1,
                reason: format!("step size underflow at x = {x}"),
            });
        }
        steps += 1;
        if steps > 50_000_000 {
            return Err(Error::StepControl {
                from: x0,
                to: x1,
                reason: "step budget exhausted".into(),
            });
        }
    }
    *h_hint = h;
    Ok(y)
}

/// Integrates across `[from, to]`, restarting the stepper at every kink of `v`.
fn integrate<P: Profile + ?Sized>(
    v: &P,
    e: f64,
    from: f64,
    to: f64,
    y: State,
    st: &PropagationSettings,
    h_hint: &mut f64,
) -> Result<State> {
    if !(from.is_finite() && to.is_finite() && e.is_finite()) {
        return Err(Error::invalid(format!(
            "non-finite propagation request E = {e}, [{from}, {to}]"
        )));
    }
    let (lo, hi) = if from <= to { (from, to) } else { (to, from) };
    let mut pts = v.breakpoints(lo, hi);
    if from > to {
        pts.reverse();
    }
    let mut y = y;
    let mut x = from;
    for p in pts.into_iter().chain(std::iter::once(to)) {
        y = dopri(v, e, x, p, y, st, h_hint)?;
        x = p;
    }
    Ok(y)
}

/// The coefficient function seen by the integrator.
pub(crate) trait Profile {
    fn eval(&self, x: f64) -> f64;
    /// Kinks in the open interval `(a, b)`, in increasing order.
    fn breakpoints(&self, a: f64, b: f64) -> Vec<f64>;
}

impl Profile for Potential {
    #[inline]
    fn eval(&self, x: f64) -> f64 {
        Potential::eval(self, x)
    }

    fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        Potential::breakpoints(self, a, b)
    }
}

/// `A_E(t ← s)`: maps `(y′(s), y(s))` to `(y′(t), y(t))`. Integrates
/// backward when `t < s`.
pub fn transfer_matrix(
    v: &Potential,
    e: f64,
    s: f64,
    t: f64,
    settings: &PropagationSettings,
) -> Result<SL2Matrix> {
    profile_transfer(v, e, s, t, settings)
}

pub(crate) fn profile_transfer<P: Profile + ?Sized>(
    v: &P,
    e: f64,
    s: f64,
    t: f64,
    settings: &PropagationSettings,
) -> Result<SL2Matrix> {
    settings.validate()?;
    let mut h = 0.0;
    let y = integrate(v, e, s, t, to_state(&SL2Matrix::IDENTITY), settings, &mut h)?;
    Ok(from_state(&y))
}

/// `A_E(t_k ← t_0)` for every point of an ordered grid.
pub fn transfer_path(
    v: &Potential,
    e: f64,
    ts: &[f64],
    settings: &PropagationSettings,
) -> Result<Vec<SL2Matrix>> {
    settings.validate()?;
    let mut out = Vec::with_capacity(ts.len());
    let Some(&t0) = ts.first() else {
        return Ok(out);
    };
    let mut y = to_state(&SL2Matrix::IDENTITY);
    let mut x = t0;
    let mut h = 0.0;
    out.push(SL2Matrix::IDENTITY);
    for &t in &ts[1..] {
        y = integrate(v, e, x, t, y, settings, &mut h)?;
        x = t;
        out.push(from_state(&y));
    }
    Ok(out)
}

/// Solution values `(y′, y)` on an ordered grid for the given initial state.
pub fn solve_on_grid(
    v: &Potential,
    e: f64,
    initial: [f64; 2],
    ts: &[f64],
    settings: &PropagationSettings,
) -> Result<Vec<[f64; 2]>> {
    let path = transfer_path(v, e, ts, settings)?;
    Ok(path
        .iter()
        .map(|m| {
            [
                m.a * initial[0] + m.b * initial[1],
                m.c * initial[0] + m.d * initial[1],
            ]
        })
        .collect())
}

/// `Φ_E(base) = A_E(base + T ← base)`.
///
/// For a block concatenation at a base point that is a multiple of the
/// period, the monodromy is assembled from one period of each block raised to
/// its repeat count and the connector transfers.
pub fn monodromy(
    v: &Potential,
    e: f64,
    base: f64,
    settings: &PropagationSettings,
) -> Result<SL2Matrix> {
    let t = v.period();
    if let Some(cc) = v.as_concatenation() {
        if base.rem_euclid(t) == 0.0 {
            settings.validate()?;
            let lay = cc.layout();
            let mut m = SL2Matrix::IDENTITY;
            for (w, c) in cc.blocks().iter().zip(cc.connectors()) {
                let p = transfer_matrix(w, e, 0.0, lay.block_period, settings)?;
                m = p.pow(lay.repeats as u64) * m;
                let local = c.local();
                m = profile_transfer(&local, e, 0.0, local.width(), settings)? * m;
            }
            return Ok(m);
        }
    }
    transfer_matrix(v, e, base, base + t, settings)
}

/// Closed-form transfer matrix of the free equation over a length `t`.
pub fn free_transfer(e: f64, t: f64) -> SL2Matrix {
    if e > 0.0 {
        let k = e.sqrt();
        let (s, c) = (k * t).sin_cos();
        SL2Matrix::new(c, -k * s, s / k, c)
    } else if e < 0.0 {
        let k = (-e).sqrt();
        let (s, c) = ((k * t).sinh(), (k * t).cosh());
        SL2Matrix::new(c, k * s, s / k, c)
    } else {
        SL2Matrix::new(1.0, 0.0, t, 1.0)
    }
}

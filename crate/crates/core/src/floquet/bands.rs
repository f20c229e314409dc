use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fast::{BlockDiscriminant, FastSettings};
use super::{band_count_bound, discriminant};
use crate::error::{Error, Result};
use crate::potential::Potential;
use crate::propagator::PropagationSettings;

/// Which of `D = +2` or `D = −2` holds at a band edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Periodic,
    Antiperiodic,
}

impl EdgeKind {
    fn from_level(level: f64) -> Self {
        if level > 0.0 {
            EdgeKind::Periodic
        } else {
            EdgeKind::Antiperiodic
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub index: usize,
    pub lo: f64,
    pub hi: f64,
    pub lo_kind: EdgeKind,
    pub hi_kind: EdgeKind,
    /// The edge touches a neighbouring band across a closed gap.
    pub lo_degenerate: bool,
    pub hi_degenerate: bool,
}

impl Band {
    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn length_in(&self, lo: f64, hi: f64) -> f64 {
        (self.hi.min(hi) - self.lo.max(lo)).max(0.0)
    }

    pub fn contains(&self, e: f64) -> bool {
        self.lo <= e && e <= self.hi
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BandStructure {
    pub window: (f64, f64),
    pub bands: Vec<Band>,
    #[serde(skip)]
    pub discriminant_samples: Vec<(f64, f64)>,
}

impl BandStructure {
    /// Total length of the bands inside the window.
    pub fn measure(&self) -> f64 {
        let (lo, hi) = self.window;
        self.bands.iter().map(|b| b.length_in(lo, hi)).sum()
    }

    /// Gaps between consecutive bands, `(hi_i, lo_{i+1})`; closed gaps have
    /// zero length.
    pub fn gaps(&self) -> Vec<(f64, f64)> {
        self.bands
            .windows(2)
            .map(|w| (w[0].hi, w[1].lo.max(w[0].hi)))
            .collect()
    }

    /// Shortest gap that meets the window, if any.
    pub fn min_gap_in_window(&self) -> Option<f64> {
        let (lo, hi) = self.window;
        self.gaps()
            .into_iter()
            .filter(|&(a, b)| b >= lo && a <= hi)
            .map(|(a, b)| b - a)
            .min_by(f64::total_cmp)
    }

    pub fn contains(&self, e: f64) -> bool {
        let i = self.bands.partition_point(|b| b.hi < e);
        self.bands.get(i).is_some_and(|b| b.contains(e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandSettings {
    /// Scan points per unit of the band-count bound.
    pub scan_factor: usize,
    pub min_points: usize,
    pub edge_tol: f64,
    pub max_bisect: usize,
    pub tangency_tol: f64,
    /// Rescans with a doubled grid before giving up on the count bound.
    pub max_refinements: usize,
    pub propagation: PropagationSettings,
    /// Use [`BlockDiscriminant`] for block concatenations.
    pub fast_blocks: bool,
    pub fast: FastSettings,
}

impl Default for BandSettings {
    fn default() -> Self {
        BandSettings {
            scan_factor: 16,
            min_points: 64,
            edge_tol: 1e-10,
            max_bisect: 60,
            tangency_tol: 1e-8,
            max_refinements: 1,
            propagation: PropagationSettings::default(),
            fast_blocks: true,
            fast: FastSettings::default(),
        }
    }
}

/// Bands of `σ(H_V)` meeting `[−R, R]`, with true (unclipped) edges.
pub fn band_structure(v: &Potential, r: f64, settings: &BandSettings) -> Result<BandStructure> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::invalid(format!(
            "window radius must be positive, got {r}"
        )));
    }
    let bound = band_count_bound(v, r);
    let lo = (-r).max(-v.sup_bound() - 1e-9 * (1.0 + v.sup_bound()));
    let hi = r;
    let window = (-r, r);
    if lo > hi {
        return Ok(BandStructure {
            window,
            bands: Vec::new(),
            discriminant_samples: Vec::new(),
        });
    }
    let prop = settings.propagation;
    let fast = match v.as_concatenation() {
        Some(_) if settings.fast_blocks => {
            let pad = 0.02 * (hi - lo) + 1e-3;
            Some(BlockDiscriminant::new(
                v,
                lo - pad,
                hi + pad,
                &settings.fast,
                &prop,
            )?)
        }
        _ => None,
    };
    let d = |e: f64| -> Result<f64> {
        match &fast {
            Some(f) => f.discriminant(e),
            None => discriminant(v, e, &prop),
        }
    };
    let mut factor = settings.scan_factor.max(1);
    let mut found = 0;
    for _ in 0..=settings.max_refinements {
        let n = (factor * bound).max(settings.min_points).max(2);
        let (bands, samples) = bands_from_discriminant(&d, lo, hi, n, settings)?;
        found = bands.len();
        if found <= bound {
            return Ok(BandStructure {
                window,
                bands,
                discriminant_samples: samples,
            });
        }
        factor *= 2;
    }
    Err(Error::BandCount { found, bound })
}

#[derive(Clone, Copy, Debug)]
enum Event {
    Open {
        e: f64,
        kind: EdgeKind,
        degenerate: bool,
    },
    Close {
        e: f64,
        kind: EdgeKind,
        degenerate: bool,
    },
    /// A band whose two edges were found together around a zero of `D`.
    Whole {
        lo: f64,
        hi: f64,
        lo_kind: EdgeKind,
        hi_kind: EdgeKind,
    },
}

impl Event {
    fn energy(&self) -> f64 {
        match *self {
            Event::Open { e, .. } | Event::Close { e, .. } => e,
            Event::Whole { lo, .. } => lo,
        }
    }

    // closes sort before opens at the same energy
    fn order(&self) -> u8 {
        match self {
            Event::Close { .. } => 0,
            Event::Open { .. } | Event::Whole { .. } => 1,
        }
    }
}

fn state(d: f64) -> i8 {
    if d > 2.0 {
        1
    } else if d < -2.0 {
        -1
    } else {
        0
    }
}

struct Refiner<'a> {
    d: &'a (dyn Fn(f64) -> Result<f64> + Sync),
    tol: f64,
    max_iter: usize,
}

impl Refiner<'_> {
    /// Bisects for the crossing of `level`; `a` and `b` lie on opposite sides.
    fn root(&self, mut a: f64, da: f64, mut b: f64, level: f64) -> Result<f64> {
        let above = |x: f64| {
            if level == 0.0 {
                x > 0.0
            } else {
                (x - level) * level.signum() > 0.0
            }
        };
        let side_a = above(da);
        for _ in 0..self.max_iter {
            if (b - a).abs() <= self.tol {
                break;
            }
            let m = 0.5 * (a + b);
            if above((self.d)(m)?) == side_a {
                a = m;
            } else {
                b = m;
            }
        }
        Ok(0.5 * (a + b))
    }

    /// The band through the zero of `D` between `a` and `b`, where `D`
    /// runs from beyond `from` to beyond `to` (`±2`). When bisection cannot
    /// separate the edges, the width is `4/|D′|` at the zero from a
    /// symmetric difference; it is zero once `D` saturates.
    fn through_zero(&self, a: f64, da: f64, b: f64, from: f64, to: f64) -> Result<Event> {
        let lo = self.root(a, da, b, from)?;
        let hi = self.root(a, da, b, to)?;
        let (lo, hi) = if hi - lo > 16.0 * self.tol {
            (lo, hi)
        } else {
            let z = self.root(a, da, b, 0.0)?;
            let h = (1e-4 * (b - a)).max(64.0 * f64::EPSILON * z.abs().max(1.0));
            let slope = ((self.d)(z + h)? - (self.d)(z - h)?).abs() / (2.0 * h);
            let w = if slope.is_finite() { 4.0 / slope } else { 0.0 };
            let w = w.min(18.0 * self.tol);
            (z - 0.5 * w, z + 0.5 * w)
        };
        Ok(Event::Whole {
            lo,
            hi,
            lo_kind: EdgeKind::from_level(from),
            hi_kind: EdgeKind::from_level(to),
        })
    }

    /// Golden-section search for an extremum of `sign·D` on `[a, b]`.
    fn extremum(&self, mut a: f64, mut b: f64, sign: f64) -> Result<(f64, f64)> {
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let f = |x: f64| -> Result<f64> { Ok(sign * (self.d)(x)?) };
        let mut x1 = b - g * (b - a);
        let mut x2 = a + g * (b - a);
        let mut f1 = f(x1)?;
        let mut f2 = f(x2)?;
        for _ in 0..self.max_iter {
            if (b - a).abs() <= self.tol {
                break;
            }
            if f1 > f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - g * (b - a);
                f1 = f(x1)?;
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + g * (b - a);
                f2 = f(x2)?;
            }
        }
        let x = 0.5 * (a + b);
        Ok((x, (self.d)(x)?))
    }
}

/// Samples `D` outward from the last two grid points `inner` and `edge` in
/// steps of `step` until a sample leaves the band or `D` touches `±2`
/// tangentially between samples.
fn walk(
    rf: &Refiner<'_>,
    inner: (f64, f64),
    edge: (f64, f64),
    step: f64,
    max_steps: usize,
    tangency_tol: f64,
) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    if state(edge.1) != 0 {
        return Ok(out);
    }
    let (mut pp, mut p) = (inner, edge);
    let mut step = step;
    for _ in 0..max_steps {
        let x = p.0 + step;
        let cur = (x, (rf.d)(x)?);
        if !cur.1.is_finite() {
            return Err(Error::invalid(format!("discriminant is not finite at {x}")));
        }
        out.push(cur);
        if state(cur.1) != 0 {
            return Ok(out);
        }
        if state(pp.1) == 0 {
            for sign in [1.0, -1.0] {
                if sign * p.1 >= sign * pp.1 && sign * p.1 >= sign * cur.1 && sign * p.1 > 1.0 {
                    let (a, b) = (pp.0.min(cur.0), pp.0.max(cur.0));
                    let (_, dx) = rf.extremum(a, b, sign)?;
                    if sign * dx - 2.0 >= -tangency_tol {
                        return Ok(out);
                    }
                }
            }
        }
        let jump = (cur.1 - p.1).abs();
        if jump < 0.1 {
            step *= 1.5;
        } else if jump > 0.5 {
            step *= 0.5;
        }
        (pp, p) = (p, cur);
    }
    Err(Error::invalid(format!(
        "band containing {} does not terminate",
        edge.0
    )))
}

/// Scans a discriminant on `n` equispaced points of `[lo, hi]` and refines
/// every band meeting that interval. Band edges outside the interval are
/// located by stepping outward, up to the next gap or closed gap.
pub fn bands_from_discriminant(
    d: &(dyn Fn(f64) -> Result<f64> + Sync),
    lo: f64,
    hi: f64,
    n: usize,
    settings: &BandSettings,
) -> Result<(Vec<Band>, Vec<(f64, f64)>)> {
    let n = n.max(2);
    let h = (hi - lo) / (n - 1) as f64;
    let es: Vec<f64> = (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + h * i as f64 })
        .collect();
    let ds: Vec<f64> = es.par_iter().map(|&e| d(e)).collect::<Result<_>>()?;
    let rf = Refiner {
        d,
        tol: settings.edge_tol,
        max_iter: settings.max_bisect,
    };
    let samples: Vec<(f64, f64)> = es.iter().copied().zip(ds.iter().copied()).collect();
    let below = walk(
        &rf,
        samples[1],
        samples[0],
        -h,
        8 * n,
        settings.tangency_tol,
    )?;
    let above = walk(
        &rf,
        samples[n - 2],
        samples[n - 1],
        h,
        8 * n,
        settings.tangency_tol,
    )?;
    let (es, ds): (Vec<f64>, Vec<f64>) = below
        .into_iter()
        .rev()
        .chain(samples.iter().copied())
        .chain(above)
        .unzip();
    let n = es.len();
    let st: Vec<i8> = ds.iter().map(|&x| state(x)).collect();
    let mut events = Vec::new();

    for i in 0..n - 1 {
        let (e0, d0, e1) = (es[i], ds[i], es[i + 1]);
        match (st[i], st[i + 1]) {
            (a, 0) if a != 0 => {
                let level = 2.0 * a as f64;
                events.push(Event::Open {
                    e: rf.root(e0, d0, e1, level)?,
                    kind: EdgeKind::from_level(level),
                    degenerate: false,
                });
            }
            (0, b) if b != 0 => {
                let level = 2.0 * b as f64;
                events.push(Event::Close {
                    e: rf.root(e0, d0, e1, level)?,
                    kind: EdgeKind::from_level(level),
                    degenerate: false,
                });
            }
            (a, b) if a == -b && a != 0 => {
                let (l0, l1) = (2.0 * a as f64, 2.0 * b as f64);
                events.push(rf.through_zero(e0, d0, e1, l0, l1)?);
            }
            _ => {}
        }
    }
    // extrema between samples of equal state: closed or hidden gaps and bands
    for i in 1..n - 1 {
        let s = st[i];
        if st[i - 1] != s || st[i + 1] != s {
            continue;
        }
        let (dm, d0, dp) = (ds[i - 1], ds[i], ds[i + 1]);
        if s == 0 {
            for sign in [1.0, -1.0] {
                if sign * d0 >= sign * dm && sign * d0 >= sign * dp && sign * d0 > 1.0 {
                    extremum_in_band(&rf, es[i - 1], es[i + 1], sign, settings, &mut events)?;
                }
            }
        } else {
            let sign = s as f64;
            if sign * d0 <= sign * dm && sign * d0 <= sign * dp && d0.abs() < 2.5 {
                extremum_in_gap(&rf, es[i - 1], dm, es[i + 1], sign, &mut events)?;
            }
        }
    }
    events.sort_by(|x, y| {
        x.energy()
            .total_cmp(&y.energy())
            .then(x.order().cmp(&y.order()))
    });
    let mut bands = Vec::new();
    let mut open: Option<(f64, EdgeKind, bool)> = None;
    for ev in events {
        match ev {
            Event::Open {
                e,
                kind,
                degenerate,
            } => {
                if open.is_none() {
                    open = Some((e, kind, degenerate));
                }
            }
            Event::Whole {
                lo: lo_e,
                hi: e,
                lo_kind,
                hi_kind,
            } => {
                if open.is_none() && e >= lo && lo_e <= hi {
                    bands.push(Band {
                        index: bands.len(),
                        lo: lo_e,
                        hi: e.max(lo_e),
                        lo_kind,
                        hi_kind,
                        lo_degenerate: false,
                        hi_degenerate: false,
                    });
                }
            }
            Event::Close {
                e,
                kind,
                degenerate,
            } => {
                if let Some((lo_e, lo_kind, lo_deg)) = open.take() {
                    if e < lo || lo_e > hi {
                        continue;
                    }
                    bands.push(Band {
                        index: bands.len(),
                        lo: lo_e,
                        hi: e.max(lo_e),
                        lo_kind,
                        hi_kind: kind,
                        lo_degenerate: lo_deg,
                        hi_degenerate: degenerate,
                    });
                }
            }
        }
    }
    Ok((bands, samples))
}

/// `sign·D` has a local maximum inside a band run; it either touches `±2`
/// (closed gap) or pokes through (a gap narrower than the grid).
fn extremum_in_band(
    rf: &Refiner<'_>,
    a: f64,
    b: f64,
    sign: f64,
    settings: &BandSettings,
    events: &mut Vec<Event>,
) -> Result<()> {
    let (x, dx) = rf.extremum(a, b, sign)?;
    let level = 2.0 * sign;
    let kind = EdgeKind::from_level(level);
    let excess = sign * dx - 2.0;
    if excess > settings.tangency_tol {
        let da = (rf.d)(a)?;
        events.push(Event::Close {
            e: rf.root(a, da, x, level)?,
            kind,
            degenerate: false,
        });
        events.push(Event::Open {
            e: rf.root(x, dx, b, level)?.max(x),
            kind,
            degenerate: false,
        });
    } else if excess >= -settings.tangency_tol {
        events.push(Event::Close {
            e: x,
            kind,
            degenerate: true,
        });
        events.push(Event::Open {
            e: x,
            kind,
            degenerate: true,
        });
    }
    Ok(())
}

/// `sign·D` has a local minimum inside a gap run; a band may hide below it.
fn extremum_in_gap(
    rf: &Refiner<'_>,
    a: f64,
    da: f64,
    b: f64,
    sign: f64,
    events: &mut Vec<Event>,
) -> Result<()> {
    let (x, dx) = rf.extremum(a, b, -sign)?;
    let near = 2.0 * sign;
    let far = -near;
    match state(dx) as f64 {
        s if s == sign => {}
        0.0 => {
            events.push(Event::Open {
                e: rf.root(a, da, x, near)?,
                kind: EdgeKind::from_level(near),
                degenerate: false,
            });
            events.push(Event::Close {
                e: rf.root(x, dx, b, near)?,
                kind: EdgeKind::from_level(near),
                degenerate: false,
            });
        }
        _ => {
            // D swings through the opposite level: two bands around x
            events.push(rf.through_zero(a, da, x, near, far)?);
            events.push(rf.through_zero(x, dx, b, far, near)?);
        }
    }
    Ok(())
}

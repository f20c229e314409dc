//! Periodic potentials: cosine series, sampled profiles, constants and the
//! block concatenations produced by the thin-spectrum construction.
//!
//! A [`Potential`] is immutable and cheap to clone; evaluation is pure and can
//! be shared across threads.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagator::Profile;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    CosineSeries,
    PiecewiseLinearSamples,
    Constant,
    Concatenation,
}

/// A continuous, bounded, periodic real potential.
#[derive(Clone)]
pub struct Potential {
    repr: Arc<Repr>,
    period: f64,
    sup_bound: f64,
}

enum Repr {
    Constant(f64),
    Cosine(Cosine),
    Samples(Samples),
    Concat(Concatenation),
}

struct Cosine {
    mean: f64,
    coeffs: Vec<f64>,
    // (angular frequency, amplitude) for the nonzero coefficients only
    terms: Vec<(f64, f64)>,
}

struct Samples {
    xs: Vec<f64>,
    vs: Vec<f64>,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Potential")
            .field("kind", &self.kind())
            .field("period", &self.period)
            .field("sup_bound", &self.sup_bound)
            .finish()
    }
}

fn check_finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be finite, got {x}")))
    }
}

fn check_period(period: f64) -> Result<()> {
    if period.is_finite() && period > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "period must be positive, got {period}"
        )))
    }
}

impl Potential {
    /// The constant potential `value`, with nominal period 1.
    pub fn constant(value: f64) -> Self {
        Self::constant_with_period(value, 1.0).expect("unit period is valid")
    }

    pub fn constant_with_period(value: f64, period: f64) -> Result<Self> {
        check_finite("constant value", value)?;
        check_period(period)?;
        Ok(Potential {
            repr: Arc::new(Repr::Constant(value)),
            period,
            sup_bound: value.abs(),
        })
    }

    /// `mean + Σ_k coeffs[k-1]·cos(2πkx/period)`.
    pub fn cosine_series(period: f64, mean: f64, coeffs: Vec<f64>) -> Result<Self> {
        check_period(period)?;
        check_finite("mean", mean)?;
        for &a in &coeffs {
            check_finite("cosine coefficient", a)?;
        }
        let terms = coeffs
            .iter()
            .enumerate()
            .filter(|(_, &a)| a != 0.0)
            .map(|(i, &a)| (TAU * (i + 1) as f64 / period, a))
            .collect();
        let sup_bound = mean.abs() + coeffs.iter().map(|a| a.abs()).sum::<f64>();
        Ok(Potential {
            repr: Arc::new(Repr::Cosine(Cosine {
                mean,
                coeffs,
                terms,
            })),
            period,
            sup_bound,
        })
    }

    /// Periodic piecewise-linear interpolation through `(xs[i], vs[i])`.
    ///
    /// The nodes must be strictly increasing and span less than one period;
    /// a trailing node at `xs[0] + period` is accepted if it repeats `vs[0]`.
    pub fn samples(period: f64, mut xs: Vec<f64>, mut vs: Vec<f64>) -> Result<Self> {
        check_period(period)?;
        if xs.len() != vs.len() || xs.is_empty() {
            return Err(Error::invalid("samples need matching, nonempty xs and vs"));
        }
        for (&x, &v) in xs.iter().zip(&vs) {
            check_finite("sample abscissa", x)?;
            check_finite("sample value", v)?;
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(
                "sample abscissae must be strictly increasing",
            ));
        }
        let n = xs.len();
        if n > 1 && (xs[n - 1] - (xs[0] + period)).abs() <= 1e-12 * period.max(1.0) {
            if (vs[n - 1] - vs[0]).abs() > 1e-12 * (1.0 + vs[0].abs()) {
                return Err(Error::invalid(
                    "closing sample must repeat the first value for a continuous potential",
                ));
            }
            xs.pop();
            vs.pop();
        }
        if xs[xs.len() - 1] >= xs[0] + period {
            return Err(Error::invalid("samples span more than one period"));
        }
        let sup_bound = vs.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        Ok(Potential {
            repr: Arc::new(Repr::Samples(Samples { xs, vs })),
            period,
            sup_bound,
        })
    }

    pub fn kind(&self) -> PotentialKind {
        match &*self.repr {
            Repr::Constant(_) => PotentialKind::Constant,
            Repr::Cosine(_) => PotentialKind::CosineSeries,
            Repr::Samples(_) => PotentialKind::PiecewiseLinearSamples,
            Repr::Concat(_) => PotentialKind::Concatenation,
        }
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// An upper bound for `sup |V|`.
    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    /// `(mean, coeffs)` for cosine series and constants.
    pub fn cosine_coefficients(&self) -> Option<(f64, &[f64])> {
        match &*self.repr {
            Repr::Cosine(c) => Some((c.mean, &c.coeffs)),
            Repr::Constant(v) => Some((*v, &[])),
            _ => None,
        }
    }

    pub fn as_concatenation(&self) -> Option<&Concatenation> {
        match &*self.repr {
            Repr::Concat(c) => Some(c),
            _ => None,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match &*self.repr {
            Repr::Constant(v) => *v,
            Repr::Cosine(c) => {
                let y = x.rem_euclid(self.period);
                c.terms
                    .iter()
                    .fold(c.mean, |acc, &(w, a)| acc + a * (w * y).cos())
            }
            Repr::Samples(s) => s.eval(x, self.period),
            Repr::Concat(c) => c.eval(x),
        }
    }

    /// `λV`.
    pub fn scale(&self, lambda: f64) -> Result<Potential> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::invalid(format!(
                "coupling must be positive, got {lambda}"
            )));
        }
        if lambda == 1.0 {
            return Ok(self.clone());
        }
        self.map_affine(lambda, 0.0)
    }

    /// `V + c`.
    pub fn shift(&self, c: f64) -> Result<Potential> {
        check_finite("shift", c)?;
        if c == 0.0 {
            return Ok(self.clone());
        }
        self.map_affine(1.0, c)
    }

    fn map_affine(&self, lambda: f64, c: f64) -> Result<Potential> {
        match &*self.repr {
            Repr::Constant(v) => Potential::constant_with_period(lambda * v + c, self.period),
            Repr::Cosine(cs) => Potential::cosine_series(
                self.period,
                lambda * cs.mean + c,
                cs.coeffs.iter().map(|a| lambda * a).collect(),
            ),
            Repr::Samples(s) => Potential::samples(
                self.period,
                s.xs.clone(),
                s.vs.iter().map(|v| lambda * v + c).collect(),
            ),
            Repr::Concat(cc) => {
                let blocks = cc
                    .blocks
                    .iter()
                    .map(|b| b.map_affine(lambda, c))
                    .collect::<Result<Vec<_>>>()?;
                let base = cc.base.map_affine(lambda, c)?;
                concatenate_blocks(&cc.layout, blocks, &base, f64::INFINITY)
            }
        }
    }

    /// The same function viewed with period `n·T`.
    pub fn with_period_multiple(&self, n: usize) -> Result<Potential> {
        if n == 0 {
            return Err(Error::invalid("period multiple must be positive"));
        }
        if n == 1 {
            return Ok(self.clone());
        }
        let period = self.period * n as f64;
        match &*self.repr {
            Repr::Constant(v) => Potential::constant_with_period(*v, period),
            Repr::Cosine(cs) => {
                let mut coeffs = vec![0.0; cs.coeffs.len() * n];
                for (k, &a) in cs.coeffs.iter().enumerate() {
                    coeffs[(k + 1) * n - 1] = a;
                }
                Potential::cosine_series(period, cs.mean, coeffs)
            }
            Repr::Samples(s) => {
                let mut xs = Vec::with_capacity(s.xs.len() * n);
                let mut vs = Vec::with_capacity(s.xs.len() * n);
                for r in 0..n {
                    let off = r as f64 * self.period;
                    xs.extend(s.xs.iter().map(|x| x + off));
                    vs.extend_from_slice(&s.vs);
                }
                Potential::samples(period, xs, vs)
            }
            Repr::Concat(_) => Err(Error::invalid(
                "period extension of a concatenation is not supported",
            )),
        }
    }

    /// `V + Σ amplitude·cos(2π·index·x/period)` for a cosine series or constant.
    pub fn add_cosines(&self, terms: &[(usize, f64)]) -> Result<Potential> {
        let (mean, coeffs) = self
            .cosine_coefficients()
            .ok_or_else(|| Error::invalid("cosine perturbations need a cosine series"))?;
        let len = terms
            .iter()
            .map(|&(k, _)| k)
            .max()
            .unwrap_or(0)
            .max(coeffs.len());
        let mut out = coeffs.to_vec();
        out.resize(len, 0.0);
        for &(k, a) in terms {
            if k == 0 {
                return Err(Error::invalid("cosine index must be at least 1"));
            }
            out[k - 1] += a;
        }
        Potential::cosine_series(self.period, mean, out)
    }

    /// Points in the open interval `(a, b)` where the potential may fail to
    /// be smooth, in increasing order.
    pub fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        let mut out = Vec::new();
        if !(b > a) {
            return out;
        }
        match &*self.repr {
            Repr::Constant(_) | Repr::Cosine(_) => {}
            Repr::Samples(s) => {
                let t = self.period;
                let first = ((a - s.xs[0]) / t).floor() as i64;
                let last = ((b - s.xs[0]) / t).ceil() as i64;
                for r in first..=last {
                    for x in &s.xs {
                        let y = x + r as f64 * t;
                        if y > a && y < b {
                            out.push(y);
                        }
                    }
                }
            }
            Repr::Concat(c) => {
                let t = c.layout.total_period;
                let first = (a / t).floor() as i64;
                let last = (b / t).ceil() as i64;
                let local = c.layout.segment_points();
                for r in first..=last {
                    let off = r as f64 * t;
                    for (j, w) in local.windows(2).enumerate() {
                        let (lo, hi) = (w[0] + off, w[1] + off);
                        if lo > a && lo < b {
                            out.push(lo);
                        }
                        if hi <= a || lo >= b {
                            continue;
                        }
                        if let Some(block) = c.segment_potential(j) {
                            out.extend(block.breakpoints(lo.max(a), hi.min(b)));
                        }
                    }
                }
            }
        }
        out.sort_by(f64::total_cmp);
        out.dedup_by(|x, y| (*x - *y).abs() <= 1e-13 * (1.0 + y.abs()));
        out
    }

    /// `max |V|` on a grid of `n` points per period plus the Lipschitz slack
    /// between grid points, capped by [`Potential::sup_bound`].
    pub fn tightened_sup_bound(&self, n: usize) -> f64 {
        match &*self.repr {
            Repr::Cosine(c) if n > 0 => {
                let lip: f64 = c.terms.iter().map(|(w, a)| (w * a).abs()).sum();
                let h = self.period / n as f64;
                let grid_max = (0..n)
                    .map(|i| self.eval(i as f64 * h).abs())
                    .fold(0.0, f64::max);
                (grid_max + 0.5 * lip * h).min(self.sup_bound)
            }
            _ => self.sup_bound,
        }
    }

    pub fn to_spec(&self) -> PotentialSpec {
        match &*self.repr {
            Repr::Constant(v) => PotentialSpec::Constant {
                value: *v,
                period: Some(self.period),
            },
            Repr::Cosine(c) => PotentialSpec::CosineSeries {
                period: self.period,
                coeffs: c.coeffs.clone(),
                mean: c.mean,
            },
            Repr::Samples(s) => PotentialSpec::Samples {
                period: self.period,
                xs: s.xs.clone(),
                vs: s.vs.clone(),
            },
            Repr::Concat(c) => PotentialSpec::Concatenation {
                layout: c.layout.clone(),
                blocks: c.blocks.iter().map(Potential::to_spec).collect(),
                base: Box::new(c.base.to_spec()),
            },
        }
    }

    pub fn from_spec(spec: &PotentialSpec) -> Result<Potential> {
        match spec {
            PotentialSpec::Constant { value, period } => {
                Potential::constant_with_period(*value, period.unwrap_or(1.0))
            }
            PotentialSpec::CosineSeries {
                period,
                coeffs,
                mean,
            } => Potential::cosine_series(*period, *mean, coeffs.clone()),
            PotentialSpec::Samples { period, xs, vs } => {
                Potential::samples(*period, xs.clone(), vs.clone())
            }
            PotentialSpec::Concatenation {
                layout,
                blocks,
                base,
            } => {
                let blocks = blocks
                    .iter()
                    .map(Potential::from_spec)
                    .collect::<Result<Vec<_>>>()?;
                let base = Potential::from_spec(base)?;
                concatenate_blocks(layout, blocks, &base, f64::INFINITY)
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_spec())?)
    }

    pub fn from_json(text: &str) -> Result<Potential> {
        let spec: PotentialSpec = serde_json::from_str(text)?;
        Potential::from_spec(&spec)
    }
}

impl Serialize for Potential {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_spec().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Potential {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let spec = PotentialSpec::deserialize(d)?;
        Potential::from_spec(&spec).map_err(serde::de::Error::custom)
    }
}

/// The JSON document form of a [`Potential`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    CosineSeries {
        period: f64,
        coeffs: Vec<f64>,
        #[serde(default)]
        mean: f64,
    },
    Constant {
        value: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        period: Option<f64>,
    },
    Samples {
        period: f64,
        xs: Vec<f64>,
        vs: Vec<f64>,
    },
    Concatenation {
        layout: BlockLayout,
        blocks: Vec<PotentialSpec>,
        base: Box<PotentialSpec>,
    },
}

impl Samples {
    fn eval(&self, x: f64, period: f64) -> f64 {
        let x0 = self.xs[0];
        let y = (x - x0).rem_euclid(period) + x0;
        let n = self.xs.len();
        if n == 1 {
            return self.vs[0];
        }
        // index of the last node <= y
        let i = self.xs.partition_point(|&xi| xi <= y).saturating_sub(1);
        let (xa, va) = (self.xs[i], self.vs[i]);
        let (xb, vb) = if i + 1 < n {
            (self.xs[i + 1], self.vs[i + 1])
        } else {
            (x0 + period, self.vs[0])
        };
        va + (vb - va) * (y - xa) / (xb - xa)
    }
}

/// Geometry of a block concatenation: `ℓ` blocks of period `T′`, each
/// repeated `repeats` times and followed by a connector of width `T′`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockLayout {
    pub block_period: f64,
    pub repeats: usize,
    pub connector_width: f64,
    pub anchors: Vec<f64>,
    pub total_period: f64,
}

impl BlockLayout {
    /// Anchors `s_j = j·(repeats+1)·T′` for `j = 0..=ell`.
    pub fn new(block_period: f64, repeats: usize, ell: usize, total_period: f64) -> Result<Self> {
        let stride = (repeats + 1) as f64 * block_period;
        let layout = BlockLayout {
            block_period,
            repeats,
            connector_width: block_period,
            anchors: (0..=ell).map(|j| j as f64 * stride).collect(),
            total_period,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn ell(&self) -> usize {
        self.anchors.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.block_period;
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::Layout(format!(
                "block period must be positive, got {t}"
            )));
        }
        if self.repeats == 0 {
            return Err(Error::Layout("repeats must be positive".into()));
        }
        if (self.connector_width - t).abs() > 1e-12 * t {
            return Err(Error::Layout(
                "connector width must equal the block period".into(),
            ));
        }
        if self.ell() == 0 {
            return Err(Error::Layout("at least one block is required".into()));
        }
        let stride = (self.repeats + 1) as f64 * t;
        for (j, &s) in self.anchors.iter().enumerate() {
            let want = j as f64 * stride;
            if (s - want).abs() > 1e-9 * want.max(1.0) {
                return Err(Error::Layout(format!("anchor {j} is {s}, expected {want}")));
            }
        }
        let s_last = self.anchors[self.ell()];
        if self.total_period < s_last * (1.0 - 1e-12) {
            return Err(Error::Layout(format!(
                "total period {} is shorter than the last anchor {s_last}",
                self.total_period
            )));
        }
        Ok(())
    }

    /// `[s_j, s_{j+1} − T′]`, where block `j` (0-based) is repeated.
    pub fn block_interval(&self, j: usize) -> (f64, f64) {
        (self.anchors[j], self.anchors[j + 1] - self.connector_width)
    }

    /// `[s_{j+1} − T′, s_{j+1}]`, or up to the total period for the last one.
    pub fn connector_interval(&self, j: usize) -> (f64, f64) {
        let end = if j + 1 == self.ell() {
            self.total_period
        } else {
            self.anchors[j + 1]
        };
        (self.anchors[j + 1] - self.connector_width, end)
    }

    /// Segment boundaries over one period: block, connector, block, ...
    pub fn segment_points(&self) -> Vec<f64> {
        let mut pts = Vec::with_capacity(2 * self.ell() + 1);
        for j in 0..self.ell() {
            pts.push(self.anchors[j]);
            pts.push(self.connector_interval(j).0);
        }
        pts.push(self.total_period);
        pts
    }
}

/// `φ(x) = base(x) + ramp(x)`, the linear ramp matching prescribed values at
/// both ends of `[a, b]`.
#[derive(Clone, Debug)]
pub struct Connector {
    pub interval: (f64, f64),
    pub left_value: f64,
    pub right_value: f64,
    left_offset: f64,
    right_offset: f64,
    base: Potential,
}

impl Connector {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let (a, b) = self.interval;
        let u = (x - a) / (b - a);
        self.base.eval(x) + self.left_offset + (self.right_offset - self.left_offset) * u
    }

    /// The connector translated to start at 0. Its transfer matrices avoid
    /// the rounding of large absolute coordinates.
    pub(crate) fn local(&self) -> LocalConnector<'_> {
        let (a, b) = self.interval;
        let t = self.base.period();
        LocalConnector {
            connector: self,
            shift: a - (a / t).round() * t,
            width: b - a,
        }
    }

    /// `sup |φ − base|` over the interval.
    pub fn max_deviation(&self) -> f64 {
        self.left_offset.abs().max(self.right_offset.abs())
    }

    pub fn base(&self) -> &Potential {
        &self.base
    }
}

/// `s ↦ φ(a + s)` on `[0, b − a]`, with the base evaluated at `s` plus the
/// offset of `a` from the nearest multiple of its period.
pub(crate) struct LocalConnector<'a> {
    connector: &'a Connector,
    shift: f64,
    width: f64,
}

impl LocalConnector<'_> {
    pub(crate) fn width(&self) -> f64 {
        self.width
    }
}

impl Profile for LocalConnector<'_> {
    #[inline]
    fn eval(&self, x: f64) -> f64 {
        let c = self.connector;
        let u = x / self.width;
        c.base.eval(x + self.shift) + c.left_offset + (c.right_offset - c.left_offset) * u
    }

    fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        self.connector
            .base
            .breakpoints(a + self.shift, b + self.shift)
            .into_iter()
            .map(|x| x - self.shift)
            .collect()
    }
}

pub fn make_connector(
    left_value: f64,
    right_value: f64,
    base: &Potential,
    interval: (f64, f64),
    epsilon: f64,
) -> Result<Connector> {
    let (a, b) = interval;
    if !(b > a) {
        return Err(Error::invalid(format!(
            "empty connector interval [{a}, {b}]"
        )));
    }
    let left_offset = left_value - base.eval(a);
    let right_offset = right_value - base.eval(b);
    let mismatch = left_offset.abs().max(right_offset.abs());
    if !(mismatch < epsilon) {
        return Err(Error::Connector { mismatch, epsilon });
    }
    Ok(Connector {
        interval,
        left_value,
        right_value,
        left_offset,
        right_offset,
        base: base.clone(),
    })
}

/// A `T̃`-periodic potential built from blocks and connectors.
pub struct Concatenation {
    layout: BlockLayout,
    blocks: Vec<Potential>,
    base: Potential,
    connectors: Vec<Connector>,
}

impl Concatenation {
    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn blocks(&self) -> &[Potential] {
        &self.blocks
    }

    pub fn base(&self) -> &Potential {
        &self.base
    }

    pub fn connectors(&self) -> &[Connector] {
        &self.connectors
    }

    fn segment_potential(&self, segment: usize) -> Option<&Potential> {
        if segment % 2 == 0 {
            self.blocks.get(segment / 2)
        } else {
            Some(&self.base)
        }
    }

    #[inline]
    fn eval(&self, x: f64) -> f64 {
        let lay = &self.layout;
        let y = x.rem_euclid(lay.total_period);
        let stride = lay.anchors[1];
        let ell = self.blocks.len();
        let j = ((y / stride) as usize).min(ell - 1);
        if y < lay.anchors[j + 1] - lay.connector_width {
            self.blocks[j].eval(y)
        } else {
            self.connectors[j].eval(y)
        }
    }
}

/// Assemble `Ṽ` from `ℓ` blocks `W_j` (each `T′`-periodic) on the given
/// layout, joined by base-plus-ramp connectors.
///
/// Every block must lie within `epsilon` of `base` in sup norm; pass
/// `f64::INFINITY` to skip that check.
pub fn concatenate_blocks(
    layout: &BlockLayout,
    blocks: Vec<Potential>,
    base: &Potential,
    epsilon: f64,
) -> Result<Potential> {
    layout.validate()?;
    let ell = layout.ell();
    if blocks.len() != ell {
        return Err(Error::Layout(format!(
            "layout has {ell} anchors intervals but {} blocks were supplied",
            blocks.len()
        )));
    }
    let tp = layout.block_period;
    for (j, w) in blocks.iter().enumerate() {
        let ratio = tp / w.period();
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(Error::Layout(format!(
                "block {j} has period {} which does not divide {tp}",
                w.period()
            )));
        }
        if epsilon.is_finite() {
            let dev = sup_distance(w, base, 0.0, tp, 4096);
            if !(dev < epsilon) {
                return Err(Error::Connector {
                    mismatch: dev,
                    epsilon,
                });
            }
        }
    }
    let mut connectors = Vec::with_capacity(ell);
    for j in 0..ell {
        let (a, b) = layout.connector_interval(j);
        let next = &blocks[(j + 1) % ell];
        let right = if j + 1 == ell {
            next.eval(0.0)
        } else {
            next.eval(b)
        };
        connectors.push(make_connector(
            blocks[j].eval(a),
            right,
            base,
            (a, b),
            epsilon,
        )?);
    }
    let block_sup = blocks.iter().map(Potential::sup_bound).fold(0.0, f64::max);
    let conn_sup = connectors
        .iter()
        .map(|c| base.sup_bound() + c.max_deviation())
        .fold(0.0, f64::max);
    Ok(Potential {
        period: layout.total_period,
        sup_bound: block_sup.max(conn_sup),
        repr: Arc::new(Repr::Concat(Concatenation {
            layout: layout.clone(),
            blocks,
            base: base.clone(),
            connectors,
        })),
    })
}

/// `max |V(x) − W(x)|` over `n + 1` equispaced points of `[lo, hi]`.
pub fn sup_distance(v: &Potential, w: &Potential, lo: f64, hi: f64, n: usize) -> f64 {
    let n = n.max(1);
    (0..=n)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / n as f64;
            (v.eval(x) - w.eval(x)).abs()
        })
        .fold(0.0, f64::max)
}

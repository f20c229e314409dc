use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cheb::PiecewiseCheb;
use crate::error::{Error, Result};
use crate::potential::Potential;
use crate::propagator::{
    log_spectral_radius_from_trace, monodromy, profile_transfer, Profile, PropagationSettings,
    SL2Matrix,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FastSettings {
    /// Longest stretch of `x` fitted directly from the integrator.
    pub piece_len: f64,
    pub degree1: usize,
    pub tol1: f64,
    pub degree2: usize,
    pub initial_parts: usize,
    pub tol2: f64,
}

impl Default for FastSettings {
    fn default() -> Self {
        FastSettings {
            piece_len: 1.0,
            degree1: 16,
            tol1: 1e-11,
            degree2: 12,
            initial_parts: 32,
            tol2: 1e-11,
        }
    }
}

/// Fast evaluation of the monodromy of a block concatenation on an energy
/// range. Each block period and each connector is replaced by a piecewise
/// Chebyshev fit of its transfer matrix, so one evaluation costs a few
/// polynomial evaluations and matrix powers instead of an integration over
/// the whole period. Energies outside the range fall back to the integrator.
pub struct BlockDiscriminant {
    v: Potential,
    lo: f64,
    hi: f64,
    blocks: Vec<PiecewiseCheb>,
    connectors: Vec<PiecewiseCheb>,
    repeats: u64,
    propagation: PropagationSettings,
}

impl BlockDiscriminant {
    pub fn new(
        v: &Potential,
        lo: f64,
        hi: f64,
        fast: &FastSettings,
        propagation: &PropagationSettings,
    ) -> Result<Self> {
        let cc = v
            .as_concatenation()
            .ok_or_else(|| Error::invalid("fast discriminant needs a block concatenation"))?;
        if !(lo < hi) {
            return Err(Error::invalid(format!("empty energy range [{lo}, {hi}]")));
        }
        let lay = cc.layout();
        let blocks = cc
            .blocks()
            .par_iter()
            .map(|w| fit_segment(w, 0.0, lay.block_period, lo, hi, fast, propagation))
            .collect::<Result<Vec<_>>>()?;
        let connectors = cc
            .connectors()
            .par_iter()
            .map(|c| {
                let local = c.local();
                fit_segment(&local, 0.0, local.width(), lo, hi, fast, propagation)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BlockDiscriminant {
            v: v.clone(),
            lo,
            hi,
            blocks,
            connectors,
            repeats: lay.repeats as u64,
            propagation: *propagation,
        })
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn monodromy(&self, e: f64) -> Result<SL2Matrix> {
        let (m, log_scale) = self.scaled_monodromy(e)?;
        Ok(m.scaled(log_scale.exp()))
    }

    /// The monodromy as `e^s·M` with `max |M_ij| = 1`, which stays finite
    /// when the entries themselves overflow.
    pub fn scaled_monodromy(&self, e: f64) -> Result<(SL2Matrix, f64)> {
        if e < self.lo || e > self.hi {
            return Ok((monodromy(&self.v, e, 0.0, &self.propagation)?, 0.0));
        }
        let mut m = SL2Matrix::IDENTITY;
        let mut log_scale = 0.0;
        for (p, c) in self.blocks.iter().zip(&self.connectors) {
            let (pn, s) = scaled_pow(p.eval(e), self.repeats);
            m = c.eval(e) * pn * m;
            let t = m.max_abs();
            m = m.scaled(1.0 / t);
            log_scale += s + t.ln();
        }
        Ok((m, log_scale))
    }

    /// `D(E)`; saturates to `±∞` when it exceeds the floating-point range.
    pub fn discriminant(&self, e: f64) -> Result<f64> {
        let (m, log_scale) = self.scaled_monodromy(e)?;
        let tr = m.trace();
        Ok(if tr == 0.0 { 0.0 } else { tr * log_scale.exp() })
    }
}

/// Piecewise Chebyshev fit of `E ↦ Φ_E(0)` for a potential of moderate
/// period, for repeated evaluation of `D(E)` and `L(E)` on an energy range.
#[derive(Clone, Debug)]
pub struct MonodromyFit {
    period: f64,
    fit: PiecewiseCheb,
}

impl MonodromyFit {
    pub fn new(
        v: &Potential,
        lo: f64,
        hi: f64,
        fast: &FastSettings,
        propagation: &PropagationSettings,
    ) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::invalid(format!("empty energy range [{lo}, {hi}]")));
        }
        Ok(MonodromyFit {
            period: v.period(),
            fit: fit_segment(v, 0.0, v.period(), lo, hi, fast, propagation)?,
        })
    }

    pub fn range(&self) -> (f64, f64) {
        (self.fit.lo(), self.fit.hi())
    }

    /// Panics if `e` lies outside the fitted range.
    pub fn monodromy(&self, e: f64) -> SL2Matrix {
        assert!(
            e >= self.fit.lo() && e <= self.fit.hi(),
            "energy {e} outside the fitted range"
        );
        self.fit.eval(e)
    }

    pub fn discriminant(&self, e: f64) -> f64 {
        self.monodromy(e).trace()
    }

    pub fn lyapunov(&self, e: f64) -> f64 {
        log_spectral_radius_from_trace(self.discriminant(e)) / self.period
    }
}

/// `p^n` as `e^s·M` with `max |M_ij| = 1`.
fn scaled_pow(p: SL2Matrix, mut n: u64) -> (SL2Matrix, f64) {
    let mut base = p;
    let mut base_log = 0.0;
    let mut acc = SL2Matrix::IDENTITY;
    let mut acc_log = 0.0;
    loop {
        let s = base.max_abs();
        base = base.scaled(1.0 / s);
        base_log += s.ln();
        if n & 1 == 1 {
            acc = acc * base;
            acc_log += base_log;
            let s = acc.max_abs();
            acc = acc.scaled(1.0 / s);
            acc_log += s.ln();
        }
        n >>= 1;
        if n == 0 {
            return (acc, acc_log);
        }
        base = base * base;
        base_log *= 2.0;
    }
}

fn fit_segment<P: Profile + Sync + ?Sized>(
    w: &P,
    a: f64,
    b: f64,
    lo: f64,
    hi: f64,
    fast: &FastSettings,
    prop: &PropagationSettings,
) -> Result<PiecewiseCheb> {
    let n = ((b - a) / fast.piece_len).ceil().max(1.0) as usize;
    let h = (b - a) / n as f64;
    let pieces = (0..n)
        .map(|i| {
            let x0 = a + h * i as f64;
            let x1 = if i + 1 == n { b } else { x0 + h };
            let f = |e: f64| profile_transfer(w, e, x0, x1, prop);
            PiecewiseCheb::adaptive(lo, hi, fast.degree1 + 1, 1, fast.tol1, &f)
        })
        .collect::<Result<Vec<_>>>()?;
    if pieces.len() == 1 {
        return Ok(pieces.into_iter().next().expect("one piece"));
    }
    let f = |e: f64| -> Result<SL2Matrix> {
        Ok(pieces
            .iter()
            .fold(SL2Matrix::IDENTITY, |m, p| p.eval(e) * m))
    };
    PiecewiseCheb::adaptive(lo, hi, fast.degree2, fast.initial_parts, fast.tol2, &f)
}

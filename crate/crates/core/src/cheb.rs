//! Chebyshev interpolation of matrix-valued functions of the energy.
//!
//! Transfer matrices over a fixed stretch of `x` are entire functions of `E`,
//! so a modest degree reproduces them to near machine precision on a bounded
//! energy range. [`PiecewiseCheb`] splits the range adaptively where the
//! matrices vary too fast for a single polynomial.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::propagator::SL2Matrix;

/// Chebyshev points of the first kind mapped to `[lo, hi]`.
pub fn nodes(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    (0..n)
        .map(|k| mid + half * (PI * (k as f64 + 0.5) / n as f64).cos())
        .collect()
}

#[derive(Clone, Debug)]
pub struct MatrixCheb {
    lo: f64,
    hi: f64,
    coeffs: Vec<[f64; 4]>,
}

impl MatrixCheb {
    /// Interpolant through values sampled at [`nodes`]`(lo, hi, values.len())`.
    pub fn from_values(lo: f64, hi: f64, values: &[SL2Matrix]) -> Self {
        let n = values.len();
        let mut coeffs = vec![[0.0; 4]; n];
        for (j, c) in coeffs.iter_mut().enumerate() {
            for (k, m) in values.iter().enumerate() {
                let w = (PI * j as f64 * (k as f64 + 0.5) / n as f64).cos();
                c[0] += w * m.a;
                c[1] += w * m.b;
                c[2] += w * m.c;
                c[3] += w * m.d;
            }
            let s = if j == 0 { 1.0 } else { 2.0 } / n as f64;
            for v in c.iter_mut() {
                *v *= s;
            }
        }
        MatrixCheb { lo, hi, coeffs }
    }

    pub fn build(
        lo: f64,
        hi: f64,
        n: usize,
        mut f: impl FnMut(f64) -> Result<SL2Matrix>,
    ) -> Result<Self> {
        let values = nodes(lo, hi, n)
            .into_iter()
            .map(&mut f)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_values(lo, hi, &values))
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    #[inline]
    pub fn eval(&self, e: f64) -> SL2Matrix {
        let u = (2.0 * e - self.lo - self.hi) / (self.hi - self.lo);
        let u2 = 2.0 * u;
        let mut b1 = [0.0; 4];
        let mut b2 = [0.0; 4];
        for c in self.coeffs.iter().skip(1).rev() {
            let mut b0 = [0.0; 4];
            for i in 0..4 {
                b0[i] = c[i] + u2 * b1[i] - b2[i];
            }
            b2 = b1;
            b1 = b0;
        }
        let c0 = self.coeffs[0];
        let mut out = [0.0; 4];
        for i in 0..4 {
            out[i] = c0[i] + u * b1[i] - b2[i];
        }
        SL2Matrix::new(out[0], out[1], out[2], out[3])
    }
}

/// Relative mismatch of two matrices, measured against the larger one.
pub fn relative_error(approx: &SL2Matrix, exact: &SL2Matrix) -> f64 {
    let scale = exact.max_abs().max(approx.max_abs()).max(f64::MIN_POSITIVE);
    approx.max_abs_diff(exact) / scale
}

/// Parts narrower than `1e-7·(hi − lo)` are accepted within this multiple
/// of the tolerance.
const NOISE_FACTOR: f64 = 1e3;

/// Piecewise Chebyshev interpolant on a partition of `[lo, hi]`.
#[derive(Clone, Debug)]
pub struct PiecewiseCheb {
    breaks: Vec<f64>,
    parts: Vec<MatrixCheb>,
}

impl PiecewiseCheb {
    /// Fits `f` with `n` nodes per part, starting from `initial_parts` equal
    /// parts and bisecting any part whose check points miss `f` by more than
    /// `tol` (relative).
    pub fn adaptive(
        lo: f64,
        hi: f64,
        n: usize,
        initial_parts: usize,
        tol: f64,
        f: &dyn Fn(f64) -> Result<SL2Matrix>,
    ) -> Result<Self> {
        let mut breaks = vec![lo];
        let mut parts = Vec::new();
        let width = (hi - lo) / initial_parts.max(1) as f64;
        let min_width = (hi - lo) * 1e-7;
        let mut stack: Vec<(f64, f64)> = (0..initial_parts.max(1))
            .rev()
            .map(|i| {
                let a = lo + width * i as f64;
                let b = if i + 1 == initial_parts.max(1) {
                    hi
                } else {
                    a + width
                };
                (a, b)
            })
            .collect();
        while let Some((a, b)) = stack.pop() {
            let cheb = MatrixCheb::build(a, b, n, f)?;
            let mut worst = 0.0_f64;
            for frac in [0.093, 0.471, 0.829] {
                let e = a + (b - a) * frac;
                worst = worst.max(relative_error(&cheb.eval(e), &f(e)?));
            }
            // below min_width the residual is the noise of f itself
            if worst <= tol || (b - a < min_width && worst <= NOISE_FACTOR * tol) {
                breaks.push(b);
                parts.push(cheb);
            } else if b - a < min_width {
                return Err(Error::invalid(format!(
                    "chebyshev fit did not reach {tol:e} on [{a}, {b}] (error {worst:e})"
                )));
            } else {
                let m = 0.5 * (a + b);
                stack.push((m, b));
                stack.push((a, m));
            }
        }
        Ok(PiecewiseCheb { breaks, parts })
    }

    pub fn lo(&self) -> f64 {
        self.breaks[0]
    }

    pub fn hi(&self) -> f64 {
        self.breaks[self.breaks.len() - 1]
    }

    pub fn parts(&self) -> usize {
        self.parts.len()
    }

    #[inline]
    pub fn eval(&self, e: f64) -> SL2Matrix {
        let i = self.breaks[1..]
            .partition_point(|&b| b < e)
            .min(self.parts.len() - 1);
        self.parts[i].eval(e)
    }
}

//! Floquet theory of periodic operators: discriminant, Lyapunov exponent,
//! band structure, integrated density of states and the Möbius picture of
//! elliptic monodromies.

mod bands;
mod fast;
mod ids;

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::potential::Potential;
use crate::propagator::{
    log_spectral_radius_from_trace, monodromy, PropagationSettings, SL2Matrix,
};

pub use bands::{
    band_structure, bands_from_discriminant, Band, BandSettings, BandStructure, EdgeKind,
};
pub use fast::{BlockDiscriminant, FastSettings, MonodromyFit};
pub use ids::{
    estimate_c1, ids_derivative, ids_mass, verify_ids_bound, IdsBoundCheck, LemmaConstants,
    QuadSettings,
};

/// Default distance from `±2` below which a matrix counts as non-elliptic.
pub const ELLIPTIC_MARGIN: f64 = 1e-10;

/// `D(E) = tr Φ_E`.
pub fn discriminant(v: &Potential, e: f64, settings: &PropagationSettings) -> Result<f64> {
    Ok(monodromy(v, e, 0.0, settings)?.trace())
}

/// `L(E) = (1/T) log ρ(Φ_E)`.
pub fn lyapunov(v: &Potential, e: f64, settings: &PropagationSettings) -> Result<f64> {
    let d = discriminant(v, e, settings)?;
    Ok(log_spectral_radius_from_trace(d) / v.period())
}

/// `⌈(T/π)·√(R + ‖V‖∞) + 1⌉`, an upper bound on the number of bands meeting
/// `[−R, R]`.
pub fn band_count_bound(v: &Potential, r: f64) -> usize {
    let x = v.period() * (r + v.sup_bound()).max(0.0).sqrt() / PI + 1.0;
    x.ceil() as usize
}

/// The fixed point in the upper half-plane of the Möbius action of an
/// elliptic matrix: the root of `c z² + (d − a) z − b = 0` with `Im z > 0`.
pub fn mobius_fixed_point(m: &SL2Matrix) -> Result<Complex64> {
    mobius_fixed_point_with_margin(m, ELLIPTIC_MARGIN)
}

pub fn mobius_fixed_point_with_margin(m: &SL2Matrix, margin: f64) -> Result<Complex64> {
    let tr = m.trace();
    if !(tr.abs() < 2.0 - margin) {
        return Err(Error::NotElliptic { trace: tr });
    }
    assert!(m.c != 0.0, "elliptic matrix with c = 0");
    let disc = (m.d - m.a) * (m.d - m.a) + 4.0 * m.b * m.c;
    let im = (-disc).max(0.0).sqrt() / (2.0 * m.c.abs());
    Ok(Complex64::new((m.a - m.d) / (2.0 * m.c), im))
}

/// `‖M‖₂² = (1 + |z|²)/Im z` for the conjugator attached to the fixed point `z`.
pub fn hs_norm_sq_from_fixed_point(z: Complex64) -> f64 {
    (1.0 + z.norm_sqr()) / z.im
}

/// `Im(z)^{-1/2}·[[1, −Re z], [0, Im z]]`, which conjugates the matrix fixing
/// `z` into a rotation.
pub fn conjugator_from_fixed_point(z: Complex64) -> SL2Matrix {
    let s = z.im.powf(-0.5);
    SL2Matrix::new(s, -z.re * s, 0.0, z.im * s)
}

/// `Φ_E(t)`, computed by propagating from `t` over one period.
pub fn monodromy_at(
    v: &Potential,
    e: f64,
    t: f64,
    settings: &PropagationSettings,
) -> Result<SL2Matrix> {
    monodromy(v, e, t, settings)
}

/// The elliptic picture of `Φ_E(t)`: its fixed point and the squared
/// Hilbert–Schmidt norm of the conjugator built from it.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct EllipticData {
    pub energy: f64,
    pub fixed_point: Complex64,
    pub conjugator_hs_sq: f64,
}

pub fn elliptic_data(
    v: &Potential,
    e: f64,
    t: f64,
    settings: &PropagationSettings,
) -> Result<EllipticData> {
    let z = mobius_fixed_point(&monodromy_at(v, e, t, settings)?)?;
    Ok(EllipticData {
        energy: e,
        fixed_point: z,
        conjugator_hs_sq: hs_norm_sq_from_fixed_point(z),
    })
}

/// `‖M_E(t)‖₂`, the Hilbert–Schmidt norm of a conjugator of `Φ_E(t)` to a
/// rotation.
pub fn conjugator_hs_norm(
    v: &Potential,
    e: f64,
    t: f64,
    settings: &PropagationSettings,
) -> Result<f64> {
    Ok(elliptic_data(v, e, t, settings)?.conjugator_hs_sq.sqrt())
}

/// `Leb(σ(H_{λV}) ∩ [−R, R])`.
pub fn spectrum_measure(
    v: &Potential,
    lambda: f64,
    r: f64,
    settings: &BandSettings,
) -> Result<f64> {
    Ok(band_structure(&v.scale(lambda)?, r, settings)?.measure())
}

//! Complex per-unit phasors.
//!
//! Every electrical quantity in the crate (bus voltages, branch currents,
//! injections, series impedances and shunt admittances) is a complex number
//! in per-unit on a single system base. Magnitude and angle are always
//! derived from the rectangular form, never stored alongside it.

pub use num_complex::Complex64;

/// Complex per-unit quantity.
pub type Phasor = Complex64;

/// Zero phasor.
pub const ZERO: Phasor = Phasor::new(0.0, 0.0);

/// Builds a phasor from magnitude and angle (radians).
#[inline]
pub fn from_polar(magnitude: f64, angle: f64) -> Phasor {
    Phasor::new(magnitude * libm::cos(angle), magnitude * libm::sin(angle))
}

/// Magnitude `|p|`.
#[inline]
pub fn magnitude(p: Phasor) -> f64 {
    libm::hypot(p.re, p.im)
}

/// Angle of `p` in radians, in `(-pi, pi]`.
#[inline]
pub fn angle(p: Phasor) -> f64 {
    libm::atan2(p.im, p.re)
}

/// True when both rectangular components are finite.
#[inline]
pub fn is_finite(p: Phasor) -> bool {
    p.re.is_finite() && p.im.is_finite()
}

//! Closed-form post-field two-particle state and the Bohmian guidance field
//! derived from it.
//!
//! Conventions: z1 is Alice's particle coordinate, z2 Bob's; both particles
//! drift along y at constant speed, so only the z motion is dynamical. The
//! impulsive field phase of duration `t_field` does not move the particles;
//! time `t` counts from exit of the field region and the field's effect is
//! already encoded in the `b * mu * t_field` factors below.
//!
//! A singlet never populates the u+v+ / u-v- spin components, so the state is
//! two complex amplitudes. All real exponents are combined before
//! exponentiation, which keeps the cosh/sinh expressions finite for
//! arbitrarily strong fields (each term is bounded by the density peak).

use num_complex::Complex64;

use crate::params::{PhysParams, Sign};

/// Packet-spread factor `1 + hbar^2 t^2 / (4 sigma0^4 m^2)`.
pub fn epsilon(t: f64, p: &PhysParams) -> f64 {
    p.epsilon(t)
}

/// The two nonzero spinor amplitudes of the post-field state.
#[derive(Clone, Copy, Debug)]
pub struct SpinorAmplitudes {
    /// Amplitude of the u+v- component.
    pub c_plus_minus: Complex64,
    /// Amplitude of the u-v+ component.
    pub c_minus_plus: Complex64,
}

impl SpinorAmplitudes {
    /// |c+-|^2 + |c-+|^2, the probability density carried by the state.
    pub fn norm_sq(&self) -> f64 {
        self.c_plus_minus.norm_sqr() + self.c_minus_plus.norm_sqr()
    }
}

/// Quantities shared by the density / current / velocity expressions at one
/// spacetime point.
struct Point {
    /// cosh/sinh/tanh argument (z1 - s K z2) b mu T t / (m sigma0^2 eps).
    arg: f64,
    /// Gaussian envelope exponent: the shared factor is exp(-env).
    env: f64,
    /// 1 / (2 pi sigma0^2 eps).
    norm: f64,
    /// Spreading velocities hbar^2 t z_a / (4 m^2 sigma0^4 eps).
    spread1: f64,
    spread2: f64,
    /// Guidance coefficient b mu T / (m eps) for particle 1.
    guide1: f64,
    /// Signed guidance coefficient s K b mu T / (m eps) for particle 2.
    guide2: f64,
}

fn point(z1: f64, z2: f64, t: f64, p: &PhysParams, s: Sign) -> Point {
    let eps = p.epsilon(t);
    let s2 = p.sigma0 * p.sigma0;
    let sv = s.value();
    let imp = p.field_impulse(); // b mu T
    let xi = z1 - sv * p.k * z2;
    let kick2 = (1.0 + p.k * p.k) * imp * imp; // (1 + s^2 K^2) B^2 mu^2 T^2
    Point {
        arg: xi * imp * t / (p.mass * s2 * eps),
        env: (z1 * z1 + z2 * z2) / (2.0 * s2 * eps)
            + kick2 * t * t / (2.0 * p.mass * p.mass * s2 * eps),
        norm: 1.0 / (2.0 * std::f64::consts::PI * s2 * eps),
        spread1: p.hbar * p.hbar * t * z1 / (4.0 * p.mass * p.mass * s2 * s2 * eps),
        spread2: p.hbar * p.hbar * t * z2 / (4.0 * p.mass * p.mass * s2 * s2 * eps),
        guide1: imp / (p.mass * eps),
        guide2: sv * p.k * imp / (p.mass * eps),
    }
}

/// Full spinor amplitudes at (z1, z2, t), all phase factors included.
pub fn wavefunction(z1: f64, z2: f64, t: f64, p: &PhysParams, s: Sign) -> SpinorAmplitudes {
    let eps = p.epsilon(t);
    let s2 = p.sigma0 * p.sigma0;
    let sv = s.value();
    let imp = p.field_impulse();
    let xi = z1 - sv * p.k * z2;
    let m = p.mass;
    let r2 = z1 * z1 + z2 * z2;
    let kick2 = (1.0 + p.k * p.k) * imp * imp;

    let prefactor = 1.0 / (2.0 * p.sigma0 * (std::f64::consts::PI * eps).sqrt());
    // Global phase: spreading phase plus the quadratic and field-energy parts.
    let phase_global = -(p.hbar * t / (2.0 * s2 * m)).atan()
        - kick2 * t / (2.0 * p.hbar * m * eps)
        + p.hbar * t * r2 / (8.0 * m * s2 * s2 * eps);
    // Linear field phase of the u+v- component; the u-v+ one is its negative.
    let phase_field =
        -(p.mu * p.t_field / p.hbar) * (p.b0 * (1.0 - sv * p.k) + p.b * z1 - sv * p.k * p.b * z2);
    // Chirp phase hbar (z1 - s K z2) b mu T t^2 / (4 m^2 sigma0^4 eps).
    let phase_chirp = p.hbar * xi * imp * t * t / (4.0 * m * m * s2 * s2 * eps);
    // Shared real exponent and the +-X/2 asymmetry between the components.
    let env = -r2 / (4.0 * s2 * eps) - kick2 * t * t / (4.0 * m * m * s2 * eps);
    let half_arg = xi * imp * t / (2.0 * m * s2 * eps);

    let c_plus_minus = Complex64::from_polar(
        prefactor * (env - half_arg).exp(),
        phase_global + phase_field + phase_chirp,
    );
    let c_minus_plus = -Complex64::from_polar(
        prefactor * (env + half_arg).exp(),
        phase_global - phase_field - phase_chirp,
    );
    SpinorAmplitudes {
        c_plus_minus,
        c_minus_plus,
    }
}

/// Probability density rho(z1, z2, t).
pub fn density(z1: f64, z2: f64, t: f64, p: &PhysParams, s: Sign) -> f64 {
    let pt = point(z1, z2, t, p, s);
    0.5 * pt.norm * ((pt.arg - pt.env).exp() + (-pt.arg - pt.env).exp())
}

/// Probability current of particle 1.
pub fn current1(z1: f64, z2: f64, t: f64, p: &PhysParams, s: Sign) -> f64 {
    let pt = point(z1, z2, t, p, s);
    let ep = (pt.arg - pt.env).exp();
    let em = (-pt.arg - pt.env).exp();
    0.5 * pt.norm * (pt.guide1 * (ep - em) + pt.spread1 * (ep + em))
}

/// Probability current of particle 2 (note the negated sinh coefficient).
pub fn current2(z1: f64, z2: f64, t: f64, p: &PhysParams, s: Sign) -> f64 {
    let pt = point(z1, z2, t, p, s);
    let ep = (pt.arg - pt.env).exp();
    let em = (-pt.arg - pt.env).exp();
    0.5 * pt.norm * (-pt.guide2 * (ep - em) + pt.spread2 * (ep + em))
}

/// Guidance velocity of particle 1: spreading term plus tanh guidance term.
pub fn velocity1(z1: f64, z2: f64, t: f64, p: &PhysParams, s: Sign) -> f64 {
    let pt = point(z1, z2, t, p, s);
    pt.spread1 + pt.guide1 * pt.arg.tanh()
}

/// Guidance velocity of particle 2.
pub fn velocity2(z1: f64, z2: f64, t: f64, p: &PhysParams, s: Sign) -> f64 {
    let pt = point(z1, z2, t, p, s);
    pt.spread2 - pt.guide2 * pt.arg.tanh()
}

/// Both velocities at once; shares the tanh evaluation, which is what the
/// integrator calls in its inner loop.
pub fn velocity_pair(z1: f64, z2: f64, t: f64, p: &PhysParams, s: Sign) -> (f64, f64) {
    let pt = point(z1, z2, t, p, s);
    let th = pt.arg.tanh();
    (pt.spread1 + pt.guide1 * th, pt.spread2 - pt.guide2 * th)
}

/// Guidance term of velocity1 alone (spreading part dropped).
pub fn reduced_velocity1(z1: f64, z2: f64, t: f64, p: &PhysParams, s: Sign) -> f64 {
    let pt = point(z1, z2, t, p, s);
    pt.guide1 * pt.arg.tanh()
}

/// Guidance term of velocity2 alone.
pub fn reduced_velocity2(z1: f64, z2: f64, t: f64, p: &PhysParams, s: Sign) -> f64 {
    let pt = point(z1, z2, t, p, s);
    -pt.guide2 * pt.arg.tanh()
}

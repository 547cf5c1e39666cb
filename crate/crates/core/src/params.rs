//! Physical constants, device geometry, and per-round device settings.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A sign in {+1, -1}.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+1")]
    Plus,
    #[serde(rename = "-1")]
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    /// Sign of a nonzero float; `None` for exact zero.
    pub fn of(x: f64) -> Option<Sign> {
        if x > 0.0 {
            Some(Sign::Plus)
        } else if x < 0.0 {
            Some(Sign::Minus)
        } else {
            None
        }
    }

    pub fn times(self, other: Sign) -> Sign {
        if self == other {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

impl std::fmt::Display for Sign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Sign::Plus => write!(f, "+1"),
            Sign::Minus => write!(f, "-1"),
        }
    }
}

/// Bob's device alignment relative to Alice's: 0 or pi/2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Delta {
    #[serde(rename = "0")]
    Aligned,
    #[serde(rename = "pi/2")]
    Orthogonal,
}

impl Delta {
    pub fn angle(self) -> f64 {
        match self {
            Delta::Aligned => 0.0,
            Delta::Orthogonal => std::f64::consts::FRAC_PI_2,
        }
    }
}

/// One round's device settings: Bob's random field-orientation flip `s` and
/// his alignment angle `delta`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundSettings {
    pub s: Sign,
    pub delta: Delta,
}

impl RoundSettings {
    pub fn aligned(s: Sign) -> Self {
        RoundSettings {
            s,
            delta: Delta::Aligned,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("parameter `{name}` must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("field scale factor k must exceed 1, got {0}")]
    ScaleFactorTooSmall(f64),
}

/// Physical constants and device geometry of the double Stern-Gerlach setup.
///
/// `b0 + b * z` is the common field profile; Bob's device carries the extra
/// factor `s * k`. The interaction lasts `t_field` and is treated as
/// instantaneous in position, so trajectory time starts at exit from the
/// field region. Default values are natural units (hbar = m = sigma0 = 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysParams {
    /// Reduced Planck constant.
    pub hbar: f64,
    /// Particle mass (same for both particles).
    pub mass: f64,
    /// Magnetic moment.
    pub mu: f64,
    /// Field offset B0 (enters global phases only).
    pub b0: f64,
    /// Field gradient B.
    pub b: f64,
    /// Bob's field scale factor K (dimensionless, > 1).
    pub k: f64,
    /// Field interaction time T.
    pub t_field: f64,
    /// Initial packet width parameter sigma0.
    pub sigma0: f64,
    /// Entrance slit width d of each device.
    pub slit_width: f64,
}

impl Default for PhysParams {
    fn default() -> Self {
        PhysParams {
            hbar: 1.0,
            mass: 1.0,
            mu: 1.0,
            b0: 0.0,
            b: 2.0,
            k: 4.0,
            t_field: 1.0,
            sigma0: 1.0,
            slit_width: 1.0,
        }
    }
}

impl PhysParams {
    /// Natural units, moderate field. Same as `Default`.
    pub fn natural() -> Self {
        Self::default()
    }

    /// Strong-field preset: b mu T / hbar = 10, k = 2. The regime where the
    /// outcome sign laws hold essentially deterministically.
    pub fn strong_field() -> Self {
        PhysParams {
            b: 10.0,
            k: 2.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let positives = [
            ("hbar", self.hbar),
            ("mass", self.mass),
            ("mu", self.mu),
            ("b", self.b),
            ("t_field", self.t_field),
            ("sigma0", self.sigma0),
            ("slit_width", self.slit_width),
        ];
        for (name, value) in positives {
            if value <= 0.0 || value.is_nan() {
                return Err(ParamError::NonPositive { name, value });
            }
        }
        if self.k <= 1.0 || self.k.is_nan() {
            return Err(ParamError::ScaleFactorTooSmall(self.k));
        }
        Ok(())
    }

    /// Field impulse b * mu * t_field, the momentum kick per unit hbar scale.
    pub fn field_impulse(&self) -> f64 {
        self.b * self.mu * self.t_field
    }

    /// Packet-spread factor `1 + hbar^2 t^2 / (4 sigma0^4 m^2)`.
    pub fn epsilon(&self, t: f64) -> f64 {
        let s2 = self.sigma0 * self.sigma0;
        let q = self.hbar * t / (2.0 * s2 * self.mass);
        1.0 + q * q
    }

    /// Width of the spread packet at time t: sigma0 * sqrt(epsilon(t)).
    pub fn sigma_eff(&self, t: f64) -> f64 {
        self.sigma0 * self.epsilon(t).sqrt()
    }

    /// Step-3 filter threshold d / (2 K).
    pub fn filter_threshold(&self) -> f64 {
        self.slit_width / (2.0 * self.k)
    }

    /// Default integration horizon: time at which the guidance coefficient
    /// b mu T / (m epsilon) has decayed to 1e-3 of its exit value, i.e.
    /// epsilon >= 1000. Past this point the spreading term dominates and the
    /// sign of each z coordinate is frozen.
    pub fn default_t_end(&self) -> f64 {
        let eps_target = 1000.0_f64;
        2.0 * self.sigma0 * self.sigma0 * self.mass / self.hbar * (eps_target - 1.0).sqrt()
    }

    /// Upper bound on the guidance displacement accumulated up to time t,
    /// spreading amplification included (the density lobes sit at
    /// +- K b mu T t / m). Used for grid and histogram box sizing.
    pub fn guidance_displacement_bound(&self, t: f64) -> f64 {
        self.k.max(1.0) * self.field_impulse() * t / self.mass
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_algebra() {
        assert_eq!(Sign::Plus.value(), 1.0);
        assert_eq!(Sign::Minus.value(), -1.0);
        assert_eq!(Sign::Plus.flip(), Sign::Minus);
        assert_eq!(Sign::of(0.5), Some(Sign::Plus));
        assert_eq!(Sign::of(-3.0), Some(Sign::Minus));
        assert_eq!(Sign::of(0.0), None);
        assert_eq!(Sign::Minus.times(Sign::Minus), Sign::Plus);
    }

    #[test]
    fn validation_rejects_bad_params() {
        assert!(PhysParams::default().validate().is_ok());
        let p = PhysParams {
            k: 1.0,
            ..PhysParams::default()
        };
        assert_eq!(p.validate(), Err(ParamError::ScaleFactorTooSmall(1.0)));
        let p = PhysParams {
            sigma0: 0.0,
            ..PhysParams::default()
        };
        assert!(matches!(
            p.validate(),
            Err(ParamError::NonPositive { name: "sigma0", .. })
        ));
    }

    #[test]
    fn epsilon_against_definition() {
        let p = PhysParams::default();
        assert_eq!(p.epsilon(0.0), 1.0);
        assert!((p.epsilon(2.0) - 2.0).abs() < 1e-15);
        assert!((p.epsilon(1.0) - 1.25).abs() < 1e-15);
    }

    #[test]
    fn t_end_freezes_guidance() {
        let p = PhysParams::strong_field();
        let t_end = p.default_t_end();
        // Guidance coefficient decayed to 1e-3 of its exit value.
        let ratio = 1.0 / p.epsilon(t_end);
        assert!(ratio <= 1.0e-3 + 1e-12, "ratio {ratio}");
    }

    #[test]
    fn params_serde_round_trip() {
        let p = PhysParams::strong_field();
        let json = serde_json::to_string(&p).unwrap();
        let q: PhysParams = serde_json::from_str(&json).unwrap();
        assert_eq!(p, q);
    }
}

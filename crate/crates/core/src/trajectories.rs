//! Quantum-equilibrium sampling of initial positions and integration of the
//! coupled nonlocal guidance ODEs dz1/dt = v1(z1, z2, t), dz2/dt = v2(z1, z2, t).
//!
//! Sampling comes in two flavors. [`sample_initial`] draws both coordinates
//! from the t = 0 packet, Normal(0, sigma0^2) — this is the equilibrium
//! ensemble used for equivariance checks and rate statistics.
//! [`sample_initial_slit`] additionally conditions Alice's coordinate on
//! passing her entrance slit (|z10| < d/2); together with the step-3 filter
//! |z20| >= d/(2K) this pins |z10| < d/2 <= K|z20|, which is exactly what
//! makes the outcome sign laws deterministic. Protocol rounds and figure runs
//! use the slit-aware sampler.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::{PhysParams, RoundSettings, Sign};
use crate::physics::velocity_pair;
use crate::rng::{round_rng, Lane};

/// Sign readout dead zone, as a fraction of sigma0. A final |z| inside the
/// band is reported as an error instead of a coin flip.
pub const DEADZONE_FRACTION: f64 = 1e-6;

/// Cap on stored samples per trajectory; integration always uses every step.
pub const MAX_STORED_SAMPLES: usize = 4096;

/// Default RK4 step in natural time units.
pub const DEFAULT_DT: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("non-finite state at step {step} (t = {t})")]
    NonFinite { step: usize, t: f64 },
    #[error("ambiguous outcome: |z{particle}(t_end)| = {value:e} is inside the dead zone {deadzone:e}")]
    AmbiguousOutcome {
        particle: u8,
        value: f64,
        deadzone: f64,
    },
    #[error("degenerate initial position: z20 = 0 has no sign")]
    DegenerateInitial,
}

/// Hidden variables of one pair: the initial z coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialPositions {
    pub z10: f64,
    pub z20: f64,
}

/// Measurement outcome: which side of the xy plane each particle ends on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub w_a: Sign,
    pub w_b: Sign,
}

/// Time series of both particles' z coordinates for one integrated pair.
#[derive(Clone, Debug)]
pub struct TrajectoryPair {
    pub times: Vec<f64>,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    pub settings: RoundSettings,
    pub initial: InitialPositions,
    pub params: PhysParams,
}

impl TrajectoryPair {
    pub fn final_positions(&self) -> (f64, f64) {
        (*self.z1.last().unwrap(), *self.z2.last().unwrap())
    }
}

/// Draw both coordinates i.i.d. Normal(0, sigma0^2).
pub fn sample_initial_from<R: Rng>(rng: &mut R, sigma0: f64) -> InitialPositions {
    let normal = Normal::new(0.0, sigma0).expect("sigma0 > 0");
    InitialPositions {
        z10: normal.sample(rng),
        z20: normal.sample(rng),
    }
}

/// Seeded equilibrium sample; deterministic given the seed.
pub fn sample_initial(sigma0: f64, seed: u64) -> InitialPositions {
    let mut rng = round_rng(seed, 0, Lane::Source);
    sample_initial_from(&mut rng, sigma0)
}

/// Equilibrium sample with Alice's coordinate conditioned on her entrance
/// slit, |z10| < slit_width / 2 (rejection sampling). Bob's coordinate is
/// left unconditioned: the step-3 criterion supersedes his slit and keeping
/// the raw marginal makes the proclaimed rejection rate exactly
/// 2 Phi(d / (2 K sigma0)) - 1.
pub fn sample_initial_slit<R: Rng>(rng: &mut R, sigma0: f64, slit_width: f64) -> InitialPositions {
    let normal = Normal::new(0.0, sigma0).expect("sigma0 > 0");
    let half = slit_width / 2.0;
    let z10 = loop {
        let z = normal.sample(rng);
        if z.abs() < half {
            break z;
        }
    };
    InitialPositions {
        z10,
        z20: normal.sample(rng),
    }
}

/// Classic fixed-step RK4 on the coupled system; both equations advance
/// simultaneously (each velocity depends on both positions). The step count
/// is rounded so the grid lands on t_end exactly.
pub fn integrate(
    initial: InitialPositions,
    settings: RoundSettings,
    p: &PhysParams,
    t_end: f64,
    dt: f64,
) -> Result<TrajectoryPair, TrajectoryError> {
    assert!(t_end > 0.0 && dt > 0.0 && dt <= t_end, "need 0 < dt <= t_end");
    let n_steps = (t_end / dt).round().max(1.0) as usize;
    let h = t_end / n_steps as f64;
    let s = settings.s;

    let stride = (n_steps + 1).div_ceil(MAX_STORED_SAMPLES).max(1);
    let mut times = Vec::with_capacity(n_steps / stride + 2);
    let mut z1s = Vec::with_capacity(n_steps / stride + 2);
    let mut z2s = Vec::with_capacity(n_steps / stride + 2);

    let (mut z1, mut z2) = (initial.z10, initial.z20);
    times.push(0.0);
    z1s.push(z1);
    z2s.push(z2);

    for step in 0..n_steps {
        let t = step as f64 * h;
        let (k1a, k1b) = velocity_pair(z1, z2, t, p, s);
        let (k2a, k2b) = velocity_pair(z1 + 0.5 * h * k1a, z2 + 0.5 * h * k1b, t + 0.5 * h, p, s);
        let (k3a, k3b) = velocity_pair(z1 + 0.5 * h * k2a, z2 + 0.5 * h * k2b, t + 0.5 * h, p, s);
        let (k4a, k4b) = velocity_pair(z1 + h * k3a, z2 + h * k3b, t + h, p, s);
        z1 += h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
        z2 += h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);
        if !(z1.is_finite() && z2.is_finite()) {
            return Err(TrajectoryError::NonFinite { step, t: t + h });
        }
        let done = step + 1 == n_steps;
        if (step + 1) % stride == 0 || done {
            times.push((step + 1) as f64 * h);
            z1s.push(z1);
            z2s.push(z2);
        }
    }

    Ok(TrajectoryPair {
        times,
        z1: z1s,
        z2: z2s,
        settings,
        initial,
        params: *p,
    })
}

/// Sign readout of the final positions.
pub fn outcome_measured(traj: &TrajectoryPair) -> Result<Outcome, TrajectoryError> {
    let deadzone = DEADZONE_FRACTION * traj.params.sigma0;
    let (z1, z2) = traj.final_positions();
    let check = |value: f64, particle: u8| {
        if value.abs() < deadzone {
            Err(TrajectoryError::AmbiguousOutcome {
                particle,
                value,
                deadzone,
            })
        } else {
            Ok(Sign::of(value).expect("value outside dead zone"))
        }
    };
    Ok(Outcome {
        w_a: check(z1, 1)?,
        w_b: check(z2, 2)?,
    })
}

/// Step-4 sign laws: W_A = -sgn(z20) s, W_B = sgn(z20). No integration.
pub fn outcome_predicted(initial: InitialPositions, s: Sign) -> Result<Outcome, TrajectoryError> {
    let sgn_z20 = Sign::of(initial.z20).ok_or(TrajectoryError::DegenerateInitial)?;
    Ok(Outcome {
        w_a: sgn_z20.flip().times(s),
        w_b: sgn_z20,
    })
}

/// Integrate an equilibrium ensemble of `n` pairs to `t_probe` and return the
/// final (z1, z2) positions. Each pair owns the stream (master_seed, index),
/// so the parallel run is bitwise identical to a serial one.
pub fn evolve_ensemble(
    n: usize,
    p: &PhysParams,
    settings: RoundSettings,
    t_probe: f64,
    dt: f64,
    master_seed: u64,
) -> Result<Vec<(f64, f64)>, TrajectoryError> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = round_rng(master_seed, i, Lane::Source);
            let initial = sample_initial_from(&mut rng, p.sigma0);
            let traj = integrate(initial, settings, p, t_probe, dt)?;
            Ok(traj.final_positions())
        })
        .collect()
}

/// Write one trajectory as CSV: comment header with a parameter echo, then
/// `t,z1,z2` rows in full round-trip precision.
pub fn write_csv<W: Write>(traj: &TrajectoryPair, extra_comments: &[String], out: &mut W) -> io::Result<()> {
    let p = &traj.params;
    writeln!(out, "# pilotwave trajectory")?;
    writeln!(
        out,
        "# params: hbar={} mass={} mu={} b0={} b={} k={} t_field={} sigma0={} slit_width={}",
        p.hbar, p.mass, p.mu, p.b0, p.b, p.k, p.t_field, p.sigma0, p.slit_width
    )?;
    writeln!(
        out,
        "# settings: s={} delta={:?}",
        traj.settings.s, traj.settings.delta
    )?;
    writeln!(
        out,
        "# initial: z10={} z20={}",
        traj.initial.z10, traj.initial.z20
    )?;
    for line in extra_comments {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "t,z1,z2")?;
    for i in 0..traj.times.len() {
        writeln!(out, "{},{},{}", traj.times[i], traj.z1[i], traj.z2[i])?;
    }
    Ok(())
}

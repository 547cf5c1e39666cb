//! Pilot-wave simulation of the double Stern-Gerlach experiment on a spin
//! singlet, plus a key-distribution protocol that stays secure against an
//! adversary who can read the hidden particle positions.
//!
//! The crate is organized around the experiment's pipeline:
//!
//! - [`params`]: physical constants, device geometry, per-round settings.
//! - [`physics`]: closed-form spinor amplitudes, density, currents, and the
//!   guidance velocities — all pure functions, safe to evaluate concurrently.
//! - [`trajectories`]: quantum-equilibrium sampling and RK4 integration of
//!   the coupled nonlocal guidance ODEs, plus the outcome sign laws.
//! - [`verification`]: independent numerical oracles (amplitudes vs density,
//!   currents vs rho*v, the conservation law under central differences, and
//!   ensemble-transport equivariance).
//! - [`protocol`]: round generation, the slit filter, sifting with both
//!   abort gates, key extraction, and CHSH estimation.
//! - [`adversary`]: the position-reading eavesdropper and the baseline vs
//!   s-flip security separation.
//!
//! Everything is deterministic given a master seed: each round and each
//! ensemble member owns a private ChaCha stream ([`rng`]), so parallel and
//! serial execution produce identical results.

pub mod adversary;
pub mod numeric;
pub mod params;
pub mod physics;
pub mod protocol;
pub mod rng;
pub mod trajectories;
pub mod verification;

pub use adversary::{AttackConfig, AttackReport, EveKnowledge, ProtocolVariant};
pub use params::{Delta, ParamError, PhysParams, RoundSettings, Sign};
pub use physics::SpinorAmplitudes;
pub use protocol::{
    AbortReason, AngleSet, ChshEstimate, OutcomeMode, ProtocolError, ProtocolRound, SessionConfig,
    SessionTranscript,
};
pub use trajectories::{InitialPositions, Outcome, TrajectoryError, TrajectoryPair};
pub use verification::{CheckReport, GridSpec};

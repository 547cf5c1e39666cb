//! The key-distribution protocol.
//!
//! Per round: a singlet pair is generated with hidden initial positions, Bob
//! draws his settings (the field-orientation flip `s` and the alignment
//! `delta`), the step-3 slit filter is applied, outcomes are produced by the
//! configured engine, and the public announcements are filled in during
//! sifting. Sifting checks anticorrelation (W_B = -W_A s on every aligned
//! test round; one violation aborts), then the CHSH expectation per `s`
//! (aborts when it strays from 2 sqrt(2) by more than the tolerance), and
//! finally emits the sifted keys from the untested aligned rounds.
//!
//! Outcome engines. Aligned rounds can be produced three ways: `SignLaw`
//! applies the closed-form outcome laws, `FullOde` integrates the guidance
//! equations and reads off the final signs, and `QuantumOracle` is the
//! sign-law engine plus the intercept-resend noise channel. In quantum
//! equilibrium sgn(z20) is a fair sign, so the sign-law outcomes already
//! reproduce the Born statistics of aligned measurements; orthogonal rounds
//! have no closed-form treatment and draw independent fair signs (E = 0).
//! These rounds never contribute key bits.
//!
//! Bell layer. Settings restricted to {0, pi/2} cannot reach 2 sqrt(2), so
//! every surviving round additionally carries one Born-statistics sample at a
//! CHSH angle pair (E(theta) = -cos theta, Bob's sign corrected for his known
//! device orientation). The per-`s` CHSH estimates are formed from the test
//! subset's samples. The intercept-resend adversary measures in the z basis
//! (the hidden variable she can read), which leaves aligned readouts
//! perfectly anticorrelated and is therefore caught only by the Bell gate.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::{Delta, ParamError, PhysParams, RoundSettings, Sign};
use crate::rng::{round_rng, session_rng, Lane};
use crate::trajectories::{
    integrate, outcome_measured, outcome_predicted, sample_initial_slit, InitialPositions,
    Outcome, TrajectoryError, DEFAULT_DT,
};

/// The quantum CHSH value 2 sqrt(2) the Bell gate compares against.
pub const CHSH_QUANTUM: f64 = 2.0 * std::f64::consts::SQRT_2;

/// Minimum Bell samples per correlation term for a usable estimate.
pub const MIN_SAMPLES_PER_TERM: u64 = 100;

/// Key-bit convention: map(+1) = 1, map(-1) = 0.
pub fn bit_from_sign(s: Sign) -> u8 {
    match s {
        Sign::Plus => 1,
        Sign::Minus => 0,
    }
}

/// CHSH measurement directions. The default set makes
/// S = E(a,b) - E(a,b') + E(a',b) + E(a',b') equal +2 sqrt(2) on the singlet
/// (every relative angle is an odd multiple of pi/4).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleSet {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl Default for AngleSet {
    fn default() -> Self {
        use std::f64::consts::FRAC_PI_4;
        AngleSet {
            a: 0.0,
            a_prime: 2.0 * FRAC_PI_4,
            b: 5.0 * FRAC_PI_4,
            b_prime: 7.0 * FRAC_PI_4,
        }
    }
}

/// One of the four CHSH angle pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnglePair {
    AB,
    ABPrime,
    APrimeB,
    APrimeBPrime,
}

impl AnglePair {
    pub const ALL: [AnglePair; 4] = [
        AnglePair::AB,
        AnglePair::ABPrime,
        AnglePair::APrimeB,
        AnglePair::APrimeBPrime,
    ];

    pub fn idx(self) -> usize {
        match self {
            AnglePair::AB => 0,
            AnglePair::ABPrime => 1,
            AnglePair::APrimeB => 2,
            AnglePair::APrimeBPrime => 3,
        }
    }

    pub fn alice_angle(self, set: &AngleSet) -> f64 {
        match self {
            AnglePair::AB | AnglePair::ABPrime => set.a,
            AnglePair::APrimeB | AnglePair::APrimeBPrime => set.a_prime,
        }
    }

    pub fn bob_angle(self, set: &AngleSet) -> f64 {
        match self {
            AnglePair::AB | AnglePair::APrimeB => set.b,
            AnglePair::ABPrime | AnglePair::APrimeBPrime => set.b_prime,
        }
    }

    /// Sign of this term in S = E(a,b) - E(a,b') + E(a',b) + E(a',b').
    pub fn chsh_sign(self) -> f64 {
        match self {
            AnglePair::ABPrime => -1.0,
            _ => 1.0,
        }
    }
}

/// One Born-statistics sample at a CHSH angle pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BellSample {
    pub pair: AnglePair,
    pub alice: Sign,
    pub bob: Sign,
    /// True when this round was intercepted and resent by the adversary.
    pub corrupted: bool,
}

/// How aligned-round outcomes are produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeMode {
    SignLaw,
    FullOde,
    QuantumOracle,
}

/// Full configuration of one protocol session.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub params: PhysParams,
    pub n_pairs: u64,
    pub mode: OutcomeMode,
    /// Integration horizon for `FullOde`; `None` uses the parameter default.
    pub t_end: Option<f64>,
    pub dt: f64,
    pub test_fraction: f64,
    pub bell_tolerance: f64,
    /// Fraction of rounds intercepted and resent by the adversary.
    pub noise_fraction: f64,
    pub angles: AngleSet,
    /// Pin Bob's `s` (the baseline-variant straw man). `None` draws randomly.
    pub force_s: Option<Sign>,
    /// Pin Bob's alignment. `None` draws randomly.
    pub force_delta: Option<Delta>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            params: PhysParams::default(),
            n_pairs: 10_000,
            mode: OutcomeMode::SignLaw,
            t_end: None,
            dt: DEFAULT_DT,
            test_fraction: 0.5,
            bell_tolerance: 0.2,
            noise_fraction: 0.0,
            angles: AngleSet::default(),
            force_s: None,
            force_delta: None,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        self.params.validate()?;
        if self.test_fraction <= 0.0 || self.test_fraction >= 1.0 || self.test_fraction.is_nan() {
            return Err(ProtocolError::InvalidConfig(
                "test_fraction must lie in (0, 1)",
            ));
        }
        if !(0.0..=1.0).contains(&self.noise_fraction) {
            return Err(ProtocolError::InvalidConfig(
                "noise_fraction must lie in [0, 1]",
            ));
        }
        if self.dt <= 0.0 || self.dt.is_nan() {
            return Err(ProtocolError::InvalidConfig("dt must be positive"));
        }
        Ok(())
    }

    fn ode_t_end(&self) -> f64 {
        self.t_end.unwrap_or_else(|| self.params.default_t_end())
    }
}

/// One pair's full lifecycle. `initial`, `settings.s`, `outcome` and `bell`
/// are hidden variables; the `announced_*` fields are the public record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProtocolRound {
    pub index: u64,
    pub initial: InitialPositions,
    pub settings: RoundSettings,
    pub filtered_out: bool,
    pub outcome: Option<Outcome>,
    pub bell: Option<BellSample>,
    pub announced_for_test: bool,
    pub announced_wb: Option<Sign>,
    pub announced_s: Option<Sign>,
    pub announced_wa: Option<Sign>,
}

impl ProtocolRound {
    /// True for rounds that may contribute key bits: aligned, unfiltered,
    /// not sacrificed for testing.
    pub fn is_key_round(&self) -> bool {
        !self.filtered_out && !self.announced_for_test && self.settings.delta == Delta::Aligned
    }

    /// Alice's key bit, map(W_A).
    pub fn alice_bit(&self) -> Option<u8> {
        self.outcome.map(|o| bit_from_sign(o.w_a))
    }

    /// Bob's key bit, map(-W_B s).
    pub fn bob_bit(&self) -> Option<u8> {
        self.outcome
            .map(|o| bit_from_sign(o.w_b.flip().times(self.settings.s)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    None,
    AnticorrelationViolation,
    BellViolation,
}

/// One correlation term of the CHSH estimate.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ChshTerm {
    pub pair: AnglePair,
    pub alice_angle: f64,
    pub bob_angle: f64,
    pub correlation: f64,
    pub samples: u64,
}

/// CHSH estimate with its standard error.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ChshEstimate {
    pub terms: [ChshTerm; 4],
    pub value: f64,
    pub std_err: f64,
}

/// Public record of a finished session plus the sifted keys.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionTranscript {
    pub rounds: Vec<ProtocolRound>,
    pub alice_key: Vec<u8>,
    pub bob_key: Vec<u8>,
    pub aborted: bool,
    pub abort_reason: AbortReason,
    /// CHSH estimates for the s = +1 / s = -1 test partitions. `None` when
    /// the partition is below the statistical floor (the Bell gate needs
    /// MIN_SAMPLES_PER_TERM samples per term to mean anything).
    pub chsh_plus: Option<ChshEstimate>,
    pub chsh_minus: Option<ChshEstimate>,
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("session aborted ({0:?})")]
    Aborted(AbortReason),
    #[error("no key rounds survived sifting")]
    InsufficientRounds,
    #[error("insufficient statistics for CHSH term {pair:?}: {got} < {need}")]
    InsufficientStatistics {
        pair: AnglePair,
        got: u64,
        need: u64,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

/// Singlet statistics at analyzer angles (theta_a, theta_b):
/// fair marginals with E[AB] = -cos(theta_a - theta_b).
pub fn singlet_pair<R: Rng>(rng: &mut R, theta_a: f64, theta_b: f64) -> (Sign, Sign) {
    let alice = if rng.random::<bool>() {
        Sign::Plus
    } else {
        Sign::Minus
    };
    let p_anti = (0.5 * (theta_a - theta_b)).cos().powi(2);
    let bob = if rng.random::<f64>() < p_anti {
        alice.flip()
    } else {
        alice
    };
    (alice, bob)
}

/// Post-interception statistics: the adversary measures in the z basis and
/// resends the product eigenstate, so E[AB] = -cos(theta_a) cos(theta_b).
pub fn intercepted_pair<R: Rng>(rng: &mut R, theta_a: f64, theta_b: f64) -> (Sign, Sign) {
    let eve = if rng.random::<bool>() {
        Sign::Plus
    } else {
        Sign::Minus
    };
    let alice = if rng.random::<f64>() < (0.5 * theta_a).cos().powi(2) {
        eve.flip()
    } else {
        eve
    };
    let bob = if rng.random::<f64>() < (0.5 * theta_b).cos().powi(2) {
        eve
    } else {
        eve.flip()
    };
    (alice, bob)
}

/// Draw `n` oracle Bell samples at the given angle set, with the stated
/// fraction of them intercepted and resent.
pub fn oracle_bell_samples<R: Rng>(
    n: u64,
    angles: &AngleSet,
    noise_fraction: f64,
    rng: &mut R,
) -> Vec<BellSample> {
    (0..n)
        .map(|_| {
            let corrupted = rng.random::<f64>() < noise_fraction;
            let pair = AnglePair::ALL[rng.random_range(0..4)];
            let (ta, tb) = (pair.alice_angle(angles), pair.bob_angle(angles));
            let (alice, bob) = if corrupted {
                intercepted_pair(rng, ta, tb)
            } else {
                singlet_pair(rng, ta, tb)
            };
            BellSample {
                pair,
                alice,
                bob,
                corrupted,
            }
        })
        .collect()
}

/// Independent fair signs, E = 0.
pub fn fair_pair<R: Rng>(rng: &mut R) -> (Sign, Sign) {
    let a = if rng.random::<bool>() {
        Sign::Plus
    } else {
        Sign::Minus
    };
    let b = if rng.random::<bool>() {
        Sign::Plus
    } else {
        Sign::Minus
    };
    (a, b)
}

fn draw_sign<R: Rng>(rng: &mut R) -> Sign {
    if rng.random::<bool>() {
        Sign::Plus
    } else {
        Sign::Minus
    }
}

/// Generate one round. Source randomness and Bob's lab randomness live on
/// separate streams so tests can re-draw Bob's choices against fixed hidden
/// positions.
pub fn run_round_with_seeds(
    index: u64,
    cfg: &SessionConfig,
    source_seed: u64,
    bob_seed: u64,
) -> Result<ProtocolRound, ProtocolError> {
    let p = &cfg.params;
    let mut source = round_rng(source_seed, index, Lane::Source);
    let initial = sample_initial_slit(&mut source, p.sigma0, p.slit_width);

    let mut bob = round_rng(bob_seed, index, Lane::Bob);
    let s = cfg.force_s.unwrap_or_else(|| draw_sign(&mut bob));
    let delta = cfg.force_delta.unwrap_or_else(|| {
        if bob.random::<bool>() {
            Delta::Aligned
        } else {
            Delta::Orthogonal
        }
    });
    let settings = RoundSettings { s, delta };

    let filtered_out = initial.z20.abs() < p.filter_threshold();
    let mut oracle = round_rng(source_seed, index, Lane::Oracle);

    let (outcome, bell) = if filtered_out {
        (None, None)
    } else {
        let outcome = match delta {
            Delta::Aligned => match cfg.mode {
                OutcomeMode::SignLaw | OutcomeMode::QuantumOracle => {
                    outcome_predicted(initial, s)?
                }
                OutcomeMode::FullOde => {
                    let traj = integrate(initial, settings, p, cfg.ode_t_end(), cfg.dt)?;
                    outcome_measured(&traj)?
                }
            },
            Delta::Orthogonal => {
                let (w_a, w_b) = fair_pair(&mut oracle);
                Outcome { w_a, w_b }
            }
        };
        let corrupted = oracle.random::<f64>() < cfg.noise_fraction;
        let pair = AnglePair::ALL[oracle.random_range(0..4)];
        let (ta, tb) = (pair.alice_angle(&cfg.angles), pair.bob_angle(&cfg.angles));
        let (alice, bob_sign) = if corrupted {
            intercepted_pair(&mut oracle, ta, tb)
        } else {
            singlet_pair(&mut oracle, ta, tb)
        };
        (
            Some(outcome),
            Some(BellSample {
                pair,
                alice,
                bob: bob_sign,
                corrupted,
            }),
        )
    };

    Ok(ProtocolRound {
        index,
        initial,
        settings,
        filtered_out,
        outcome,
        bell,
        announced_for_test: false,
        announced_wb: None,
        announced_s: None,
        announced_wa: None,
    })
}

/// Generate one round with a single master seed.
pub fn run_round(index: u64, cfg: &SessionConfig, master_seed: u64) -> Result<ProtocolRound, ProtocolError> {
    run_round_with_seeds(index, cfg, master_seed, master_seed)
}

/// Generate the session's rounds (parallel; bitwise identical to serial).
pub fn generate_rounds(cfg: &SessionConfig, master_seed: u64) -> Result<Vec<ProtocolRound>, ProtocolError> {
    cfg.validate()?;
    (0..cfg.n_pairs)
        .into_par_iter()
        .map(|i| run_round(i, cfg, master_seed))
        .collect()
}

/// The test-subset indices Bob announces, as a deterministic function of the
/// eligible-round count and the sift seed (round contents play no part, so an
/// outcome flip cannot move a round in or out of the subset).
pub fn test_subset(rounds: &[ProtocolRound], test_fraction: f64, sift_seed: u64) -> Vec<usize> {
    let mut eligible: Vec<usize> = rounds
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.filtered_out)
        .map(|(i, _)| i)
        .collect();
    let n_test = (eligible.len() as f64 * test_fraction).round() as usize;
    let mut rng = session_rng(sift_seed);
    eligible.shuffle(&mut rng);
    eligible.truncate(n_test);
    eligible
}

/// CHSH estimate from Bell samples; errors when any term is starved.
pub fn chsh_estimate(
    samples: &[BellSample],
    angles: &AngleSet,
) -> Result<ChshEstimate, ProtocolError> {
    let mut sums = [0.0_f64; 4];
    let mut counts = [0u64; 4];
    for s in samples {
        let i = s.pair.idx();
        sums[i] += s.alice.value() * s.bob.value();
        counts[i] += 1;
    }
    for pair in AnglePair::ALL {
        if counts[pair.idx()] < MIN_SAMPLES_PER_TERM {
            return Err(ProtocolError::InsufficientStatistics {
                pair,
                got: counts[pair.idx()],
                need: MIN_SAMPLES_PER_TERM,
            });
        }
    }
    let mut value = 0.0;
    let mut variance = 0.0;
    let terms = AnglePair::ALL.map(|pair| {
        let i = pair.idx();
        let e = sums[i] / counts[i] as f64;
        value += pair.chsh_sign() * e;
        variance += (1.0 - e * e) / counts[i] as f64;
        ChshTerm {
            pair,
            alice_angle: pair.alice_angle(angles),
            bob_angle: pair.bob_angle(angles),
            correlation: e,
            samples: counts[i],
        }
    });
    Ok(ChshEstimate {
        terms,
        value,
        std_err: variance.sqrt(),
    })
}

/// Steps 5-7: fill in the announcements, run the abort checks, extract keys.
pub fn sift_and_verify(
    mut rounds: Vec<ProtocolRound>,
    cfg: &SessionConfig,
    sift_seed: u64,
) -> Result<SessionTranscript, ProtocolError> {
    let test = test_subset(&rounds, cfg.test_fraction, sift_seed);
    for &i in &test {
        let r = &mut rounds[i];
        r.announced_for_test = true;
        let outcome = r.outcome.expect("unfiltered round has an outcome");
        r.announced_wb = Some(outcome.w_b);
        r.announced_s = Some(r.settings.s);
        r.announced_wa = Some(outcome.w_a);
    }

    // Step 6, first gate: a single aligned test round violating
    // W_B = -W_A s aborts the session.
    let violated = test.iter().any(|&i| {
        let r = &rounds[i];
        if r.settings.delta != Delta::Aligned {
            return false;
        }
        let o = r.outcome.expect("unfiltered round has an outcome");
        o.w_b != o.w_a.flip().times(r.settings.s)
    });
    if violated {
        return Ok(SessionTranscript {
            rounds,
            alice_key: Vec::new(),
            bob_key: Vec::new(),
            aborted: true,
            abort_reason: AbortReason::AnticorrelationViolation,
            chsh_plus: None,
            chsh_minus: None,
        });
    }

    // Step 6, second gate: per-s CHSH from the test subset's Bell samples.
    let mut estimates = [None, None];
    let mut bell_violated = false;
    for (slot, s) in [(0, Sign::Plus), (1, Sign::Minus)] {
        let samples: Vec<BellSample> = test
            .iter()
            .filter(|&&i| rounds[i].settings.s == s)
            .filter_map(|&i| rounds[i].bell)
            .collect();
        match chsh_estimate(&samples, &cfg.angles) {
            Ok(est) => {
                if (est.value - CHSH_QUANTUM).abs() > cfg.bell_tolerance {
                    bell_violated = true;
                }
                estimates[slot] = Some(est);
            }
            // Below the statistical floor the gate is skipped for this
            // partition (a forced-s session has an empty other partition).
            Err(ProtocolError::InsufficientStatistics { .. }) => estimates[slot] = None,
            Err(e) => return Err(e),
        }
    }
    let (chsh_plus, chsh_minus) = (estimates[0], estimates[1]);
    if bell_violated {
        return Ok(SessionTranscript {
            rounds,
            alice_key: Vec::new(),
            bob_key: Vec::new(),
            aborted: true,
            abort_reason: AbortReason::BellViolation,
            chsh_plus,
            chsh_minus,
        });
    }

    // Step 7: keys from the surviving aligned rounds.
    let mut alice_key = Vec::new();
    let mut bob_key = Vec::new();
    for r in &rounds {
        if r.is_key_round() {
            alice_key.push(r.alice_bit().expect("key round has an outcome"));
            bob_key.push(r.bob_bit().expect("key round has an outcome"));
        }
    }
    if alice_key.is_empty() {
        return Err(ProtocolError::InsufficientRounds);
    }

    Ok(SessionTranscript {
        rounds,
        alice_key,
        bob_key,
        aborted: false,
        abort_reason: AbortReason::None,
        chsh_plus,
        chsh_minus,
    })
}

/// Run a complete session: generate, sift, verify.
pub fn run_session(cfg: &SessionConfig, master_seed: u64) -> Result<SessionTranscript, ProtocolError> {
    let rounds = generate_rounds(cfg, master_seed)?;
    sift_and_verify(rounds, cfg, master_seed)
}

/// Step-7 key extraction from a non-aborted transcript. Recomputes both
/// parties' bits from the round record.
pub fn extract_key(t: &SessionTranscript) -> Result<(Vec<u8>, Vec<u8>), ProtocolError> {
    if t.aborted {
        return Err(ProtocolError::Aborted(t.abort_reason));
    }
    let mut alice = Vec::new();
    let mut bob = Vec::new();
    for r in &t.rounds {
        if r.is_key_round() {
            alice.push(r.alice_bit().expect("key round has an outcome"));
            bob.push(r.bob_bit().expect("key round has an outcome"));
        }
    }
    if alice.is_empty() {
        return Err(ProtocolError::InsufficientRounds);
    }
    Ok((alice, bob))
}

/// Flip W_A on one aligned round that is guaranteed to land in the test
/// subset under `sift_seed`, creating a detectable anticorrelation violation.
/// Returns the tampered round's index.
pub fn inject_anticorrelation_violation(
    rounds: &mut [ProtocolRound],
    test_fraction: f64,
    sift_seed: u64,
) -> Option<u64> {
    let test = test_subset(rounds, test_fraction, sift_seed);
    let target = test
        .into_iter()
        .find(|&i| rounds[i].settings.delta == Delta::Aligned && rounds[i].outcome.is_some())?;
    let r = &mut rounds[target];
    let o = r.outcome.unwrap();
    r.outcome = Some(Outcome {
        w_a: o.w_a.flip(),
        w_b: o.w_b,
    });
    Some(r.index)
}

/// Key bits rendered as a '0'/'1' string for transcripts.
pub fn key_string(bits: &[u8]) -> String {
    bits.iter().map(|b| if *b == 0 { '0' } else { '1' }).collect()
}

/// JSONL record for one round. Hidden fields are only populated when the
/// caller explicitly asks for them.
#[derive(Clone, Debug, Serialize)]
pub struct RoundRecord {
    pub record: &'static str,
    pub index: u64,
    pub delta: Delta,
    pub filtered_out: bool,
    pub announced_for_test: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub announced_wb: Option<Sign>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub announced_s: Option<Sign>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub announced_wa: Option<Sign>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z10: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z20: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<Sign>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bell: Option<BellSample>,
}

impl RoundRecord {
    pub fn public(r: &ProtocolRound) -> Self {
        RoundRecord {
            record: "round",
            index: r.index,
            delta: r.settings.delta,
            filtered_out: r.filtered_out,
            announced_for_test: r.announced_for_test,
            announced_wb: r.announced_wb,
            announced_s: r.announced_s,
            announced_wa: r.announced_wa,
            z10: None,
            z20: None,
            s: None,
            outcome: None,
            bell: None,
        }
    }

    pub fn revealed(r: &ProtocolRound) -> Self {
        RoundRecord {
            z10: Some(r.initial.z10),
            z20: Some(r.initial.z20),
            s: Some(r.settings.s),
            outcome: r.outcome,
            bell: r.bell,
            ..Self::public(r)
        }
    }
}

/// JSONL session summary record.
#[derive(Clone, Debug, Serialize)]
pub struct SummaryRecord {
    pub record: &'static str,
    pub n_rounds: usize,
    pub n_filtered: usize,
    pub n_test: usize,
    pub aborted: bool,
    pub abort_reason: AbortReason,
    pub key_length: usize,
    pub alice_key: String,
    pub bob_key: String,
    pub chsh_plus: Option<ChshEstimate>,
    pub chsh_minus: Option<ChshEstimate>,
}

impl From<&SessionTranscript> for SummaryRecord {
    fn from(t: &SessionTranscript) -> Self {
        SummaryRecord {
            record: "summary",
            n_rounds: t.rounds.len(),
            n_filtered: t.rounds.iter().filter(|r| r.filtered_out).count(),
            n_test: t.rounds.iter().filter(|r| r.announced_for_test).count(),
            aborted: t.aborted,
            abort_reason: t.abort_reason,
            key_length: t.alice_key.len(),
            alice_key: key_string(&t.alice_key),
            bob_key: key_string(&t.bob_key),
            chsh_plus: t.chsh_plus,
            chsh_minus: t.chsh_minus,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::normal_cdf;

    fn small_cfg(n: u64) -> SessionConfig {
        SessionConfig {
            n_pairs: n,
            ..SessionConfig::default()
        }
    }

    #[test]
    fn filter_threshold_arithmetic() {
        // d = 1, K = 4: threshold d/(2K) = 0.125, so |z20| = 0.1 is rejected
        // and |z20| = 0.2 is kept with W_B = +1.
        let p = PhysParams::default();
        assert_eq!(p.filter_threshold(), 0.125);
        assert!(0.1 < p.filter_threshold());
        assert!(0.2 >= p.filter_threshold());
        let kept = outcome_predicted(
            InitialPositions { z10: 0.0, z20: 0.2 },
            Sign::Plus,
        )
        .unwrap();
        assert_eq!(kept.w_b, Sign::Plus);
    }

    #[test]
    fn round_generation_is_deterministic_and_consistent() {
        let cfg = small_cfg(500);
        for i in 0..500 {
            let a = run_round(i, &cfg, 42).unwrap();
            let b = run_round(i, &cfg, 42).unwrap();
            assert_eq!(format!("{a:?}"), format!("{b:?}"));
            assert_eq!(a.filtered_out, a.initial.z20.abs() < cfg.params.filter_threshold());
            assert_eq!(a.outcome.is_some(), !a.filtered_out);
            assert_eq!(a.bell.is_some(), !a.filtered_out);
            assert!(a.initial.z10.abs() < cfg.params.slit_width / 2.0);
        }
    }

    #[test]
    fn filter_rate_matches_gaussian_cdf() {
        let cfg = small_cfg(20_000);
        let rounds = generate_rounds(&cfg, 7).unwrap();
        let rejected = rounds.iter().filter(|r| r.filtered_out).count() as f64;
        let frac = rejected / rounds.len() as f64;
        let expected = 2.0 * normal_cdf(cfg.params.filter_threshold() / cfg.params.sigma0) - 1.0;
        let sigma = (expected * (1.0 - expected) / rounds.len() as f64).sqrt();
        assert!(
            (frac - expected).abs() < 3.0 * sigma,
            "frac {frac} vs expected {expected} (3 sigma {})",
            3.0 * sigma
        );
    }

    #[test]
    fn honest_session_delivers_matching_keys() {
        let cfg = small_cfg(4_000);
        let t = run_session(&cfg, 11).unwrap();
        assert!(!t.aborted);
        assert_eq!(t.abort_reason, AbortReason::None);
        assert_eq!(t.alice_key, t.bob_key);
        assert!(!t.alice_key.is_empty());
        let (a, b) = extract_key(&t).unwrap();
        assert_eq!(a, t.alice_key);
        assert_eq!(b, t.bob_key);
        // Keys come only from aligned, unfiltered, untested rounds.
        let n_key = t.rounds.iter().filter(|r| r.is_key_round()).count();
        assert_eq!(n_key, t.alice_key.len());
    }

    #[test]
    fn full_ode_mode_agrees_with_sign_law() {
        let cfg = SessionConfig {
            params: PhysParams::strong_field(),
            n_pairs: 100,
            mode: OutcomeMode::FullOde,
            dt: 1e-2,
            ..SessionConfig::default()
        };
        let sign_cfg = SessionConfig {
            mode: OutcomeMode::SignLaw,
            ..cfg
        };
        for i in 0..100 {
            let ode = run_round(i, &cfg, 3).unwrap();
            let law = run_round(i, &sign_cfg, 3).unwrap();
            if ode.settings.delta == Delta::Aligned && !ode.filtered_out {
                assert_eq!(ode.outcome.unwrap(), law.outcome.unwrap(), "round {i}");
            }
        }
    }

    #[test]
    fn injected_violation_always_aborts() {
        for seed in 0..20 {
            let cfg = small_cfg(300);
            let mut rounds = generate_rounds(&cfg, seed).unwrap();
            let hit = inject_anticorrelation_violation(&mut rounds, cfg.test_fraction, seed);
            assert!(hit.is_some());
            let t = sift_and_verify(rounds, &cfg, seed).unwrap();
            assert!(t.aborted, "seed {seed}");
            assert_eq!(t.abort_reason, AbortReason::AnticorrelationViolation);
            assert!(t.alice_key.is_empty() && t.bob_key.is_empty());
            assert!(matches!(
                extract_key(&t),
                Err(ProtocolError::Aborted(AbortReason::AnticorrelationViolation))
            ));
        }
    }

    #[test]
    fn violation_outside_test_subset_does_not_abort() {
        let cfg = small_cfg(300);
        let mut rounds = generate_rounds(&cfg, 5).unwrap();
        let test: std::collections::HashSet<usize> =
            test_subset(&rounds, cfg.test_fraction, 5).into_iter().collect();
        let victim = (0..rounds.len())
            .find(|i| {
                !test.contains(i)
                    && !rounds[*i].filtered_out
                    && rounds[*i].settings.delta == Delta::Aligned
            })
            .unwrap();
        let o = rounds[victim].outcome.unwrap();
        rounds[victim].outcome = Some(Outcome {
            w_a: o.w_a.flip(),
            w_b: o.w_b,
        });
        let t = sift_and_verify(rounds, &cfg, 5).unwrap();
        assert!(!t.aborted);
        // The undetected tampering corrupts exactly one key position.
        let mismatches = t
            .alice_key
            .iter()
            .zip(&t.bob_key)
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(mismatches, 1);
    }

    #[test]
    fn intercept_resend_noise_trips_the_bell_gate() {
        let cfg = SessionConfig {
            mode: OutcomeMode::QuantumOracle,
            noise_fraction: 0.2,
            n_pairs: 10_000,
            ..SessionConfig::default()
        };
        let t = run_session(&cfg, 17).unwrap();
        assert!(t.aborted);
        assert_eq!(t.abort_reason, AbortReason::BellViolation);
        // The z-basis interception leaves aligned anticorrelation intact:
        // the abort must come from the Bell estimate. Corrupted rounds carry
        // E = -cos(theta_a) cos(theta_b), which sums to sqrt(2) on the
        // default angle set, so 20% corruption sits at the 80/20 mixture.
        let est = t.chsh_plus.expect("enough test rounds");
        let expected = 0.8 * CHSH_QUANTUM + 0.2 * std::f64::consts::SQRT_2;
        assert!(
            (est.value - expected).abs() < 5.0 * est.std_err.max(0.02),
            "S = {} vs mixture {expected}",
            est.value
        );
    }

    #[test]
    fn chsh_oracle_reaches_quantum_value() {
        let cfg = SessionConfig {
            n_pairs: 40_000,
            ..SessionConfig::default()
        };
        let t = run_session(&cfg, 23).unwrap();
        for est in [t.chsh_plus.unwrap(), t.chsh_minus.unwrap()] {
            assert!(
                (est.value - CHSH_QUANTUM).abs() < 0.1,
                "S = {} +- {}",
                est.value,
                est.std_err
            );
        }
    }

    #[test]
    fn chsh_estimate_edge_cases() {
        let angles = AngleSet::default();
        // Aligned samples at theta_rel = 0 are perfectly anticorrelated.
        let aligned: Vec<BellSample> = (0..800)
            .map(|i| {
                let a = if i % 2 == 0 { Sign::Plus } else { Sign::Minus };
                BellSample {
                    pair: AnglePair::ALL[i % 4],
                    alice: a,
                    bob: a.flip(),
                    corrupted: false,
                }
            })
            .collect();
        let est = chsh_estimate(&aligned, &angles).unwrap();
        for term in est.terms {
            assert_eq!(term.correlation, -1.0);
        }
        // S = +1 -1 +1 +1 weighted: -1 +1 -1 -1 = -2.
        assert!((est.value + 2.0).abs() < 1e-12);

        // Fully decorrelated outcomes: S consistent with 0.
        let mut rng = session_rng(31);
        let random: Vec<BellSample> = (0..40_000)
            .map(|i| {
                let (a, b) = fair_pair(&mut rng);
                BellSample {
                    pair: AnglePair::ALL[i % 4],
                    alice: a,
                    bob: b,
                    corrupted: false,
                }
            })
            .collect();
        let est = chsh_estimate(&random, &angles).unwrap();
        assert!(est.value.abs() < 5.0 * est.std_err, "S = {}", est.value);

        // Starved term errors out.
        let starved = vec![
            BellSample {
                pair: AnglePair::AB,
                alice: Sign::Plus,
                bob: Sign::Minus,
                corrupted: false
            };
            400
        ];
        assert!(matches!(
            chsh_estimate(&starved, &angles),
            Err(ProtocolError::InsufficientStatistics { .. })
        ));
    }

    #[test]
    fn key_bit_examples() {
        // z20 > 0, s = +1: W_A = -1, bit 0 for both parties.
        let i = InitialPositions { z10: 0.0, z20: 0.4 };
        let plus = outcome_predicted(i, Sign::Plus).unwrap();
        assert_eq!(bit_from_sign(plus.w_a), 0);
        assert_eq!(bit_from_sign(plus.w_b.flip().times(Sign::Plus)), 0);
        // z20 > 0, s = -1: W_A = +1, bit 1.
        let minus = outcome_predicted(i, Sign::Minus).unwrap();
        assert_eq!(bit_from_sign(minus.w_a), 1);
        assert_eq!(bit_from_sign(minus.w_b.flip().times(Sign::Minus)), 1);
    }

    #[test]
    fn honest_key_bits_are_balanced() {
        let cfg = small_cfg(40_000);
        let t = run_session(&cfg, 29).unwrap();
        let ones: u64 = t.alice_key.iter().map(|&b| b as u64).sum();
        let frac = ones as f64 / t.alice_key.len() as f64;
        assert!((0.48..=0.52).contains(&frac), "ones fraction {frac}");
    }

    #[test]
    fn key_is_created_by_late_randomness() {
        // Same source stream (positions), independent Bob stream (s, delta):
        // the two keys are uncorrelated on shared key rounds.
        let cfg = small_cfg(30_000);
        let mut products = Vec::new();
        for i in 0..cfg.n_pairs {
            let a = run_round_with_seeds(i, &cfg, 101, 201).unwrap();
            let b = run_round_with_seeds(i, &cfg, 101, 202).unwrap();
            assert_eq!(a.initial, b.initial);
            if a.filtered_out || a.settings.delta != Delta::Aligned || b.settings.delta != Delta::Aligned
            {
                continue;
            }
            let bit_a = a.alice_bit().unwrap() as f64 * 2.0 - 1.0;
            let bit_b = b.alice_bit().unwrap() as f64 * 2.0 - 1.0;
            products.push(bit_a * bit_b);
        }
        let n = products.len() as f64;
        let r = products.iter().sum::<f64>() / n;
        assert!(r.abs() < 3.0 / n.sqrt(), "correlation {r} over {n} rounds");
    }

    #[test]
    fn degenerate_sessions_error_out() {
        // One pair: the single eligible round is sacrificed for testing, so
        // no key survives.
        let cfg = SessionConfig {
            n_pairs: 1,
            force_delta: Some(Delta::Aligned),
            ..SessionConfig::default()
        };
        let mut result = None;
        for seed in 0..50 {
            match run_session(&cfg, seed) {
                Err(ProtocolError::InsufficientRounds) => {
                    result = Some(());
                    break;
                }
                Ok(_) => continue,
                Err(e) => panic!("unexpected error {e}"),
            }
        }
        assert!(result.is_some(), "expected an InsufficientRounds session");
    }

    #[test]
    fn transcript_records_serialize_without_hidden_leakage() {
        let cfg = small_cfg(200);
        let t = run_session(&cfg, 3).unwrap();
        let public = serde_json::to_string(&RoundRecord::public(&t.rounds[0])).unwrap();
        assert!(!public.contains("z20"));
        assert!(!public.contains("\"s\":"));
        let revealed = serde_json::to_string(&RoundRecord::revealed(&t.rounds[0])).unwrap();
        assert!(revealed.contains("z20"));
        let summary = serde_json::to_string(&SummaryRecord::from(&t)).unwrap();
        assert!(summary.contains("\"record\":\"summary\""));
        assert!(summary.contains("\"aborted\":false"));
    }
}

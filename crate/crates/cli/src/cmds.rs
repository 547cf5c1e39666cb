//! Subcommand implementations. All writers are single-writer and run after
//! computation completes; every output starts with the effective config echo.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use pilotwave_core::adversary::{run_attack, AttackConfig, ProtocolVariant};
use pilotwave_core::params::{RoundSettings, Sign};
use pilotwave_core::protocol::{
    chsh_estimate, generate_rounds, inject_anticorrelation_violation, oracle_bell_samples,
    sift_and_verify, AbortReason, AngleSet, RoundRecord, SummaryRecord,
};
use pilotwave_core::rng::{round_rng, session_rng, Lane};
use pilotwave_core::trajectories::{integrate, sample_initial_slit, write_csv};
use pilotwave_core::verification::run_all;
use serde::Serialize;

use crate::config::RunConfig;
use crate::{exit_codes, VariantArg};

/// Either stdout or a file, decided once per command.
fn open_sink(path: Option<&PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            Box::new(BufWriter::new(
                File::create(p).with_context(|| format!("creating {}", p.display()))?,
            ))
        }
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

#[derive(Serialize)]
struct ConfigRecord<'a> {
    record: &'static str,
    config: &'a RunConfig,
}

fn write_config_record(out: &mut dyn Write, cfg: &RunConfig) -> io::Result<()> {
    let rec = ConfigRecord {
        record: "config",
        config: cfg,
    };
    writeln!(out, "{}", serde_json::to_string(&rec).expect("config serializes"))
}

/// Integrate `n_pairs` unfiltered pairs for s = +1 and s = -1 from identical
/// initial positions and write one CSV per (pair, s).
pub fn trajectories(cfg: &RunConfig, out_dir: &Path) -> anyhow::Result<u8> {
    cfg.params.validate()?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let p = &cfg.params;
    let t_end = cfg.t_end.unwrap_or_else(|| p.default_t_end());
    let threshold = p.filter_threshold();

    let mut written = 0u64;
    let mut failures = 0u64;
    let mut index = 0u64;
    let attempt_cap = cfg.n_pairs.saturating_mul(1000).saturating_add(1000);
    while written < cfg.n_pairs {
        if index >= attempt_cap {
            bail!("slit filter rejected {attempt_cap} consecutive samples; check d and K");
        }
        let mut rng = round_rng(cfg.master_seed, index, Lane::Source);
        let initial = sample_initial_slit(&mut rng, p.sigma0, p.slit_width);
        index += 1;
        if initial.z20.abs() < threshold {
            continue;
        }
        let mut pair_files = Vec::new();
        let mut failed = false;
        for s in [Sign::Plus, Sign::Minus] {
            match integrate(initial, RoundSettings::aligned(s), p, t_end, cfg.dt) {
                Ok(traj) => pair_files.push(traj),
                Err(e) => {
                    eprintln!("pair {written} (stream {}) s={s}: {e}; skipping pair", index - 1);
                    failures += 1;
                    failed = true;
                    break;
                }
            }
        }
        if failed {
            continue;
        }
        for traj in pair_files {
            let suffix = match traj.settings.s {
                Sign::Plus => "splus",
                Sign::Minus => "sminus",
            };
            let path = out_dir.join(format!("pair{written:04}_{suffix}.csv"));
            let mut file = BufWriter::new(
                File::create(&path).with_context(|| format!("creating {}", path.display()))?,
            );
            let comments = vec![
                format!("config: {}", cfg.echo()),
                format!("stream_index: {}", index - 1),
                format!("t_end: {t_end} dt: {}", cfg.dt),
            ];
            write_csv(&traj, &comments, &mut file)?;
        }
        written += 1;
    }
    eprintln!("wrote {written} pairs to {} ({failures} integration failures)", out_dir.display());
    Ok(exit_codes::OK)
}

/// Run a session and emit the JSONL transcript; exit code encodes the abort
/// reason.
pub fn session(cfg: &RunConfig, inject_violation: bool, reveal_hidden: bool) -> anyhow::Result<u8> {
    let scfg = cfg.session_config();
    let mut rounds = generate_rounds(&scfg, cfg.master_seed)?;
    if inject_violation {
        inject_anticorrelation_violation(&mut rounds, scfg.test_fraction, cfg.master_seed)
            .context("no eligible test round to tamper with")?;
    }
    let transcript = sift_and_verify(rounds, &scfg, cfg.master_seed)?;

    let mut out = open_sink(cfg.output_path.as_ref())?;
    write_config_record(&mut out, cfg)?;
    for round in &transcript.rounds {
        let record = if reveal_hidden {
            RoundRecord::revealed(round)
        } else {
            RoundRecord::public(round)
        };
        writeln!(out, "{}", serde_json::to_string(&record)?)?;
    }
    writeln!(
        out,
        "{}",
        serde_json::to_string(&SummaryRecord::from(&transcript))?
    )?;
    out.flush()?;

    Ok(match transcript.abort_reason {
        AbortReason::None => exit_codes::OK,
        AbortReason::AnticorrelationViolation => exit_codes::ANTICORRELATION_ABORT,
        AbortReason::BellViolation => exit_codes::BELL_ABORT,
    })
}

/// Run the verification oracles; exit 0 iff every check passes.
pub fn verify(cfg: &RunConfig, samples: usize) -> anyhow::Result<u8> {
    cfg.params.validate()?;
    let reports = run_all(&cfg.params, samples, cfg.master_seed);
    let mut out = open_sink(cfg.output_path.as_ref())?;
    write_config_record(&mut out, cfg)?;
    let mut all_pass = true;
    for report in &reports {
        all_pass &= report.pass;
        writeln!(out, "{}", serde_json::to_string(report)?)?;
    }
    out.flush()?;
    Ok(if all_pass {
        exit_codes::OK
    } else {
        exit_codes::FAILURE
    })
}

/// Run an eavesdropper experiment; emits one JSON object.
pub fn attack(cfg: &RunConfig, variant: VariantArg, knows_s: bool) -> anyhow::Result<u8> {
    let variant = match variant {
        VariantArg::Baseline => ProtocolVariant::Baseline,
        VariantArg::SFlip => ProtocolVariant::SFlip,
    };
    let report = run_attack(&AttackConfig {
        variant,
        n_pairs: cfg.n_pairs,
        master_seed: cfg.master_seed,
        knows_s,
        params: cfg.params,
    })?;

    #[derive(Serialize)]
    struct AttackOutput<'a> {
        config: &'a RunConfig,
        report: pilotwave_core::AttackReport,
    }
    let mut out = open_sink(cfg.output_path.as_ref())?;
    writeln!(
        out,
        "{}",
        serde_json::to_string_pretty(&AttackOutput { config: cfg, report })?
    )?;
    out.flush()?;
    Ok(exit_codes::OK)
}

/// Oracle-mode CHSH estimate over `rounds` Born samples.
pub fn chsh(cfg: &RunConfig, rounds: u64) -> anyhow::Result<u8> {
    cfg.params.validate()?;
    let mut rng = session_rng(cfg.master_seed);
    let samples = oracle_bell_samples(rounds, &cfg.angles, cfg.noise_fraction, &mut rng);
    let estimate = chsh_estimate(&samples, &cfg.angles)?;

    #[derive(Serialize)]
    struct ChshOutput<'a> {
        config: &'a RunConfig,
        rounds: u64,
        estimate: pilotwave_core::ChshEstimate,
    }
    let mut out = open_sink(cfg.output_path.as_ref())?;
    writeln!(
        out,
        "{}",
        serde_json::to_string_pretty(&ChshOutput {
            config: cfg,
            rounds,
            estimate
        })?
    )?;
    out.flush()?;
    Ok(exit_codes::OK)
}

/// Parse "a,a',b,b'" (radians) into an angle set.
pub fn parse_angles(spec: &str) -> anyhow::Result<AngleSet> {
    let parts: Vec<f64> = spec
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("parsing --angles {spec:?}"))?;
    if parts.len() != 4 {
        bail!("--angles needs exactly four comma-separated values, got {}", parts.len());
    }
    Ok(AngleSet {
        a: parts[0],
        a_prime: parts[1],
        b: parts[2],
        b_prime: parts[3],
    })
}

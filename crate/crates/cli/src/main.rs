//! `pilotwave` — trajectory runs, figure-data emission, physics verification,
//! protocol sessions, and eavesdropper experiments, all deterministic given
//! a seed.

mod cmds;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pilotwave_core::adversary::AdversaryError;
use pilotwave_core::protocol::{OutcomeMode, ProtocolError};

use config::{ParamOverrides, RunConfig};

/// Exit-code map, kept scriptable: 0 success, 10 anticorrelation abort,
/// 11 Bell abort, 20 integration failure, 64 usage, 1 other failures
/// (failed verification checks, I/O, insufficient statistics).
pub mod exit_codes {
    pub const OK: u8 = 0;
    pub const FAILURE: u8 = 1;
    pub const ANTICORRELATION_ABORT: u8 = 10;
    pub const BELL_ABORT: u8 = 11;
    pub const INTEGRATION_FAILURE: u8 = 20;
    pub const USAGE: u8 = 64;
}

#[derive(Parser)]
#[command(
    name = "pilotwave",
    version,
    about = "Pilot-wave double Stern-Gerlach simulator and hidden-variable QKD testbed"
)]
struct Cli {
    /// JSON config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate pairs for both s values from identical initial positions
    /// and write paired trajectory CSVs.
    Trajectories(TrajectoriesArgs),
    /// Run a full protocol session; emits the transcript as JSON lines.
    Session(SessionArgs),
    /// Run the physics verification oracles; one check report per line.
    Verify(VerifyArgs),
    /// Run an eavesdropper experiment and report Eve's key accuracy.
    Attack(AttackArgs),
    /// Estimate the CHSH expectation from the Born-statistics oracle.
    Chsh(ChshArgs),
}

#[derive(Args)]
struct TrajectoriesArgs {
    /// Number of unfiltered pairs to integrate.
    #[arg(long, default_value_t = 1)]
    pairs: u64,
    /// Output directory for the CSV files.
    #[arg(long, default_value = "trajectories")]
    out_dir: PathBuf,
    /// Integration horizon (defaults to the parameter-derived value).
    #[arg(long)]
    t_end: Option<f64>,
    /// RK4 step.
    #[arg(long)]
    dt: Option<f64>,
    #[command(flatten)]
    params: ParamOverrides,
}

#[derive(Args)]
struct SessionArgs {
    /// Number of pairs generated by the source.
    #[arg(long)]
    pairs: Option<u64>,
    /// Outcome engine for aligned rounds.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Bell-gate tolerance on |S - 2 sqrt(2)|.
    #[arg(long)]
    bell_tolerance: Option<f64>,
    /// Fraction of surviving rounds sacrificed for testing.
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Fraction of rounds intercepted and resent by the adversary.
    #[arg(long)]
    noise_fraction: Option<f64>,
    /// Tamper with one test round to violate W_B = -W_A s.
    #[arg(long)]
    inject_violation: bool,
    /// Include hidden variables (positions, s, outcomes) in round records.
    #[arg(long)]
    reveal_hidden: bool,
    /// Write the transcript here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Integration horizon for full-ODE mode.
    #[arg(long)]
    t_end: Option<f64>,
    /// RK4 step for full-ODE mode.
    #[arg(long)]
    dt: Option<f64>,
    #[command(flatten)]
    params: ParamOverrides,
}

#[derive(Args)]
struct VerifyArgs {
    /// Trajectory count for the equivariance check (>= 10000).
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// Write the reports here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    params: ParamOverrides,
}

#[derive(Args)]
struct AttackArgs {
    /// Protocol variant under attack.
    #[arg(long, value_enum)]
    variant: VariantArg,
    /// Number of pairs in the underlying session.
    #[arg(long)]
    pairs: Option<u64>,
    /// Model a broken RNG: Eve learns s.
    #[arg(long)]
    knows_s: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    params: ParamOverrides,
}

#[derive(Args)]
struct ChshArgs {
    /// Number of oracle rounds.
    #[arg(long, default_value_t = 100_000)]
    rounds: u64,
    /// Intercept-resend fraction applied to the oracle.
    #[arg(long)]
    noise_fraction: Option<f64>,
    /// Comma-separated angle set a,a',b,b' (radians).
    #[arg(long)]
    angles: Option<String>,
    /// Write the estimate here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    params: ParamOverrides,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    #[value(name = "sign_law")]
    SignLaw,
    #[value(name = "full_ode")]
    FullOde,
    #[value(name = "quantum_oracle")]
    QuantumOracle,
}

impl From<ModeArg> for OutcomeMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::SignLaw => OutcomeMode::SignLaw,
            ModeArg::FullOde => OutcomeMode::FullOde,
            ModeArg::QuantumOracle => OutcomeMode::QuantumOracle,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum VariantArg {
    #[value(name = "baseline")]
    Baseline,
    #[value(name = "s_flip")]
    SFlip,
}

fn base_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let mut cfg = base_config(&cli)?;
    match cli.command {
        Command::Trajectories(args) => {
            args.params.apply(&mut cfg.params);
            cfg.n_pairs = args.pairs;
            if args.t_end.is_some() {
                cfg.t_end = args.t_end;
            }
            if let Some(dt) = args.dt {
                cfg.dt = dt;
            }
            cmds::trajectories(&cfg, &args.out_dir)
        }
        Command::Session(args) => {
            args.params.apply(&mut cfg.params);
            if let Some(pairs) = args.pairs {
                cfg.n_pairs = pairs;
            }
            if let Some(mode) = args.mode {
                cfg.mode = mode.into();
            }
            if let Some(v) = args.bell_tolerance {
                cfg.bell_tolerance = v;
            }
            if let Some(v) = args.test_fraction {
                cfg.test_fraction = v;
            }
            if let Some(v) = args.noise_fraction {
                cfg.noise_fraction = v;
            }
            if args.t_end.is_some() {
                cfg.t_end = args.t_end;
            }
            if let Some(dt) = args.dt {
                cfg.dt = dt;
            }
            cfg.output_path = args.out.clone().or(cfg.output_path);
            cmds::session(&cfg, args.inject_violation, args.reveal_hidden)
        }
        Command::Verify(args) => {
            args.params.apply(&mut cfg.params);
            cfg.output_path = args.out.clone().or(cfg.output_path);
            cmds::verify(&cfg, args.samples)
        }
        Command::Attack(args) => {
            args.params.apply(&mut cfg.params);
            if let Some(pairs) = args.pairs {
                cfg.n_pairs = pairs;
            }
            cfg.output_path = args.out.clone().or(cfg.output_path);
            cmds::attack(&cfg, args.variant, args.knows_s)
        }
        Command::Chsh(args) => {
            args.params.apply(&mut cfg.params);
            if let Some(v) = args.noise_fraction {
                cfg.noise_fraction = v;
            }
            if let Some(spec) = &args.angles {
                cfg.angles = cmds::parse_angles(spec)?;
            }
            cfg.output_path = args.out.clone().or(cfg.output_path);
            cmds::chsh(&cfg, args.rounds)
        }
    }
}

/// Map library errors onto the documented exit codes.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    fn protocol_code(p: &ProtocolError) -> u8 {
        match p {
            ProtocolError::Trajectory(_) => exit_codes::INTEGRATION_FAILURE,
            ProtocolError::InvalidConfig(_) | ProtocolError::Params(_) => exit_codes::USAGE,
            _ => exit_codes::FAILURE,
        }
    }
    for cause in err.chain() {
        if let Some(p) = cause.downcast_ref::<ProtocolError>() {
            return protocol_code(p);
        }
        if let Some(a) = cause.downcast_ref::<AdversaryError>() {
            return match a {
                AdversaryError::Protocol(p) => protocol_code(p),
                AdversaryError::InsufficientKey { .. } => exit_codes::FAILURE,
            };
        }
        if cause.downcast_ref::<pilotwave_core::ParamError>().is_some() {
            return exit_codes::USAGE;
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return exit_codes::USAGE;
        }
    }
    exit_codes::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => exit_codes::OK,
                _ => exit_codes::USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let code = exit_code_for(&e);
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

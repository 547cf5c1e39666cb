//! Run configuration: a single JSON document per experiment, with CLI flags
//! overriding file values. The effective config is echoed into every output
//! so a run can be reproduced from any of its artifacts.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, ValueEnum};
use pilotwave_core::protocol::{AngleSet, OutcomeMode, SessionConfig};
use pilotwave_core::trajectories::DEFAULT_DT;
use pilotwave_core::PhysParams;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub params: PhysParams,
    pub master_seed: u64,
    pub mode: OutcomeMode,
    pub t_end: Option<f64>,
    pub dt: f64,
    pub n_pairs: u64,
    pub output_path: Option<PathBuf>,
    pub test_fraction: f64,
    pub bell_tolerance: f64,
    pub noise_fraction: f64,
    pub angles: AngleSet,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params: PhysParams::default(),
            master_seed: 1,
            mode: OutcomeMode::SignLaw,
            t_end: None,
            dt: DEFAULT_DT,
            n_pairs: 10_000,
            output_path: None,
            test_fraction: 0.5,
            bell_tolerance: 0.2,
            noise_fraction: 0.0,
            angles: AngleSet::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn session_config(&self) -> SessionConfig {
        SessionConfig {
            params: self.params,
            n_pairs: self.n_pairs,
            mode: self.mode,
            t_end: self.t_end,
            dt: self.dt,
            test_fraction: self.test_fraction,
            bell_tolerance: self.bell_tolerance,
            noise_fraction: self.noise_fraction,
            angles: self.angles,
            force_s: None,
            force_delta: None,
        }
    }

    /// One-line JSON echo embedded in output headers.
    pub fn echo(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Preset {
    /// Natural units, moderate field (b=2, k=4).
    Natural,
    /// b mu T / hbar = 10, k = 2: deterministic sign-law regime.
    StrongField,
}

/// Physics-parameter overrides shared by all subcommands.
#[derive(Args, Clone, Debug, Default)]
pub struct ParamOverrides {
    /// Start from a named parameter preset instead of the config file value.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Field gradient B.
    #[arg(long)]
    pub b: Option<f64>,
    /// Bob's field scale factor K.
    #[arg(long)]
    pub k: Option<f64>,
    /// Initial packet width sigma0.
    #[arg(long)]
    pub sigma0: Option<f64>,
    /// Entrance slit width d.
    #[arg(long)]
    pub slit_width: Option<f64>,
    /// Magnetic moment mu.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Field interaction time T.
    #[arg(long)]
    pub t_field: Option<f64>,
    /// Field offset B0.
    #[arg(long)]
    pub b0: Option<f64>,
}

impl ParamOverrides {
    pub fn apply(&self, params: &mut PhysParams) {
        if let Some(preset) = self.preset {
            *params = match preset {
                Preset::Natural => PhysParams::natural(),
                Preset::StrongField => PhysParams::strong_field(),
            };
        }
        let fields = [
            (&self.b, &mut params.b),
            (&self.k, &mut params.k),
            (&self.sigma0, &mut params.sigma0),
            (&self.slit_width, &mut params.slit_width),
            (&self.mu, &mut params.mu),
            (&self.t_field, &mut params.t_field),
            (&self.b0, &mut params.b0),
        ];
        for (src, dst) in fields {
            if let Some(v) = src {
                *dst = *v;
            }
        }
    }
}

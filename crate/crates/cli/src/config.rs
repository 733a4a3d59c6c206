//! Run configuration: built-in defaults, a user TOML file layered on top,
//! then `FLUXNOISE__SECTION__KEY` environment overrides.

use std::f64::consts::PI;
use std::path::Path;

use fluxnoise::fit::lm::LmSettings;
use fluxnoise::fit::FitSettings;
use fluxnoise::noise::{BathSpec, RtnSource, Window};
use fluxnoise::qubit::{transmon_frequency, TransmonParams};
use fluxnoise::ramsey::{PhaseMode, RamseyConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::error::CliError;

pub const DEFAULTS_TOML: &str = include_str!("../defaults.toml");
pub const DEFAULTS_VERSION: u32 = 1;
pub const ENV_PREFIX: &str = "FLUXNOISE__";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    // not part of the echoed config, so relocating outputs keeps them identical
    #[serde(skip_serializing)]
    pub output: OutputSection,
    pub qubit: QubitSection,
    pub ramsey: RamseySection,
    pub bath: BathSection,
    pub strong_rtn: StrongRtnSection,
    pub psd: PsdSection,
    pub sweep: SweepSection,
    pub multi_rtn: MultiRtnSection,
    pub fit: FitSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitSection {
    pub ec_ghz: f64,
    pub ej_ghz: f64,
    pub min_ej_ec_ratio: f64,
    pub relaxation: bool,
    pub t1_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    Linearized,
    Grid,
}

impl From<ModeName> for PhaseMode {
    fn from(m: ModeName) -> Self {
        match m {
            ModeName::Linearized => PhaseMode::Linearized,
            ModeName::Grid => PhaseMode::GridNonlinear,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RamseySection {
    pub phi_b_phi0: f64,
    pub detuning_hz: f64,
    pub horizon_s: f64,
    pub dt_ns: f64,
    pub output_step_ns: f64,
    pub repetitions: usize,
    pub mode: ModeName,
    pub readout_shots: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSection {
    pub enabled: bool,
    pub n_sources: usize,
    pub amplitude_phi0: f64,
    pub rate_min_hz: f64,
    pub rate_max_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrongRtnSection {
    pub amplitudes_phi0: Vec<f64>,
    pub rates_hz: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsdSection {
    pub n_sources: usize,
    pub amplitude_phi0: f64,
    pub rate_min_hz: f64,
    pub rate_max_hz: f64,
    pub paths: usize,
    pub dt_ns: f64,
    pub horizon_s: f64,
    pub normalization_hz: f64,
    pub normalization_bandwidth: f64,
    pub exact_rate_max_hz: f64,
    pub window: Window,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub f01_hz: Vec<f64>,
    pub phi_min_phi0: f64,
    pub phi_max_phi0: f64,
    pub points: usize,
    pub repetitions: usize,
    pub include_strong_rtn: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiRtnSection {
    pub source_counts: Vec<usize>,
    pub total_amplitude_phi0: f64,
    pub phi_b_phi0: f64,
    pub rate_hz: f64,
    pub seeds: u64,
    pub repetitions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub input: String,
    pub f_test_alpha: f64,
    pub beating_starts: usize,
    pub max_iterations: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let table: Table = DEFAULTS_TOML.parse().expect("shipped defaults parse");
        Value::Table(table)
            .try_into()
            .expect("shipped defaults match the schema")
    }
}

/// Loads the effective configuration. `env` supplies the process
/// environment (or a substitute in tests).
pub fn load(
    path: Option<&Path>,
    env: impl IntoIterator<Item = (String, String)>,
) -> Result<RunConfig, CliError> {
    let mut merged: Table = DEFAULTS_TOML.parse().expect("shipped defaults parse");
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            let user: Table = text
                .parse()
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            merge(&mut merged, user, "")?;
        }
        None => log::info!("no config file given; using built-in defaults v{DEFAULTS_VERSION}"),
    }
    apply_env(&mut merged, env)?;
    let config: RunConfig = Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    config.check()?;
    Ok(config)
}

fn merge(base: &mut Table, user: Table, prefix: &str) -> Result<(), CliError> {
    for (key, value) in &*base {
        if !user.contains_key(key) {
            let name = format!("{prefix}{key}");
            match value {
                Value::Table(_) => log::info!("section [{name}] not set; using defaults"),
                v => log::info!("{name} not set; using default {v}"),
            }
        }
    }
    for (key, value) in user {
        let name = format!("{prefix}{key}");
        match (base.get_mut(&key), value) {
            (None, _) => return Err(CliError::Config(format!("unknown key `{name}`"))),
            (Some(Value::Table(b)), Value::Table(u)) => merge(b, u, &format!("{name}."))?,
            (Some(Value::Table(_)), _) => {
                return Err(CliError::Config(format!("`{name}` must be a table")))
            }
            (Some(slot), v) => *slot = v,
        }
    }
    Ok(())
}

fn apply_env(
    table: &mut Table,
    env: impl IntoIterator<Item = (String, String)>,
) -> Result<(), CliError> {
    let mut vars: Vec<(String, String)> = env
        .into_iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX))
        .collect();
    vars.sort();
    for (var, raw) in vars {
        let path: Vec<String> = var[ENV_PREFIX.len()..]
            .split("__")
            .map(str::to_ascii_lowercase)
            .collect();
        let (last, sections) = path.split_last().expect("split yields one item");
        let mut node = &mut *table;
        for s in sections {
            node = match node.get_mut(s) {
                Some(Value::Table(t)) => t,
                _ => return Err(CliError::Config(format!("{var}: unknown section `{s}`"))),
            };
        }
        match node.get_mut(last) {
            Some(Value::Table(_)) | None => {
                return Err(CliError::Config(format!("{var}: unknown key `{}`", path.join("."))))
            }
            Some(slot) => {
                log::info!("{} overridden from {var}", path.join("."));
                *slot = parse_env_value(&raw);
            }
        }
    }
    Ok(())
}

/// Reads the value as a TOML literal, falling back to a bare string.
fn parse_env_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be finite and > 0, got {v}")))
    }
}

impl RunConfig {
    /// Cross-field checks that serde cannot express.
    pub fn check(&self) -> Result<(), CliError> {
        if self.strong_rtn.amplitudes_phi0.len() != self.strong_rtn.rates_hz.len() {
            return Err(CliError::Config(
                "strong_rtn.amplitudes_phi0 and strong_rtn.rates_hz differ in length".into(),
            ));
        }
        positive("ramsey.dt_ns", self.ramsey.dt_ns)?;
        positive("ramsey.output_step_ns", self.ramsey.output_step_ns)?;
        positive("ramsey.horizon_s", self.ramsey.horizon_s)?;
        positive("psd.dt_ns", self.psd.dt_ns)?;
        positive("psd.horizon_s", self.psd.horizon_s)?;
        if self.qubit.relaxation {
            positive("qubit.t1_s", self.qubit.t1_s)?;
        }
        if self.sweep.f01_hz.is_empty() && self.sweep.points == 0 {
            return Err(CliError::Config("sweep grid is empty".into()));
        }
        if self.multi_rtn.source_counts.is_empty() || self.multi_rtn.seeds == 0 {
            return Err(CliError::Config("multi_rtn needs source counts and seeds".into()));
        }
        self.transmon()?;
        Ok(())
    }

    pub fn transmon(&self) -> Result<TransmonParams, CliError> {
        TransmonParams::with_min_ratio(self.qubit.ec_ghz, self.qubit.ej_ghz, self.qubit.min_ej_ec_ratio)
            .map_err(|e| CliError::Config(format!("qubit: {e}")))
    }

    /// The Ramsey simulation described by the `qubit`, `ramsey`, `bath` and
    /// `strong_rtn` sections.
    pub fn ramsey_config(&self) -> Result<RamseyConfig, CliError> {
        let strong_rtns = self
            .strong_rtn
            .amplitudes_phi0
            .iter()
            .zip(&self.strong_rtn.rates_hz)
            .map(|(&b, &r)| RtnSource::new(b, r))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Config(format!("strong_rtn: {e}")))?;
        let r = &self.ramsey;
        let config = RamseyConfig {
            params: self.transmon()?,
            phi_b: r.phi_b_phi0,
            delta_omega: 2.0 * PI * r.detuning_hz,
            horizon: r.horizon_s,
            dt: r.dt_ns * 1e-9,
            output_step: r.output_step_ns * 1e-9,
            repetitions: r.repetitions,
            t1: self.qubit.relaxation.then_some(self.qubit.t1_s),
            bath: self.bath.enabled.then(|| BathSpec {
                n_sources: self.bath.n_sources,
                amplitude_phi0: self.bath.amplitude_phi0,
                rate_min_hz: self.bath.rate_min_hz,
                rate_max_hz: self.bath.rate_max_hz,
            }),
            strong_rtns,
            mode: r.mode.into(),
            seed: self.seed,
        };
        config
            .validate()
            .map_err(|e| CliError::Config(format!("ramsey: {e}")))?;
        Ok(config)
    }

    pub fn psd_bath(&self) -> BathSpec {
        BathSpec {
            n_sources: self.psd.n_sources,
            amplitude_phi0: self.psd.amplitude_phi0,
            rate_min_hz: self.psd.rate_min_hz,
            rate_max_hz: self.psd.rate_max_hz,
        }
    }

    /// Qubit frequencies of the sweep, Hz.
    pub fn sweep_grid(&self) -> Result<Vec<f64>, CliError> {
        if !self.sweep.f01_hz.is_empty() {
            return Ok(self.sweep.f01_hz.clone());
        }
        let s = &self.sweep;
        let params = self.transmon()?;
        let step = if s.points > 1 {
            (s.phi_max_phi0 - s.phi_min_phi0) / (s.points - 1) as f64
        } else {
            0.0
        };
        (0..s.points)
            .map(|k| {
                transmon_frequency(&params, s.phi_min_phi0 + k as f64 * step)
                    .map(|w| w / (2.0 * PI))
                    .map_err(|e| CliError::Config(format!("sweep: {e}")))
            })
            .collect()
    }

    pub fn fit_settings(&self) -> FitSettings {
        FitSettings {
            lm: LmSettings {
                max_iterations: self.fit.max_iterations,
                ..LmSettings::default()
            },
            f_test_alpha: self.fit.f_test_alpha,
            beating_starts: self.fit.beating_starts,
        }
    }

    /// Canonical JSON of the effective configuration (output section
    /// excluded).
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    pub fn sha256(&self) -> String {
        Sha256::digest(self.to_json().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

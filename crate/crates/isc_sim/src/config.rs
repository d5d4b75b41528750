//! TOML scenario files.
//!
//! Sections `[motor]`, `[winding]`, `[fault]` and `[sim]`; unknown keys are
//! rejected. Key names follow the machine symbols (`R_s`, `L_d`, `P_P`, ...).

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::dtm::DtmOptions;
use crate::harness::{HarnessError, LoadKind, Profile, Scenario, UmPolicy};
use crate::oracle::{AngleMode, DivergenceConfig, IntegrationConfig, OracleError, DEFAULT_SUBSTEPS};
use crate::params::{
    derive_dq_inductances, AbcInductances, FaultConfig, FaultPhase, FluxHarmonic, Model, MotorParams, ParamError,
    WindingConfig, DEFAULT_MAX_HARMONIC_ORDER,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct HarmonicSection {
    order: u32,
    amplitude: f64,
    #[serde(default)]
    phase: f64,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct MotorSection {
    R_s: f64,
    #[serde(default)]
    R_c: f64,
    L_d: Option<f64>,
    L_q: Option<f64>,
    L_0: Option<f64>,
    P_P: u32,
    L_s: Option<f64>,
    L_m: Option<f64>,
    L_fl: Option<f64>,
    #[serde(default = "default_max_order")]
    max_harmonic_order: u32,
    harmonics: Vec<HarmonicSection>,
}

fn default_max_order() -> u32 {
    DEFAULT_MAX_HARMONIC_ORDER
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct WindingSection {
    n_p: u32,
    n_s: u32,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FaultSection {
    #[serde(default = "default_phase")]
    phase: FaultPhase,
    sigma: Option<f64>,
    shorted_turns: Option<u32>,
    turns_per_segment: Option<u32>,
    R_sc: Option<f64>,
    R_FIU: Option<f64>,
    #[serde(default)]
    R_wire: f64,
    #[serde(default)]
    L_wire: f64,
    #[serde(default = "yes")]
    active: bool,
}

fn default_phase() -> FaultPhase {
    FaultPhase::A
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum AngleModeKey {
    Frozen,
    Continuous,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimSection {
    #[serde(default = "default_t_s")]
    T_s: f64,
    duration: f64,
    t_f: Option<f64>,
    velocity: Vec<(f64, f64)>,
    #[serde(default = "default_load_kind")]
    load_kind: LoadKind,
    #[serde(default)]
    load: Vec<(f64, f64)>,
    #[serde(default)]
    i_d_ref: f64,
    #[serde(default)]
    theta_0: f64,
    #[serde(default = "default_u_m")]
    u_m: UmPolicy,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    input_noise: f64,
    #[serde(default = "default_substeps")]
    substeps: usize,
    #[serde(default = "default_angle_mode")]
    angle_mode: AngleModeKey,
    #[serde(default = "default_bandwidth")]
    bandwidth: f64,
    #[serde(default = "default_v_limit")]
    v_limit: f64,
    #[serde(default = "default_tolerance")]
    tolerance: f64,
    #[serde(default = "default_divergence_bound")]
    divergence_bound: f64,
    #[serde(default)]
    R_FIU_schedule: Vec<(f64, f64)>,
    #[serde(default)]
    sigma_schedule: Vec<(f64, f64)>,
    #[serde(default)]
    simplified: bool,
}

fn default_t_s() -> f64 {
    1e-4
}
fn default_load_kind() -> LoadKind {
    LoadKind::Torque
}
fn default_u_m() -> UmPolicy {
    UmPolicy::Zero
}
fn default_substeps() -> usize {
    DEFAULT_SUBSTEPS
}
fn default_angle_mode() -> AngleModeKey {
    AngleModeKey::Frozen
}
/// Current-loop bandwidth in rad/s.
fn default_bandwidth() -> f64 {
    800.0
}
fn default_v_limit() -> f64 {
    60.0
}
fn default_tolerance() -> f64 {
    1e-2
}
fn default_divergence_bound() -> f64 {
    crate::oracle::DEFAULT_DIVERGENCE_BOUND
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    motor: MotorSection,
    winding: WindingSection,
    fault: Option<FaultSection>,
    sim: SimSection,
}

/// A loaded configuration: the machine without its fault, and the scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub base: Model,
    pub scenario: Scenario,
}

impl Config {
    /// Machine with the configured fault applied, ignoring onset time.
    pub fn faulted_model(&self) -> Result<Model, ParamError> {
        self.base.with_fault(self.scenario.fault)
    }
}

fn motor_params(m: &MotorSection) -> Result<MotorParams, ConfigError> {
    let primitives = match (m.L_s, m.L_m, m.L_fl) {
        (Some(l_s), Some(l_m), Some(l_fl)) => Some(AbcInductances { l_s, l_m, l_fl }),
        (None, None, None) => None,
        _ => return Err(ConfigError::Invalid("L_s, L_m and L_fl must be given together".into())),
    };
    let (l_d, l_q, l_0) = match (m.L_d, m.L_q, m.L_0, primitives) {
        (Some(d), Some(q), Some(z), _) => (d, q, z),
        (None, None, None, Some(p)) => derive_dq_inductances(p.l_s, p.l_m, p.l_fl)?,
        _ => {
            return Err(ConfigError::Invalid(
                "give L_d, L_q and L_0, or the primitives L_s, L_m and L_fl".into(),
            ))
        }
    };
    let params = MotorParams {
        r_s: m.R_s,
        r_c: m.R_c,
        l_d,
        l_q,
        l_0,
        pole_pairs: m.P_P,
        harmonics: m.harmonics.iter().map(|h| FluxHarmonic::new(h.order, h.amplitude, h.phase)).collect(),
        abc: primitives,
    };
    Ok(params.validated(m.max_harmonic_order)?)
}

fn fault_config(f: &FaultSection) -> Result<(FaultConfig, f64), ConfigError> {
    let sigma = match (f.sigma, f.shorted_turns, f.turns_per_segment) {
        (Some(s), None, None) => s,
        (None, Some(n), Some(d)) if d > 0 => n as f64 / d as f64,
        (None, None, None) => return Err(ConfigError::Invalid("fault needs sigma or shorted_turns/turns_per_segment".into())),
        _ => {
            return Err(ConfigError::Invalid(
                "give either sigma or shorted_turns with a positive turns_per_segment".into(),
            ))
        }
    };
    let r_sc = match (f.R_sc, f.R_FIU) {
        (Some(r), None) => r,
        (None, Some(r)) => r + f.R_wire,
        _ => return Err(ConfigError::Invalid("give exactly one of R_sc or R_FIU".into())),
    };
    let cfg = FaultConfig {
        phase: f.phase,
        sigma,
        r_sc,
        l_wire: f.L_wire,
        active: f.active,
    };
    Ok((cfg.validated()?, f.R_wire))
}

/// Parses a config from TOML text.
pub fn parse_config(text: &str) -> Result<Config, ConfigError> {
    let file: ConfigFile = toml::from_str(text)?;
    let motor = motor_params(&file.motor)?;
    let winding = WindingConfig {
        n_p: file.winding.n_p,
        n_s: file.winding.n_s,
    };
    let base = Model::from_validated_motor(motor, winding, FaultConfig::healthy())?;
    let (fault, r_wire) = match &file.fault {
        Some(f) => fault_config(f)?,
        None => (FaultConfig::healthy(), 0.0),
    };
    let s = file.sim;
    let load = if s.load.is_empty() { Profile::constant(0.0) } else { Profile::new(s.load)? };
    let mut integration = IntegrationConfig::with_substeps(s.substeps)?;
    integration.angle_mode = match s.angle_mode {
        AngleModeKey::Frozen => AngleMode::Frozen,
        AngleModeKey::Continuous => AngleMode::Continuous,
    };
    if !(s.tolerance > 0.0 && s.divergence_bound > 0.0) {
        return Err(ConfigError::Invalid("tolerance and divergence_bound must be positive".into()));
    }
    let scenario = Scenario {
        t_s: s.T_s,
        duration: s.duration,
        velocity: Profile::new(s.velocity)?,
        load_kind: s.load_kind,
        load,
        i_d_ref: s.i_d_ref,
        theta_0: s.theta_0,
        t_f: s.t_f,
        fault,
        sigma_schedule: s.sigma_schedule,
        r_fiu_schedule: s.R_FIU_schedule,
        r_wire,
        u_m: s.u_m,
        seed: s.seed,
        input_noise: s.input_noise,
        bandwidth: s.bandwidth,
        v_limit: s.v_limit,
        integration,
        dtm: DtmOptions {
            simplified: s.simplified,
        },
        divergence: DivergenceConfig {
            bound: s.divergence_bound,
        },
        tolerance: s.tolerance,
    }
    .validated()?;
    Ok(Config { base, scenario })
}

pub fn load_config(path: &Path) -> Result<Config, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

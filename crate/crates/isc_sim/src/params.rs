//! Motor, winding and fault parameters plus every derived constant used by
//! the continuous and discrete models.
//!
//! All quantities are SI. Angles are electrical radians.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance for checking abc inductance primitives against L_d/L_q/L_0.
const PRIMITIVE_CONSISTENCY_TOL: f64 = 1e-9;

/// Default truncation order of the flux harmonic list.
pub const DEFAULT_MAX_HARMONIC_ORDER: u32 = 13;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must be non-negative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("{name} must be finite")]
    NonFinite { name: &'static str },
    #[error("harmonic order {0} is not an odd positive integer")]
    BadHarmonicOrder(u32),
    #[error("harmonic of order {0} listed twice")]
    DuplicateHarmonic(u32),
    #[error("fundamental flux harmonic (order 1) is missing")]
    MissingFundamental,
    #[error("fundamental flux harmonic must have zero phase, got {0}")]
    FundamentalPhase(f64),
    #[error("inductance primitives disagree with L_d/L_q/L_0 ({name}: {expected} vs {actual})")]
    InconsistentPrimitives {
        name: &'static str,
        expected: f64,
        actual: f64,
    },
    #[error("derived inductance {name} = {value} is not positive")]
    NonPositiveInductance { name: &'static str, value: f64 },
    #[error("shorted fraction sigma = {0} outside [0, 1]")]
    SigmaOutOfRange(f64),
    #[error("active fault requires sigma > 0")]
    ZeroSigmaActiveFault,
    #[error("fault inductance L_f1 - L_f2 = {0} is not positive")]
    FaultInductanceNotPositive(f64),
}

fn positive(name: &'static str, value: f64) -> Result<(), ParamError> {
    if !value.is_finite() {
        return Err(ParamError::NonFinite { name });
    }
    if value <= 0.0 {
        return Err(ParamError::NonPositive { name, value });
    }
    Ok(())
}

fn non_negative(name: &'static str, value: f64) -> Result<(), ParamError> {
    if !value.is_finite() {
        return Err(ParamError::NonFinite { name });
    }
    if value < 0.0 {
        return Err(ParamError::Negative { name, value });
    }
    Ok(())
}

/// One radial permanent-magnet flux harmonic `amplitude·cos(order·θ + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxHarmonic {
    pub order: u32,
    pub amplitude: f64,
    pub phase: f64,
}

impl FluxHarmonic {
    pub fn new(order: u32, amplitude: f64, phase: f64) -> Self {
        Self {
            order,
            amplitude,
            phase,
        }
    }

    /// True for orders 3, 9, 15, ... which form the zero-sequence flux.
    pub fn is_triplen(&self) -> bool {
        self.order % 6 == 3
    }
}

/// abc-frame inductance primitives: self, mutual and fluctuating part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbcInductances {
    pub l_s: f64,
    pub l_m: f64,
    pub l_fl: f64,
}

/// `(L_d, L_q, L_0)` from the abc primitives.
pub fn derive_dq_inductances(l_s: f64, l_m: f64, l_fl: f64) -> Result<(f64, f64, f64), ParamError> {
    positive("L_s", l_s)?;
    if !l_m.is_finite() {
        return Err(ParamError::NonFinite { name: "L_m" });
    }
    if !l_fl.is_finite() {
        return Err(ParamError::NonFinite { name: "L_fl" });
    }
    let l_d = l_s + l_m + 1.5 * l_fl;
    let l_q = l_s + l_m - 1.5 * l_fl;
    let l_0 = l_s - 2.0 * l_m;
    for (name, value) in [("L_d", l_d), ("L_q", l_q), ("L_0", l_0)] {
        if value <= 0.0 {
            return Err(ParamError::NonPositiveInductance { name, value });
        }
    }
    Ok((l_d, l_q, l_0))
}

/// Inverse of [`derive_dq_inductances`].
pub fn abc_inductances_from_dq(l_d: f64, l_q: f64, l_0: f64) -> AbcInductances {
    let l_s = (l_d + l_q + l_0) / 3.0;
    AbcInductances {
        l_s,
        l_m: (l_s - l_0) / 2.0,
        l_fl: (l_d - l_q) / 3.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotorParams {
    pub r_s: f64,
    pub r_c: f64,
    pub l_d: f64,
    pub l_q: f64,
    pub l_0: f64,
    pub pole_pairs: u32,
    pub harmonics: Vec<FluxHarmonic>,
    /// Optional abc primitives. When absent they are derived from `l_d/l_q/l_0`.
    pub abc: Option<AbcInductances>,
}

impl MotorParams {
    /// Validates the parameter set and drops harmonics above `max_order`.
    pub fn validated(mut self, max_order: u32) -> Result<Self, ParamError> {
        positive("R_s", self.r_s)?;
        non_negative("R_c", self.r_c)?;
        positive("L_d", self.l_d)?;
        positive("L_q", self.l_q)?;
        positive("L_0", self.l_0)?;
        if self.pole_pairs == 0 {
            return Err(ParamError::NonPositive {
                name: "P_P",
                value: 0.0,
            });
        }
        let mut seen = Vec::new();
        for h in &self.harmonics {
            if h.order == 0 || h.order % 2 == 0 {
                return Err(ParamError::BadHarmonicOrder(h.order));
            }
            if seen.contains(&h.order) {
                return Err(ParamError::DuplicateHarmonic(h.order));
            }
            seen.push(h.order);
            non_negative("harmonic amplitude", h.amplitude)?;
            if !h.phase.is_finite() {
                return Err(ParamError::NonFinite {
                    name: "harmonic phase",
                });
            }
            if h.order == 1 && h.phase != 0.0 {
                return Err(ParamError::FundamentalPhase(h.phase));
            }
        }
        if !seen.contains(&1) {
            return Err(ParamError::MissingFundamental);
        }
        self.harmonics.retain(|h| h.order <= max_order);
        self.harmonics.sort_by_key(|h| h.order);
        if let Some(p) = self.abc {
            let (l_d, l_q, l_0) = derive_dq_inductances(p.l_s, p.l_m, p.l_fl)?;
            for (name, expected, actual) in
                [("L_d", self.l_d, l_d), ("L_q", self.l_q, l_q), ("L_0", self.l_0, l_0)]
            {
                if (expected - actual).abs() > PRIMITIVE_CONSISTENCY_TOL * expected.abs() {
                    return Err(ParamError::InconsistentPrimitives {
                        name,
                        expected,
                        actual,
                    });
                }
            }
        }
        Ok(self)
    }

    /// abc primitives, derived from the dq inductances when not given.
    pub fn abc_inductances(&self) -> AbcInductances {
        self.abc
            .unwrap_or_else(|| abc_inductances_from_dq(self.l_d, self.l_q, self.l_0))
    }

    /// Fundamental PM flux amplitude.
    pub fn lambda_1(&self) -> f64 {
        self.harmonics
            .iter()
            .find(|h| h.order == 1)
            .map_or(0.0, |h| h.amplitude)
    }

    /// `(ρ, δ)` for a given series resistance.
    pub fn rho_delta(&self, resistance: f64) -> (f64, f64) {
        let den = 2.0 * self.l_d * self.l_q;
        (
            resistance * (self.l_d + self.l_q) / den,
            resistance * (self.l_d - self.l_q) / den,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindingConfig {
    pub n_p: u32,
    pub n_s: u32,
}

impl WindingConfig {
    pub fn validated(self) -> Result<Self, ParamError> {
        if self.n_p == 0 {
            return Err(ParamError::NonPositive {
                name: "n_p",
                value: 0.0,
            });
        }
        if self.n_s == 0 {
            return Err(ParamError::NonPositive {
                name: "n_s",
                value: 0.0,
            });
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultPhase {
    A,
    B,
    C,
}

impl FaultPhase {
    /// Electrical offset φ_f of the faulted phase.
    pub fn angle(self) -> f64 {
        match self {
            FaultPhase::A => 0.0,
            FaultPhase::B => -2.0 * PI / 3.0,
            FaultPhase::C => 2.0 * PI / 3.0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            FaultPhase::A => 0,
            FaultPhase::B => 1,
            FaultPhase::C => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultConfig {
    pub phase: FaultPhase,
    /// Shorted fraction of one winding segment.
    pub sigma: f64,
    /// Total short resistance, fault-insertion resistance plus wiring.
    pub r_sc: f64,
    pub l_wire: f64,
    pub active: bool,
}

impl FaultConfig {
    pub fn healthy() -> Self {
        Self {
            phase: FaultPhase::A,
            sigma: 0.0,
            r_sc: 1.0,
            l_wire: 0.0,
            active: false,
        }
    }

    pub fn validated(self) -> Result<Self, ParamError> {
        if !self.sigma.is_finite() || !(0.0..=1.0).contains(&self.sigma) {
            return Err(ParamError::SigmaOutOfRange(self.sigma));
        }
        non_negative("L_wire", self.l_wire)?;
        if self.active {
            if self.sigma == 0.0 {
                return Err(ParamError::ZeroSigmaActiveFault);
            }
            positive("R_sc", self.r_sc)?;
        }
        Ok(self)
    }

    /// True when the fault branch exists in the model.
    pub fn is_effective(&self) -> bool {
        self.active && self.sigma > 0.0
    }
}

/// Closed-form constants of the fault branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FaultBranch {
    /// σ / n_s.
    pub ratio: f64,
    pub phi_f: f64,
    pub r_f: f64,
    pub r_f_star: f64,
    pub l_f1: f64,
    pub l_f2: f64,
    pub tau_f: f64,
}

impl FaultBranch {
    /// L_f(θ) = L_f1 + L_f2 cos(2θ − φ_f).
    pub fn l_f(&self, theta: f64) -> f64 {
        self.l_f1 + self.l_f2 * (2.0 * theta - self.phi_f).cos()
    }

    /// Forward-Euler amplification of the fault mode, |1 − T_s R_f*/L_f1|.
    pub fn euler_factor(&self, t_s: f64) -> f64 {
        (1.0 - t_s / self.tau_f).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedParams {
    /// ρ and δ with R_s only.
    pub rho: f64,
    pub delta: f64,
    /// ρ and δ with R_s + R_c.
    pub rho_star: f64,
    pub delta_star: f64,
    pub fault: Option<FaultBranch>,
}

/// Computes all derived constants. The fault branch is `None` when inactive.
pub fn derive_fault_params(
    motor: &MotorParams,
    winding: &WindingConfig,
    fault: &FaultConfig,
) -> Result<DerivedParams, ParamError> {
    let fault = fault.validated()?;
    let (rho, delta) = motor.rho_delta(motor.r_s);
    let (rho_star, delta_star) = motor.rho_delta(motor.r_s + motor.r_c);
    let branch = if fault.is_effective() {
        let n_p = winding.n_p as f64;
        let n_s = winding.n_s as f64;
        let ratio = fault.sigma / n_s;
        let inv_ratio = n_s / fault.sigma;
        let r_f = n_p * (1.0 - ratio) * motor.r_s + ratio * motor.r_s / 3.0 + inv_ratio * fault.r_sc;
        let r_f_star = r_f + 2.0 / 3.0 * ratio * motor.r_c;
        let l_f1 = ratio * n_p * (n_s - 1.0) * (motor.l_d + motor.l_q + motor.l_0) / 3.0
            + ratio * motor.l_0 / 3.0
            + inv_ratio * fault.l_wire;
        let l_f2 = ratio * n_p * (n_s - 1.0) * (motor.l_d - motor.l_q) / 3.0;
        if l_f1 - l_f2.abs() <= 0.0 {
            return Err(ParamError::FaultInductanceNotPositive(l_f1 - l_f2.abs()));
        }
        Some(FaultBranch {
            ratio,
            phi_f: fault.phase.angle(),
            r_f,
            r_f_star,
            l_f1,
            l_f2,
            tau_f: l_f1 / r_f_star,
        })
    } else {
        None
    };
    Ok(DerivedParams {
        rho,
        delta,
        rho_star,
        delta_star,
        fault: branch,
    })
}

/// A validated, immutable parameter bundle shared by every engine.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Model {
    pub motor: MotorParams,
    pub winding: WindingConfig,
    pub fault: FaultConfig,
    pub derived: DerivedParams,
}

impl Model {
    pub fn new(motor: MotorParams, winding: WindingConfig, fault: FaultConfig) -> Result<Self, ParamError> {
        let motor = motor.validated(DEFAULT_MAX_HARMONIC_ORDER)?;
        Self::from_validated_motor(motor, winding, fault)
    }

    /// Like [`Model::new`] but keeps the harmonic list as already validated.
    pub fn from_validated_motor(
        motor: MotorParams,
        winding: WindingConfig,
        fault: FaultConfig,
    ) -> Result<Self, ParamError> {
        let winding = winding.validated()?;
        let fault = fault.validated()?;
        let derived = derive_fault_params(&motor, &winding, &fault)?;
        Ok(Self {
            motor,
            winding,
            fault,
            derived,
        })
    }

    /// Same machine with a different fault configuration.
    pub fn with_fault(&self, fault: FaultConfig) -> Result<Self, ParamError> {
        Self::from_validated_motor(self.motor.clone(), self.winding, fault)
    }

    pub fn branch(&self) -> Option<&FaultBranch> {
        self.derived.fault.as_ref()
    }
}

/// Laboratory machine used as the canonical fixture.
pub mod fixture {
    use super::*;

    pub const T_S: f64 = 1e-4;
    pub const L_WIRE: f64 = 3.81e-6;
    pub const R_WIRE: f64 = 14.4e-3;
    /// Fault-insertion resistances in ohm.
    pub const R_FIU: [f64; 4] = [442e-3, 47.0e-3, 5.62e-3, 1.74e-3];

    pub fn motor() -> MotorParams {
        MotorParams {
            r_s: 0.727,
            r_c: 0.362,
            l_d: 3.29e-3,
            l_q: 3.12e-3,
            l_0: 2.74e-3,
            pole_pairs: 21,
            harmonics: vec![FluxHarmonic::new(1, 18.4e-3, 0.0), FluxHarmonic::new(3, 200e-6, 0.0)],
            abc: None,
        }
    }

    pub fn winding() -> WindingConfig {
        WindingConfig { n_p: 1, n_s: 6 }
    }

    pub fn fault(sigma: f64, r_fiu: f64) -> FaultConfig {
        FaultConfig {
            phase: FaultPhase::A,
            sigma,
            r_sc: r_fiu + R_WIRE,
            l_wire: L_WIRE,
            active: true,
        }
    }

    /// Table machine with connection resistance removed.
    pub fn model_without_rc(sigma: f64, r_fiu: f64) -> Model {
        let mut m = motor();
        m.r_c = 0.0;
        Model::new(m, winding(), fault(sigma, r_fiu)).expect("fixture is valid")
    }

    pub fn model(sigma: f64, r_fiu: f64) -> Model {
        Model::new(motor(), winding(), fault(sigma, r_fiu)).expect("fixture is valid")
    }

    pub fn healthy_model() -> Model {
        Model::new(motor(), winding(), FaultConfig::healthy()).expect("fixture is valid")
    }
}

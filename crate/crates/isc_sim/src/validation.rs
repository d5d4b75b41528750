//! Numerical checks of the discrete model against quadrature and the oracle.
//!
//! These back the `validate` subcommand and the acceptance suite.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::ct_model::{ModelState, StepInput};
use crate::dtm::{self, assemble_phi, DtmOptions};
use crate::oracle::{
    expm, healthy_system_matrix, integrate_step, quadrature, spectral_radius, IntegrationConfig, OracleError,
    QuadratureConfig,
};
use crate::params::{fixture, FaultConfig, FluxHarmonic, Model, ParamError};
use crate::reference;

/// Harmonic orders covered by the damped-integral sweep.
pub const SWEEP_ORDERS: [u32; 5] = [1, 2, 3, 6, 12];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegralBound {
    pub order: u32,
    /// Largest `|I_1 − Î_1|` on the grid, in units of `T_s / n`.
    pub max_sine_error: f64,
    /// Largest `|I_2 − Î_2|` on the grid, in units of `T_s`.
    pub max_cosine_error: f64,
    pub sine_limit: f64,
    pub cosine_limit: f64,
}

impl IntegralBound {
    pub fn passed(&self) -> bool {
        self.max_sine_error <= self.sine_limit && self.max_cosine_error <= self.cosine_limit
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepGrid {
    pub rho_points: usize,
    pub omega_points: usize,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            rho_points: 100,
            omega_points: 101,
        }
    }
}

/// `∫₀^T e^{−ρt} sin(wt) dt` and `∫₀^T e^{−ρt} cos(wt) dt` by adaptive quadrature.
pub fn damped_integrals(rho: f64, w: f64, t_s: f64, cfg: &QuadratureConfig) -> Result<(f64, f64), OracleError> {
    let i1 = quadrature(|t| (-rho * t).exp() * (w * t).sin(), 0.0, t_s, cfg)?;
    let i2 = quadrature(|t| (-rho * t).exp() * (w * t).cos(), 0.0, t_s, cfg)?;
    Ok((i1, i2))
}

/// Worst-case error of the damped-integral approximation over
/// `0 < ρ ≤ 1/T_s`, `|ω| ≤ 2π/T_s`.
pub fn sweep_integral_bounds(t_s: f64, grid: SweepGrid) -> Result<Vec<IntegralBound>, OracleError> {
    let cfg = QuadratureConfig::default();
    let omega_max = 2.0 * PI / t_s;
    SWEEP_ORDERS
        .par_iter()
        .map(|&n| {
            let rows: Result<Vec<(f64, f64)>, OracleError> = (1..=grid.rho_points)
                .into_par_iter()
                .map(|i| {
                    let rho = i as f64 / (grid.rho_points as f64 * t_s);
                    let mut worst = (0.0f64, 0.0f64);
                    for k in 0..grid.omega_points {
                        let omega = -omega_max + 2.0 * omega_max * k as f64 / (grid.omega_points - 1) as f64;
                        let (i1, i2) = damped_integrals(rho, n as f64 * omega, t_s, &cfg)?;
                        let (a1, a2) = dtm::integral_approx(rho, omega, n, t_s);
                        worst.0 = worst.0.max((i1 - a1).abs());
                        worst.1 = worst.1.max((i2 - a2).abs());
                    }
                    Ok(worst)
                })
                .collect();
            let rows = rows?;
            let e1 = rows.iter().map(|r| r.0).fold(0.0, f64::max);
            let e2 = rows.iter().map(|r| r.1).fold(0.0, f64::max);
            Ok(IntegralBound {
                order: n,
                max_sine_error: e1 / (t_s / n as f64),
                max_cosine_error: e2 / t_s,
                sine_limit: 0.1,
                cosine_limit: 0.026,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub measured: f64,
    pub limit: f64,
}

impl CheckResult {
    fn new(name: &str, measured: f64, limit: f64) -> Self {
        Self {
            name: name.to_string(),
            measured,
            limit,
        }
    }

    pub fn passed(&self) -> bool {
        self.measured.is_finite() && self.measured <= self.limit
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ValidationError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Param(#[from] ParamError),
}

fn rel_norm<const R: usize, const C: usize>(
    a: &nalgebra::SMatrix<f64, R, C>,
    b: &nalgebra::SMatrix<f64, R, C>,
) -> f64 {
    (a - b).norm() / b.norm()
}

fn with_harmonics(extra: &[FluxHarmonic]) -> Result<Model, ParamError> {
    let mut m = fixture::motor();
    m.harmonics.extend_from_slice(extra);
    Model::new(m, fixture::winding(), FaultConfig::healthy())
}

/// Closed-form coefficients against their quadrature definitions on the
/// Table I fixture at ω = 1400 rad/s.
pub fn coefficient_checks(opts: &DtmOptions) -> Result<Vec<CheckResult>, ValidationError> {
    let t_s = fixture::T_S;
    let omega = 1400.0;
    let cfg = QuadratureConfig::default();
    let thetas: Vec<f64> = (0..16).map(|k| 0.4 * k as f64 + 0.05).collect();
    let mut out = Vec::new();

    let healthy = fixture::healthy_model();
    let e_k = dtm::healthy_transition(&healthy, omega, t_s, opts);
    let exact = expm(&(healthy_system_matrix(&healthy, omega) * t_s));
    out.push(CheckResult::new("E_k vs expm (abs Frobenius)", (e_k - exact).norm(), 5e-4));

    let b_k = dtm::input_matrix(&healthy, omega, t_s, opts);
    let b_ref = reference::input_matrix(&healthy, omega, t_s, 1024);
    out.push(CheckResult::new("B_k vs quadrature", rel_norm(&b_k, &b_ref), 1e-3));

    let harmonic = with_harmonics(&[FluxHarmonic::new(5, 0.3e-3, 0.2), FluxHarmonic::new(7, 0.2e-3, -0.4)])?;
    for (name, model) in [("Q_k fundamental vs quadrature", &healthy), ("Q_k with 5th/7th vs quadrature", &harmonic)] {
        let mut worst = 0.0f64;
        for &theta in &thetas {
            let q = dtm::flux_vector(model, omega, theta, t_s, opts);
            let r = reference::flux_vector(model, omega, theta, t_s, &cfg)?;
            worst = worst.max(rel_norm(&q, &r));
        }
        out.push(CheckResult::new(name, worst, 1e-3));
    }

    let faulted = fixture::model(0.4, fixture::R_FIU[3]);
    let branch = faulted.branch().expect("fixture fault is active");
    let (mut af, mut bf, mut qf_err, mut qf_amp) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for &theta in &thetas {
        let (a_f, lk, lk1) = dtm::fault_decay(branch, omega, theta, t_s, opts);
        let (b_f, q_f) = dtm::fault_input_coeffs(&faulted, branch, omega, theta, t_s, opts);
        let r = reference::fault_coefficients(&faulted, branch, omega, theta, t_s, &cfg)?;
        af = af.max((a_f - r.a_f).abs() * lk / lk1 / (r.a_f * lk / lk1));
        bf = bf.max(rel_norm(&b_f, &r.b_f));
        qf_err = qf_err.max((q_f - r.q_f).abs());
        qf_amp = qf_amp.max(r.q_f.abs());
    }
    out.push(CheckResult::new("a_f vs exponent quadrature", af, 1e-3));
    out.push(CheckResult::new("b_f vs quadrature", bf, 2e-3));
    out.push(CheckResult::new("q_f vs quadrature (amplitude-normalised)", qf_err / qf_amp, 5e-3));

    let coupled = fixture::model(0.4, fixture::R_FIU[1]);
    let branch = coupled.branch().expect("fixture fault is active");
    let (mut dh, mut df) = (0.0f64, 0.0f64);
    for &theta in thetas.iter().step_by(4) {
        let c = dtm::step_coefficients(&coupled, omega, theta, t_s, opts);
        let f = c.fault.expect("fault coefficients present");
        let (h_ref, f_ref) = reference::perturbation_blocks(&coupled, branch, omega, theta, t_s, 256)?;
        dh = dh.max(rel_norm(&f.delta_h, &h_ref));
        df = df.max(rel_norm(&f.delta_f, &f_ref));
    }
    out.push(CheckResult::new("Delta_h vs convolution", dh, 1e-2));
    out.push(CheckResult::new("Delta_f vs convolution", df, 5e-2));

    out.push(CheckResult::new("max spectral radius of Phi", max_spectral_radius(opts)?, 1.0 - 1e-12));
    Ok(out)
}

/// Largest spectral radius of Φ over the fixture grid of fault severities,
/// resistances, speeds and angles.
pub fn max_spectral_radius(opts: &DtmOptions) -> Result<f64, ParamError> {
    let t_s = fixture::T_S;
    let omega_max = 2.0 * PI / t_s;
    let mut worst = 0.0f64;
    for sigma in [3.0 / 25.0, 6.0 / 25.0, 10.0 / 25.0] {
        for r in fixture::R_FIU {
            let model = Model::new(fixture::motor(), fixture::winding(), fixture::fault(sigma, r))?;
            for k in 0..=40 {
                let omega = -omega_max + 2.0 * omega_max * k as f64 / 40.0;
                for j in 0..8 {
                    let theta = j as f64 * PI / 4.0 + 0.1;
                    let c = dtm::step_coefficients(&model, omega, theta, t_s, opts);
                    worst = worst.max(spectral_radius(&c.phi));
                }
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbationBenefit {
    pub states: usize,
    /// Fraction of states where the coupled Φ is at least as accurate.
    pub fraction_improved: f64,
    pub rms_with_blocks: f64,
    pub rms_block_diagonal: f64,
}

/// One-step prediction error with and without the cross-coupling blocks,
/// both measured against the RK4 oracle from random states.
pub fn perturbation_benefit(
    model: &Model,
    omega: f64,
    states: usize,
    seed: u64,
    opts: &DtmOptions,
) -> Result<PerturbationBenefit, ValidationError> {
    let t_s = fixture::T_S;
    let branch = model.branch().expect("fault must be active");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = IntegrationConfig::default();
    let (mut wins, mut sq_with, mut sq_without) = (0usize, 0.0, 0.0);
    for _ in 0..states {
        let state = ModelState::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0), rng.gen_range(-100.0..100.0));
        let input = StepInput {
            u_d: rng.gen_range(-30.0..30.0),
            u_q: rng.gen_range(-30.0..30.0),
            omega,
            theta: rng.gen_range(0.0..2.0 * PI),
            u_m: 0.0,
            t_s,
        };
        let c = dtm::step_coefficients(model, omega, input.theta, t_s, opts);
        let mut diag = c.clone();
        if let Some(f) = diag.fault.as_mut() {
            f.delta_h = nalgebra::Matrix2::zeros();
            f.delta_f = nalgebra::Matrix2::zeros();
        }
        diag.phi = assemble_phi(&diag.e_k, diag.fault.as_ref(), input.theta, branch.phi_f);
        let truth = integrate_step(&state, &input, model, &cfg)?;
        let t = Vector3::from(truth.to_array());
        let e_with = (Vector3::from(dtm::apply_coefficients(&c, &state, &input).to_array()) - t).norm();
        let e_without = (Vector3::from(dtm::apply_coefficients(&diag, &state, &input).to_array()) - t).norm();
        if e_with <= e_without {
            wins += 1;
        }
        sq_with += e_with * e_with;
        sq_without += e_without * e_without;
    }
    let n = states as f64;
    Ok(PerturbationBenefit {
        states,
        fraction_improved: wins as f64 / n,
        rms_with_blocks: (sq_with / n).sqrt(),
        rms_block_diagonal: (sq_without / n).sqrt(),
    })
}

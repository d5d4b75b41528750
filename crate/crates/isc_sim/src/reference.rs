//! Quadrature references for the closed-form step coefficients.
//!
//! Each function evaluates the defining convolution integral of one
//! coefficient directly, with the same per-step assumptions as the discrete
//! model: frozen speed, linear angle, held terminal potentials.

use nalgebra::{Matrix2, Vector2};

use crate::dtm::rotation;
use crate::frames::pm_flux_dq;
use crate::oracle::{composite_simpson, expm, healthy_system_matrix, quadrature, OracleError, QuadratureConfig};
use crate::params::{FaultBranch, Model};

fn l_inv(model: &Model) -> Matrix2<f64> {
    Matrix2::new(1.0 / model.motor.l_d, 0.0, 0.0, 1.0 / model.motor.l_q)
}

fn simpson_matrix(f: impl Fn(f64) -> Matrix2<f64>, t_s: f64, panels: usize) -> Matrix2<f64> {
    let mut out = Matrix2::zeros();
    for r in 0..2 {
        for c in 0..2 {
            out[(r, c)] = composite_simpson(|t| f(t)[(r, c)], 0.0, t_s, panels);
        }
    }
    out
}

/// `∫₀^T e^{A t} L⁻¹ T(T − t) dt` by composite Simpson.
pub fn input_matrix(model: &Model, omega: f64, t_s: f64, panels: usize) -> Matrix2<f64> {
    let a = healthy_system_matrix(model, omega);
    let li = l_inv(model);
    simpson_matrix(|t| expm(&(a * t)) * li * rotation(omega, t_s - t), t_s, panels)
}

/// `∫₀^T ω e^{A t} L⁻¹ (λ^q, −λ^d)(θ_k + ω(T − t)) dt`.
pub fn flux_vector(
    model: &Model,
    omega: f64,
    theta: f64,
    t_s: f64,
    cfg: &QuadratureConfig,
) -> Result<Vector2<f64>, OracleError> {
    let a = healthy_system_matrix(model, omega);
    let li = l_inv(model);
    let integrand = |t: f64| {
        let f = pm_flux_dq(&model.motor.harmonics, theta + omega * (t_s - t));
        omega * expm(&(a * t)) * li * Vector2::new(f.q, -f.d)
    };
    Ok(Vector2::new(
        quadrature(|t| integrand(t)[0], 0.0, t_s, cfg)?,
        quadrature(|t| integrand(t)[1], 0.0, t_s, cfg)?,
    ))
}

/// Exact fault-flux propagator over the last `tau` of the step,
/// `exp(−∫_{T−τ}^{T} R_f*/L_f(θ(s)) ds)`.
pub fn fault_propagator(
    branch: &FaultBranch,
    omega: f64,
    theta: f64,
    t_s: f64,
    tau: f64,
    cfg: &QuadratureConfig,
) -> Result<f64, OracleError> {
    let l_f = |t: f64| branch.l_f(theta + omega * (t_s - t));
    let exponent = quadrature(|t| branch.r_f_star / l_f(t), 0.0, tau, cfg)?;
    Ok((-exponent).exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultReference {
    pub a_f: f64,
    pub b_f: Vector2<f64>,
    pub q_f: f64,
}

/// Flux-form fault coefficients by nested quadrature.
pub fn fault_coefficients(
    model: &Model,
    branch: &FaultBranch,
    omega: f64,
    theta: f64,
    t_s: f64,
    cfg: &QuadratureConfig,
) -> Result<FaultReference, OracleError> {
    let inner = QuadratureConfig {
        rel_tol: 1e-13,
        abs_tol: 1e-18,
        ..*cfg
    };
    let prop = |tau: f64| fault_propagator(branch, omega, theta, t_s, tau, &inner);
    let a_f = prop(t_s)?;

    let mut err = None;
    let mut guarded = |tau: f64| match prop(tau) {
        Ok(v) => v,
        Err(e) => {
            err.get_or_insert(e);
            0.0
        }
    };
    let gain = quadrature(&mut guarded, 0.0, t_s, cfg)?;
    let triplen: Vec<_> = model.motor.harmonics.iter().filter(|h| h.is_triplen()).copied().collect();
    let q_f = -omega
        * quadrature(
            |tau| {
                let th = theta + omega * (t_s - tau);
                let s: f64 = triplen
                    .iter()
                    .map(|h| h.order as f64 * h.amplitude * (h.order as f64 * th + h.phase).sin())
                    .sum();
                guarded(tau) * s
            },
            0.0,
            t_s,
            cfg,
        )?;
    if let Some(e) = err {
        return Err(e);
    }
    let ang = theta + branch.phi_f;
    Ok(FaultReference {
        a_f,
        b_f: gain * Vector2::new(ang.cos(), -ang.sin()),
        q_f,
    })
}

/// Convolution form of the cross-coupling blocks, by composite Simpson.
pub fn perturbation_blocks(
    model: &Model,
    branch: &FaultBranch,
    omega: f64,
    theta: f64,
    t_s: f64,
    panels: usize,
) -> Result<(Matrix2<f64>, Matrix2<f64>), OracleError> {
    let cfg = QuadratureConfig::default();
    let a = healthy_system_matrix(model, omega);
    let li = l_inv(model);
    let r_c = model.motor.r_c;
    let l_f_k = branch.l_f(theta);
    let l_f_k1 = branch.l_f(theta + omega * t_s);
    let a_total = fault_propagator(branch, omega, theta, t_s, t_s, &cfg)?;
    let mut props = Vec::with_capacity(panels + 1);
    for i in 0..=panels {
        props.push(fault_propagator(branch, omega, theta, t_s, t_s * i as f64 / panels as f64, &cfg)?);
    }
    let prop_at = |t: f64| props[((t / t_s) * panels as f64).round() as usize];
    let delta_h = -2.0 / 3.0 * branch.ratio * r_c
        * simpson_matrix(
            |t| {
                let l_f_t = branch.l_f(theta + omega * (t_s - t));
                expm(&(a * t)) * (a_total / prop_at(t) * l_f_k / l_f_t) * li * rotation(omega, t_s) * rotation(omega, -t)
            },
            t_s,
            panels,
        );
    let delta_f = -r_c / l_f_k1
        * simpson_matrix(
            |t| prop_at(t) * rotation(omega, t) * rotation(omega, -t_s) * expm(&(a * (t_s - t))),
            t_s,
            panels,
        );
    Ok((delta_h, delta_f))
}

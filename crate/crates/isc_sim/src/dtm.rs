//! Closed-form discrete-time model: per-step coefficients, the one-step
//! update and the forward-Euler baseline.
//!
//! Coefficients are recomputed from `(ω_k, θ_k)` every step. Inside a step
//! the speed is frozen and terminal potentials are held. The healthy block
//! uses `R_s + R_c`, and the fault loop uses `R_f*`.

use nalgebra::{Matrix2, Matrix3, RowVector2, Vector2};
use serde::Serialize;
use thiserror::Error;

use crate::ct_model::{dq_rhs_at_step, ModelState, StepInput};
use crate::params::{FaultBranch, Model};

/// Below this argument magnitude the removable-singular kernels use a series.
pub const SERIES_THRESHOLD: f64 = 1e-4;
/// Threshold for the `(e^{-bT} − e^{-aT})/(a − b)` kernel, on `|a − b|·T`.
pub const RATE_GAP_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DtmError {
    #[error("discrete model produced a non-finite state")]
    Diverged,
    #[error("sampling period must be positive, got {0}")]
    BadSamplingPeriod(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct DtmOptions {
    /// Drop every term whose weight is a sin(x)/ω, (1 − cos x)/ω or
    /// difference-of-cosines kernel. These are bounded by T_s.
    pub simplified: bool,
}

/// `sin(ω t)/ω`, finite at ω = 0.
pub fn sin_over(omega: f64, t: f64) -> f64 {
    let x = omega * t;
    if x.abs() < SERIES_THRESHOLD {
        let x2 = x * x;
        t * (1.0 - x2 / 6.0 * (1.0 - x2 / 20.0))
    } else {
        x.sin() / omega
    }
}

/// `(1 − cos ω t)/ω`, finite at ω = 0.
pub fn one_minus_cos_over(omega: f64, t: f64) -> f64 {
    let x = omega * t;
    if x.abs() < SERIES_THRESHOLD {
        let x2 = x * x;
        t * x / 2.0 * (1.0 - x2 / 12.0 * (1.0 - x2 / 30.0))
    } else {
        (1.0 - x.cos()) / omega
    }
}

/// `(e^{−b t} − e^{−a t})/(a − b)`, finite at a = b.
pub fn exp_gap(a: f64, b: f64, t: f64) -> f64 {
    let x = (a - b) * t;
    if x.abs() < RATE_GAP_THRESHOLD {
        (-b * t).exp() * t * (1.0 - x / 2.0 + x * x / 6.0)
    } else {
        ((-b * t).exp() - (-a * t).exp()) / (a - b)
    }
}

/// Frame rotation `T(t) = [[cos ωt, sin ωt], [−sin ωt, cos ωt]]`.
pub fn rotation(omega: f64, t: f64) -> Matrix2<f64> {
    let (s, c) = (omega * t).sin_cos();
    Matrix2::new(c, s, -s, c)
}

/// `(I − T(±t))/ω` for speed `omega`, written through the limit-safe kernels.
fn rotation_defect(omega: f64, t: f64, forward: bool) -> Matrix2<f64> {
    let c = one_minus_cos_over(omega, t);
    let s = if forward { sin_over(omega, t) } else { -sin_over(omega, t) };
    Matrix2::new(c, -s, s, c)
}

fn inductance(model: &Model) -> (Matrix2<f64>, Matrix2<f64>) {
    let m = &model.motor;
    (
        Matrix2::new(m.l_d, 0.0, 0.0, m.l_q),
        Matrix2::new(1.0 / m.l_d, 0.0, 0.0, 1.0 / m.l_q),
    )
}

fn saliency(model: &Model) -> Matrix2<f64> {
    let d = model.derived.delta_star;
    Matrix2::new(d, 0.0, 0.0, -d)
}

/// Healthy-part state transition `E_k`.
pub fn healthy_transition(model: &Model, omega: f64, t_s: f64, opts: &DtmOptions) -> Matrix2<f64> {
    let rho = model.derived.rho_star;
    let (l, l_inv) = inductance(model);
    let decay = (-rho * t_s).exp();
    let mut e = decay * l_inv * rotation(omega, t_s) * l;
    if !opts.simplified {
        e += decay * sin_over(omega, t_s) * saliency(model);
    }
    e
}

/// Input matrix `B_k` for held terminal potentials.
pub fn input_matrix(model: &Model, omega: f64, t_s: f64, opts: &DtmOptions) -> Matrix2<f64> {
    let rho = model.derived.rho_star;
    let (_, l_inv) = inductance(model);
    let e1 = (-rho * t_s).exp();
    let mut b = l_inv * ((1.0 - e1) / rho) * rotation(omega, t_s);
    if !opts.simplified {
        let e_half = (-0.5 * rho * t_s).exp();
        b -= l_inv * sin_over(omega, t_s) * ((e1 - e_half) / rho) * saliency(model);
    }
    b
}

/// Flux (back-EMF) contribution `Q_k`.
pub fn flux_vector(model: &Model, omega: f64, theta: f64, t_s: f64, opts: &DtmOptions) -> Vector2<f64> {
    let rho = model.derived.rho_star;
    let delta = model.derived.delta_star;
    let (_, l_inv) = inductance(model);
    let full = !opts.simplified;
    let wt = omega * t_s;
    let lambda_1 = model.motor.lambda_1();
    let mut v = -lambda_1
        * Vector2::new(
            1.0 - wt.cos(),
            wt.sin() - if full { delta * one_minus_cos_over(omega, t_s) } else { 0.0 },
        );

    let sal = saliency(model);
    let t_back = rotation(omega, -t_s);
    let t_fwd = rotation(omega, t_s);
    let sinc = sin_over(omega, t_s);
    let quarter_neg = Matrix2::new(0.0, -1.0, 1.0, 0.0);
    let quarter_pos = Matrix2::new(0.0, 1.0, -1.0, 0.0);
    for h in &model.motor.harmonics {
        match h.order % 6 {
            5 => {
                let j = (h.order + 1) as f64;
                let mut m1 = t_fwd - rotation(omega, j * t_s);
                if full {
                    m1 += sinc * sal + sal * t_back * rotation_defect((j + 1.0) * omega, t_s, true) * quarter_neg;
                }
                let a = j * theta + h.phase;
                v += h.amplitude * m1 * Vector2::new(a.cos(), -a.sin());
            }
            1 if h.order > 1 => {
                let j = (h.order - 1) as f64;
                let mut m2 = t_fwd - rotation(omega, -j * t_s);
                if full {
                    m2 += sinc * sal + sal * t_back * rotation_defect((j - 1.0) * omega, t_s, false) * quarter_pos;
                }
                let a = j * theta + h.phase;
                v += h.amplitude * m2 * Vector2::new(a.cos(), a.sin());
            }
            _ => {}
        }
    }
    (-0.5 * rho * t_s).exp() * l_inv * v
}

/// Approximations of `∫₀^T e^{−ρt} sin(nωt) dt` and the cosine analogue.
pub fn integral_approx(rho: f64, omega: f64, n: u32, t_s: f64) -> (f64, f64) {
    let w = n as f64 * omega;
    let damp = (-0.5 * rho * t_s).exp();
    (one_minus_cos_over(w, t_s) * damp, sin_over(w, t_s) * damp)
}

fn fault_angle_term(branch: &FaultBranch, omega: f64, theta: f64, t_s: f64) -> f64 {
    let beta = 2.0 * theta - branch.phi_f;
    let row = RowVector2::new(one_minus_cos_over(2.0 * omega, t_s), sin_over(2.0 * omega, t_s));
    let col = Vector2::new(beta.sin(), beta.cos());
    (row * rotation(2.0 * omega, t_s) * col)[(0, 0)]
}

/// Fault-flux decay `a_f` and the loop inductance at steps k and k+1.
pub fn fault_decay(branch: &FaultBranch, omega: f64, theta: f64, t_s: f64, opts: &DtmOptions) -> (f64, f64, f64) {
    let a = branch.r_f_star / branch.l_f1;
    let beta = 2.0 * theta - branch.phi_f;
    let l_f_k = branch.l_f1 + branch.l_f2 * beta.cos();
    let l_f_k1 = branch.l_f1 + branch.l_f2 * (beta + 2.0 * omega * t_s).cos();
    let decay = (-a * t_s).exp();
    let a_f = if opts.simplified {
        decay
    } else {
        let h_f = fault_angle_term(branch, omega, theta, t_s);
        decay * (1.0 + branch.l_f2 / branch.l_f1 * a * h_f)
    };
    (a_f, l_f_k, l_f_k1)
}

/// Voltage coupling `b_f` and triplen back-EMF term `q_f` of the fault flux.
pub fn fault_input_coeffs(
    model: &Model,
    branch: &FaultBranch,
    omega: f64,
    theta: f64,
    t_s: f64,
    opts: &DtmOptions,
) -> (Vector2<f64>, f64) {
    let a = branch.r_f_star / branch.l_f1;
    let ratio = branch.l_f2 / branch.l_f1;
    let decay = (-a * t_s).exp();
    let decay_half = (-0.5 * a * t_s).exp();
    let ang = theta + branch.phi_f;
    let v = Vector2::new(ang.cos(), -ang.sin());
    let mut gain = (1.0 - decay) / a;
    if !opts.simplified {
        gain -= ratio * (decay - decay_half) * fault_angle_term(branch, omega, theta, t_s);
    }
    let b_f = gain * v;

    let beta = 2.0 * theta - branch.phi_f;
    let sc = Vector2::new(beta.sin(), beta.cos());
    let mut q_f = 0.0;
    for h in model.motor.harmonics.iter().filter(|h| h.is_triplen()) {
        let j = h.order as f64;
        let jwt = j * omega * t_s;
        let mut inner = Vector2::new(1.0 - jwt.cos(), jwt.sin());
        if !opts.simplified {
            let m3 = Matrix2::new(-2.0, 0.0, 0.0, 0.0) * rotation_defect(2.0 * omega, t_s, true)
                + Matrix2::new(-1.0, 0.0, 0.0, 1.0) * rotation_defect((j - 2.0) * omega, t_s, false)
                + rotation_defect((j + 2.0) * omega, t_s, true);
            inner += 0.5 * ratio * a * m3 * sc;
        }
        let big = j * theta + h.phase;
        q_f += h.amplitude * Vector2::new(big.cos(), big.sin()).dot(&inner);
    }
    (b_f, -decay_half * q_f)
}

/// Cross-coupling blocks introduced by the connection resistance.
pub fn perturbation_blocks(
    model: &Model,
    branch: &FaultBranch,
    omega: f64,
    l_f_k1: f64,
    t_s: f64,
) -> (Matrix2<f64>, Matrix2<f64>) {
    let m = &model.motor;
    if m.r_c == 0.0 {
        return (Matrix2::zeros(), Matrix2::zeros());
    }
    let (_, l_inv) = inductance(model);
    let gap = exp_gap(model.derived.rho_star, branch.r_f_star / branch.l_f1, t_s);
    let delta_h = -2.0 / 3.0 * branch.ratio * m.r_c * gap * l_inv * rotation(omega, t_s);
    let delta_f = -(m.l_d + m.l_q) / 2.0 * m.r_c / l_f_k1 * gap * Matrix2::new(1.0 / m.l_q, 0.0, 0.0, 1.0 / m.l_d);
    (delta_h, delta_f)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultCoefficients {
    pub a_f: f64,
    pub l_f_k: f64,
    pub l_f_k1: f64,
    pub b_f: Vector2<f64>,
    pub q_f: f64,
    pub delta_h: Matrix2<f64>,
    pub delta_f: Matrix2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCoefficients {
    pub e_k: Matrix2<f64>,
    pub b_k: Matrix2<f64>,
    pub q_k: Vector2<f64>,
    pub fault: Option<FaultCoefficients>,
    pub phi: Matrix3<f64>,
}

impl StepCoefficients {
    pub fn all_finite(&self) -> bool {
        let mut ok = self.e_k.iter().chain(self.b_k.iter()).chain(self.q_k.iter()).chain(self.phi.iter()).all(|v| v.is_finite());
        if let Some(f) = &self.fault {
            ok &= [f.a_f, f.l_f_k, f.l_f_k1, f.q_f].iter().all(|v| v.is_finite())
                && f.b_f.iter().chain(f.delta_h.iter()).chain(f.delta_f.iter()).all(|v| v.is_finite());
        }
        ok
    }

    /// Every scalar entry in a fixed order, for continuity checks and dumps.
    pub fn flatten(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        let mut push_mat = |name: &str, m: &[f64], cols: usize| {
            for (k, v) in m.iter().enumerate() {
                // nalgebra stores column-major.
                out.push((format!("{name}[{},{}]", k % cols, k / cols), *v));
            }
        };
        push_mat("E_k", self.e_k.as_slice(), 2);
        push_mat("B_k", self.b_k.as_slice(), 2);
        push_mat("Q_k", self.q_k.as_slice(), 2);
        if let Some(f) = &self.fault {
            push_mat("b_f", f.b_f.as_slice(), 2);
            push_mat("Delta_h", f.delta_h.as_slice(), 2);
            push_mat("Delta_f", f.delta_f.as_slice(), 2);
            out.push(("a_f".into(), f.a_f));
            out.push(("L_f_k".into(), f.l_f_k));
            out.push(("L_f_k1".into(), f.l_f_k1));
            out.push(("q_f".into(), f.q_f));
        }
        let mut push_phi = |m: &Matrix3<f64>| {
            for r in 0..3 {
                for c in 0..3 {
                    out.push((format!("Phi[{r},{c}]"), m[(r, c)]));
                }
            }
        };
        push_phi(&self.phi);
        out
    }
}

/// Assembles the 3×3 transition. Without a fault the i_f row and column are zero.
pub fn assemble_phi(e_k: &Matrix2<f64>, fault: Option<&FaultCoefficients>, theta: f64, phi_f: f64) -> Matrix3<f64> {
    let mut phi = Matrix3::zeros();
    phi.fixed_view_mut::<2, 2>(0, 0).copy_from(e_k);
    if let Some(f) = fault {
        let ang = theta + phi_f;
        let v = Vector2::new(ang.cos(), -ang.sin());
        phi.fixed_view_mut::<2, 1>(0, 2).copy_from(&(f.delta_h * v));
        phi.fixed_view_mut::<1, 2>(2, 0).copy_from(&(v.transpose() * f.delta_f));
        phi[(2, 2)] = f.a_f * f.l_f_k / f.l_f_k1;
    }
    phi
}

pub fn step_coefficients(model: &Model, omega: f64, theta: f64, t_s: f64, opts: &DtmOptions) -> StepCoefficients {
    let e_k = healthy_transition(model, omega, t_s, opts);
    let b_k = input_matrix(model, omega, t_s, opts);
    let q_k = flux_vector(model, omega, theta, t_s, opts);
    let fault = model.branch().map(|b| {
        let (a_f, l_f_k, l_f_k1) = fault_decay(b, omega, theta, t_s, opts);
        let (b_f, q_f) = fault_input_coeffs(model, b, omega, theta, t_s, opts);
        let (delta_h, delta_f) = perturbation_blocks(model, b, omega, l_f_k1, t_s);
        FaultCoefficients {
            a_f,
            l_f_k,
            l_f_k1,
            b_f,
            q_f,
            delta_h,
            delta_f,
        }
    });
    let phi_f = model.branch().map_or(0.0, |b| b.phi_f);
    let phi = assemble_phi(&e_k, fault.as_ref(), theta, phi_f);
    StepCoefficients {
        e_k,
        b_k,
        q_k,
        fault,
        phi,
    }
}

/// Applies precomputed coefficients to advance one step.
pub fn apply_coefficients(c: &StepCoefficients, state: &ModelState, input: &StepInput) -> ModelState {
    let x = nalgebra::Vector3::new(state.i_dh, state.i_qh, state.i_f);
    let u = Vector2::new(input.u_d, input.u_q);
    let mut next = c.phi * x;
    let healthy = c.b_k * u + c.q_k;
    next[0] += healthy[0];
    next[1] += healthy[1];
    match &c.fault {
        Some(f) => next[2] += (f.b_f.dot(&u) + f.q_f) / f.l_f_k1,
        None => next[2] = 0.0,
    }
    ModelState::new(next[0], next[1], next[2])
}

pub fn dtm_step(state: &ModelState, input: &StepInput, model: &Model, opts: &DtmOptions) -> Result<ModelState, DtmError> {
    if input.t_s <= 0.0 || !input.t_s.is_finite() {
        return Err(DtmError::BadSamplingPeriod(input.t_s));
    }
    let c = step_coefficients(model, input.omega, input.theta, input.t_s, opts);
    let next = apply_coefficients(&c, state, input);
    if next.is_finite() {
        Ok(next)
    } else {
        Err(DtmError::Diverged)
    }
}

/// Forward Euler with dq voltages held over the step. Blow-up is returned,
/// not trapped: a non-finite input state yields a NaN state.
pub fn euler_step(state: &ModelState, input: &StepInput, model: &Model) -> ModelState {
    match dq_rhs_at_step(state, input, model) {
        Ok(d) => {
            let mut next = ModelState::new(
                state.i_dh + input.t_s * d.d_i_dh,
                state.i_qh + input.t_s * d.d_i_qh,
                state.i_f + input.t_s * d.d_i_f,
            );
            if model.branch().is_none() {
                next.i_f = 0.0;
            }
            next
        }
        Err(_) => ModelState::new(f64::NAN, f64::NAN, f64::NAN),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{expm, healthy_system_matrix, integrate_step, spectral_radius, IntegrationConfig};
    use crate::params::{fixture, FaultConfig, FluxHarmonic};
    use std::f64::consts::PI;

    const T: f64 = fixture::T_S;
    const FULL: DtmOptions = DtmOptions { simplified: false };

    fn no_flux(mut m: crate::params::MotorParams) -> crate::params::MotorParams {
        for h in &mut m.harmonics {
            h.amplitude = 0.0;
        }
        m
    }

    #[test]
    fn kernels_are_continuous_at_zero() {
        for f in [sin_over, one_minus_cos_over] {
            let below = f(0.99 * SERIES_THRESHOLD / T, T);
            let above = f(1.01 * SERIES_THRESHOLD / T, T);
            assert!((below - above).abs() < 1e-4 * T);
            assert!(f(0.0, T).is_finite());
        }
        assert_eq!(sin_over(0.0, T), T);
        assert_eq!(one_minus_cos_over(0.0, T), 0.0);
        let x = 1e-4;
        let a = exp_gap(1000.0 + x, 1000.0, T);
        let b = exp_gap(1000.0, 1000.0, T);
        assert!((a - b).abs() < 1e-12);
        assert!((b - T * (-0.1f64).exp()).abs() < 1e-18);
    }

    #[test]
    fn rotation_properties() {
        assert_eq!(rotation(0.0, T), Matrix2::identity());
        let full = rotation(2.0 * PI / T, T);
        assert!((full - Matrix2::identity()).norm() < 1e-12);
        for (w, t) in [(1400.0, T), (-3e4, 2.3e-4), (7.0, 0.5)] {
            let r = rotation(w, t);
            assert!((r * r.transpose() - Matrix2::identity()).norm() < 1e-14);
            assert!((rotation(w, t) * rotation(w, 0.3 * t) - rotation(w, 1.3 * t)).norm() < 1e-14);
        }
    }

    #[test]
    fn healthy_transition_limits() {
        let mut m = fixture::motor();
        m.l_q = m.l_d;
        m.r_c = 0.0;
        let round = Model::new(m, fixture::winding(), FaultConfig::healthy()).unwrap();
        let e = healthy_transition(&round, 0.0, T, &FULL);
        let expected = (-0.727 * T / 3.29e-3).exp();
        assert!((e - Matrix2::identity() * expected).norm() < 1e-15);

        let model = fixture::healthy_model();
        let d = model.derived;
        let e = healthy_transition(&model, 0.0, T, &FULL);
        let decay = (-d.rho_star * T).exp();
        let want = Matrix2::new(decay * (1.0 + d.delta_star * T), 0.0, 0.0, decay * (1.0 - d.delta_star * T));
        assert!((e - want).norm() < 1e-15);
    }

    #[test]
    fn healthy_transition_matches_expm() {
        let model = fixture::healthy_model();
        let e = healthy_transition(&model, 1400.0, T, &FULL);
        let reference = expm(&(healthy_system_matrix(&model, 1400.0) * T));
        let err = (e - reference).norm();
        assert!(err <= 5e-4, "{err}");
    }

    #[test]
    fn input_matrix_limits() {
        let mut m = fixture::motor();
        m.l_q = m.l_d;
        let round = Model::new(m, fixture::winding(), FaultConfig::healthy()).unwrap();
        let rho = round.derived.rho_star;
        let b = input_matrix(&round, 0.0, T, &FULL);
        let want = Matrix2::identity() * ((1.0 - (-rho * T).exp()) / rho / 3.29e-3);
        assert!((b - want).norm() < 1e-12 * want.norm());

        let model = fixture::healthy_model();
        let rho = model.derived.rho_star;
        let b = input_matrix(&model, 2.0 * PI / T, T, &FULL);
        let want = Matrix2::new(1.0 / 3.29e-3, 0.0, 0.0, 1.0 / 3.12e-3) * ((1.0 - (-rho * T).exp()) / rho);
        assert!((b - want).norm() < 1e-9 * want.norm());
    }

    #[test]
    fn flux_vector_zero_speed() {
        let mut m = fixture::motor();
        m.harmonics.push(FluxHarmonic::new(5, 1e-3, 0.3));
        m.harmonics.push(FluxHarmonic::new(7, 1e-3, -0.3));
        let model = Model::new(m, fixture::winding(), FaultConfig::healthy()).unwrap();
        for theta in [0.0, 1.0, 3.0] {
            assert!(flux_vector(&model, 0.0, theta, T, &FULL).norm() < 1e-18);
        }
    }

    #[test]
    fn integral_approx_limits() {
        let (i1, i2) = integral_approx(300.0, 0.0, 3, T);
        assert_eq!(i1, 0.0);
        assert!((i2 - T * (-150.0 * T).exp()).abs() < 1e-20);
        for n in [1, 2, 6] {
            let w = 2500.0;
            let (i1, i2) = integral_approx(0.0, w, n, T);
            let nw = n as f64 * w;
            assert!((i1 - (1.0 - (nw * T).cos()) / nw).abs() < 1e-18);
            assert!((i2 - (nw * T).sin() / nw).abs() < 1e-18);
        }
    }

    #[test]
    fn fault_decay_without_saliency() {
        let mut m = fixture::motor();
        m.l_q = m.l_d;
        let model = Model::new(m, fixture::winding(), fixture::fault(0.4, 1.74e-3)).unwrap();
        let b = model.branch().unwrap();
        for w in [0.0, 1400.0, -9000.0] {
            let (a_f, lk, lk1) = fault_decay(b, w, 0.7, T, &FULL);
            assert!((a_f - (-b.r_f_star * T / b.l_f1).exp()).abs() < 1e-15);
            assert_eq!(lk, lk1);
            let (b_f, q_f) = fault_input_coeffs(&model, b, w, 0.7, T, &FULL);
            let g = b.l_f1 / b.r_f_star * (1.0 - (-b.r_f_star * T / b.l_f1).exp());
            assert!((b_f - g * Vector2::new(0.7f64.cos(), -0.7f64.sin())).norm() < 1e-15);
            assert!(q_f.is_finite());
        }
    }

    #[test]
    fn fault_decay_zero_speed_limit() {
        let model = fixture::model(0.4, 1.74e-3);
        let b = model.branch().unwrap();
        let theta = 0.4;
        let (a_f, _, _) = fault_decay(b, 0.0, theta, T, &FULL);
        let a = b.r_f_star / b.l_f1;
        let h_f = T * (2.0 * theta).cos();
        let want = (-a * T).exp() * (1.0 + b.l_f2 / b.l_f1 * a * h_f);
        assert!((a_f - want).abs() < 1e-15);
    }

    #[test]
    fn no_triplen_flux_gives_zero_q_f() {
        let mut m = fixture::motor();
        m.harmonics.retain(|h| h.order == 1);
        m.harmonics.push(FluxHarmonic::new(5, 1e-3, 0.3));
        let model = Model::new(m, fixture::winding(), fixture::fault(0.4, 1.74e-3)).unwrap();
        let (_, q_f) = fault_input_coeffs(&model, model.branch().unwrap(), 1400.0, 0.3, T, &FULL);
        assert_eq!(q_f, 0.0);
    }

    #[test]
    fn zero_connection_resistance_gives_block_diagonal_phi() {
        let model = fixture::model_without_rc(0.4, 1.74e-3);
        let c = step_coefficients(&model, 1400.0, 0.9, T, &FULL);
        let f = c.fault.unwrap();
        assert_eq!(f.delta_h, Matrix2::zeros());
        assert_eq!(f.delta_f, Matrix2::zeros());
        for k in 0..2 {
            assert_eq!(c.phi[(k, 2)], 0.0);
            assert_eq!(c.phi[(2, k)], 0.0);
        }
    }

    #[test]
    fn healthy_phi_has_zero_fault_row() {
        let model = fixture::healthy_model();
        let c = step_coefficients(&model, 1400.0, 0.9, T, &FULL);
        assert!(c.fault.is_none());
        for k in 0..3 {
            assert_eq!(c.phi[(k, 2)], 0.0);
            assert_eq!(c.phi[(2, k)], 0.0);
        }
        assert_eq!(c.phi.fixed_view::<2, 2>(0, 0).into_owned(), c.e_k);
    }

    #[test]
    fn coupled_gap_singularity_is_removable() {
        // Choose R_c so that rho* equals R_f*/L_f1 exactly.
        let model = fixture::model(0.4, 1.74e-3);
        let b = *model.branch().unwrap();
        let m = &model.motor;
        let k_rho = (m.l_d + m.l_q) / (2.0 * m.l_d * m.l_q);
        // rho* = (R_s + R_c) k_rho and R_f*/L_f1 = (R_f + 2/3 ratio R_c)/L_f1.
        let r_c = (b.r_f / b.l_f1 - m.r_s * k_rho) / (k_rho - 2.0 / 3.0 * b.ratio / b.l_f1);
        let mut motor = model.motor.clone();
        motor.r_c = r_c;
        let model = Model::new(motor, model.winding, model.fault).unwrap();
        let b = model.branch().unwrap();
        assert!((model.derived.rho_star - b.r_f_star / b.l_f1).abs() * T < 1e-9);
        let c = step_coefficients(&model, 1400.0, 0.2, T, &FULL);
        assert!(c.all_finite());
        let f = c.fault.unwrap();
        let decay = (-model.derived.rho_star * T).exp();
        let dh = -2.0 / 3.0 * b.ratio * r_c * decay * T;
        assert!((f.delta_h[(0, 0)] - dh * (1400.0 * T).cos() / m.l_d).abs() < 1e-6 * dh.abs() / m.l_d);
    }

    #[test]
    fn fixture_spectral_radius_below_one() {
        for sigma in [3.0 / 25.0, 6.0 / 25.0, 10.0 / 25.0] {
            for r in fixture::R_FIU {
                let model = fixture::model(sigma, r);
                for k in -20..=20 {
                    let w = k as f64 / 20.0 * 2.0 * PI / T;
                    let c = step_coefficients(&model, w, 0.37 * k as f64, T, &FULL);
                    let rho = spectral_radius(&c.phi);
                    assert!(rho < 1.0, "sigma {sigma} R {r} w {w}: {rho}");
                }
            }
        }
    }

    #[test]
    fn zero_state_no_flux_stays_zero() {
        let mut m = no_flux(fixture::motor());
        m.harmonics.retain(|h| h.order == 1);
        let model = Model::new(m, fixture::winding(), fixture::fault(0.4, 1.74e-3)).unwrap();
        let inp = StepInput {
            u_d: 0.0,
            u_q: 0.0,
            omega: 1400.0,
            theta: 0.5,
            u_m: 0.0,
            t_s: T,
        };
        assert_eq!(dtm_step(&ModelState::default(), &inp, &model, &FULL).unwrap(), ModelState::default());
    }

    #[test]
    fn zero_speed_round_rotor_is_exact_rl() {
        let mut m = fixture::motor();
        m.l_q = m.l_d;
        m.r_c = 0.0;
        let model = Model::new(m, fixture::winding(), FaultConfig::healthy()).unwrap();
        let inp = StepInput {
            u_d: 4.0,
            u_q: -2.0,
            omega: 0.0,
            theta: 0.0,
            u_m: 0.0,
            t_s: T,
        };
        let s = ModelState::new(1.0, 3.0, 0.0);
        let n = dtm_step(&s, &inp, &model, &FULL).unwrap();
        let e = (-0.727 * T / 3.29e-3).exp();
        assert!((n.i_dh - (e * 1.0 + (1.0 - e) * 4.0 / 0.727)).abs() < 1e-13);
        assert!((n.i_qh - (e * 3.0 - (1.0 - e) * 2.0 / 0.727)).abs() < 1e-13);
    }

    #[test]
    fn one_step_matches_oracle() {
        let model = fixture::model(0.4, 1.74e-3);
        let cfg = IntegrationConfig::default();
        let b = model.branch().unwrap();
        for (k, theta) in [0.1, 1.3, 2.9, 4.4, 5.8].iter().enumerate() {
            let s = ModelState::new(-0.5 + 0.2 * k as f64, 4.0, 20.0 - 5.0 * k as f64);
            let inp = StepInput {
                u_d: -3.0,
                u_q: 27.0,
                omega: 1400.0,
                theta: *theta,
                u_m: 0.0,
                t_s: T,
            };
            let n = dtm_step(&s, &inp, &model, &FULL).unwrap();
            let o = integrate_step(&s, &inp, &model, &cfg).unwrap();
            for (x, y) in n.to_array().iter().zip(o.to_array()) {
                assert!((x - y).abs() <= 1e-3 * y.abs().max(1.0), "{n:?} vs {o:?}");
            }
            assert!(b.tau_f > T);
        }
    }

    #[test]
    fn euler_matches_zoh_to_second_order() {
        let mut m = fixture::motor();
        m.l_q = m.l_d;
        m.r_c = 0.0;
        m.harmonics.retain(|h| h.order == 1);
        let model = Model::new(m, fixture::winding(), FaultConfig::healthy()).unwrap();
        let s = ModelState::new(1.0, 2.0, 0.0);
        let gap = |t_s: f64| {
            let inp = StepInput {
                u_d: 5.0,
                u_q: 1.0,
                omega: 0.0,
                theta: 0.0,
                u_m: 0.0,
                t_s,
            };
            let a = euler_step(&s, &inp, &model);
            let b = dtm_step(&s, &inp, &model, &FULL).unwrap();
            (a.i_dh - b.i_dh).abs() + (a.i_qh - b.i_qh).abs()
        };
        let ratio = gap(T) / gap(T / 2.0);
        assert!((ratio - 4.0).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn euler_amplification_in_instability_regime() {
        let model = fixture::model(3.0 / 25.0, 442e-3);
        let b = model.branch().unwrap();
        assert!(b.euler_factor(T) > 1.0);
        let mut s = ModelState::new(0.0, 2.0, 1.0);
        let inp = StepInput {
            u_d: 0.0,
            u_q: 30.0,
            omega: 1900.0,
            theta: 0.0,
            u_m: 0.0,
            t_s: T,
        };
        let mut grew = false;
        for k in 0..1000 {
            let i = StepInput {
                theta: crate::frames::wrap_angle(1900.0 * T * k as f64),
                ..inp
            };
            s = euler_step(&s, &i, &model);
            if !s.i_f.is_finite() || s.i_f.abs() > 1e6 {
                grew = true;
                break;
            }
        }
        assert!(grew);
    }

    #[test]
    fn simplified_mode_drops_kernel_terms() {
        let model = fixture::model(0.4, 1.74e-3);
        let simp = DtmOptions { simplified: true };
        let c = step_coefficients(&model, 1400.0, 0.5, T, &simp);
        let decay = (-model.derived.rho_star * T).exp();
        let m = &model.motor;
        let l = Matrix2::new(m.l_d, 0.0, 0.0, m.l_q);
        let want = decay * l.try_inverse().unwrap() * rotation(1400.0, T) * l;
        assert!((c.e_k - want).norm() < 1e-15);
        let b = model.branch().unwrap();
        assert_eq!(c.fault.unwrap().a_f, (-b.r_f_star / b.l_f1 * T).exp());
        let full = step_coefficients(&model, 1400.0, 0.5, T, &FULL);
        assert!((full.e_k - c.e_k).norm() > 0.0);
    }
}

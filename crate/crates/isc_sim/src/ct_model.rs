//! Continuous-time machine equations in the rotor (dq) and stator (abc)
//! frames, output coupling, torque and energy.
//!
//! The dq path is the production model. The abc path rebuilds the same
//! physics from the θ-dependent inductance matrix and only serves as an
//! independent cross-check (it supports `R_c = 0` only).

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::{
    inverse_park, pm_flux_abc, pm_flux_abc_slope, pm_flux_dq, zero_sequence_flux, AbcTriple, DqPair,
};
use crate::params::{FaultBranch, Model};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("non-finite state or input")]
    NonFinite,
    #[error("inductance matrix is singular at theta = {0}")]
    SingularInductance(f64),
    #[error("abc cross-check model does not support a connection resistance (R_c = {0})")]
    ConnectionResistanceUnsupported(f64),
}

/// Healthy-part dq currents and the fault current.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelState {
    pub i_dh: f64,
    pub i_qh: f64,
    pub i_f: f64,
}

impl ModelState {
    pub fn new(i_dh: f64, i_qh: f64, i_f: f64) -> Self {
        Self { i_dh, i_qh, i_f }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.i_dh, self.i_qh, self.i_f]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn is_finite(&self) -> bool {
        self.i_dh.is_finite() && self.i_qh.is_finite() && self.i_f.is_finite()
    }

    pub fn max_abs(&self) -> f64 {
        self.i_dh.abs().max(self.i_qh.abs()).max(self.i_f.abs())
    }

    pub fn healthy(&self) -> DqPair {
        DqPair::new(self.i_dh, self.i_qh)
    }
}

/// Per-step exogenous drive signals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInput {
    pub u_d: f64,
    pub u_q: f64,
    pub omega: f64,
    pub theta: f64,
    pub u_m: f64,
    pub t_s: f64,
}

impl StepInput {
    pub fn u_dq(&self) -> DqPair {
        DqPair::new(self.u_d, self.u_q)
    }

    /// Instantaneous drive at the start of the step.
    pub fn excitation(&self) -> Excitation {
        Excitation {
            u: self.u_dq(),
            theta: self.theta,
            omega: self.omega,
        }
    }
}

/// Instantaneous dq voltage, rotor angle and electrical speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Excitation {
    pub u: DqPair,
    pub theta: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateDerivative {
    pub d_i_dh: f64,
    pub d_i_qh: f64,
    pub d_i_f: f64,
}

impl StateDerivative {
    pub fn to_array(self) -> [f64; 3] {
        [self.d_i_dh, self.d_i_qh, self.d_i_f]
    }
}

/// Unit projection v = (cos(θ+φ_f), −sin(θ+φ_f)) of the faulted phase.
pub fn fault_projection(theta: f64, phi_f: f64) -> DqPair {
    let (s, c) = (theta + phi_f).sin_cos();
    DqPair::new(c, -s)
}

/// dq right-hand side including the connection-resistance couplings.
pub fn dq_rhs(state: &ModelState, ex: &Excitation, model: &Model) -> Result<StateDerivative, ModelError> {
    if !state.is_finite() || !ex.u.d.is_finite() || !ex.u.q.is_finite() || !ex.theta.is_finite() || !ex.omega.is_finite()
    {
        return Err(ModelError::NonFinite);
    }
    let m = &model.motor;
    let r = m.r_s + m.r_c;
    let (w, th) = (ex.omega, ex.theta);
    let lam = pm_flux_dq(&m.harmonics, th);

    let mut vd = ex.u.d - r * state.i_dh + w * (m.l_q * state.i_qh + lam.q);
    let mut vq = ex.u.q - r * state.i_qh - w * (m.l_d * state.i_dh + lam.d);

    let d_i_f = match model.branch() {
        Some(b) => {
            let v = fault_projection(th, b.phi_f);
            let k = 2.0 / 3.0 * b.ratio * m.r_c * state.i_f;
            vd -= k * v.d;
            vq -= k * v.q;
            let (_, dl0) = zero_sequence_flux(&m.harmonics, th);
            let beta = 2.0 * th - b.phi_f;
            let l_f = b.l_f1 + b.l_f2 * beta.cos();
            let dl_f = -2.0 * w * b.l_f2 * beta.sin();
            let flux_rate = -b.r_f_star * state.i_f + ex.u.dot(&v) - m.r_c * state.healthy().dot(&v) + w * dl0;
            (flux_rate - state.i_f * dl_f) / l_f
        }
        None => 0.0,
    };
    Ok(StateDerivative {
        d_i_dh: vd / m.l_d,
        d_i_qh: vq / m.l_q,
        d_i_f,
    })
}

/// Convenience wrapper evaluating [`dq_rhs`] at the start of a step.
pub fn dq_rhs_at_step(state: &ModelState, input: &StepInput, model: &Model) -> Result<StateDerivative, ModelError> {
    dq_rhs(state, &input.excitation(), model)
}

/// Healthy-part abc currents and the fault current.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AbcState {
    pub i_h: AbcTriple,
    pub i_f: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AbcDerivative {
    pub d_i_h: AbcTriple,
    pub d_i_f: f64,
}

/// θ-dependent stator inductance matrix and its θ-derivative.
pub fn inductance_matrix(model: &Model, theta: f64) -> (Matrix3<f64>, Matrix3<f64>) {
    let p = model.motor.abc_inductances();
    let mut l = Matrix3::zeros();
    let mut dl = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let arg = 2.0 * theta - (i + j) as f64 * 2.0 * PI / 3.0;
            let base = if i == j { p.l_s } else { -p.l_m };
            l[(i, j)] = base + p.l_fl * arg.cos();
            dl[(i, j)] = -2.0 * p.l_fl * arg.sin();
        }
    }
    (l, dl)
}

/// Fault-loop inductance built from the faulted phase self inductance, and its θ-derivative.
fn abc_fault_inductance(model: &Model, b: &FaultBranch, theta: f64) -> (f64, f64) {
    let (l, dl) = inductance_matrix(model, theta);
    let x = model.fault.phase.index();
    let n_p = model.winding.n_p as f64;
    let n_s = model.winding.n_s as f64;
    let k = b.ratio * n_p * (n_s - 1.0);
    let l_f = k * l[(x, x)] + b.ratio * model.motor.l_0 / 3.0 + model.fault.l_wire / b.ratio;
    (l_f, k * dl[(x, x)])
}

fn to_vec(x: AbcTriple) -> Vector3<f64> {
    Vector3::new(x.a, x.b, x.c)
}

fn from_vec(v: Vector3<f64>) -> AbcTriple {
    AbcTriple::new(v[0], v[1], v[2])
}

/// abc right-hand side driven by terminal potentials `u_t` and the offset `u_m`.
pub fn abc_rhs(
    state: &AbcState,
    u_t: AbcTriple,
    u_m: f64,
    theta: f64,
    omega: f64,
    model: &Model,
) -> Result<AbcDerivative, ModelError> {
    let m = &model.motor;
    if m.r_c != 0.0 {
        return Err(ModelError::ConnectionResistanceUnsupported(m.r_c));
    }
    let (l, dl) = inductance_matrix(model, theta);
    let i = to_vec(state.i_h);
    let (_, dl0) = zero_sequence_flux(&m.harmonics, theta);
    let offset = u_m - omega * dl0;
    let rhs = to_vec(u_t) - Vector3::repeat(offset) - m.r_s * i - omega * (dl * i)
        - omega * to_vec(pm_flux_abc_slope(&m.harmonics, theta));
    let di = l
        .lu()
        .solve(&rhs)
        .ok_or(ModelError::SingularInductance(theta))?;
    if !di.iter().all(|v| v.is_finite()) {
        return Err(ModelError::NonFinite);
    }

    let d_i_f = match model.branch() {
        Some(b) => {
            let (l_f, dl_f) = abc_fault_inductance(model, b, theta);
            let u_x = u_t.get(model.fault.phase.index());
            let flux_rate = u_x - u_m - b.r_f * state.i_f + omega * dl0;
            (flux_rate - omega * dl_f * state.i_f) / l_f
        }
        None => 0.0,
    };
    Ok(AbcDerivative {
        d_i_h: from_vec(di),
        d_i_f,
    })
}

/// Measured-side currents.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct CurrentOutputs {
    pub i_d: f64,
    pub i_q: f64,
    pub i_abc: AbcTriple,
    /// Current between the parallel branches. Assumes negligible
    /// segment-linking resistance, which matters only for n_p > 1.
    pub i_p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Outputs {
    pub currents: CurrentOutputs,
    pub t_e: f64,
    pub u_0: f64,
}

pub fn output_currents(state: &ModelState, theta: f64, model: &Model) -> CurrentOutputs {
    let (i_d, i_q) = match model.branch() {
        Some(b) => {
            let v = fault_projection(theta, b.phi_f);
            let k = 2.0 / 3.0 * b.ratio * state.i_f;
            (state.i_dh + k * v.d, state.i_qh + k * v.q)
        }
        None => (state.i_dh, state.i_qh),
    };
    let i_abc = inverse_park(DqPair::new(i_d, i_q), theta);
    let n_p = model.winding.n_p as f64;
    let i_p = match model.branch() {
        Some(b) => (n_p - 1.0) / n_p * (i_abc.get(model.fault.phase.index()) - b.ratio * state.i_f),
        None => 0.0,
    };
    CurrentOutputs { i_d, i_q, i_abc, i_p }
}

/// Electromagnetic torque.
pub fn torque(state: &ModelState, theta: f64, model: &Model) -> f64 {
    let m = &model.motor;
    let pp = m.pole_pairs as f64;
    let lam = pm_flux_dq(&m.harmonics, theta);
    let mut t = 1.5 * pp * (lam.d * state.i_qh - lam.q * state.i_dh + (m.l_d - m.l_q) * state.i_dh * state.i_qh);
    if let Some(b) = model.branch() {
        let (_, dl0) = zero_sequence_flux(&m.harmonics, theta);
        t -= pp * b.ratio * b.l_f2 * state.i_f * state.i_f * (2.0 * theta - b.phi_f).sin();
        t -= pp * b.ratio * state.i_f * dl0;
    }
    t
}

/// Magnetic field energy ½ i_hᵀ L i_h + ½ (σ/n_s) L_f i_f².
pub fn stored_field_energy(i_h: AbcTriple, i_f: f64, theta: f64, model: &Model) -> f64 {
    let (l, _) = inductance_matrix(model, theta);
    let i = to_vec(i_h);
    let mut w = 0.5 * i.dot(&(l * i));
    if let Some(b) = model.branch() {
        let (l_f, _) = abc_fault_inductance(model, b, theta);
        w += 0.5 * b.ratio * l_f * i_f * i_f;
    }
    w
}

/// Coupling energy with abc healthy currents held fixed.
pub fn coupling_energy_abc(i_h: AbcTriple, i_f: f64, theta: f64, model: &Model) -> f64 {
    let m = &model.motor;
    let mut w = stored_field_energy(i_h, i_f, theta, model) + i_h.dot(&pm_flux_abc(&m.harmonics, theta));
    if let Some(b) = model.branch() {
        w -= b.ratio * i_f * zero_sequence_flux(&m.harmonics, theta).0;
    }
    w
}

pub fn coupling_energy(state: &ModelState, theta: f64, model: &Model) -> f64 {
    coupling_energy_abc(inverse_park(state.healthy(), theta), state.i_f, theta, model)
}

/// Star-point potential.
pub fn center_point_potential(
    state: &ModelState,
    deriv: &StateDerivative,
    theta: f64,
    omega: f64,
    u_m: f64,
    model: &Model,
) -> f64 {
    let m = &model.motor;
    let (_, dl0) = zero_sequence_flux(&m.harmonics, theta);
    let mut u0 = u_m - omega * dl0;
    if let Some(b) = model.branch() {
        u0 += b.ratio * (m.r_s * state.i_f + m.l_0 * deriv.d_i_f) / 3.0;
    }
    u0
}

/// Full output set at one instant.
pub fn outputs(state: &ModelState, ex: &Excitation, u_m: f64, model: &Model) -> Result<Outputs, ModelError> {
    let deriv = dq_rhs(state, ex, model)?;
    Ok(Outputs {
        currents: output_currents(state, ex.theta, model),
        t_e: torque(state, ex.theta, model),
        u_0: center_point_potential(state, &deriv, ex.theta, ex.omega, u_m, model),
    })
}

/// Electrical power delivered to the healthy part and the fault loop (R_c = 0).
pub fn input_power(state: &AbcState, u_t: AbcTriple, u_m: f64, model: &Model) -> f64 {
    let mut p = state.i_h.dot(&(u_t - AbcTriple::splat(u_m)));
    if let Some(b) = model.branch() {
        p += b.ratio * state.i_f * (u_t.get(model.fault.phase.index()) - u_m);
    }
    p
}

/// Ohmic losses (R_c = 0).
pub fn heat_rate(state: &AbcState, model: &Model) -> f64 {
    let mut p = model.motor.r_s * state.i_h.dot(&state.i_h);
    if let Some(b) = model.branch() {
        p += b.ratio * b.r_f * state.i_f * state.i_f;
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::park;
    use crate::params::{fixture, FaultConfig, FaultPhase, FluxHarmonic};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(rng: &mut ChaCha8Rng, r_c: f64) -> Model {
        let mut m = fixture::motor();
        m.r_c = r_c;
        m.r_s = rng.gen_range(0.1..2.0);
        m.l_d = rng.gen_range(1e-3..5e-3);
        m.l_q = rng.gen_range(1e-3..5e-3);
        m.l_0 = rng.gen_range(0.5e-3..3e-3);
        m.harmonics = vec![
            FluxHarmonic::new(1, rng.gen_range(5e-3..3e-2), 0.0),
            FluxHarmonic::new(3, rng.gen_range(0.0..5e-4), rng.gen_range(-PI..PI)),
            FluxHarmonic::new(5, rng.gen_range(0.0..1e-3), rng.gen_range(-PI..PI)),
            FluxHarmonic::new(7, rng.gen_range(0.0..1e-3), rng.gen_range(-PI..PI)),
            FluxHarmonic::new(9, rng.gen_range(0.0..1e-4), rng.gen_range(-PI..PI)),
        ];
        let phase = [FaultPhase::A, FaultPhase::B, FaultPhase::C][rng.gen_range(0..3)];
        let f = FaultConfig {
            phase,
            sigma: rng.gen_range(0.05..1.0),
            r_sc: rng.gen_range(1e-3..0.5),
            l_wire: rng.gen_range(0.0..5e-6),
            active: true,
        };
        Model::new(m, fixture::winding(), f).unwrap()
    }

    /// Healthy-part and fault equations written separately, without the
    /// connection-resistance terms.
    fn uncoupled_rhs(s: &ModelState, ex: &Excitation, model: &Model) -> [f64; 3] {
        let m = &model.motor;
        let l = pm_flux_dq(&m.harmonics, ex.theta);
        let did = (ex.u.d - m.r_s * s.i_dh + ex.omega * m.l_q * s.i_qh + ex.omega * l.q) / m.l_d;
        let diq = (ex.u.q - m.r_s * s.i_qh - ex.omega * m.l_d * s.i_dh - ex.omega * l.d) / m.l_q;
        let b = model.branch().unwrap();
        let (_, dl0) = zero_sequence_flux(&m.harmonics, ex.theta);
        let ang = ex.theta + b.phi_f;
        let drive = ex.u.d * ang.cos() - ex.u.q * ang.sin();
        let l_f = b.l_f1 + b.l_f2 * (2.0 * ex.theta - b.phi_f).cos();
        let dl_f_dt = -2.0 * ex.omega * b.l_f2 * (2.0 * ex.theta - b.phi_f).sin();
        let dif = (drive - b.r_f * s.i_f + ex.omega * dl0 - dl_f_dt * s.i_f) / l_f;
        [did, diq, dif]
    }

    fn random_point(rng: &mut ChaCha8Rng) -> (ModelState, Excitation) {
        (
            ModelState::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0), rng.gen_range(-100.0..100.0)),
            Excitation {
                u: DqPair::new(rng.gen_range(-30.0..30.0), rng.gen_range(-30.0..30.0)),
                theta: rng.gen_range(0.0..2.0 * PI),
                omega: rng.gen_range(-3000.0..3000.0),
            },
        )
    }

    #[test]
    fn rl_degenerate_case() {
        let model = fixture::healthy_model();
        let mut m = model.motor.clone();
        m.r_c = 0.0;
        m.harmonics.retain(|h| h.order == 1);
        let model = Model::new(m, fixture::winding(), FaultConfig::healthy()).unwrap();
        let s = ModelState::new(2.0, -1.0, 0.0);
        let ex = Excitation {
            u: DqPair::new(3.0, 1.0),
            theta: 0.4,
            omega: 0.0,
        };
        let d = dq_rhs(&s, &ex, &model).unwrap();
        assert!((d.d_i_dh - (3.0 - 0.727 * 2.0) / 3.29e-3).abs() < 1e-9);
        assert!((d.d_i_qh - (1.0 + 0.727) / 3.12e-3).abs() < 1e-9);
        assert_eq!(d.d_i_f, 0.0);
    }

    #[test]
    fn zero_connection_resistance_reduces_to_uncoupled_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let model = random_model(&mut rng, 0.0);
            let (s, ex) = random_point(&mut rng);
            let a = dq_rhs(&s, &ex, &model).unwrap().to_array();
            let b = uncoupled_rhs(&s, &ex, &model);
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() <= 1e-12 * b[k].abs().max(1.0), "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn non_finite_state_is_rejected() {
        let model = fixture::model(0.4, 1.74e-3);
        let ex = Excitation {
            u: DqPair::default(),
            theta: 0.0,
            omega: 100.0,
        };
        assert_eq!(
            dq_rhs(&ModelState::new(f64::NAN, 0.0, 0.0), &ex, &model),
            Err(ModelError::NonFinite)
        );
    }

    #[test]
    fn inactive_fault_ignores_fault_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = fixture::healthy_model();
        for _ in 0..50 {
            let (s, ex) = random_point(&mut rng);
            let ref_d = dq_rhs(&s, &ex, &base).unwrap();
            let f = FaultConfig {
                sigma: rng.gen_range(0.0..1.0),
                r_sc: rng.gen_range(1e-3..1.0),
                l_wire: rng.gen_range(0.0..1e-5),
                active: false,
                phase: FaultPhase::C,
            };
            let d = dq_rhs(&s, &ex, &base.with_fault(f).unwrap()).unwrap();
            assert_eq!(d, ref_d);
            assert_eq!(d.d_i_f, 0.0);
        }
    }

    #[test]
    fn inductance_matrix_projects_to_dq() {
        let model = fixture::model(0.4, 1e-3);
        for k in 0..12 {
            let theta = 0.5 * k as f64;
            let (l, _) = inductance_matrix(&model, theta);
            for (dq, expected) in [
                (DqPair::new(1.0, 0.0), DqPair::new(3.29e-3, 0.0)),
                (DqPair::new(0.0, 1.0), DqPair::new(0.0, 3.12e-3)),
            ] {
                let flux = from_vec(l * to_vec(inverse_park(dq, theta)));
                let got = park(flux, theta);
                assert!((got - expected).norm() < 1e-15);
            }
            let col = l.row_sum();
            for j in 0..3 {
                assert!((col[j] - 2.74e-3).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn abc_rhs_equilibrium() {
        let mut m = fixture::motor();
        m.r_c = 0.0;
        m.harmonics.retain(|h| h.order == 1);
        let model = Model::new(m, fixture::winding(), fixture::fault(0.4, 1e-3)).unwrap();
        let d = abc_rhs(&AbcState::default(), AbcTriple::default(), 0.0, 0.0, 0.0, &model).unwrap();
        assert_eq!(d.d_i_h, AbcTriple::default());
        assert_eq!(d.d_i_f, 0.0);
    }

    #[test]
    fn abc_rhs_rejects_connection_resistance() {
        let model = fixture::model(0.4, 1e-3);
        assert!(matches!(
            abc_rhs(&AbcState::default(), AbcTriple::default(), 0.0, 0.0, 0.0, &model),
            Err(ModelError::ConnectionResistanceUnsupported(_))
        ));
    }

    #[test]
    fn abc_and_dq_right_hand_sides_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let model = random_model(&mut rng, 0.0);
            let (s, ex) = random_point(&mut rng);
            let u_m = rng.gen_range(-5.0..5.0);
            let dq = dq_rhs(&s, &ex, &model).unwrap();
            let abc_state = AbcState {
                i_h: inverse_park(s.healthy(), ex.theta),
                i_f: s.i_f,
            };
            let u_t = inverse_park(ex.u, ex.theta) + AbcTriple::splat(u_m);
            let d = abc_rhs(&abc_state, u_t, u_m, ex.theta, ex.omega, &model).unwrap();
            assert!(d.d_i_h.sum().abs() < 1e-9 * (1.0 + dq.d_i_dh.abs() + dq.d_i_qh.abs()));
            // d/dt of the dq currents is Park of the abc derivative plus the rotation term.
            let rot = DqPair::new(ex.omega * s.i_qh, -ex.omega * s.i_dh);
            let got = park(d.d_i_h, ex.theta) + rot;
            let want = DqPair::new(dq.d_i_dh, dq.d_i_qh);
            assert!((got - want).norm() <= 1e-9 * want.norm().max(1.0), "{got:?} vs {want:?}");
            assert!((d.d_i_f - dq.d_i_f).abs() <= 1e-9 * dq.d_i_f.abs().max(1.0));
        }
    }

    #[test]
    fn output_examples() {
        let model = fixture::model(0.4, 1.74e-3);
        let s = ModelState::new(1.5, -2.0, 0.0);
        let o = output_currents(&s, 0.3, &model);
        assert_eq!((o.i_d, o.i_q), (1.5, -2.0));
        assert_eq!(o.i_p, 0.0);

        let s = ModelState::new(0.0, 0.0, 1.0);
        let o = output_currents(&s, 0.0, &model);
        assert!((o.i_d - 2.0 / 3.0 / 15.0).abs() < 1e-15);
        assert!((o.i_d - 0.0444).abs() < 1e-4);
        assert!(o.i_q.abs() < 1e-15);
        assert!(o.i_abc.sum().abs() < 1e-12);
    }

    #[test]
    fn parallel_branch_current() {
        let mut model = fixture::model(0.4, 1.74e-3);
        model.winding.n_p = 2;
        let model = model.with_fault(model.fault).unwrap();
        let s = ModelState::new(3.0, 1.0, 5.0);
        let o = output_currents(&s, 0.7, &model);
        let b = model.branch().unwrap();
        assert!((o.i_p - 0.5 * (o.i_abc.a - b.ratio * 5.0)).abs() < 1e-12);
    }

    #[test]
    fn torque_examples() {
        let mut m = fixture::motor();
        m.l_q = m.l_d;
        m.harmonics.retain(|h| h.order == 1);
        let model = Model::new(m, fixture::winding(), FaultConfig::healthy()).unwrap();
        let t = torque(&ModelState::new(0.7, 4.0, 0.0), 1.1, &model);
        assert!((t - 1.5 * 21.0 * 18.4e-3 * 4.0).abs() < 1e-12);
        assert_eq!(torque(&ModelState::default(), 0.3, &fixture::model(0.4, 1e-3)), 0.0);
    }

    #[test]
    fn torque_matches_energy_slope() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let h = 1e-7;
        let mut worst = 0.0f64;
        for _ in 0..200 {
            let model = random_model(&mut rng, 0.0);
            let (s, ex) = random_point(&mut rng);
            let i_h = inverse_park(s.healthy(), ex.theta);
            let w = |th: f64| coupling_energy_abc(i_h, s.i_f, th, &model);
            let fd = (w(ex.theta + h) - w(ex.theta - h)) / (2.0 * h);
            let te = torque(&s, ex.theta, &model);
            let pp = model.motor.pole_pairs as f64;
            worst = worst.max((te - pp * fd).abs() / te.abs().max(1e-3));
        }
        assert!(worst < 1e-6, "worst relative gap {worst}");
    }

    #[test]
    fn energy_examples() {
        let model = fixture::model(0.4, 1e-3);
        assert_eq!(coupling_energy(&ModelState::default(), 0.9, &model), 0.0);

        let mut m = fixture::motor();
        m.harmonics.retain(|h| h.order == 1);
        let model = Model::new(m, fixture::winding(), FaultConfig::healthy()).unwrap();
        for theta in [0.0, 0.4, 2.5] {
            let i_d = 3.0;
            let w = coupling_energy(&ModelState::new(i_d, 0.0, 0.0), theta, &model);
            let expected = 0.5 * 1.5 * 3.29e-3 * i_d * i_d + 1.5 * 18.4e-3 * i_d;
            assert!((w - expected).abs() < 1e-12 * expected);
        }
    }

    #[test]
    fn center_point_examples() {
        let mut m = fixture::motor();
        m.harmonics.retain(|h| h.order == 1);
        let healthy = Model::new(m, fixture::winding(), FaultConfig::healthy()).unwrap();
        let d = StateDerivative::default();
        assert_eq!(center_point_potential(&ModelState::new(1.0, 2.0, 0.0), &d, 0.3, 900.0, 4.0, &healthy), 4.0);
        assert_eq!(center_point_potential(&ModelState::default(), &d, 0.0, 0.0, 0.0, &healthy), 0.0);

        let model = fixture::model(0.4, 1e-3);
        let u0 = center_point_potential(&ModelState::default(), &d, PI / 6.0, 1000.0, 1.5, &model);
        assert!((u0 - 2.1).abs() < 1e-12);
    }
}

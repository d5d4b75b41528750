#![allow(dead_code)]

use std::f64::consts::PI;

use isc_sim::ct_model::{torque, AbcState, ModelState};
use isc_sim::frames::{park, terminal_potentials, DqPair};
use isc_sim::oracle::{composite_simpson, integrate_abc_step};
use isc_sim::params::{fixture, FaultConfig, FaultPhase, FluxHarmonic, Model};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random salient machine with triplen and non-triplen harmonics, no
/// connection resistance, and an active fault on a random phase.
pub fn random_model(rng: &mut ChaCha8Rng) -> Model {
    let mut m = fixture::motor();
    m.r_c = 0.0;
    m.r_s = rng.gen_range(0.1..2.0);
    m.l_d = rng.gen_range(1e-3..5e-3);
    m.l_q = rng.gen_range(1e-3..5e-3);
    m.l_0 = rng.gen_range(0.5e-3..3e-3);
    m.pole_pairs = rng.gen_range(1..30);
    m.harmonics = vec![
        FluxHarmonic::new(1, rng.gen_range(5e-3..3e-2), 0.0),
        FluxHarmonic::new(3, rng.gen_range(0.0..5e-4), rng.gen_range(-PI..PI)),
        FluxHarmonic::new(5, rng.gen_range(0.0..1e-3), rng.gen_range(-PI..PI)),
        FluxHarmonic::new(7, rng.gen_range(0.0..1e-3), rng.gen_range(-PI..PI)),
    ];
    let phase = [FaultPhase::A, FaultPhase::B, FaultPhase::C][rng.gen_range(0..3)];
    let fault = FaultConfig {
        phase,
        sigma: rng.gen_range(0.05..1.0),
        r_sc: rng.gen_range(5e-3..0.5),
        l_wire: rng.gen_range(0.0..5e-6),
        active: true,
    };
    Model::new(m, fixture::winding(), fault).unwrap()
}

pub fn random_state(rng: &mut ChaCha8Rng) -> ModelState {
    ModelState::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0), rng.gen_range(-100.0..100.0))
}

pub fn rel_rms(reference: &[f64], candidate: &[f64]) -> f64 {
    let num: f64 = reference.iter().zip(candidate).map(|(r, c)| (r - c) * (r - c)).sum();
    let den: f64 = reference.iter().map(|r| r * r).sum();
    (num / den).sqrt()
}

pub fn dq_of(state: &AbcState, theta: f64) -> ModelState {
    let h = park(state.i_h, theta);
    ModelState::new(h.d, h.q, state.i_f)
}

/// Worst per-step energy residual of the abc oracle, relative to the
/// absolute input energy of the step.
///
/// Input power equals ohmic loss plus the rate of stored magnetic energy
/// plus the mechanical power ω_e T_e / P_P.
pub fn power_balance_residual(model: &Model, u: DqPair, omega: f64, steps: usize, t_s: f64, substeps: usize) -> f64 {
    use isc_sim::ct_model::{heat_rate, input_power, stored_field_energy};
    let pp = model.motor.pole_pairs as f64;
    let mut state = AbcState::default();
    let mut theta = 0.3;
    let mut worst = 0.0f64;
    for _ in 0..steps {
        let u_t = terminal_potentials(u, theta, 0.0);
        let mut p_in = Vec::with_capacity(substeps + 1);
        let mut loss = Vec::with_capacity(substeps + 1);
        let mut mech = Vec::with_capacity(substeps + 1);
        let mut energy = Vec::with_capacity(substeps + 1);
        let next = integrate_abc_step(&state, u_t, 0.0, theta, omega, t_s, model, substeps, &mut |_, s, y| {
            let th = theta + omega * s;
            p_in.push(input_power(y, u_t, 0.0, model));
            loss.push(heat_rate(y, model));
            mech.push(omega * torque(&dq_of(y, th), th, model) / pp);
            energy.push(stored_field_energy(y.i_h, y.i_f, th, model));
        })
        .unwrap();
        let h = t_s / substeps as f64;
        let int = |v: &[f64]| composite_simpson(|t| v[(t / h).round() as usize], 0.0, t_s, substeps);
        let abs_in: Vec<f64> = p_in.iter().map(|p| p.abs()).collect();
        let residual = int(&p_in) - int(&loss) - int(&mech) - (energy[substeps] - energy[0]);
        worst = worst.max(residual.abs() / int(&abs_in));
        state = next;
        theta += omega * t_s;
    }
    worst
}

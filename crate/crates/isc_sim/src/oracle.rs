//! Brute-force reference solutions: fixed-step RK4 on the continuous model,
//! adaptive quadrature, dense matrix exponentials and trajectory metrics.
//!
//! Inside one sampling period the oracle applies the same input assumptions
//! as the discrete model: terminal potentials are held, so the dq voltages
//! rotate with the rotor, and the angle advances linearly. Any gap between
//! the two therefore comes from the coefficient approximations alone.

use nalgebra::Matrix2;
use serde::Serialize;
use thiserror::Error;

use crate::ct_model::{abc_rhs, dq_rhs, AbcState, Excitation, ModelError, ModelState, StepInput};
use crate::frames::AbcTriple;
use crate::params::Model;

pub const DEFAULT_SUBSTEPS: usize = 200;
pub const MIN_SUBSTEPS: usize = 10;
pub const DEFAULT_DIVERGENCE_BOUND: f64 = 1e6;
/// Below this reference norm the relative RMS falls back to an absolute RMS.
pub const RMS_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("integration diverged at substep {substep}")]
    Diverged { substep: usize },
    #[error("quadrature on [{a}, {b}] did not converge within {max_intervals} intervals")]
    NoConvergence { a: f64, b: f64, max_intervals: usize },
    #[error("trajectory lengths differ: reference {reference}, candidate {candidate}")]
    LengthMismatch { reference: usize, candidate: usize },
    #[error("substeps must be at least {MIN_SUBSTEPS}, got {0}")]
    TooFewSubsteps(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AngleMode {
    /// ω held per step, θ linear inside the step.
    Frozen,
    /// θ integrated from the smooth ω profile supplied by the caller.
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IntegrationConfig {
    pub substeps: usize,
    pub angle_mode: AngleMode,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            substeps: DEFAULT_SUBSTEPS,
            angle_mode: AngleMode::Frozen,
        }
    }
}

impl IntegrationConfig {
    pub fn with_substeps(substeps: usize) -> Result<Self, OracleError> {
        if substeps < MIN_SUBSTEPS {
            return Err(OracleError::TooFewSubsteps(substeps));
        }
        Ok(Self {
            substeps,
            ..Self::default()
        })
    }
}

/// Classical RK4 over `n` equal substeps of size `h`. `observe` sees every
/// grid point, including the start.
pub fn rk4<const N: usize, E>(
    f: &mut impl FnMut(f64, &[f64; N]) -> Result<[f64; N], E>,
    y0: [f64; N],
    h: f64,
    n: usize,
    observe: &mut impl FnMut(usize, f64, &[f64; N]),
) -> Result<[f64; N], E> {
    let axpy = |y: &[f64; N], k: &[f64; N], a: f64| {
        let mut out = *y;
        for i in 0..N {
            out[i] += a * k[i];
        }
        out
    };
    let mut y = y0;
    observe(0, 0.0, &y);
    for step in 0..n {
        let t = step as f64 * h;
        let k1 = f(t, &y)?;
        let k2 = f(t + 0.5 * h, &axpy(&y, &k1, 0.5 * h))?;
        let k3 = f(t + 0.5 * h, &axpy(&y, &k2, 0.5 * h))?;
        let k4 = f(t + h, &axpy(&y, &k3, h))?;
        for i in 0..N {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        observe(step + 1, (step + 1) as f64 * h, &y);
    }
    Ok(y)
}

fn check_finite<const N: usize>(y: &[f64; N], substep: usize) -> Result<(), OracleError> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(OracleError::Diverged { substep })
    }
}

/// Integrates one sampling period with an explicit angle track.
///
/// `track(s)` returns `(θ(s) − θ_k, ω(s))` for `s ∈ [0, T_s]`. Dq voltages
/// follow the held terminal potentials, `u(s) = T(θ(s) − θ_k)·u_k`.
pub fn integrate_step_with_track(
    state: &ModelState,
    input: &StepInput,
    model: &Model,
    substeps: usize,
    track: &impl Fn(f64) -> (f64, f64),
    observe: &mut impl FnMut(usize, f64, &ModelState),
) -> Result<ModelState, OracleError> {
    if substeps < MIN_SUBSTEPS {
        return Err(OracleError::TooFewSubsteps(substeps));
    }
    let u0 = input.u_dq();
    let h = input.t_s / substeps as f64;
    let mut count = 0usize;
    let mut rhs = |s: f64, y: &[f64; 3]| -> Result<[f64; 3], OracleError> {
        count += 1;
        let (dtheta, omega) = track(s);
        let ex = Excitation {
            u: u0.rotated(dtheta),
            theta: input.theta + dtheta,
            omega,
        };
        let d = dq_rhs(&ModelState::from_array(*y), &ex, model).map_err(|e| match e {
            ModelError::NonFinite => OracleError::Diverged { substep: count / 4 },
            other => OracleError::Model(other),
        })?;
        Ok(d.to_array())
    };
    let mut last_bad = None;
    let y = rk4(
        &mut rhs,
        state.to_array(),
        h,
        substeps,
        &mut |k, s, y: &[f64; 3]| {
            if last_bad.is_none() && check_finite(y, k).is_err() {
                last_bad = Some(k);
            }
            observe(k, s, &ModelState::from_array(*y));
        },
    )?;
    if let Some(substep) = last_bad {
        return Err(OracleError::Diverged { substep });
    }
    let mut out = ModelState::from_array(y);
    if model.branch().is_none() {
        out.i_f = 0.0;
    }
    Ok(out)
}

/// One sampling period with frozen ω and linear θ.
pub fn integrate_step(
    state: &ModelState,
    input: &StepInput,
    model: &Model,
    config: &IntegrationConfig,
) -> Result<ModelState, OracleError> {
    let omega = input.omega;
    integrate_step_with_track(
        state,
        input,
        model,
        config.substeps,
        &|s| (omega * s, omega),
        &mut |_, _, _| {},
    )
}

/// One sampling period of the abc model under held terminal potentials.
pub fn integrate_abc_step(
    state: &AbcState,
    u_t: AbcTriple,
    u_m: f64,
    theta: f64,
    omega: f64,
    t_s: f64,
    model: &Model,
    substeps: usize,
    observe: &mut impl FnMut(usize, f64, &AbcState),
) -> Result<AbcState, OracleError> {
    if substeps < MIN_SUBSTEPS {
        return Err(OracleError::TooFewSubsteps(substeps));
    }
    let h = t_s / substeps as f64;
    let pack = |s: &AbcState| [s.i_h.a, s.i_h.b, s.i_h.c, s.i_f];
    let unpack = |y: &[f64; 4]| AbcState {
        i_h: AbcTriple::new(y[0], y[1], y[2]),
        i_f: y[3],
    };
    let mut rhs = |s: f64, y: &[f64; 4]| -> Result<[f64; 4], OracleError> {
        let d = abc_rhs(&unpack(y), u_t, u_m, theta + omega * s, omega, model)?;
        Ok([d.d_i_h.a, d.d_i_h.b, d.d_i_h.c, d.d_i_f])
    };
    let y = rk4(&mut rhs, pack(state), h, substeps, &mut |k, s, y: &[f64; 4]| {
        observe(k, s, &unpack(y))
    })?;
    check_finite(&y, substeps)?;
    Ok(unpack(&y))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-14,
            rel_tol: 1e-12,
            max_intervals: 4096,
        }
    }
}

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gauss_kronrod(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod quadrature with global error control.
pub fn quadrature(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    config: &QuadratureConfig,
) -> Result<f64, OracleError> {
    if a == b {
        return Ok(0.0);
    }
    let (v, e) = gauss_kronrod(&mut f, a, b);
    let mut intervals = vec![(a, b, v, e)];
    loop {
        let total: f64 = intervals.iter().map(|x| x.2).sum();
        let err: f64 = intervals.iter().map(|x| x.3).sum();
        if !total.is_finite() {
            return Err(OracleError::NoConvergence {
                a,
                b,
                max_intervals: config.max_intervals,
            });
        }
        if err <= config.abs_tol.max(config.rel_tol * total.abs()) {
            return Ok(total);
        }
        if intervals.len() >= config.max_intervals {
            return Err(OracleError::NoConvergence {
                a,
                b,
                max_intervals: config.max_intervals,
            });
        }
        let (worst, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gauss_kronrod(&mut f, lo, mid);
        let (v2, e2) = gauss_kronrod(&mut f, mid, hi);
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
}

/// Composite Simpson rule with `n` (even) panels.
pub fn composite_simpson(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

/// Healthy-part system matrix of the dq model with series resistance `R_s + R_c`.
pub fn healthy_system_matrix(model: &Model, omega: f64) -> Matrix2<f64> {
    let m = &model.motor;
    let r = m.r_s + m.r_c;
    Matrix2::new(-r / m.l_d, omega * m.l_q / m.l_d, -omega * m.l_d / m.l_q, -r / m.l_q)
}

/// Dense matrix exponential (scaling and squaring with Padé).
pub fn expm(a: &Matrix2<f64>) -> Matrix2<f64> {
    a.exp()
}

pub fn spectral_radius(m: &nalgebra::Matrix3<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DivergenceConfig {
    pub bound: f64,
}

impl Default for DivergenceConfig {
    fn default() -> Self {
        Self {
            bound: DEFAULT_DIVERGENCE_BOUND,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignalError {
    pub name: String,
    /// ‖err‖₂/‖ref‖₂, or absolute RMS when ‖ref‖₂ is below the guard.
    pub rel_rms: f64,
    pub max_abs: f64,
    pub absolute_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub signals: Vec<SignalError>,
    pub diverged: bool,
    pub first_divergence: Option<usize>,
    pub horizon: usize,
}

impl ErrorReport {
    pub fn signal(&self, name: &str) -> Option<&SignalError> {
        self.signals.iter().find(|s| s.name == name)
    }

    pub fn max_rel_rms(&self) -> f64 {
        self.signals.iter().map(|s| s.rel_rms).fold(0.0, f64::max)
    }
}

pub fn is_divergent(v: f64, config: &DivergenceConfig) -> bool {
    !v.is_finite() || v.abs() > config.bound
}

/// Error metric of one scalar signal. Divergent candidates give infinite error.
pub fn compare_signal(name: &str, reference: &[f64], candidate: &[f64]) -> SignalError {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut max_abs = 0.0f64;
    for (r, c) in reference.iter().zip(candidate) {
        let e = c - r;
        num += e * e;
        den += r * r;
        max_abs = if e.is_nan() { f64::INFINITY } else { max_abs.max(e.abs()) };
    }
    let n = reference.len().max(1) as f64;
    let absolute_fallback = den.sqrt() < RMS_GUARD;
    let rel_rms = if num.is_nan() {
        f64::INFINITY
    } else if absolute_fallback {
        (num / n).sqrt()
    } else {
        (num / den).sqrt()
    };
    SignalError {
        name: name.to_string(),
        rel_rms,
        max_abs,
        absolute_fallback,
    }
}

/// Compares two state trajectories sample by sample.
pub fn compare_trajectories(
    reference: &[ModelState],
    candidate: &[ModelState],
    config: &DivergenceConfig,
) -> Result<ErrorReport, OracleError> {
    if reference.len() != candidate.len() {
        return Err(OracleError::LengthMismatch {
            reference: reference.len(),
            candidate: candidate.len(),
        });
    }
    let column = |v: &[ModelState], k: usize| v.iter().map(|s| s.to_array()[k]).collect::<Vec<_>>();
    let signals = ["i_dh", "i_qh", "i_f"]
        .iter()
        .enumerate()
        .map(|(k, name)| compare_signal(name, &column(reference, k), &column(candidate, k)))
        .collect();
    let first_divergence = candidate
        .iter()
        .position(|s| s.to_array().iter().any(|&v| is_divergent(v, config)));
    Ok(ErrorReport {
        signals,
        diverged: first_divergence.is_some(),
        first_divergence,
        horizon: reference.len(),
    })
}

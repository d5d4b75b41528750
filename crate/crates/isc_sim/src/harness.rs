//! Closed-loop scenarios that drive the oracle, the discrete model and the
//! Euler baseline with one shared input sequence.
//!
//! The current controller closes on the oracle. Its voltages, together with
//! the speed and angle sequence, are recorded once per step and replayed to
//! every engine, so differences between traces come from the engines alone.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ct_model::{output_currents, torque, ModelState, StepInput};
use crate::dtm::{self, DtmOptions};
use crate::frames::{inverse_park, wrap_angle, DqPair};
use crate::oracle::{
    compare_trajectories, integrate_step_with_track, is_divergent, AngleMode, DivergenceConfig, ErrorReport,
    IntegrationConfig, OracleError,
};
use crate::params::{FaultConfig, Model, ParamError};

/// CSV header shared by every engine trace.
pub const TRACE_HEADER: [&str; 12] = [
    "t", "theta_e", "omega_e", "u_d", "u_q", "i_d", "i_q", "i_f", "i_a", "i_b", "i_c", "T_e",
];

/// Slack on time comparisons, as a fraction of T_s.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

/// Piecewise-linear function of time, held constant outside its knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    points: Vec<(f64, f64)>,
}

impl Profile {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, HarnessError> {
        if points.is_empty() {
            return Err(HarnessError::Scenario("profile needs at least one point".into()));
        }
        if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
            return Err(HarnessError::Scenario("profile points must be finite".into()));
        }
        if points.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(HarnessError::Scenario("profile times must be non-decreasing".into()));
        }
        Ok(Self { points })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            points: vec![(0.0, value)],
        }
    }

    /// Linear ramp from `from` at `t0` to `to` at the given slope.
    pub fn ramp(from: f64, to: f64, t0: f64, slope: f64) -> Self {
        let t1 = t0 + (to - from).abs() / slope.abs();
        Self {
            points: vec![(t0, from), (t1, to)],
        }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn eval(&self, t: f64) -> f64 {
        let p = &self.points;
        if t <= p[0].0 {
            return p[0].1;
        }
        for w in p.windows(2) {
            let ((t0, v0), (t1, v1)) = (w[0], w[1]);
            if t <= t1 {
                return if t1 > t0 { v0 + (v1 - v0) * (t - t0) / (t1 - t0) } else { v1 };
            }
        }
        p[p.len() - 1].1
    }

    /// Exact integral over `[a, b]`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b < a {
            return -self.integral(b, a);
        }
        let mut knots: Vec<f64> = vec![a];
        knots.extend(self.points.iter().map(|p| p.0).filter(|&t| t > a && t < b));
        knots.push(b);
        knots
            .windows(2)
            .map(|w| 0.5 * (w[1] - w[0]) * (self.eval(w[0]) + self.eval(w[1])))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadKind {
    /// Load profile in N·m, mapped to i_q through the fundamental torque constant.
    Torque,
    /// Load profile is the i_q reference in A.
    Current,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UmPolicy {
    Zero,
    /// Min-max common-mode injection of the commanded phase voltages.
    MinMax,
}

/// Common-mode offset that centres the phase voltages, −(max + min)/2.
pub fn min_max_offset(u: DqPair, theta: f64) -> f64 {
    let v = inverse_park(u, theta).to_array();
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    -0.5 * (hi + lo)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PiGains {
    pub kp: DqPair,
    pub ki: DqPair,
    /// Back-calculation gain of the anti-windup path.
    pub k_aw: DqPair,
}

impl PiGains {
    /// Pole-zero cancellation: the closed loop is first order with the
    /// given bandwidth in rad/s.
    pub fn from_bandwidth(model: &Model, bandwidth: f64) -> Self {
        let m = &model.motor;
        let r = m.r_s + m.r_c;
        let kp = DqPair::new(bandwidth * m.l_d, bandwidth * m.l_q);
        let ki = DqPair::new(bandwidth * r, bandwidth * r);
        Self {
            kp,
            ki,
            k_aw: DqPair::new(ki.d / kp.d, ki.q / kp.q),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct PiState {
    pub integral: DqPair,
}

/// Scales `u` onto the circle of radius `v_limit` if it lies outside.
pub fn limit_circle(u: DqPair, v_limit: f64) -> DqPair {
    let n = u.norm();
    if n > v_limit {
        u * (v_limit / n)
    } else {
        u
    }
}

/// Discrete PI current controller with feedforward, circular voltage limit
/// and back-calculation anti-windup.
pub fn pi_current_loop(
    reference: DqPair,
    measured: DqPair,
    feedforward: DqPair,
    gains: &PiGains,
    v_limit: f64,
    t_s: f64,
    state: &mut PiState,
) -> DqPair {
    let e = reference - measured;
    let raw = DqPair::new(
        gains.kp.d * e.d + state.integral.d + feedforward.d,
        gains.kp.q * e.q + state.integral.q + feedforward.q,
    );
    let u = limit_circle(raw, v_limit);
    let excess = u - raw;
    state.integral.d += t_s * (gains.ki.d * e.d + gains.k_aw.d * excess.d);
    state.integral.q += t_s * (gains.ki.q * e.q + gains.k_aw.q * excess.q);
    u
}

/// Decoupling and back-EMF feedforward on the measured currents.
fn feedforward(model: &Model, i: DqPair, omega: f64) -> DqPair {
    let m = &model.motor;
    DqPair::new(-omega * m.l_q * i.q, omega * (m.l_d * i.d + m.lambda_1()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Engine {
    Oracle,
    Dtm,
    Euler,
}

impl Engine {
    pub const ALL: [Engine; 3] = [Engine::Oracle, Engine::Dtm, Engine::Euler];

    pub fn name(self) -> &'static str {
        match self {
            Engine::Oracle => "oracle",
            Engine::Dtm => "dtm",
            Engine::Euler => "euler",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub t_s: f64,
    pub duration: f64,
    pub velocity: Profile,
    pub load_kind: LoadKind,
    pub load: Profile,
    pub i_d_ref: f64,
    pub theta_0: f64,
    /// Fault onset. `None` or a time past `duration` gives a healthy run.
    pub t_f: Option<f64>,
    /// Fault applied from `t_f` on; schedules override σ and R_sc.
    pub fault: FaultConfig,
    pub sigma_schedule: Vec<(f64, f64)>,
    /// Fault-insertion resistance over time; R_sc = R_FIU + `r_wire`.
    pub r_fiu_schedule: Vec<(f64, f64)>,
    pub r_wire: f64,
    pub u_m: UmPolicy,
    pub seed: u64,
    /// Amplitude of uniform noise added to the commanded dq voltages, V.
    pub input_noise: f64,
    pub bandwidth: f64,
    pub v_limit: f64,
    pub integration: IntegrationConfig,
    pub dtm: DtmOptions,
    pub divergence: DivergenceConfig,
    pub tolerance: f64,
}

impl Scenario {
    /// Steady drive at constant speed and current reference, fault active
    /// from `t_f` with the given configuration.
    pub fn steady(omega: f64, i_q_ref: f64, duration: f64, t_s: f64, t_f: Option<f64>, fault: FaultConfig) -> Self {
        Self {
            t_s,
            duration,
            velocity: Profile::constant(omega),
            load_kind: LoadKind::Current,
            load: Profile::constant(i_q_ref),
            i_d_ref: 0.0,
            theta_0: 0.0,
            t_f,
            fault,
            sigma_schedule: Vec::new(),
            r_fiu_schedule: Vec::new(),
            r_wire: 0.0,
            u_m: UmPolicy::Zero,
            seed: 0,
            input_noise: 0.0,
            bandwidth: 800.0,
            v_limit: 60.0,
            integration: IntegrationConfig::default(),
            dtm: DtmOptions::default(),
            divergence: DivergenceConfig::default(),
            tolerance: 1e-2,
        }
    }

    pub fn validated(self) -> Result<Self, HarnessError> {
        let bad = |m: &str| Err(HarnessError::Scenario(m.to_string()));
        if !(self.t_s > 0.0 && self.t_s.is_finite()) {
            return bad("T_s must be positive");
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return bad("duration must be non-negative");
        }
        if let Some(t_f) = self.t_f {
            if !(t_f >= 0.0 && t_f <= self.duration) {
                return bad("t_f must lie within the duration");
            }
        }
        for (name, s) in [("sigma_schedule", &self.sigma_schedule), ("R_FIU_schedule", &self.r_fiu_schedule)] {
            if s.windows(2).any(|w| w[1].0 < w[0].0) {
                return Err(HarnessError::Scenario(format!("{name} must be time-ordered")));
            }
        }
        if !(self.bandwidth > 0.0 && self.v_limit > 0.0) {
            return bad("bandwidth and v_limit must be positive");
        }
        if self.input_noise < 0.0 {
            return bad("input_noise must be non-negative");
        }
        Ok(self)
    }

    /// Number of steps; the trace has one more row.
    pub fn steps(&self) -> usize {
        (self.duration / self.t_s + TIME_EPS).floor() as usize
    }

    fn at_or_after(&self, t: f64, mark: f64) -> bool {
        t + TIME_EPS * self.t_s >= mark
    }

    fn scheduled(&self, schedule: &[(f64, f64)], t: f64) -> Option<f64> {
        schedule.iter().rev().find(|p| self.at_or_after(t, p.0)).map(|p| p.1)
    }

    /// Fault configuration in effect during the step starting at `t`.
    pub fn fault_at(&self, t: f64) -> FaultConfig {
        let mut f = self.fault;
        f.active = matches!(self.t_f, Some(t_f) if self.at_or_after(t, t_f)) && f.active;
        if let Some(s) = self.scheduled(&self.sigma_schedule, t) {
            f.sigma = s;
        }
        if let Some(r) = self.scheduled(&self.r_fiu_schedule, t) {
            f.r_sc = r + self.r_wire;
        }
        f
    }

    fn current_reference(&self, model: &Model, t: f64) -> DqPair {
        let v = self.load.eval(t);
        let i_q = match self.load_kind {
            LoadKind::Current => v,
            LoadKind::Torque => v / (1.5 * model.motor.pole_pairs as f64 * model.motor.lambda_1()),
        };
        DqPair::new(self.i_d_ref, i_q)
    }
}

/// One sampled row of an engine trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: f64,
    pub theta_e: f64,
    pub omega_e: f64,
    pub u_d: f64,
    pub u_q: f64,
    pub i_d: f64,
    pub i_q: f64,
    pub i_f: f64,
    pub i_a: f64,
    pub i_b: f64,
    pub i_c: f64,
    pub t_e: f64,
}

impl TraceRow {
    pub fn values(&self) -> [f64; 12] {
        [
            self.t, self.theta_e, self.omega_e, self.u_d, self.u_q, self.i_d, self.i_q, self.i_f, self.i_a, self.i_b,
            self.i_c, self.t_e,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    pub engine: Engine,
    pub rows: Vec<TraceRow>,
    /// Model states (i_dh, i_qh, i_f) aligned with `rows`.
    pub states: Vec<ModelState>,
    /// First row at which the engine left the divergence bound.
    pub diverged_at: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairReport {
    pub candidate: Engine,
    pub reference: Engine,
    pub report: ErrorReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub oracle: Trace,
    pub dtm: Trace,
    pub euler: Trace,
    pub reports: Vec<PairReport>,
    /// Some active stage has a forward-Euler fault-mode factor above one.
    pub euler_divergence_expected: bool,
}

impl ScenarioResult {
    pub fn trace(&self, engine: Engine) -> &Trace {
        match engine {
            Engine::Oracle => &self.oracle,
            Engine::Dtm => &self.dtm,
            Engine::Euler => &self.euler,
        }
    }

    pub fn report(&self, candidate: Engine, reference: Engine) -> Option<&ErrorReport> {
        self.reports
            .iter()
            .find(|r| r.candidate == candidate && r.reference == reference)
            .map(|r| &r.report)
    }

    pub fn dtm_within_tolerance(&self, tolerance: f64) -> bool {
        self.report(Engine::Dtm, Engine::Oracle)
            .is_some_and(|r| !r.diverged && r.max_rel_rms() <= tolerance)
    }

    /// True when the oracle or the discrete model diverged, or Euler
    /// diverged although no stage predicted it.
    pub fn unexpected_divergence(&self) -> bool {
        self.oracle.diverged_at.is_some()
            || self.dtm.diverged_at.is_some()
            || (self.euler.diverged_at.is_some() && !self.euler_divergence_expected)
    }
}

struct EngineRun {
    engine: Engine,
    state: ModelState,
    trace: Trace,
}

impl EngineRun {
    fn new(engine: Engine, capacity: usize) -> Self {
        Self {
            engine,
            state: ModelState::default(),
            trace: Trace {
                engine,
                rows: Vec::with_capacity(capacity),
                states: Vec::with_capacity(capacity),
                diverged_at: None,
            },
        }
    }

    fn record(&mut self, input: &StepInput, t: f64, model: &Model, bound: &DivergenceConfig) {
        let k = self.trace.rows.len();
        if self.trace.diverged_at.is_none() && self.state.to_array().iter().any(|&v| is_divergent(v, bound)) {
            self.trace.diverged_at = Some(k);
        }
        if self.trace.diverged_at.is_some() {
            self.state = ModelState::new(f64::NAN, f64::NAN, f64::NAN);
        }
        let c = output_currents(&self.state, input.theta, model);
        self.trace.rows.push(TraceRow {
            t,
            theta_e: input.theta,
            omega_e: input.omega,
            u_d: input.u_d,
            u_q: input.u_q,
            i_d: c.i_d,
            i_q: c.i_q,
            i_f: self.state.i_f,
            i_a: c.i_abc.a,
            i_b: c.i_abc.b,
            i_c: c.i_abc.c,
            t_e: torque(&self.state, input.theta, model),
        });
        self.trace.states.push(self.state);
    }

    fn advance(&mut self, input: &StepInput, model: &Model, scenario: &Scenario, t: f64) {
        if self.trace.diverged_at.is_some() {
            return;
        }
        let nan = ModelState::new(f64::NAN, f64::NAN, f64::NAN);
        self.state = match self.engine {
            Engine::Oracle => {
                let result = match scenario.integration.angle_mode {
                    AngleMode::Frozen => {
                        let w = input.omega;
                        integrate_step_with_track(
                            &self.state,
                            input,
                            model,
                            scenario.integration.substeps,
                            &|s| (w * s, w),
                            &mut |_, _, _| {},
                        )
                    }
                    AngleMode::Continuous => {
                        let v = &scenario.velocity;
                        integrate_step_with_track(
                            &self.state,
                            input,
                            model,
                            scenario.integration.substeps,
                            &|s| (v.integral(t, t + s), v.eval(t + s)),
                            &mut |_, _, _| {},
                        )
                    }
                };
                result.unwrap_or(nan)
            }
            Engine::Dtm => dtm::dtm_step(&self.state, input, model, &scenario.dtm).unwrap_or(nan),
            Engine::Euler => dtm::euler_step(&self.state, input, model),
        };
    }
}

/// Runs one scenario on `base` (whose own fault configuration is ignored).
pub fn run_scenario(scenario: &Scenario, base: &Model) -> Result<ScenarioResult, HarnessError> {
    let scenario = scenario.clone().validated()?;
    let n = scenario.steps();
    let t_s = scenario.t_s;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut engines: Vec<EngineRun> = Engine::ALL.iter().map(|&e| EngineRun::new(e, n + 1)).collect();

    let mut fault = scenario.fault_at(0.0);
    let mut model = base.with_fault(fault)?;
    let mut euler_expected = false;
    let gains = PiGains::from_bandwidth(&model, scenario.bandwidth);
    let mut pi = PiState::default();
    let mut last_u = DqPair::default();
    let mut theta = wrap_angle(scenario.theta_0);

    for k in 0..=n {
        let t = k as f64 * t_s;
        let next = scenario.fault_at(t);
        if next != fault {
            fault = next;
            model = base.with_fault(fault)?;
        }
        if let Some(b) = model.branch() {
            euler_expected |= b.euler_factor(t_s) > 1.0;
        }
        let omega = scenario.velocity.eval(t);
        if scenario.integration.angle_mode == AngleMode::Continuous {
            theta = wrap_angle(scenario.theta_0 + scenario.velocity.integral(0.0, t));
        }

        let measured = engines[0].state;
        let u = if measured.is_finite() {
            let c = output_currents(&measured, theta, &model);
            let i = DqPair::new(c.i_d, c.i_q);
            let reference = scenario.current_reference(&model, t);
            let ff = feedforward(&model, i, omega);
            pi_current_loop(reference, i, ff, &gains, scenario.v_limit, t_s, &mut pi)
        } else {
            last_u
        };
        last_u = u;
        let noise = DqPair::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)) * scenario.input_noise;
        let u = u + noise;
        let u_m = match scenario.u_m {
            UmPolicy::Zero => 0.0,
            UmPolicy::MinMax => min_max_offset(u, theta),
        };
        let input = StepInput {
            u_d: u.d,
            u_q: u.q,
            omega,
            theta,
            u_m,
            t_s,
        };
        for e in engines.iter_mut() {
            e.record(&input, t, &model, &scenario.divergence);
        }
        if k < n {
            for e in engines.iter_mut() {
                e.advance(&input, &model, &scenario, t);
            }
            if scenario.integration.angle_mode == AngleMode::Frozen {
                theta = wrap_angle(theta + omega * t_s);
            }
        }
    }

    let mut it = engines.into_iter().map(|e| e.trace);
    let (oracle, dtm, euler) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
    let mut reports = Vec::new();
    for (cand, refr) in [(&dtm, &oracle), (&euler, &oracle), (&euler, &dtm)] {
        reports.push(PairReport {
            candidate: cand.engine,
            reference: refr.engine,
            report: compare_trajectories(&refr.states, &cand.states, &scenario.divergence)?,
        });
    }
    Ok(ScenarioResult {
        oracle,
        dtm,
        euler,
        reports,
        euler_divergence_expected: euler_expected,
    })
}

/// Runs independent scenarios in parallel. Results keep the input order.
pub fn run_batch(jobs: &[(Scenario, Model)]) -> Vec<Result<ScenarioResult, HarnessError>> {
    jobs.par_iter().map(|(s, m)| run_scenario(s, m)).collect()
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> HarnessError + '_ {
    move |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes a trace as CSV. Floats use the shortest round-trip representation.
pub fn write_trace<W: Write>(trace: &Trace, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for row in &trace.rows {
        w.write_record(row.values().iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(result: &ScenarioResult, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "candidate",
        "reference",
        "signal",
        "rel_rms",
        "max_abs",
        "absolute_fallback",
        "diverged",
        "first_divergence",
        "horizon",
    ])?;
    for p in &result.reports {
        let r = &p.report;
        for s in &r.signals {
            w.write_record([
                p.candidate.name().to_string(),
                p.reference.name().to_string(),
                s.name.clone(),
                s.rel_rms.to_string(),
                s.max_abs.to_string(),
                s.absolute_fallback.to_string(),
                r.diverged.to_string(),
                r.first_divergence.map_or(String::new(), |k| k.to_string()),
                r.horizon.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `oracle.csv`, `dtm.csv`, `euler.csv` and `summary.csv` into `dir`.
pub fn emit_csv(result: &ScenarioResult, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let open = |name: &str| {
        let path = dir.join(name);
        File::create(&path)
            .map(|f| (io::BufWriter::new(f), path.clone()))
            .map_err(|source| HarnessError::Io { path, source })
    };
    let mut paths = Vec::new();
    for engine in Engine::ALL {
        let (f, path) = open(&format!("{}.csv", engine.name()))?;
        write_trace(result.trace(engine), f).map_err(csv_err(&path))?;
        paths.push(path);
    }
    let (f, path) = open("summary.csv")?;
    write_summary(result, f).map_err(csv_err(&path))?;
    paths.push(path);
    Ok(paths)
}

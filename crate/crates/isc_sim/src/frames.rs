//! Rotor reference-frame transforms and permanent-magnet flux projections.
//!
//! The Park transform is amplitude invariant (2/3 scaling).

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::params::FluxHarmonic;

const TWO_PI_3: f64 = 2.0 * PI / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AbcTriple {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl AbcTriple {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    pub fn splat(v: f64) -> Self {
        Self::new(v, v, v)
    }

    pub fn sum(&self) -> f64 {
        self.a + self.b + self.c
    }

    pub fn dot(&self, other: &AbcTriple) -> f64 {
        self.a * other.a + self.b * other.b + self.c * other.c
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn get(&self, index: usize) -> f64 {
        self.to_array()[index]
    }
}

impl Add for AbcTriple {
    type Output = AbcTriple;
    fn add(self, o: AbcTriple) -> AbcTriple {
        AbcTriple::new(self.a + o.a, self.b + o.b, self.c + o.c)
    }
}

impl Sub for AbcTriple {
    type Output = AbcTriple;
    fn sub(self, o: AbcTriple) -> AbcTriple {
        AbcTriple::new(self.a - o.a, self.b - o.b, self.c - o.c)
    }
}

impl Mul<f64> for AbcTriple {
    type Output = AbcTriple;
    fn mul(self, k: f64) -> AbcTriple {
        AbcTriple::new(self.a * k, self.b * k, self.c * k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DqPair {
    pub d: f64,
    pub q: f64,
}

impl DqPair {
    pub fn new(d: f64, q: f64) -> Self {
        Self { d, q }
    }

    pub fn norm(&self) -> f64 {
        self.d.hypot(self.q)
    }

    pub fn dot(&self, other: &DqPair) -> f64 {
        self.d * other.d + self.q * other.q
    }

    /// Applies the frame rotation T(angle/ω) = [[cos, sin], [−sin, cos]].
    pub fn rotated(&self, angle: f64) -> DqPair {
        let (s, c) = angle.sin_cos();
        DqPair::new(c * self.d + s * self.q, -s * self.d + c * self.q)
    }
}

impl Add for DqPair {
    type Output = DqPair;
    fn add(self, o: DqPair) -> DqPair {
        DqPair::new(self.d + o.d, self.q + o.q)
    }
}

impl Sub for DqPair {
    type Output = DqPair;
    fn sub(self, o: DqPair) -> DqPair {
        DqPair::new(self.d - o.d, self.q - o.q)
    }
}

impl Mul<f64> for DqPair {
    type Output = DqPair;
    fn mul(self, k: f64) -> DqPair {
        DqPair::new(self.d * k, self.q * k)
    }
}

/// Phase angles θ, θ − 2π/3, θ + 2π/3.
fn phase_angles(theta: f64) -> [f64; 3] {
    [theta, theta - TWO_PI_3, theta + TWO_PI_3]
}

pub fn park(x: AbcTriple, theta: f64) -> DqPair {
    let mut d = 0.0;
    let mut q = 0.0;
    for (v, th) in x.to_array().into_iter().zip(phase_angles(theta)) {
        let (s, c) = th.sin_cos();
        d += v * c;
        q -= v * s;
    }
    DqPair::new(2.0 / 3.0 * d, 2.0 / 3.0 * q)
}

pub fn inverse_park(x: DqPair, theta: f64) -> AbcTriple {
    let [a, b, c] = phase_angles(theta).map(|th| {
        let (s, co) = th.sin_cos();
        co * x.d - s * x.q
    });
    AbcTriple::new(a, b, c)
}

/// Terminal potentials from dq voltages and the modulation offset u_m.
pub fn terminal_potentials(u: DqPair, theta: f64, u_m: f64) -> AbcTriple {
    inverse_park(u, theta) + AbcTriple::splat(u_m)
}

/// `(λ⁰, ∂λ⁰/∂θ)` from the triplen harmonics.
pub fn zero_sequence_flux(harmonics: &[FluxHarmonic], theta: f64) -> (f64, f64) {
    let mut value = 0.0;
    let mut slope = 0.0;
    for h in harmonics.iter().filter(|h| h.is_triplen()) {
        let j = h.order as f64;
        let (s, c) = (j * theta + h.phase).sin_cos();
        value += h.amplitude * c;
        slope -= j * h.amplitude * s;
    }
    (value, slope)
}

/// `∂²λ⁰/∂θ²`.
pub fn zero_sequence_flux_curvature(harmonics: &[FluxHarmonic], theta: f64) -> f64 {
    harmonics
        .iter()
        .filter(|h| h.is_triplen())
        .map(|h| {
            let j = h.order as f64;
            -j * j * h.amplitude * (j * theta + h.phase).cos()
        })
        .sum()
}

/// dq flux linkage `(λ^d, λ^q)` seen by the healthy part.
///
/// Orders 6m ± 1 fold onto the 6m-th rotor harmonic; triplen orders are
/// zero-sequence and do not appear here.
pub fn pm_flux_dq(harmonics: &[FluxHarmonic], theta: f64) -> DqPair {
    let mut out = DqPair::default();
    for h in harmonics {
        let j = h.order as f64;
        match h.order % 6 {
            _ if h.order == 1 => out.d += h.amplitude,
            5 => {
                let (s, c) = ((j + 1.0) * theta + h.phase).sin_cos();
                out.d -= j * h.amplitude * c;
                out.q += j * h.amplitude * s;
            }
            1 => {
                let (s, c) = ((j - 1.0) * theta + h.phase).sin_cos();
                out.d += j * h.amplitude * c;
                out.q += j * h.amplitude * s;
            }
            _ => {}
        }
    }
    out
}

/// Radial PM flux linkage of the three phases.
pub fn pm_flux_abc(harmonics: &[FluxHarmonic], theta: f64) -> AbcTriple {
    let v = [0.0, -TWO_PI_3, TWO_PI_3].map(|offset| {
        harmonics
            .iter()
            .map(|h| {
                let j = h.order as f64;
                h.amplitude * (j * (theta + offset) + h.phase).cos()
            })
            .sum::<f64>()
    });
    AbcTriple::from_array(v)
}

/// `∂Λ_abc/∂θ`.
pub fn pm_flux_abc_slope(harmonics: &[FluxHarmonic], theta: f64) -> AbcTriple {
    let v = [0.0, -TWO_PI_3, TWO_PI_3].map(|offset| {
        harmonics
            .iter()
            .map(|h| {
                let j = h.order as f64;
                -j * h.amplitude * (j * (theta + offset) + h.phase).sin()
            })
            .sum::<f64>()
    });
    AbcTriple::from_array(v)
}

/// Wraps an angle to [0, 2π).
pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(2.0 * PI);
    if w >= 2.0 * PI {
        0.0
    } else {
        w
    }
}

//! Simulation of a permanent-magnet synchronous machine with an interturn
//! short circuit.
//!
//! The crate provides
//! - [`ct_model`]: continuous-time dq and abc equations,
//! - [`dtm`]: a closed-form discrete-time model with per-step coefficients,
//! - [`oracle`]: an RK4 reference plus quadrature and error metrics,
//! - [`harness`]: closed-loop scenarios driving every engine with the same inputs.

pub mod config;
pub mod ct_model;
pub mod dtm;
pub mod frames;
pub mod harness;
pub mod oracle;
pub mod params;
pub mod reference;
pub mod validation;

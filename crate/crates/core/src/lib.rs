//! Magic-angle-spinning spin dynamics for triple-oscillating-field (TOFU)
//! dipolar recoupling and rotor-assisted dipolar refocusing (RADAR).
//!
//! Everything numeric is generic over [`num::Real`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`.

// `!(x > 0)` rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod error;
pub mod num;
pub mod powder;
pub mod propagator;
pub mod rfgen;
pub mod sequence;
pub mod spinsys;

pub use error::{Error, Result};
pub use num::Real;

pub type SpinSystem64 = spinsys::SpinSystem<f64>;
pub type EulerAngles64 = spinsys::EulerAngles<f64>;
pub type TofuParams64 = rfgen::TofuParams<f64>;
pub type RfWaveform64 = rfgen::RfWaveform<f64>;
pub type OrientationSet64 = powder::OrientationSet<f64>;
pub type DephasingCurve64 = sequence::DephasingCurve<f64>;
pub type FresnelChart64 = analysis::FresnelChart<f64>;

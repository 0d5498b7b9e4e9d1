//! Numerical construction of gelling solutions of the coagulation equation
//! with homogeneous kernels `K(x, y) = (xy)^{λ/2}`, `1 < λ < 2`.
//!
//! The numerical core is generic over `f32`/`f64` through [`Real`]; the
//! `*64` aliases below fix the scalar to `f64`. The complex contour code in
//! [`mellin`] is `f64` only.

pub mod coagops;
pub mod directsim;
pub mod error;
pub mod evolution;
pub mod gelfix;
pub mod mellin;
pub mod model;
pub mod norms;
pub mod quadrature;
mod real;

pub use error::{Error, Result};
pub use real::{lit, to_f64, Real};

pub type ModelParams64 = model::ModelParams<f64>;
pub type LogGrid64 = model::LogGrid<f64>;
pub type Field64 = model::Field<f64>;
pub type Trajectory64 = model::Trajectory<f64>;
pub type CoagOps64 = coagops::CoagOps<f64>;

//! Frequency-domain auto-tuning of structured LPV MIMO feedback controllers
//! for motion systems.
//!
//! The crate works directly on sets of local frequency response functions
//! (one per frozen operating point of the scheduling vector):
//!
//! - [`frf`]: FRF data model and the JSON file format.
//! - [`plant`]: synthetic modal plants used to generate FRF sets.
//! - [`controller`]: filter primitives in linear fractional form, their
//!   interconnection and the stacked parameter block.
//! - [`stability`]: local closed-loop stability from FRF data through a
//!   factorized Nyquist test that also covers full-block controllers.
//! - [`shaping`]: piecewise-affine weights and the weighted four-block norm.
//! - [`autotune`]: particle swarm search followed by quasi-Newton refinement.
//! - [`discretize`]: Tustin discretization that keeps the continuous-time
//!   controller matrices intact.

pub mod autotune;
pub mod controller;
pub mod discretize;
mod error;
pub mod frf;
pub mod linalg;
pub mod par;
pub mod plant;
pub mod shaping;
pub mod stability;

pub use error::{Error, Result};
pub use nalgebra::Complex;

/// Complex double used for all frequency-domain data.
pub type C64 = Complex<f64>;
/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<C64>;
/// Dense real matrix.
pub type RMat = nalgebra::DMatrix<f64>;

//! Quantum-trajectory simulation of photon-blockade breakdown in a driven,
//! dissipative Jaynes–Cummings system and related cavity models.
//!
//! Time is measured in units of the inverse cavity field decay rate `κ⁻¹`
//! (or `χ⁻¹` for the Kerr oscillator). The numerical core is generic over
//! [`Real`]; the aliases at the crate root fix it to `f64`.

pub mod analytics;
pub mod error;
pub mod fock;
pub mod heterodyne;
pub mod linalg;
pub mod mcwf;
pub mod models;
pub mod ode;
pub mod rng;
pub mod scalar;
pub mod semiclassical;
pub mod special;
pub mod stats;
pub mod steady;

pub use error::{Error, Result};
pub use scalar::{Real, C};

pub type Complex64 = num_complex::Complex<f64>;
pub type StateVector = fock::StateVector<f64>;
pub type DensityMatrix = fock::DensityMatrix<f64>;
pub type PhaseGrid = fock::PhaseGrid<f64>;
pub type GridSpec = fock::GridSpec<f64>;

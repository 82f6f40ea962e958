//! Photoacoustic tomography with circular integrating detectors, and the
//! toroidal Radon transform.

pub mod error;
pub mod grid;
pub mod forward;
pub mod pat_inversion;
pub mod torus_inversion;
pub mod transforms;

pub use error::{Error, Result};

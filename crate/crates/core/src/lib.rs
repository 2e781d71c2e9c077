//! Subwavelength resonances of graded arrays of circular resonators and the
//! coupled Hopf-type harmonic-balance systems obtained by projecting onto
//! their eigenmodes.

pub mod analysis;
pub mod boundary;
pub mod config;
pub mod error;
pub mod geometry;
pub mod hopf;
pub mod modal;
pub mod quadrature;
pub mod run;
pub mod special;
pub mod spectral;

pub use error::{Error, Result};

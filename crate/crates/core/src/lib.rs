//! Spectral laboratory for the stochastic incompressible Euler system on the
//! three-dimensional torus.

pub mod config;
pub mod convexint;
pub mod dissipative;
pub mod ensemble;
pub mod error;
pub mod field;
pub mod galerkin;
pub mod io;
pub mod noise;
pub mod rough;
pub mod selection;
pub mod trajectory;

pub use error::{Error, Result};
pub use trajectory::DissipativeTrajectory;

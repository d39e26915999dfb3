//! Spectral representation of vector and symmetric-matrix fields on the
//! periodic box `[0, 2π)³`.
//!
//! Velocities live in Fourier space on a [`WaveLattice`]; stresses live on the
//! physical grid nodes. Projections, norms, products and divergences are all
//! pure functions of their inputs.

mod lattice;
mod stress;
mod velocity;

pub use lattice::{WaveLattice, TORUS_VOLUME};
pub use stress::{
    divergence_of_stress, inverse_divergence, nonlinear_stress, outer, outer_product, sym_eigenvalues,
    sym_max_eigenvalue, sym_min_eigenvalue, sym_operator_norm, trace_integral, StressGrid, Sym3, SYM_PAIRS,
};
pub use velocity::{galerkin_project, leray_project, sobolev_norm, SpectralVector, SpectralVelocity, VectorGrid};

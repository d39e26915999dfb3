//! Shared fixtures for the `euler-lab` benchmarks.

use std::sync::Arc;

use euler_lab::field::{SpectralVelocity, WaveLattice};
use euler_lab::galerkin::InitialState;
use euler_lab::noise::{NoiseCoefficient, NoiseParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Lattice, truncated noise and a unit-norm random datum on `|k|_∞ ≤ 3`.
pub fn fixture(n: usize) -> (Arc<WaveLattice>, Arc<NoiseCoefficient>, InitialState) {
    let lattice = WaveLattice::new(n).expect("even lattice size");
    let params = NoiseParams {
        cutoff: Some(3.min(n / 2 - 1)),
        ..NoiseParams::default()
    };
    let noise = Arc::new(NoiseCoefficient::spectral(&lattice, params).expect("admissible noise"));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let u = SpectralVelocity::random(&lattice, &mut rng, 3.min(n / 2 - 1), 1.0);
    let s = 1.0 / u.norm_sq().sqrt();
    (lattice, noise, InitialState::from_velocity(u.scale(s)))
}

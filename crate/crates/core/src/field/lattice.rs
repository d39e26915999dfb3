use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Volume of the periodic box `[0, 2π)³`.
pub const TORUS_VOLUME: f64 = 8.0 * PI * PI * PI;

/// Discrete wave-vector lattice of an `N × N × N` periodic grid.
///
/// Modes are stored in FFT order, `idx = (i0 · N + i1) · N + i2`. Modes on a
/// Nyquist plane (`i = N/2` on any axis) are never populated, which keeps the
/// active mode set closed under `k ↦ −k`.
pub struct WaveLattice {
    n: usize,
    dealias: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for WaveLattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WaveLattice")
            .field("n", &self.n)
            .field("dealias", &self.dealias)
            .finish()
    }
}

impl PartialEq for WaveLattice {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
    }
}

impl WaveLattice {
    /// Builds the lattice for resolution `n` (even, at least 4).
    pub fn new(n: usize) -> Result<Arc<Self>> {
        if n < 4 || n % 2 != 0 {
            return Err(Error::config("lattice N even and >= 4", format!("got N = {n}")));
        }
        let mut planner = FftPlanner::new();
        Ok(Arc::new(WaveLattice {
            n,
            dealias: (n - 1) / 3,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of modes (and grid nodes), `N³`.
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Two-thirds-rule cutoff `K = ⌊(N−1)/3⌋` on `|k|_∞`.
    pub fn dealias_cutoff(&self) -> usize {
        self.dealias
    }

    /// Largest populated `|k|_∞`, i.e. `N/2 − 1`.
    pub fn max_mode(&self) -> usize {
        self.n / 2 - 1
    }

    /// Signed wavenumber of FFT index `i` along one axis.
    pub fn wavenumber(&self, i: usize) -> i32 {
        if i <= self.n / 2 {
            i as i32
        } else {
            i as i32 - self.n as i32
        }
    }

    pub fn split(&self, idx: usize) -> [usize; 3] {
        let n = self.n;
        [idx / (n * n), (idx / n) % n, idx % n]
    }

    pub fn join(&self, i: [usize; 3]) -> usize {
        (i[0] * self.n + i[1]) * self.n + i[2]
    }

    /// Wave vector of mode `idx`.
    pub fn mode(&self, idx: usize) -> [i32; 3] {
        let i = self.split(idx);
        [self.wavenumber(i[0]), self.wavenumber(i[1]), self.wavenumber(i[2])]
    }

    pub fn is_nyquist(&self, idx: usize) -> bool {
        let h = self.n / 2;
        self.split(idx).iter().any(|&i| i == h)
    }

    /// Whether the mode may carry a nonzero coefficient.
    pub fn is_active(&self, idx: usize) -> bool {
        !self.is_nyquist(idx)
    }

    /// Index of wave vector `k`, if it lies in the active set.
    pub fn index_of(&self, k: [i32; 3]) -> Option<usize> {
        let h = (self.n / 2) as i32;
        if k.iter().any(|&c| c.abs() >= h) {
            return None;
        }
        let n = self.n as i32;
        let w = |c: i32| ((c + n) % n) as usize;
        Some(self.join([w(k[0]), w(k[1]), w(k[2])]))
    }

    /// Index of `−k` for the mode at `idx`.
    pub fn neg_index(&self, idx: usize) -> usize {
        let n = self.n;
        let i = self.split(idx);
        self.join([(n - i[0]) % n, (n - i[1]) % n, (n - i[2]) % n])
    }

    pub fn k_squared(&self, idx: usize) -> f64 {
        let k = self.mode(idx);
        k.iter().map(|&c| (c * c) as f64).sum()
    }

    pub fn linf(&self, idx: usize) -> usize {
        self.mode(idx)
            .iter()
            .map(|c| c.unsigned_abs() as usize)
            .max()
            .unwrap_or(0)
    }

    /// Dealiasing mask: active and `|k|_∞ ≤ K`.
    pub fn is_dealiased(&self, idx: usize) -> bool {
        self.is_active(idx) && self.linf(idx) <= self.dealias
    }

    /// Physical coordinate of node index `i` along one axis.
    pub fn node_coord(&self, i: usize) -> f64 {
        2.0 * PI * i as f64 / self.n as f64
    }

    pub fn node_position(&self, idx: usize) -> [f64; 3] {
        let i = self.split(idx);
        [self.node_coord(i[0]), self.node_coord(i[1]), self.node_coord(i[2])]
    }

    /// Quadrature weight of one grid node, `|𝕋³| / N³`.
    pub fn cell_volume(&self) -> f64 {
        TORUS_VOLUME / self.len() as f64
    }

    /// Unnormalized 3D FFT in place (`inverse` uses `e^{+ik·x}`).
    pub fn fft3(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        assert_eq!(data.len(), n * n * n);
        let plan = if inverse { &self.inverse } else { &self.forward };
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(data, &mut scratch);
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for i0 in 0..n {
            for i2 in 0..n {
                for i1 in 0..n {
                    line[i1] = data[(i0 * n + i1) * n + i2];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for i1 in 0..n {
                    data[(i0 * n + i1) * n + i2] = line[i1];
                }
            }
        }
        for i1 in 0..n {
            for i2 in 0..n {
                for i0 in 0..n {
                    line[i0] = data[(i0 * n + i1) * n + i2];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for i0 in 0..n {
                    data[(i0 * n + i1) * n + i2] = line[i0];
                }
            }
        }
    }

    /// Unnormalized 1D FFT of length `N` in place.
    pub fn fft1(&self, data: &mut [Complex64], inverse: bool) {
        let plan = if inverse { &self.inverse } else { &self.forward };
        plan.process(data);
    }

    /// Grid values from orthonormal Fourier coefficients.
    pub fn to_physical(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut buf = coeffs.to_vec();
        self.fft3(&mut buf, true);
        let s = TORUS_VOLUME.sqrt().recip();
        buf.iter().map(|c| c.re * s).collect()
    }

    /// Orthonormal Fourier coefficients from grid values; Nyquist planes zeroed.
    pub fn to_spectral(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft3(&mut buf, false);
        let s = TORUS_VOLUME.sqrt() / self.len() as f64;
        for (idx, c) in buf.iter_mut().enumerate() {
            if self.is_nyquist(idx) {
                *c = Complex64::new(0.0, 0.0);
            } else {
                *c *= s;
            }
        }
        buf
    }
}

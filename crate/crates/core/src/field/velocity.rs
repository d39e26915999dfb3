use std::ops::Deref;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::lattice::{WaveLattice, TORUS_VOLUME};
use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Real vector field sampled on the grid nodes, one `Vec` per component.
#[derive(Clone, Debug)]
pub struct VectorGrid {
    pub lattice: Arc<WaveLattice>,
    pub comps: [Vec<f64>; 3],
}

impl VectorGrid {
    pub fn zeros(lattice: &Arc<WaveLattice>) -> Self {
        let len = lattice.len();
        VectorGrid {
            lattice: lattice.clone(),
            comps: [vec![0.0; len], vec![0.0; len], vec![0.0; len]],
        }
    }

    pub fn from_fn(lattice: &Arc<WaveLattice>, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let mut g = Self::zeros(lattice);
        for idx in 0..lattice.len() {
            let v = f(lattice.node_position(idx));
            for c in 0..3 {
                g.comps[c][idx] = v[c];
            }
        }
        g
    }

    pub fn at(&self, idx: usize) -> [f64; 3] {
        [self.comps[0][idx], self.comps[1][idx], self.comps[2][idx]]
    }

    /// Largest pointwise Euclidean magnitude.
    pub fn sup_norm(&self) -> f64 {
        (0..self.lattice.len())
            .map(|i| {
                let v = self.at(i);
                (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// Hermitian vector-valued Fourier coefficients on a lattice.
///
/// The basis is orthonormal on `𝕋³`: `u(x) = (2π)^{-3/2} Σ_k û_k e^{ik·x}`,
/// so the Parseval inner product equals the `L²` inner product.
#[derive(Clone, Debug)]
pub struct SpectralVector {
    pub lattice: Arc<WaveLattice>,
    pub coeffs: [Vec<Complex64>; 3],
}

impl SpectralVector {
    pub fn zeros(lattice: &Arc<WaveLattice>) -> Self {
        let len = lattice.len();
        SpectralVector {
            lattice: lattice.clone(),
            coeffs: [vec![ZERO; len], vec![ZERO; len], vec![ZERO; len]],
        }
    }

    /// Builds coefficients mode by mode; the closure is called once per pair
    /// `{k, −k}` and the conjugate is written to `−k`.
    pub fn from_modes(lattice: &Arc<WaveLattice>, mut f: impl FnMut([i32; 3]) -> [Complex64; 3]) -> Self {
        let mut v = Self::zeros(lattice);
        for idx in 0..lattice.len() {
            if !lattice.is_active(idx) {
                continue;
            }
            let neg = lattice.neg_index(idx);
            if neg < idx {
                continue;
            }
            let c = f(lattice.mode(idx));
            for a in 0..3 {
                if neg == idx {
                    v.coeffs[a][idx] = Complex64::new(c[a].re, 0.0);
                } else {
                    v.coeffs[a][idx] = c[a];
                    v.coeffs[a][neg] = c[a].conj();
                }
            }
        }
        v
    }

    /// Random Hermitian field on modes with `1 ≤ |k|_∞ ≤ cutoff`, amplitude
    /// decaying like `(1+|k|²)^{-decay/2}`.
    pub fn random<R: Rng + ?Sized>(lattice: &Arc<WaveLattice>, rng: &mut R, cutoff: usize, decay: f64) -> Self {
        Self::from_modes(lattice, |k| {
            let linf = k.iter().map(|c| c.unsigned_abs() as usize).max().unwrap_or(0);
            if linf == 0 || linf > cutoff {
                return [ZERO; 3];
            }
            let k2: f64 = k.iter().map(|&c| (c * c) as f64).sum();
            let s = (1.0 + k2).powf(-decay / 2.0);
            let mut out = [ZERO; 3];
            for o in out.iter_mut() {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *o = Complex64::new(re, im) * s;
            }
            out
        })
    }

    pub fn from_grid(grid: &VectorGrid) -> Self {
        let l = &grid.lattice;
        SpectralVector {
            lattice: l.clone(),
            coeffs: [
                l.to_spectral(&grid.comps[0]),
                l.to_spectral(&grid.comps[1]),
                l.to_spectral(&grid.comps[2]),
            ],
        }
    }

    pub fn to_grid(&self) -> VectorGrid {
        let l = &self.lattice;
        VectorGrid {
            lattice: l.clone(),
            comps: [
                l.to_physical(&self.coeffs[0]),
                l.to_physical(&self.coeffs[1]),
                l.to_physical(&self.coeffs[2]),
            ],
        }
    }

    pub fn at(&self, idx: usize) -> [Complex64; 3] {
        [self.coeffs[0][idx], self.coeffs[1][idx], self.coeffs[2][idx]]
    }

    pub fn set(&mut self, idx: usize, c: [Complex64; 3]) {
        for a in 0..3 {
            self.coeffs[a][idx] = c[a];
        }
    }

    /// Largest violation of `û_{−k} = conj(û_k)`.
    pub fn hermitian_defect(&self) -> f64 {
        let l = &self.lattice;
        let mut worst: f64 = 0.0;
        for idx in 0..l.len() {
            let neg = l.neg_index(idx);
            for a in 0..3 {
                worst = worst.max((self.coeffs[a][neg] - self.coeffs[a][idx].conj()).norm());
            }
        }
        worst
    }

    /// Parseval inner product, equal to `∫ u·v dx`.
    pub fn inner(&self, other: &SpectralVector) -> f64 {
        let mut s = 0.0;
        for a in 0..3 {
            for (x, y) in self.coeffs[a].iter().zip(&other.coeffs[a]) {
                s += x.re * y.re + x.im * y.im;
            }
        }
        s
    }

    pub fn norm_sq(&self) -> f64 {
        self.inner(self)
    }

    /// `( Σ_k (1+|k|²)^s |û_k|² )^{1/2}`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        let l = &self.lattice;
        let mut acc = 0.0;
        for idx in 0..l.len() {
            let m: f64 = (0..3).map(|a| self.coeffs[a][idx].norm_sqr()).sum();
            if m > 0.0 {
                acc += (1.0 + l.k_squared(idx)).powf(s) * m;
            }
        }
        acc.sqrt()
    }

    /// `‖∇u‖²_{L²} = Σ |k|² |û_k|²`.
    pub fn gradient_norm_sq(&self) -> f64 {
        let l = &self.lattice;
        (0..l.len())
            .map(|idx| l.k_squared(idx) * (0..3).map(|a| self.coeffs[a][idx].norm_sqr()).sum::<f64>())
            .sum()
    }

    /// `max_k |k·û_k| / ‖û‖₂`, zero for the zero field.
    pub fn divergence_ratio(&self) -> f64 {
        let l = &self.lattice;
        let norm = self.norm_sq().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for idx in 0..l.len() {
            let k = l.mode(idx);
            let d: Complex64 = (0..3).map(|a| self.coeffs[a][idx] * k[a] as f64).sum();
            worst = worst.max(d.norm());
        }
        worst / norm
    }

    /// Whether `|k·û_k| ≤ tol · |û_k|` holds for every `k ≠ 0`.
    pub fn is_divergence_free(&self, tol: f64) -> bool {
        let l = &self.lattice;
        (0..l.len()).all(|idx| {
            let k = l.mode(idx);
            let d: Complex64 = (0..3).map(|a| self.coeffs[a][idx] * k[a] as f64).sum();
            let m: f64 = (0..3).map(|a| self.coeffs[a][idx].norm_sqr()).sum::<f64>().sqrt();
            d.norm() <= tol * m.max(f64::MIN_POSITIVE) || d.norm() == 0.0
        })
    }

    fn map_modes(&self, keep: impl Fn(usize) -> bool) -> Self {
        let mut out = self.clone();
        for idx in 0..self.lattice.len() {
            if !keep(idx) {
                for a in 0..3 {
                    out.coeffs[a][idx] = ZERO;
                }
            }
        }
        out
    }

    /// Coefficients with `|k|_∞ > n` removed.
    pub fn truncate(&self, n: usize) -> Self {
        let l = self.lattice.clone();
        self.map_modes(|idx| l.linf(idx) <= n)
    }

    /// Two-thirds-rule dealiasing.
    pub fn dealias(&self) -> Self {
        let l = self.lattice.clone();
        self.map_modes(|idx| l.is_dealiased(idx))
    }

    /// Pointwise sup bound `(2π)^{-3/2} Σ_k |û_k|`, an upper bound for `max_x |u(x)|`.
    pub fn sup_bound(&self) -> f64 {
        let s: f64 = (0..self.lattice.len())
            .map(|idx| (0..3).map(|a| self.coeffs[a][idx].norm_sqr()).sum::<f64>().sqrt())
            .sum();
        s / TORUS_VOLUME.sqrt()
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.scale_mut(c);
        out
    }

    pub fn scale_mut(&mut self, c: f64) {
        for a in 0..3 {
            for x in self.coeffs[a].iter_mut() {
                *x *= c;
            }
        }
    }

    /// `self += c · other`.
    pub fn axpy(&mut self, c: f64, other: &SpectralVector) {
        for a in 0..3 {
            for (x, y) in self.coeffs[a].iter_mut().zip(&other.coeffs[a]) {
                *x += y * c;
            }
        }
    }

    pub fn max_abs_diff(&self, other: &SpectralVector) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 0..3 {
            for (x, y) in self.coeffs[a].iter().zip(&other.coeffs[a]) {
                worst = worst.max((x - y).norm());
            }
        }
        worst
    }

    /// Modewise Leray projection `(I − k⊗k/|k|²) û_k`, identity on `k = 0`.
    pub fn leray_project(&self) -> SpectralVelocity {
        let l = &self.lattice;
        let mut out = self.clone();
        for idx in 0..l.len() {
            let k2 = l.k_squared(idx);
            if k2 == 0.0 {
                continue;
            }
            let k = l.mode(idx).map(|c| c as f64);
            let u = self.at(idx);
            let kd: Complex64 = (0..3).map(|a| u[a] * k[a]).sum::<Complex64>() / k2;
            for a in 0..3 {
                out.coeffs[a][idx] = u[a] - kd * k[a];
            }
        }
        SpectralVelocity(out)
    }

    pub fn same_lattice(&self, other: &SpectralVector) -> Result<()> {
        if self.lattice.n() != other.lattice.n() {
            return Err(Error::GridMismatch(format!(
                "lattice N = {} vs {}",
                self.lattice.n(),
                other.lattice.n()
            )));
        }
        Ok(())
    }
}

impl std::ops::Add<&SpectralVector> for &SpectralVector {
    type Output = SpectralVector;
    fn add(self, rhs: &SpectralVector) -> SpectralVector {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl std::ops::Sub<&SpectralVector> for &SpectralVector {
    type Output = SpectralVector;
    fn sub(self, rhs: &SpectralVector) -> SpectralVector {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

/// Divergence-free velocity field in spectral form.
#[derive(Clone, Debug)]
pub struct SpectralVelocity(SpectralVector);

impl Deref for SpectralVelocity {
    type Target = SpectralVector;
    fn deref(&self) -> &SpectralVector {
        &self.0
    }
}

impl SpectralVelocity {
    pub fn zeros(lattice: &Arc<WaveLattice>) -> Self {
        SpectralVelocity(SpectralVector::zeros(lattice))
    }

    /// Wraps coefficients after checking Hermitian symmetry and the divergence constraint.
    pub fn new_checked(v: SpectralVector, tol_div: f64) -> Result<Self> {
        let scale = v.norm_sq().sqrt().max(1.0);
        if v.hermitian_defect() > 1e-12 * scale {
            return Err(Error::precondition("coefficients are not Hermitian"));
        }
        if !v.is_divergence_free(tol_div) {
            return Err(Error::precondition(format!(
                "field is not divergence-free (ratio {:.3e})",
                v.divergence_ratio()
            )));
        }
        Ok(SpectralVelocity(v))
    }

    pub fn random<R: Rng + ?Sized>(lattice: &Arc<WaveLattice>, rng: &mut R, cutoff: usize, decay: f64) -> Self {
        SpectralVector::random(lattice, rng, cutoff, decay).leray_project()
    }

    pub fn as_vector(&self) -> &SpectralVector {
        &self.0
    }

    pub fn into_vector(self) -> SpectralVector {
        self.0
    }

    /// Galerkin projection `Π_n`: zero every mode with `|k|_∞ > n`.
    pub fn galerkin_project(&self, n: usize) -> Result<SpectralVelocity> {
        if n > self.lattice.n() / 2 {
            return Err(Error::precondition(format!(
                "Galerkin cutoff {n} exceeds N/2 = {}",
                self.lattice.n() / 2
            )));
        }
        Ok(SpectralVelocity(self.0.truncate(n)))
    }

    pub fn dealias(&self) -> SpectralVelocity {
        SpectralVelocity(self.0.dealias())
    }

    pub fn scale(&self, c: f64) -> SpectralVelocity {
        SpectralVelocity(self.0.scale(c))
    }

    pub fn axpy(&mut self, c: f64, other: &SpectralVelocity) {
        self.0.axpy(c, &other.0);
    }

    /// Applies the real modewise multiplier `m(|k|²)`.
    pub fn multiply_modes(&self, m: impl Fn(f64) -> f64) -> SpectralVelocity {
        let l = self.lattice.clone();
        let mut out = self.0.clone();
        for idx in 0..l.len() {
            let f = m(l.k_squared(idx));
            for a in 0..3 {
                out.coeffs[a][idx] *= f;
            }
        }
        SpectralVelocity(out)
    }
}

impl std::ops::Add<&SpectralVelocity> for &SpectralVelocity {
    type Output = SpectralVelocity;
    fn add(self, rhs: &SpectralVelocity) -> SpectralVelocity {
        SpectralVelocity(&self.0 + &rhs.0)
    }
}

impl std::ops::Sub<&SpectralVelocity> for &SpectralVelocity {
    type Output = SpectralVelocity;
    fn sub(self, rhs: &SpectralVelocity) -> SpectralVelocity {
        SpectralVelocity(&self.0 - &rhs.0)
    }
}

/// Leray projection of arbitrary Hermitian coefficients.
pub fn leray_project(field: &SpectralVector) -> SpectralVelocity {
    field.leray_project()
}

/// Galerkin projection `Π_n`.
pub fn galerkin_project(field: &SpectralVelocity, n: usize) -> Result<SpectralVelocity> {
    field.galerkin_project(n)
}

/// Sobolev norm `‖(I−Δ)^{s/2} u‖_{L²}`.
pub fn sobolev_norm(field: &SpectralVector, s: f64) -> f64 {
    field.sobolev_norm(s)
}

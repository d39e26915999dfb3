use std::sync::Arc;

use nalgebra::Matrix3;
use num_complex::Complex64;

use super::lattice::{WaveLattice, TORUS_VOLUME};
use super::velocity::{SpectralVector, SpectralVelocity, VectorGrid};

/// Symmetric 3×3 matrix.
pub type Sym3 = [[f64; 3]; 3];

/// Storage order of the six independent entries.
pub const SYM_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

fn slot(i: usize, j: usize) -> usize {
    match (i.min(j), i.max(j)) {
        (0, 0) => 0,
        (1, 1) => 1,
        (2, 2) => 2,
        (0, 1) => 3,
        (0, 2) => 4,
        _ => 5,
    }
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(m: &Sym3) -> [f64; 3] {
    let a = Matrix3::new(
        m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
    );
    let ev = a.symmetric_eigenvalues();
    let mut out = [ev[0], ev[1], ev[2]];
    out.sort_by(|x, y| x.total_cmp(y));
    out
}

pub fn sym_max_eigenvalue(m: &Sym3) -> f64 {
    sym_eigenvalues(m)[2]
}

pub fn sym_min_eigenvalue(m: &Sym3) -> f64 {
    sym_eigenvalues(m)[0]
}

/// Operator norm of a symmetric matrix.
pub fn sym_operator_norm(m: &Sym3) -> f64 {
    let ev = sym_eigenvalues(m);
    ev[0].abs().max(ev[2].abs())
}

pub fn outer(a: [f64; 3], b: [f64; 3]) -> Sym3 {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = 0.5 * (a[i] * b[j] + a[j] * b[i]);
        }
    }
    m
}

/// Symmetric 3×3 matrix field on the physical grid nodes.
#[derive(Clone, Debug)]
pub struct StressGrid {
    pub lattice: Arc<WaveLattice>,
    /// Entries in [`SYM_PAIRS`] order, one `Vec` per entry.
    pub comps: [Vec<f64>; 6],
}

impl StressGrid {
    pub fn zeros(lattice: &Arc<WaveLattice>) -> Self {
        let len = lattice.len();
        StressGrid {
            lattice: lattice.clone(),
            comps: std::array::from_fn(|_| vec![0.0; len]),
        }
    }

    /// `c · I` at every node.
    pub fn identity(lattice: &Arc<WaveLattice>, c: f64) -> Self {
        let mut g = Self::zeros(lattice);
        for s in 0..3 {
            g.comps[s].iter_mut().for_each(|x| *x = c);
        }
        g
    }

    /// Symmetrizes `f(x)` at each node.
    pub fn from_fn(lattice: &Arc<WaveLattice>, f: impl Fn([f64; 3]) -> Sym3) -> Self {
        let mut g = Self::zeros(lattice);
        for idx in 0..lattice.len() {
            let m = f(lattice.node_position(idx));
            for (s, &(i, j)) in SYM_PAIRS.iter().enumerate() {
                g.comps[s][idx] = 0.5 * (m[i][j] + m[j][i]);
            }
        }
        g
    }

    pub fn at(&self, idx: usize) -> Sym3 {
        let mut m = [[0.0; 3]; 3];
        for (s, &(i, j)) in SYM_PAIRS.iter().enumerate() {
            m[i][j] = self.comps[s][idx];
            m[j][i] = self.comps[s][idx];
        }
        m
    }

    pub fn set(&mut self, idx: usize, m: &Sym3) {
        for (s, &(i, j)) in SYM_PAIRS.iter().enumerate() {
            self.comps[s][idx] = 0.5 * (m[i][j] + m[j][i]);
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> &[f64] {
        &self.comps[slot(i, j)]
    }

    /// Quadrature of `tr R`: grid mean times `|𝕋³|`.
    pub fn trace_integral(&self) -> f64 {
        let len = self.lattice.len() as f64;
        let s: f64 = (0..3).map(|a| self.comps[a].iter().sum::<f64>()).sum();
        s / len * TORUS_VOLUME
    }

    pub fn min_eigenvalues(&self) -> Vec<f64> {
        (0..self.lattice.len())
            .map(|i| sym_min_eigenvalue(&self.at(i)))
            .collect()
    }

    /// Smallest eigenvalue over all nodes and the node where it occurs.
    pub fn min_eigenvalue(&self) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for i in 0..self.lattice.len() {
            let e = sym_min_eigenvalue(&self.at(i));
            if e < best.0 {
                best = (e, i);
            }
        }
        best
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        self.min_eigenvalue().0 >= -tol
    }

    pub fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn max_trace_abs(&self) -> f64 {
        (0..self.lattice.len())
            .map(|i| (self.comps[0][i] + self.comps[1][i] + self.comps[2][i]).abs())
            .fold(0.0, f64::max)
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.comps.iter_mut().for_each(|v| v.iter_mut().for_each(|x| *x *= c));
        out
    }

    /// `self += c · other`.
    pub fn axpy(&mut self, c: f64, other: &StressGrid) {
        for s in 0..6 {
            for (x, y) in self.comps[s].iter_mut().zip(&other.comps[s]) {
                *x += c * y;
            }
        }
    }

    /// Adds `c · I` at every node.
    pub fn add_identity(&mut self, c: f64) {
        for s in 0..3 {
            self.comps[s].iter_mut().for_each(|x| *x += c);
        }
    }

    /// `self += c · u⊗u` nodewise.
    pub fn add_outer(&mut self, c: f64, u: &VectorGrid) {
        for (s, &(i, j)) in SYM_PAIRS.iter().enumerate() {
            let (a, b) = (&u.comps[i], &u.comps[j]);
            for ((x, p), q) in self.comps[s].iter_mut().zip(a).zip(b) {
                *x += c * p * q;
            }
        }
    }

    pub fn max_abs_diff(&self, other: &StressGrid) -> f64 {
        let mut worst: f64 = 0.0;
        for s in 0..6 {
            for (x, y) in self.comps[s].iter().zip(&other.comps[s]) {
                worst = worst.max((x - y).abs());
            }
        }
        worst
    }
}

impl std::ops::Sub<&StressGrid> for &StressGrid {
    type Output = StressGrid;
    fn sub(self, rhs: &StressGrid) -> StressGrid {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

/// Nodewise `u⊗u` of the grid values of `u`, without dealiasing.
pub fn outer_product(u: &SpectralVector) -> StressGrid {
    let g = u.to_grid();
    let mut r = StressGrid::zeros(&u.lattice);
    r.add_outer(1.0, &g);
    r
}

/// Nodewise `u⊗u` after the dealiased inverse transform.
pub fn nonlinear_stress(u: &SpectralVelocity) -> StressGrid {
    outer_product(&u.dealias())
}

/// `∫ tr R dx` by grid quadrature.
pub fn trace_integral(r: &StressGrid) -> f64 {
    r.trace_integral()
}

/// Spectral row-wise divergence `(div R)_i = Σ_j ∂_j R_ij`.
pub fn divergence_of_stress(r: &StressGrid) -> SpectralVector {
    let l = &r.lattice;
    let hats: Vec<Vec<Complex64>> = r.comps.iter().map(|c| l.to_spectral(c)).collect();
    let mut out = SpectralVector::zeros(l);
    for idx in 0..l.len() {
        if !l.is_active(idx) {
            continue;
        }
        let k = l.mode(idx).map(|c| c as f64);
        for i in 0..3 {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..3 {
                acc += hats[slot(i, j)][idx] * k[j];
            }
            out.coeffs[i][idx] = Complex64::new(-acc.im, acc.re);
        }
    }
    out
}

/// Symmetric trace-free inverse divergence `ℛ`, with `div ℛf = f − ⨍f`.
///
/// `ℛf = ¼(∇Pu + (∇Pu)ᵀ) + ¾(∇u + (∇u)ᵀ) − ½(div u) I` where `Δu = f − ⨍f`.
pub fn inverse_divergence(f: &SpectralVector) -> StressGrid {
    let l = &f.lattice;
    let len = l.len();
    let zero = Complex64::new(0.0, 0.0);
    let mut hat: [Vec<Complex64>; 6] = std::array::from_fn(|_| vec![zero; len]);
    for idx in 0..len {
        let k2 = l.k_squared(idx);
        if k2 == 0.0 || !l.is_active(idx) {
            continue;
        }
        let k = l.mode(idx).map(|c| c as f64);
        let fk = f.at(idx);
        let u: [Complex64; 3] = std::array::from_fn(|a| -fk[a] / k2);
        let kd: Complex64 = (0..3).map(|a| u[a] * k[a]).sum();
        let pu: [Complex64; 3] = std::array::from_fn(|a| u[a] - kd * k[a] / k2);
        let iu = Complex64::new(0.0, 1.0);
        let div_u = iu * kd;
        for (s, &(i, j)) in SYM_PAIRS.iter().enumerate() {
            let grad_pu = iu * (pu[i] * k[j] + pu[j] * k[i]);
            let grad_u = iu * (u[i] * k[j] + u[j] * k[i]);
            let mut v = 0.25 * grad_pu + 0.75 * grad_u;
            if i == j {
                v -= 0.5 * div_u;
            }
            hat[s][idx] = v;
        }
    }
    StressGrid {
        lattice: l.clone(),
        comps: std::array::from_fn(|s| l.to_physical(&hat[s])),
    }
}

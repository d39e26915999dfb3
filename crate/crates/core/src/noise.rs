//! Additive noise `G` as a diagonal multiplier on a real divergence-free
//! Fourier basis, and seeded cylindrical Wiener paths `GB` on a uniform grid.
//!
//! Each retained pair `{k, −k}` contributes four real basis functions: two
//! polarizations `p ⊥ k`, each with a cosine and a sine profile, normalized in
//! `L²(𝕋³)`. A basis function `e_i` with multiplier `g_i` is driven by an
//! independent standard Brownian motion `β_i`, so `GB = Σ g_i β_i e_i`.

use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{SpectralVector, SpectralVelocity, WaveLattice};

/// Cosine or sine profile of a real basis function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Cos,
    Sin,
}

/// One real basis function `e_i = √2 (2π)^{-3/2} p cos(k·x)` (or `sin`) with multiplier `g`.
#[derive(Clone, Debug)]
pub struct NoiseMode {
    pub k: [i32; 3],
    pub pol: [f64; 3],
    pub parity: Parity,
    pub g: f64,
    idx: usize,
    neg: usize,
}

impl NoiseMode {
    pub fn k_squared(&self) -> f64 {
        self.k.iter().map(|&c| (c * c) as f64).sum()
    }

    pub fn linf(&self) -> usize {
        self.k.iter().map(|c| c.unsigned_abs() as usize).max().unwrap_or(0)
    }

    pub fn lattice_index(&self) -> usize {
        self.idx
    }

    /// Fourier coefficient of the basis function at `+k`; the one at `−k` is its conjugate.
    fn coeff(&self) -> Complex64 {
        match self.parity {
            Parity::Cos => Complex64::new(FRAC_1_SQRT_2, 0.0),
            Parity::Sin => Complex64::new(0.0, -FRAC_1_SQRT_2),
        }
    }
}

/// Parameters of the spectral noise family `g_k = c_G (1+|k|²)^{-γ/2}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub gamma: f64,
    pub sigma: f64,
    pub c_g: f64,
    /// Largest retained `|k|_∞`; `None` uses the lattice dealiasing cutoff.
    pub cutoff: Option<usize>,
    /// Decay exponent of the `U₁` weights `(1+|k|²)^{-u1_decay}`.
    pub u1_decay: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            gamma: 4.0,
            sigma: 0.5,
            c_g: 1.0,
            cutoff: None,
            u1_decay: 2.0,
        }
    }
}

/// The noise coefficient `G` as an explicit list of real basis modes.
#[derive(Clone, Debug)]
pub struct NoiseCoefficient {
    pub lattice: Arc<WaveLattice>,
    pub params: NoiseParams,
    pub modes: Vec<NoiseMode>,
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalized(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Two unit polarizations orthogonal to `k` and to each other.
pub fn polarizations(k: [i32; 3]) -> [[f64; 3]; 2] {
    let kf = k.map(|c| c as f64);
    let mut axis = 0;
    for a in 1..3 {
        if kf[a].abs() < kf[axis].abs() {
            axis = a;
        }
    }
    let mut e = [0.0; 3];
    e[axis] = 1.0;
    let p1 = normalized(cross(kf, e));
    let p2 = normalized(cross(kf, p1));
    [p1, p2]
}

impl NoiseCoefficient {
    /// Diagonal family on all pairs with `1 ≤ |k|_∞ ≤ cutoff`.
    pub fn spectral(lattice: &Arc<WaveLattice>, params: NoiseParams) -> Result<Self> {
        if params.gamma <= 3.0 + params.sigma / 2.0 {
            return Err(Error::config(
                "gamma > 3 + sigma/2",
                format!("gamma = {}, sigma = {}", params.gamma, params.sigma),
            ));
        }
        if params.sigma <= 0.0 {
            return Err(Error::config("sigma > 0", format!("sigma = {}", params.sigma)));
        }
        if params.c_g < 0.0 || !params.c_g.is_finite() {
            return Err(Error::config("c_G >= 0", format!("c_G = {}", params.c_g)));
        }
        let cutoff = params.cutoff.unwrap_or(lattice.dealias_cutoff());
        if cutoff > lattice.max_mode() {
            return Err(Error::config(
                "noise cutoff <= N/2 - 1",
                format!("cutoff = {cutoff}, N = {}", lattice.n()),
            ));
        }
        let mut modes = Vec::new();
        for idx in 0..lattice.len() {
            let neg = lattice.neg_index(idx);
            if !lattice.is_active(idx) || neg <= idx {
                continue;
            }
            let lf = lattice.linf(idx);
            if lf == 0 || lf > cutoff {
                continue;
            }
            let k = lattice.mode(idx);
            let g = params.c_g * (1.0 + lattice.k_squared(idx)).powf(-params.gamma / 2.0);
            for pol in polarizations(k) {
                for parity in [Parity::Cos, Parity::Sin] {
                    modes.push(NoiseMode {
                        k,
                        pol,
                        parity,
                        g,
                        idx,
                        neg,
                    });
                }
            }
        }
        Ok(NoiseCoefficient {
            lattice: lattice.clone(),
            params: NoiseParams {
                cutoff: Some(cutoff),
                ..params
            },
            modes,
        })
    }

    /// Noise with an explicit list of `(k, polarization index, parity, g)` modes.
    pub fn from_modes(
        lattice: &Arc<WaveLattice>,
        params: NoiseParams,
        list: &[([i32; 3], usize, Parity, f64)],
    ) -> Result<Self> {
        let mut modes = Vec::with_capacity(list.len());
        for &(k, p, parity, g) in list {
            let idx = lattice
                .index_of(k)
                .ok_or_else(|| Error::precondition(format!("mode {k:?} outside lattice")))?;
            if k == [0, 0, 0] || p > 1 {
                return Err(Error::precondition("noise mode needs k != 0 and polarization 0 or 1"));
            }
            let neg = lattice.neg_index(idx);
            let (rep, rep_neg) = if idx < neg { (idx, neg) } else { (neg, idx) };
            let rk = lattice.mode(rep);
            modes.push(NoiseMode {
                k: rk,
                pol: polarizations(rk)[p],
                parity,
                g,
                idx: rep,
                neg: rep_neg,
            });
        }
        Ok(NoiseCoefficient {
            lattice: lattice.clone(),
            params,
            modes,
        })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn gains(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.g).collect()
    }

    /// `( Σ_i g_i² (1+|k_i|²)^s )^{1/2}`.
    pub fn hs_norm(&self, s: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| m.g * m.g * (1.0 + m.k_squared()).powf(s))
            .sum::<f64>()
            .sqrt()
    }

    /// `‖Π_n G‖²_{L₂(U,L²)}`.
    pub fn hs_norm_sq_truncated(&self, n: usize) -> f64 {
        self.modes.iter().filter(|m| m.linf() <= n).map(|m| m.g * m.g).sum()
    }

    /// `‖Σ_i g_i b_i e_i‖_{H^s}` straight from the coordinates `b`.
    pub fn field_norm(&self, b: &[f64], s: f64) -> f64 {
        self.modes
            .iter()
            .zip(b)
            .map(|(m, x)| m.g * m.g * x * x * (1.0 + m.k_squared()).powf(s))
            .sum::<f64>()
            .sqrt()
    }

    /// `U₁` weights attached to each mode.
    pub fn u1_weights(&self) -> Vec<f64> {
        self.modes
            .iter()
            .map(|m| (1.0 + m.k_squared()).powf(-self.params.u1_decay))
            .collect()
    }

    /// The real basis function `e_i` as a spectral field.
    pub fn basis_function(&self, i: usize) -> SpectralVelocity {
        let mut a = vec![0.0; self.len()];
        a[i] = 1.0;
        self.synthesize(&a)
    }

    /// `Σ_i a_i e_i`.
    pub fn synthesize(&self, amplitudes: &[f64]) -> SpectralVelocity {
        let mut v = SpectralVector::zeros(&self.lattice);
        self.add_synthesized(&mut v, amplitudes, 1.0);
        SpectralVelocity::new_checked(v, 1e-10).expect("noise basis is divergence-free")
    }

    /// `v += c Σ_i a_i e_i`.
    pub fn add_synthesized(&self, v: &mut SpectralVector, amplitudes: &[f64], c: f64) {
        for (m, &a) in self.modes.iter().zip(amplitudes) {
            if a == 0.0 {
                continue;
            }
            let base = m.coeff() * (a * c);
            for d in 0..3 {
                let z = base * m.pol[d];
                v.coeffs[d][m.idx] += z;
                v.coeffs[d][m.neg] += z.conj();
            }
        }
    }

    /// `Σ_i g_i a_i e_i`.
    pub fn apply(&self, amplitudes: &[f64]) -> SpectralVelocity {
        let scaled: Vec<f64> = self.modes.iter().zip(amplitudes).map(|(m, a)| m.g * a).collect();
        self.synthesize(&scaled)
    }

    /// Coordinates `⟨u, e_i⟩` of a field on the basis.
    pub fn project(&self, u: &SpectralVector) -> Vec<f64> {
        self.modes
            .iter()
            .map(|m| {
                let mut acc = Complex64::new(0.0, 0.0);
                for d in 0..3 {
                    acc += u.coeffs[d][m.idx] * m.pol[d];
                }
                let c = m.coeff();
                2.0 * (acc.re * c.re + acc.im * c.im)
            })
            .collect()
    }

    /// `(g_i ⟨u, e_i⟩)_i`, the coordinates of `G* u` in `U`.
    pub fn adjoint(&self, u: &SpectralVector) -> Vec<f64> {
        self.project(u)
            .into_iter()
            .zip(&self.modes)
            .map(|(p, m)| p * m.g)
            .collect()
    }
}

/// Snap record produced when a stopping time is moved onto the grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopRecord {
    pub requested: f64,
    pub snapped: f64,
    pub index: usize,
}

/// Seeded samples of the Brownian coordinates `β_i` on `t_j = jΔt`, `j = 0..=J`.
#[derive(Clone, Debug)]
pub struct WienerPath {
    pub noise: Arc<NoiseCoefficient>,
    pub dt: f64,
    pub steps: usize,
    pub seed: u64,
    /// `Δβ_i` over `[t_j, t_{j+1}]`, stored at `j · M + i`.
    increments: Vec<f64>,
    pub stop: Option<StopRecord>,
}

/// Draws the path for `seed`; mode `i` uses ChaCha stream `i`, so each value
/// is a function of `(seed, i, j)` only.
pub fn sample_wiener(noise: &Arc<NoiseCoefficient>, dt: f64, steps: usize, seed: u64) -> Result<WienerPath> {
    if !(dt > 0.0) {
        return Err(Error::precondition(format!("dt must be positive, got {dt}")));
    }
    let m = noise.len();
    let mut increments = vec![0.0; steps * m];
    let sq = dt.sqrt();
    for i in 0..m {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        for j in 0..steps {
            let z: f64 = StandardNormal.sample(&mut rng);
            increments[j * m + i] = sq * z;
        }
    }
    Ok(WienerPath {
        noise: noise.clone(),
        dt,
        steps,
        seed,
        increments,
        stop: None,
    })
}

impl WienerPath {
    /// Path from explicit increments (layout `j · M + i`).
    pub fn from_increments(noise: &Arc<NoiseCoefficient>, dt: f64, seed: u64, increments: Vec<f64>) -> Result<Self> {
        let m = noise.len().max(1);
        if increments.len() % m != 0 || (noise.is_empty() && !increments.is_empty()) {
            return Err(Error::precondition(
                "increment buffer is not a multiple of the mode count",
            ));
        }
        Ok(WienerPath {
            noise: noise.clone(),
            dt,
            steps: if noise.is_empty() { 0 } else { increments.len() / m },
            seed,
            increments,
            stop: None,
        })
    }

    pub fn modes(&self) -> usize {
        self.noise.len()
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.steps)
    }

    pub fn increment(&self, j: usize) -> &[f64] {
        let m = self.modes();
        &self.increments[j * m..(j + 1) * m]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Cumulative `β(t_j)`, laid out as `(J+1) × M`.
    pub fn betas(&self) -> Vec<f64> {
        let m = self.modes();
        let mut out = vec![0.0; (self.steps + 1) * m];
        for j in 0..self.steps {
            for i in 0..m {
                out[(j + 1) * m + i] = out[j * m + i] + self.increments[j * m + i];
            }
        }
        out
    }

    pub fn beta_at(&self, j: usize) -> Vec<f64> {
        let m = self.modes();
        let mut b = vec![0.0; m];
        for s in 0..j {
            for i in 0..m {
                b[i] += self.increments[s * m + i];
            }
        }
        b
    }

    /// `GB(t_j)`.
    pub fn gb_at(&self, j: usize) -> SpectralVelocity {
        self.noise.apply(&self.beta_at(j))
    }

    /// `G ΔB_j`.
    pub fn gb_increment(&self, j: usize) -> SpectralVelocity {
        self.noise.apply(self.increment(j))
    }

    /// Sums consecutive increments in groups of `factor`.
    pub fn coarsen(&self, factor: usize) -> Result<WienerPath> {
        if factor == 0 || self.steps % factor != 0 {
            return Err(Error::precondition(format!(
                "cannot coarsen {} steps by {factor}",
                self.steps
            )));
        }
        let m = self.modes();
        let steps = self.steps / factor;
        let mut inc = vec![0.0; steps * m];
        for j in 0..self.steps {
            for i in 0..m {
                inc[(j / factor) * m + i] += self.increments[j * m + i];
            }
        }
        Ok(WienerPath {
            noise: self.noise.clone(),
            dt: self.dt * factor as f64,
            steps,
            seed: self.seed,
            increments: inc,
            stop: self.stop,
        })
    }

    /// Prefix on `[0, t_j]`.
    pub fn truncate(&self, j: usize) -> WienerPath {
        let j = j.min(self.steps);
        WienerPath {
            noise: self.noise.clone(),
            dt: self.dt,
            steps: j,
            seed: self.seed,
            increments: self.increments[..j * self.modes()].to_vec(),
            stop: self.stop,
        }
    }

    /// Increments from step `j` on, re-based at time zero.
    pub fn shifted(&self, j: usize) -> WienerPath {
        let j = j.min(self.steps);
        WienerPath {
            noise: self.noise.clone(),
            dt: self.dt,
            steps: self.steps - j,
            seed: self.seed,
            increments: self.increments[j * self.modes()..].to_vec(),
            stop: None,
        }
    }

    /// Grid index of `t`, snapped down.
    pub fn snap_index(&self, t: f64) -> usize {
        if t <= 0.0 {
            return 0;
        }
        let r = t / self.dt;
        let j = (r + 1e-9).floor() as usize;
        j.min(self.steps)
    }

    /// `Σ_j ‖G ΔB_j‖²_{L²}` over the whole path.
    pub fn quadratic_variation(&self) -> f64 {
        let g2: Vec<f64> = self.noise.modes.iter().map(|m| m.g * m.g).collect();
        let m = self.modes();
        self.increments
            .chunks(m.max(1))
            .map(|c| c.iter().zip(&g2).map(|(d, g)| g * d * d).sum::<f64>())
            .sum()
    }

    /// Single-line manifest with the sampling parameters.
    pub fn manifest_line(&self) -> String {
        serde_json::json!({
            "seed": self.seed,
            "gamma": self.noise.params.gamma,
            "sigma": self.noise.params.sigma,
            "c_g": self.noise.params.c_g,
            "dt": self.dt,
            "J": self.steps,
            "modes": self.modes(),
            "stop": self.stop,
        })
        .to_string()
    }
}

/// `B_L(t) = B(t ∧ T_L)`; an off-grid `T_L` is snapped down and recorded.
pub fn stopped_path(path: &WienerPath, t_l: f64) -> (WienerPath, StopRecord) {
    let j = path.snap_index(t_l);
    let rec = StopRecord {
        requested: t_l,
        snapped: path.time(j),
        index: j,
    };
    let mut out = path.clone();
    let m = path.modes();
    for v in out.increments[j * m..].iter_mut() {
        *v = 0.0;
    }
    out.stop = Some(rec);
    (out, rec)
}

/// Hilbert–Schmidt norm of `G` into `H^s`.
pub fn hs_norm(g: &NoiseCoefficient, s: f64) -> f64 {
    g.hs_norm(s)
}

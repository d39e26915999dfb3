//! Run configuration: sectioned `key = value` text with embedded defaults and
//! named parameter constraints.

use std::sync::Arc;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::convexint::{DesignOptions, E0Search};
use crate::error::{Error, Result};
use crate::field::{SpectralVelocity, WaveLattice};
use crate::galerkin::{InitialState, SolverConfig};
use crate::noise::{NoiseCoefficient, NoiseParams};
use crate::rough::StopParams;
use crate::selection::{DiscountedFunctional, FunctionalSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    /// Lattice size `N` per axis.
    pub n: usize,
    /// Galerkin truncation `|k|_∞ ≤ cutoff`; `None` uses the dealiasing cutoff.
    pub cutoff: Option<usize>,
    /// Viscosity `ν`; `None` uses `1/cutoff`.
    pub viscosity: Option<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            n: 16,
            cutoff: None,
            viscosity: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    pub dt: f64,
    /// Horizon `T`.
    pub horizon: f64,
    pub frame_stride: usize,
    /// CFL safety factor.
    pub cfl: f64,
}

impl Default for TimeSection {
    fn default() -> Self {
        TimeSection {
            dt: 0.005,
            horizon: 0.5,
            frame_stride: 10,
            cfl: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub gamma: f64,
    pub sigma: f64,
    pub c_g: f64,
    /// Largest forced `|k|_∞`; `None` forces every dealiased mode.
    pub cutoff: Option<usize>,
    pub u1_decay: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        let p = NoiseParams::default();
        NoiseSection {
            gamma: p.gamma,
            sigma: p.sigma,
            c_g: p.c_g,
            cutoff: Some(3),
            u1_decay: p.u1_decay,
        }
    }
}

/// Path-space exponents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathSection {
    pub alpha: f64,
    pub q: f64,
    pub k: f64,
}

impl Default for PathSection {
    fn default() -> Self {
        PathSection {
            alpha: 0.9,
            q: 8.0,
            k: 2.0,
        }
    }
}

/// Stopping-time thresholds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StopSection {
    pub delta: f64,
    pub beta: f64,
    pub p: f64,
    /// Level `L`.
    pub level: f64,
}

impl Default for StopSection {
    fn default() -> Self {
        StopSection {
            delta: 0.1,
            beta: 0.375,
            p: 20.0,
            level: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WildSection {
    /// Defect levels `l`; `inf` is allowed.
    pub l: Vec<f64>,
    /// Recursion depth `K`.
    pub depth: usize,
    /// First-layer frequency.
    pub n0: usize,
    /// Design margin relative to the energy level.
    pub margin: f64,
    /// Block support `ε`; `None` uses `T/8`.
    pub eps: Option<f64>,
    /// Driver seed; required by the wild pipeline.
    pub driver_seed: Option<u64>,
    /// Seeds used to calibrate the admissible energy.
    pub calibration_paths: usize,
}

impl Default for WildSection {
    fn default() -> Self {
        WildSection {
            l: vec![2.0, f64::INFINITY],
            depth: 3,
            n0: 1,
            margin: 0.01,
            eps: None,
            driver_seed: None,
            calibration_paths: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectSection {
    /// Discount rate `λ`.
    pub lambda: f64,
    pub tie_tol: f64,
    /// Functional chain, see [`crate::selection::FunctionalSpec::parse`].
    pub chain: Vec<String>,
    /// Clipping bound of the integrands.
    pub bound: f64,
    /// Candidate trajectory directories, one law per entry.
    pub candidates: Vec<String>,
}

impl Default for SelectSection {
    fn default() -> Self {
        SelectSection {
            lambda: 1.0,
            tie_tol: 1e-6,
            chain: vec!["c1".into(), "energy".into()],
            bound: 1e6,
            candidates: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceSection {
    pub tol_div: f64,
    pub tol_psd: f64,
    pub tol_pde: f64,
}

impl Default for ToleranceSection {
    fn default() -> Self {
        ToleranceSection {
            tol_div: 1e-10,
            tol_psd: 1e-9,
            tol_pde: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    /// Ensemble size.
    pub paths: usize,
    pub out: String,
    pub jobs: usize,
    /// Initial datum: random field on `|k|_∞ ≤ initial_cutoff` with `L²` norm `initial_norm`.
    pub initial_cutoff: usize,
    pub initial_norm: f64,
    pub initial_seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 0,
            paths: 10,
            out: "out".into(),
            jobs: 1,
            initial_cutoff: 3,
            initial_norm: 1.0,
            initial_seed: 1,
        }
    }
}

/// Full configuration of a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub time: TimeSection,
    pub noise: NoiseSection,
    pub path: PathSection,
    pub stop: StopSection,
    pub wild: WildSection,
    pub select: SelectSection,
    pub tolerances: ToleranceSection,
    pub run: RunSection,
}

fn require(ok: bool, constraint: &str, detail: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(constraint, detail()))
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("syntax", e.to_string()))
    }

    /// Sectioned text that [`RunConfig::parse`] maps back to `self`.
    pub fn emit(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("emit", e.to_string()))
    }

    /// Parses and validates.
    pub fn load(text: &str) -> Result<Self> {
        let c = Self::parse(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn defaults_text() -> String {
        Self::default().emit().expect("defaults serialize")
    }

    pub fn steps(&self) -> usize {
        (self.time.horizon / self.time.dt).round() as usize
    }

    pub fn eps(&self) -> f64 {
        self.wild.eps.unwrap_or(self.time.horizon / 8.0)
    }

    /// Checks every parameter against its constraint; the error names the first violation.
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        require(g.n >= 4 && g.n % 2 == 0, "lattice", || {
            format!("N must be even and at least 4, got {}", g.n)
        })?;
        let kmax = g.n / 2 - 1;
        if let Some(c) = g.cutoff {
            require((1..=kmax).contains(&c), "galerkin_cutoff", || {
                format!("cutoff must lie in 1..={kmax}, got {c}")
            })?;
        }
        if let Some(nu) = g.viscosity {
            require(nu >= 0.0 && nu.is_finite(), "viscosity", || {
                format!("ν = {nu} must be ≥ 0")
            })?;
        }

        let t = &self.time;
        require(t.dt > 0.0 && t.dt.is_finite(), "dt", || {
            format!("Δt = {} must be > 0", t.dt)
        })?;
        require(t.horizon > 0.0 && t.horizon.is_finite(), "horizon", || {
            format!("T = {} must be > 0", t.horizon)
        })?;
        let ratio = t.horizon / t.dt;
        require(
            (ratio - ratio.round()).abs() < 1e-9 * ratio.max(1.0),
            "time_grid",
            || format!("T/Δt = {ratio} must be an integer"),
        )?;
        require(t.frame_stride >= 1, "frame_stride", || {
            "frame stride must be ≥ 1".into()
        })?;
        require(t.cfl > 0.0 && t.cfl <= 1.0, "cfl", || {
            format!("CFL factor {} must lie in (0, 1]", t.cfl)
        })?;

        let nz = &self.noise;
        require(nz.gamma > 3.0 + nz.sigma / 2.0, "noise_regularity", || {
            format!("γ > 3 + σ/2 fails: γ = {}, σ = {}", nz.gamma, nz.sigma)
        })?;
        require(nz.sigma > 0.0, "sigma", || format!("σ = {} must be > 0", nz.sigma))?;
        require(nz.c_g >= 0.0 && nz.c_g.is_finite(), "c_g", || {
            format!("c_G = {} must be ≥ 0", nz.c_g)
        })?;
        if let Some(c) = nz.cutoff {
            require((1..=kmax).contains(&c), "noise_cutoff", || {
                format!("noise cutoff must lie in 1..={kmax}, got {c}")
            })?;
        }

        let p = &self.path;
        require(p.alpha > 2.0 / 3.0 && p.alpha < 1.0, "alpha_range", || {
            format!("α ∈ (2/3, 1) fails: α = {}", p.alpha)
        })?;
        require(p.k > 1.5, "k_range", || format!("k > 3/2 fails: k = {}", p.k))?;
        require(p.q > 1.0, "q_range", || format!("q > 1 fails: q = {}", p.q))?;
        require(p.alpha * p.q > 2.0, "alpha_q", || {
            format!("αq > 2 fails: αq = {}", p.alpha * p.q)
        })?;
        let emb = 1.5 * p.alpha - 2.0 / p.q;
        require(emb > 1.0, "embedding", || format!("3α/2 − 2/q > 1 fails: value {emb}"))?;

        let s = &self.stop;
        require(s.delta > 0.0 && s.delta < 0.25, "delta_range", || {
            format!("0 < δ < 1/4 fails: δ = {}", s.delta)
        })?;
        require(s.p > 1.0, "p_range", || format!("p > 1 fails: p = {}", s.p))?;
        require(s.beta > 0.0 && s.beta < 1.0, "beta_range", || {
            format!("β ∈ (0, 1) fails: β = {}", s.beta)
        })?;
        let lo = 0.5 - 2.0 * s.delta + 1.0 / s.p;
        let hi = 0.5 - s.delta;
        require(s.beta > lo && s.beta < hi, "beta_window", || {
            format!("1/2 − 2δ + 1/p < β < 1/2 − δ fails: {lo} < {} < {hi}", s.beta)
        })?;
        require(s.level > 0.0 && s.level.is_finite(), "level", || {
            format!("L = {} must be > 0", s.level)
        })?;

        let w = &self.wild;
        for &l in &w.l {
            require(l >= 2.0 && !l.is_nan(), "defect_level", || {
                format!("l ≥ 2 fails: l = {l}")
            })?;
        }
        let top = w.n0.checked_shl(w.depth.saturating_sub(1) as u32).unwrap_or(usize::MAX);
        require(w.n0 >= 1 && (w.depth == 0 || top <= kmax), "frequency", || {
            format!(
                "layer frequencies n0·2^(k−1) must lie in 1..={kmax}, got n0 = {}, K = {}",
                w.n0, w.depth
            )
        })?;
        require(w.margin > 0.0 && w.margin < 1.0, "design_margin", || {
            format!("relative margin {} must lie in (0, 1)", w.margin)
        })?;
        let eps = self.eps();
        require(eps > 0.0 && 2.0 * eps <= t.horizon, "eps", || {
            format!("0 < 2ε ≤ T fails: ε = {eps}, T = {}", t.horizon)
        })?;
        require(w.calibration_paths >= 1, "calibration_paths", || {
            "need at least one calibration path".into()
        })?;

        let sel = &self.select;
        require(sel.lambda > 0.0 && sel.lambda.is_finite(), "lambda", || {
            format!("λ = {} must be > 0", sel.lambda)
        })?;
        require(sel.tie_tol >= 0.0, "tie_tol", || {
            format!("tie_tol = {} must be ≥ 0", sel.tie_tol)
        })?;
        require(sel.bound > 0.0, "bound", || {
            format!("bound = {} must be > 0", sel.bound)
        })?;
        require(!sel.chain.is_empty(), "chain", || "functional chain is empty".into())?;
        for f in &sel.chain {
            crate::selection::FunctionalSpec::parse(f)?;
        }

        let tol = &self.tolerances;
        for (name, v) in [
            ("tol_div", tol.tol_div),
            ("tol_psd", tol.tol_psd),
            ("tol_pde", tol.tol_pde),
        ] {
            require(v > 0.0, name, || format!("{name} = {v} must be > 0"))?;
        }

        let r = &self.run;
        let seed_max = i64::MAX as u64;
        let seeds_fit = r.seed.checked_add(r.paths as u64).is_some_and(|s| s <= seed_max)
            && self.wild.driver_seed.map_or(true, |s| s <= seed_max)
            && r.initial_seed <= seed_max;
        require(seeds_fit, "seed", || format!("seeds must stay below {seed_max}"))?;
        require(r.paths >= 1, "paths", || "ensemble size must be ≥ 1".into())?;
        require(r.jobs >= 1, "jobs", || "jobs must be ≥ 1".into())?;
        require((1..=kmax).contains(&r.initial_cutoff), "initial_cutoff", || {
            format!("initial cutoff must lie in 1..={kmax}, got {}", r.initial_cutoff)
        })?;
        require(r.initial_norm >= 0.0, "initial_norm", || {
            "initial norm must be ≥ 0".into()
        })?;
        Ok(())
    }

    /// Non-fatal remarks about parameter choices.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.stop.delta >= 1.0 / 12.0 {
            out.push(format!(
                "δ = {} ≥ 1/12: the path-space stopping time construction assumes δ < 1/12",
                self.stop.delta
            ));
        }
        out
    }

    pub fn lattice(&self) -> Result<Arc<WaveLattice>> {
        WaveLattice::new(self.grid.n)
    }

    pub fn noise_params(&self) -> NoiseParams {
        NoiseParams {
            gamma: self.noise.gamma,
            sigma: self.noise.sigma,
            c_g: self.noise.c_g,
            cutoff: self.noise.cutoff,
            u1_decay: self.noise.u1_decay,
        }
    }

    pub fn noise(&self, lattice: &Arc<WaveLattice>) -> Result<Arc<NoiseCoefficient>> {
        Ok(Arc::new(NoiseCoefficient::spectral(lattice, self.noise_params())?))
    }

    pub fn solver(&self, lattice: &Arc<WaveLattice>) -> SolverConfig {
        let cutoff = self.grid.cutoff.unwrap_or_else(|| lattice.dealias_cutoff());
        let mut cfg = SolverConfig::new(lattice, cutoff, self.time.dt, self.steps());
        if let Some(nu) = self.grid.viscosity {
            cfg.viscosity = nu;
        }
        cfg.frame_stride = self.time.frame_stride;
        cfg.cfl = self.time.cfl;
        cfg
    }

    pub fn stop_params(&self) -> StopParams {
        StopParams {
            delta: self.stop.delta,
            beta: self.stop.beta,
            p: self.stop.p,
            sigma: self.noise.sigma,
        }
    }

    pub fn design_options(&self) -> DesignOptions {
        DesignOptions {
            depth: self.wild.depth,
            n0: self.wild.n0,
            delta: self.wild.margin,
            ..DesignOptions::default()
        }
    }

    pub fn e0_search(&self) -> E0Search {
        E0Search::default()
    }

    pub fn seeds(&self) -> Vec<u64> {
        crate::ensemble::seed_range(self.run.seed, self.run.paths)
    }

    /// Random divergence-free datum on `|k|_∞ ≤ initial_cutoff` with `L²` norm `initial_norm`.
    pub fn initial_state(&self, lattice: &Arc<WaveLattice>) -> InitialState {
        let r = &self.run;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(r.initial_seed);
        let u = SpectralVelocity::random(lattice, &mut rng, r.initial_cutoff, 1.0);
        let norm = u.norm_sq().sqrt();
        let scale = if norm > 0.0 { r.initial_norm / norm } else { 0.0 };
        InitialState::from_velocity(u.scale(scale))
    }

    /// Discounted functionals of the selection chain, in order.
    pub fn chain(&self) -> Result<Vec<DiscountedFunctional>> {
        let s = &self.select;
        s.chain
            .iter()
            .map(|name| {
                Ok(DiscountedFunctional::new(
                    s.lambda,
                    FunctionalSpec::parse(name)?,
                    s.bound,
                ))
            })
            .collect()
    }
}

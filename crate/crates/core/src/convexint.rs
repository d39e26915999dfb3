//! Finite-depth convex integration.
//!
//! Subsolutions are sums of shear layers: every block is a function of `x₃`
//! alone with in-plane velocity, so `div w = 0` holds exactly and the block
//! stresses are divergence-free. A block switched on in time carries the
//! corrector `C` with `div C = −w`, which closes `∂_t v + div H = 0`.
//! All design work happens on one line of `N` nodes and is broadcast to the
//! lattice only for audits and emitted fields.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{
    divergence_of_stress, outer, sym_max_eigenvalue, SpectralVector, SpectralVelocity, StressGrid, Sym3, VectorGrid,
    WaveLattice, TORUS_VOLUME,
};
use crate::galerkin::{simulate, InitialState, SolverConfig};
use crate::noise::{stopped_path, NoiseCoefficient, WienerPath};
use crate::rough::{defect_coefficient, iterated_ito, stopping_time_tl, StopParams, StopReport};
use crate::trajectory::{DissipativeTrajectory, Frame, Origin, Projections, ScalarSeries, TrajectoryMeta};

/// Tolerance on the discrete residual of `∂_t v + div H`.
pub const TOL_PDE: f64 = 1e-10;

/// Tolerance on the spectral divergence of subsolution velocities.
pub const TOL_DIV: f64 = 1e-10;

const BISECT: usize = 50;
const RAMP_SAMPLES: usize = 8;

/// `e(w, H) = (3/2) λ_max(w⊗w − H)`; rejects non-symmetric `H`.
pub fn e_lambda_max(w: [f64; 3], h: &Sym3) -> Result<f64> {
    let scale = h.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
    for i in 0..3 {
        for j in 0..i {
            if (h[i][j] - h[j][i]).abs() > 1e-12 * scale {
                return Err(Error::precondition(format!(
                    "H is not symmetric: H[{i}][{j}] = {}, H[{j}][{i}] = {}",
                    h[i][j], h[j][i]
                )));
            }
        }
    }
    Ok(e_value(w, h))
}

fn e_value(w: [f64; 3], h: &Sym3) -> f64 {
    let mut q = outer(w, w);
    for i in 0..3 {
        for j in 0..3 {
            q[i][j] -= h[i][j];
        }
    }
    1.5 * sym_max_eigenvalue(&q)
}

/// Time cutoff of a block.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TimeProfile {
    Constant,
    /// Smoothstep from 0 at `start` to 1 at `start + width`.
    Ramp {
        start: f64,
        width: f64,
    },
}

impl TimeProfile {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Constant => 1.0,
            TimeProfile::Ramp { start, width } => {
                let s = ((t - start) / width).clamp(0.0, 1.0);
                s * s * (3.0 - 2.0 * s)
            }
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Constant => 0.0,
            TimeProfile::Ramp { start, width } => {
                let s = (t - start) / width;
                if (0.0..=1.0).contains(&s) {
                    6.0 * s * (1.0 - s) / width
                } else {
                    0.0
                }
            }
        }
    }

    /// First time at which the profile is fully on.
    pub fn settled(&self) -> f64 {
        match *self {
            TimeProfile::Constant => 0.0,
            TimeProfile::Ramp { start, width } => start + width,
        }
    }

    fn samples(&self) -> Vec<f64> {
        match *self {
            TimeProfile::Constant => Vec::new(),
            TimeProfile::Ramp { start, width } => (0..=RAMP_SAMPLES)
                .map(|i| start + width * i as f64 / RAMP_SAMPLES as f64)
                .collect(),
        }
    }
}

/// One shear layer `χ(t) w(x₃)` with stress `χ V + χ' C`.
#[derive(Clone, Debug)]
pub struct OscillationBlock {
    pub frequency: usize,
    pub phase: f64,
    /// Nodal values along `x₃`; third component zero.
    pub velocity: Vec<[f64; 3]>,
    /// In-plane trace-free stress along `x₃`.
    pub stress: Vec<Sym3>,
    /// Corrector with `div C = −w`.
    pub corrector: Vec<Sym3>,
    pub profile: TimeProfile,
}

impl OscillationBlock {
    /// `∫ |w|²` over the torus.
    pub fn norm_sq(&self) -> f64 {
        line_inner(&self.velocity, &self.velocity)
    }

    pub fn velocity_field(&self, lattice: &Arc<WaveLattice>) -> SpectralVelocity {
        SpectralVelocity::new_checked(broadcast_velocity(lattice, &self.velocity), f64::INFINITY)
            .expect("shear layers are divergence-free")
    }

    /// `‖w‖_{H^{-1}}`.
    pub fn weak_norm(&self, lattice: &Arc<WaveLattice>) -> f64 {
        broadcast_velocity(lattice, &self.velocity).sobolev_norm(-1.0)
    }

    /// `‖χ w‖_{C^α_T H^{-1}}` sampled on `times`.
    pub fn weak_holder_norm(&self, lattice: &Arc<WaveLattice>, alpha: f64, times: &[f64]) -> f64 {
        let mut semi = 0.0f64;
        let mut sup = 0.0f64;
        for (i, &s) in times.iter().enumerate() {
            let cs = self.profile.value(s);
            sup = sup.max(cs.abs());
            for &t in &times[i + 1..] {
                let d = (t - s).abs();
                if d > 0.0 {
                    semi = semi.max((self.profile.value(t) - cs).abs() / d.powf(alpha));
                }
            }
        }
        self.weak_norm(lattice) * (sup + semi)
    }
}

/// Deterministic energy profile `e(t)`, a density.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum EnergyProfile {
    Constant(f64),
    /// `e0 − c_l (e0^{(1+β)/2} + 1) t^κ`.
    PowerLaw {
        e0: f64,
        c_l: f64,
        beta: f64,
        kappa: f64,
    },
}

impl EnergyProfile {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            EnergyProfile::Constant(e) => e,
            EnergyProfile::PowerLaw { e0, c_l, beta, kappa } => {
                e0 - c_l * (e0.powf(0.5 * (1.0 + beta)) + 1.0) * t.max(0.0).powf(kappa)
            }
        }
    }
}

/// Sum of shear layers with an energy profile and a driver allowance.
#[derive(Clone, Debug)]
pub struct Subsolution {
    pub lattice: Arc<WaveLattice>,
    pub blocks: Vec<OscillationBlock>,
    pub energy: EnergyProfile,
    /// Bound on `e(v + GB_L, H) − e(v, H)` over the stopped driver.
    pub allowance: f64,
    pub horizon: f64,
}

impl Subsolution {
    pub fn zero(lattice: &Arc<WaveLattice>, energy: EnergyProfile, allowance: f64, horizon: f64) -> Self {
        Subsolution {
            lattice: lattice.clone(),
            blocks: Vec::new(),
            energy,
            allowance,
            horizon,
        }
    }

    /// Level that `e(v, H)` must stay below on `[0, T]`.
    pub fn design_level(&self) -> f64 {
        self.energy.value(self.horizon).min(self.energy.value(0.0)) - self.allowance
    }

    pub fn line_velocity(&self, t: f64) -> Vec<[f64; 3]> {
        let mut out = vec![[0.0; 3]; self.lattice.n()];
        for b in &self.blocks {
            let c = b.profile.value(t);
            if c != 0.0 {
                for (o, w) in out.iter_mut().zip(&b.velocity) {
                    for d in 0..3 {
                        o[d] += c * w[d];
                    }
                }
            }
        }
        out
    }

    pub fn line_stress(&self, t: f64) -> Vec<Sym3> {
        let mut out = vec![[[0.0; 3]; 3]; self.lattice.n()];
        for b in &self.blocks {
            let (c, dc) = (b.profile.value(t), b.profile.derivative(t));
            for (j, o) in out.iter_mut().enumerate() {
                for p in 0..3 {
                    for q in 0..3 {
                        o[p][q] += c * b.stress[j][p][q] + dc * b.corrector[j][p][q];
                    }
                }
            }
        }
        out
    }

    pub fn velocity(&self, t: f64) -> SpectralVelocity {
        SpectralVelocity::new_checked(broadcast_velocity(&self.lattice, &self.line_velocity(t)), f64::INFINITY)
            .expect("shear layers are divergence-free")
    }

    pub fn stress(&self, t: f64) -> StressGrid {
        broadcast_stress(&self.lattice, &self.line_stress(t))
    }

    /// `½‖v(t)‖²`.
    pub fn kinetic(&self, t: f64) -> f64 {
        let v = self.line_velocity(t);
        0.5 * line_inner(&v, &v)
    }

    /// `α = ∫(e − ½|v|²)(0)`.
    pub fn alpha(&self) -> f64 {
        TORUS_VOLUME * self.energy.value(0.0) - self.kinetic(0.0)
    }

    /// `design_level − max_x e(v, H)(t)` without the driver.
    pub fn margin_at(&self, t: f64) -> f64 {
        let v = self.line_velocity(t);
        let h = self.line_stress(t);
        let worst = v.iter().zip(&h).map(|(w, s)| e_value(*w, s)).fold(f64::MIN, f64::max);
        self.design_level() - worst
    }

    /// Times at which the profile changes: `0`, `T` and every ramp sample.
    pub fn sample_times(&self) -> Vec<f64> {
        let mut t = vec![0.0, self.horizon];
        for b in &self.blocks {
            t.extend(b.profile.samples());
        }
        t.retain(|s| (0.0..=self.horizon).contains(s));
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }

    /// Smallest driver-free margin over [`Self::sample_times`].
    pub fn margin(&self) -> f64 {
        self.sample_times()
            .into_iter()
            .map(|t| self.margin_at(t))
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks the four subsolution invariants at the grid indices of `driver`.
    pub fn audit(&self, driver: Option<&WienerPath>, times: &[f64]) -> SubsolutionAudit {
        let mut out = SubsolutionAudit::default();
        for &t in times {
            let v = self.velocity(t);
            let h = self.stress(t);
            let mut x = v.as_vector().clone();
            if let Some(w) = driver {
                x.axpy(1.0, w.gb_at(w.snap_index(t)).as_vector());
            }
            let grid = x.to_grid();
            let worst = (0..self.lattice.len())
                .map(|i| e_value(grid.at(i), &h.at(i)))
                .fold(f64::MIN, f64::max);
            let mut res = broadcast_velocity(&self.lattice, &self.line_velocity_rate(t));
            res.axpy(1.0, &divergence_of_stress(&h));
            let trace = (0..self.lattice.len())
                .map(|i| {
                    let m = h.at(i);
                    (m[0][0] + m[1][1] + m[2][2]).abs()
                })
                .fold(0.0, f64::max);
            out.times.push(t);
            out.margin.push(self.energy.value(t) - worst);
            out.residual.push(res.norm_sq().sqrt());
            out.divergence.push(v.divergence_ratio());
            out.trace.push(trace);
        }
        out
    }

    fn line_velocity_rate(&self, t: f64) -> Vec<[f64; 3]> {
        let mut out = vec![[0.0; 3]; self.lattice.n()];
        for b in &self.blocks {
            let dc = b.profile.derivative(t);
            if dc != 0.0 {
                for (o, w) in out.iter_mut().zip(&b.velocity) {
                    for d in 0..3 {
                        o[d] += dc * w[d];
                    }
                }
            }
        }
        out
    }
}

/// Invariant measurements at audit times; `margin` is `e(t) − max e(v+GB, H)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SubsolutionAudit {
    pub times: Vec<f64>,
    pub margin: Vec<f64>,
    pub residual: Vec<f64>,
    pub divergence: Vec<f64>,
    pub trace: Vec<f64>,
}

impl SubsolutionAudit {
    pub fn worst_margin(&self) -> f64 {
        self.margin.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn worst_residual(&self) -> f64 {
        self.residual.iter().copied().fold(0.0, f64::max)
    }

    pub fn passes(&self, delta: f64) -> bool {
        self.worst_margin() > delta
            && self.worst_residual() <= TOL_PDE
            && self.divergence.iter().all(|&d| d <= TOL_DIV)
            && self.trace.iter().all(|&d| d <= 1e-12)
    }
}

fn line_inner(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    let n = a.len() as f64;
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| x[0] * y[0] + x[1] * y[1] + x[2] * y[2])
        .sum();
    s * TORUS_VOLUME / n
}

fn broadcast_velocity(lattice: &Arc<WaveLattice>, line: &[[f64; 3]]) -> SpectralVector {
    let mut g = VectorGrid::zeros(lattice);
    for idx in 0..lattice.len() {
        let v = line[lattice.split(idx)[2]];
        for d in 0..3 {
            g.comps[d][idx] = v[d];
        }
    }
    SpectralVector::from_grid(&g)
}

fn broadcast_stress(lattice: &Arc<WaveLattice>, line: &[Sym3]) -> StressGrid {
    let mut g = StressGrid::zeros(lattice);
    for idx in 0..lattice.len() {
        g.set(idx, &line[lattice.split(idx)[2]]);
    }
    g
}

/// Removes the mean and the Nyquist mode of each component.
fn filter_line(lattice: &WaveLattice, line: &mut [[f64; 3]]) {
    let n = lattice.n();
    for d in 0..3 {
        let mut buf: Vec<Complex64> = line.iter().map(|v| Complex64::new(v[d], 0.0)).collect();
        lattice.fft1(&mut buf, false);
        buf[0] = Complex64::new(0.0, 0.0);
        buf[n / 2] = Complex64::new(0.0, 0.0);
        lattice.fft1(&mut buf, true);
        for (v, c) in line.iter_mut().zip(&buf) {
            v[d] = c.re / n as f64;
        }
    }
}

/// `C` with `C_{i3} = C_{3i} = −W_i`, `W' = w`, `W` mean-free.
fn corrector_line(lattice: &WaveLattice, line: &[[f64; 3]]) -> Vec<Sym3> {
    let n = lattice.n();
    let mut out = vec![[[0.0; 3]; 3]; n];
    for d in 0..2 {
        let mut buf: Vec<Complex64> = line.iter().map(|v| Complex64::new(v[d], 0.0)).collect();
        lattice.fft1(&mut buf, false);
        for (i, c) in buf.iter_mut().enumerate() {
            let k = lattice.wavenumber(i);
            *c = if k == 0 || i == n / 2 {
                Complex64::new(0.0, 0.0)
            } else {
                *c / Complex64::new(0.0, k as f64)
            };
        }
        lattice.fft1(&mut buf, true);
        for (o, c) in out.iter_mut().zip(&buf) {
            o[d][2] = -c.re / n as f64;
            o[2][d] = -c.re / n as f64;
        }
    }
    out
}

/// Parameters of one perturbation step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOptions {
    pub frequency: usize,
    /// Margin the perturbed subsolution must keep.
    pub delta: f64,
    pub angles: usize,
    pub phases: usize,
    pub retries: usize,
    pub min_shrink: f64,
    /// Cap on the global amplitude factor; fixing it keeps the block while
    /// the frequency changes.
    pub max_shrink: f64,
    pub profile: TimeProfile,
}

impl StepOptions {
    pub fn new(frequency: usize, delta: f64) -> Self {
        StepOptions {
            frequency,
            delta,
            angles: 16,
            phases: 8,
            retries: 3,
            min_shrink: 1e-3,
            max_shrink: 1.0,
            profile: TimeProfile::Constant,
        }
    }
}

/// Result of [`oscillation_step`].
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub sub: Subsolution,
    pub frequency: usize,
    pub phase: f64,
    /// `α` of the input.
    pub alpha: f64,
    /// `∫½|v+w_n|² − ∫½|v|²` once the block is fully on.
    pub gain: f64,
    /// Driver-free margin of the output.
    pub margin: f64,
    /// Measured `c` in `gain ≥ (c/ē)∫(e − ½|v|²)²`.
    pub c_gain: f64,
    /// `‖w_n‖_{H^{-1}}`.
    pub weak_norm: f64,
    pub residual: f64,
    pub shrink: f64,
}

struct Candidate {
    gain: f64,
    shrink: f64,
    phase: f64,
    velocity: Vec<[f64; 3]>,
    stress: Vec<Sym3>,
}

/// Adds one shear layer at `opts.frequency`, doubling the frequency on failure.
pub fn oscillation_step(sub: &Subsolution, opts: &StepOptions) -> Result<StepOutcome> {
    if !(opts.delta > 0.0) {
        return Err(Error::config(
            "delta",
            format!("margin must be positive, got {}", opts.delta),
        ));
    }
    let n = sub.lattice.n();
    let fmax = n / 2 - 1;
    if opts.frequency == 0 || opts.frequency > fmax {
        return Err(Error::config(
            "frequency",
            format!("frequency {} outside 1..={fmax}", opts.frequency),
        ));
    }
    let margin = sub.margin();
    if !(margin > opts.delta) {
        return Err(Error::precondition(format!(
            "subsolution margin {margin} does not exceed δ = {}",
            opts.delta
        )));
    }
    let mut freq = opts.frequency;
    for _ in 0..=opts.retries {
        if let Some(c) = best_candidate(sub, opts, freq) {
            if c.gain > 0.0 && c.shrink >= opts.min_shrink {
                return Ok(finish_step(sub, opts, freq, c));
            }
        }
        freq *= 2;
        if freq > fmax {
            break;
        }
    }
    Err(Error::NoConvergence(format!(
        "no admissible layer from frequency {} after {} retries",
        opts.frequency, opts.retries
    )))
}

fn best_candidate(sub: &Subsolution, opts: &StepOptions, freq: usize) -> Option<Candidate> {
    let lat = &sub.lattice;
    let n = lat.n();
    let t_on = opts.profile.settled();
    let w = sub.line_velocity(t_on);
    let h = sub.line_stress(t_on);
    let bound = (2.0 / 3.0) * (sub.design_level() - opts.delta);
    let dirs: Vec<[f64; 3]> = (0..opts.angles)
        .map(|a| {
            let th = std::f64::consts::PI * a as f64 / opts.angles as f64;
            [th.cos(), th.sin(), 0.0]
        })
        .collect();
    let amp: Vec<Vec<f64>> = (0..n)
        .map(|j| dirs.iter().map(|d| max_amplitude(w[j], &h[j], *d, bound)).collect())
        .collect();
    let mut trial = sub.clone();
    trial.blocks.push(OscillationBlock {
        frequency: freq,
        phase: 0.0,
        velocity: Vec::new(),
        stress: Vec::new(),
        corrector: Vec::new(),
        profile: opts.profile,
    });
    let mut times = trial.sample_times();
    times.push(t_on);
    let mut best: Option<Candidate> = None;
    for p in 0..opts.phases {
        let phase = 2.0 * std::f64::consts::PI * p as f64 / opts.phases as f64;
        let mut vel = vec![[0.0; 3]; n];
        let mut stress = vec![[[0.0; 3]; 3]; n];
        for j in 0..n {
            let s = (freq as f64 * lat.node_coord(j) + phase).sin();
            let mut top = (-1.0, 0usize, 1.0);
            for (a, d) in dirs.iter().enumerate() {
                let wa = w[j][0] * d[0] + w[j][1] * d[1];
                let amp_s = amp[j][a] * s;
                let g = (amp_s * wa).abs() + 0.5 * amp_s * amp_s;
                if g > top.0 + 1e-12 {
                    let sign = if amp_s * wa < 0.0 { -1.0 } else { 1.0 };
                    top = (g, a, sign);
                }
            }
            let (_, a, sign) = top;
            let d = dirs[a];
            let c = sign * amp[j][a];
            for q in 0..2 {
                vel[j][q] = c * s * d[q];
            }
            let wa = w[j][0] * d[0] + w[j][1] * d[1];
            let m = outer(w[j], d);
            for p in 0..2 {
                for q in 0..2 {
                    stress[j][p][q] = c * s * (2.0 * m[p][q] - if p == q { wa } else { 0.0 });
                }
            }
        }
        filter_line(lat, &mut vel);
        let corr = corrector_line(lat, &vel);
        let feasible = |c: f64| {
            let mut t = trial.clone();
            let b = t.blocks.last_mut().expect("trial block");
            b.velocity = vel.iter().map(|v| v.map(|x| c * x)).collect();
            b.stress = stress.iter().map(|m| m.map(|r| r.map(|x| c * x))).collect();
            b.corrector = corr.iter().map(|m| m.map(|r| r.map(|x| c * x))).collect();
            times.iter().all(|&s| t.margin_at(s) >= opts.delta)
        };
        let cap = opts.max_shrink;
        let shrink = if feasible(cap) {
            cap
        } else {
            let (mut lo, mut hi) = (0.0, cap);
            for _ in 0..BISECT {
                let mid = 0.5 * (lo + hi);
                if feasible(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        let scaled: Vec<[f64; 3]> = vel.iter().map(|v| v.map(|x| shrink * x)).collect();
        let sum: Vec<[f64; 3]> = w
            .iter()
            .zip(&scaled)
            .map(|(a, b)| [a[0] + b[0], a[1] + b[1], a[2] + b[2]])
            .collect();
        let gain = 0.5 * (line_inner(&sum, &sum) - line_inner(&w, &w));
        if best.as_ref().is_none_or(|b| gain > b.gain + 1e-12) {
            best = Some(Candidate {
                gain,
                shrink,
                phase,
                velocity: vel,
                stress,
            });
        }
    }
    best
}

/// Largest `A` with `λ_max(Q + A² d⊗d) + A|w·d| ≤ bound`, `Q = w⊗w − H`.
fn max_amplitude(w: [f64; 3], h: &Sym3, d: [f64; 3], bound: f64) -> f64 {
    let mut q = outer(w, w);
    for i in 0..3 {
        for j in 0..3 {
            q[i][j] -= h[i][j];
        }
    }
    let wd = (w[0] * d[0] + w[1] * d[1] + w[2] * d[2]).abs();
    let ok = |a: f64| {
        let mut m = q;
        let p = outer(d, d);
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += a * a * p[i][j];
            }
        }
        sym_max_eigenvalue(&m) + a * wd <= bound
    };
    if !ok(0.0) {
        return 0.0;
    }
    let qn = q.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut hi = (bound.abs() + 3.0 * qn).sqrt() + 1.0;
    while ok(hi) {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..BISECT {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn finish_step(sub: &Subsolution, opts: &StepOptions, freq: usize, c: Candidate) -> StepOutcome {
    let lat = &sub.lattice;
    let s = c.shrink;
    let velocity: Vec<[f64; 3]> = c.velocity.iter().map(|v| v.map(|x| s * x)).collect();
    let block = OscillationBlock {
        frequency: freq,
        phase: c.phase,
        corrector: corrector_line(lat, &velocity),
        stress: c.stress.iter().map(|m| m.map(|r| r.map(|x| s * x))).collect(),
        velocity,
        profile: opts.profile,
    };
    let t_on = opts.profile.settled();
    let e_t = sub.energy.value(t_on);
    let w = sub.line_velocity(t_on);
    let gap_sq: f64 = w
        .iter()
        .map(|v| (e_t - 0.5 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2])).powi(2))
        .sum::<f64>()
        * TORUS_VOLUME
        / lat.n() as f64;
    let weak_norm = block.weak_norm(lat);
    let mut out = sub.clone();
    out.blocks.push(block);
    let residual = out.audit(None, &out.sample_times()).worst_residual();
    StepOutcome {
        margin: out.margin(),
        alpha: sub.alpha(),
        gain: c.gain,
        c_gain: if gap_sq > 0.0 { c.gain * e_t / gap_sq } else { 0.0 },
        weak_norm,
        residual,
        shrink: s,
        frequency: freq,
        phase: c.phase,
        sub: out,
    }
}

/// Per-path kinetic and reference energies on the driver grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SubsolutionPath {
    pub dt: f64,
    /// `½‖v + GB_L‖²` at each grid time.
    pub kinetic: Vec<f64>,
    /// Reference energy (total) at each grid time.
    pub energy: Vec<f64>,
    pub tau_index: usize,
}

/// Energy that the kinetic energy is compared against.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Reference {
    /// `|𝕋³| e(t)` from the deterministic profile.
    Profile,
    /// `e_l(v)(t)` for the given `l`.
    EnergyL(f64),
}

impl SubsolutionPath {
    /// Kinetic energy `energy/2` against `e_l = z/2` along a stored trajectory.
    pub fn from_trajectory(traj: &DissipativeTrajectory, tau_index: usize) -> Self {
        SubsolutionPath {
            dt: traj.dt,
            kinetic: traj.scalars.energy.iter().map(|e| 0.5 * e).collect(),
            energy: traj.scalars.z.iter().map(|z| 0.5 * z).collect(),
            tau_index,
        }
    }
}

/// Block projections on the noise basis and their Gram matrix, shared by
/// every path of an ensemble.
#[derive(Clone, Debug)]
pub struct PathEvaluator<'a> {
    sub: &'a Subsolution,
    proj: Vec<Vec<f64>>,
    gram: Vec<Vec<f64>>,
}

impl<'a> PathEvaluator<'a> {
    pub fn new(sub: &'a Subsolution, noise: &NoiseCoefficient) -> Self {
        let proj = sub
            .blocks
            .iter()
            .map(|b| noise.project(b.velocity_field(&sub.lattice).as_vector()))
            .collect();
        let gram = sub
            .blocks
            .iter()
            .map(|a| {
                sub.blocks
                    .iter()
                    .map(|b| line_inner(&a.velocity, &b.velocity))
                    .collect()
            })
            .collect();
        PathEvaluator { sub, proj, gram }
    }

    /// `½‖v + GB_L‖²` and the reference along a (stopped) driver.
    pub fn evaluate(&self, driver: &WienerPath, reference: Reference, tau_index: usize) -> Result<SubsolutionPath> {
        if tau_index > driver.steps {
            return Err(Error::precondition(format!(
                "τ index {tau_index} beyond driver grid {}",
                driver.steps
            )));
        }
        let sub = self.sub;
        let noise = &driver.noise;
        let m = noise.len();
        if self.proj.first().is_some_and(|p| p.len() != m) {
            return Err(Error::GridMismatch("driver noise differs from the evaluator's".into()));
        }
        let g = noise.gains();
        let k = sub.blocks.len();
        let hs2 = noise.hs_norm(0.0).powi(2);
        let stop = driver.stop.map(|s| s.index).unwrap_or(driver.steps);
        let coef = match reference {
            Reference::EnergyL(l) => defect_coefficient(l),
            Reference::Profile => 0.0,
        };
        let mut beta = vec![0.0; m];
        let mut v = vec![0.0; m];
        let mut kinetic = Vec::with_capacity(driver.steps + 1);
        let mut energy = Vec::with_capacity(driver.steps + 1);
        let mut el = 0.0;
        for j in 0..=driver.steps {
            let t = driver.time(j);
            let chi: Vec<f64> = sub.blocks.iter().map(|b| b.profile.value(t)).collect();
            let mut vv = 0.0;
            for a in 0..k {
                for b in 0..k {
                    vv += chi[a] * chi[b] * self.gram[a][b];
                }
            }
            v.iter_mut().for_each(|x| *x = 0.0);
            for a in 0..k {
                if chi[a] != 0.0 {
                    for (x, p) in v.iter_mut().zip(&self.proj[a]) {
                        *x += chi[a] * p;
                    }
                }
            }
            let mut vg = 0.0;
            let mut gg = 0.0;
            for i in 0..m {
                let gb = g[i] * beta[i];
                vg += v[i] * gb;
                gg += gb * gb;
            }
            if j == 0 {
                el = 0.5 * vv;
            }
            kinetic.push(0.5 * vv + vg + 0.5 * gg);
            energy.push(match reference {
                Reference::Profile => TORUS_VOLUME * sub.energy.value(t),
                Reference::EnergyL(_) => el,
            });
            if j < driver.steps {
                let db = driver.increment(j);
                let mut inc = 0.0;
                for i in 0..m {
                    inc += g[i] * db[i] * (v[i] + g[i] * beta[i]);
                    beta[i] += db[i];
                }
                el += inc + if j < stop { coef * driver.dt * hs2 } else { 0.0 };
            }
        }
        Ok(SubsolutionPath {
            dt: driver.dt,
            kinetic,
            energy,
            tau_index,
        })
    }
}

/// One-off [`PathEvaluator::evaluate`].
pub fn evaluate_path(
    sub: &Subsolution,
    driver: &WienerPath,
    reference: Reference,
    tau_index: usize,
) -> Result<SubsolutionPath> {
    PathEvaluator::new(sub, &driver.noise).evaluate(driver, reference, tau_index)
}

/// Monte Carlo estimates of `I_ε` and `I_{τ,ε}` with standard errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Functionals {
    pub i_eps: f64,
    pub se_eps: f64,
    pub i_tau: f64,
    pub se_tau: f64,
    pub paths: usize,
    /// Fraction of paths with `τ ≥ 2ε`.
    pub active: f64,
}

/// `I_ε = E∫_ε^T(½‖v+GB_L‖² − e)` and `I_{τ,ε} = E[1{τ≥2ε}(½‖v+GB_L‖² − e)(τ)]`.
pub fn functionals_i(paths: &[SubsolutionPath], eps: f64) -> Result<Functionals> {
    if paths.is_empty() {
        return Err(Error::precondition("empty ensemble"));
    }
    let mut a = Vec::with_capacity(paths.len());
    let mut b = Vec::with_capacity(paths.len());
    let mut active = 0usize;
    for p in paths {
        let d: Vec<f64> = p.kinetic.iter().zip(&p.energy).map(|(k, e)| k - e).collect();
        let j0 = ((eps / p.dt) - 1e-9).ceil().max(0.0) as usize;
        let mut s = 0.0;
        for j in j0..d.len().saturating_sub(1) {
            s += 0.5 * p.dt * (d[j] + d[j + 1]);
        }
        a.push(s);
        let on = p.tau_index as f64 * p.dt >= 2.0 * eps - 1e-12;
        if on {
            active += 1;
        }
        b.push(if on { d[p.tau_index.min(d.len() - 1)] } else { 0.0 });
    }
    let (i_eps, se_eps) = mean_se(&a);
    let (i_tau, se_tau) = mean_se(&b);
    Ok(Functionals {
        i_eps,
        se_eps,
        i_tau,
        se_tau,
        paths: paths.len(),
        active: active as f64 / paths.len() as f64,
    })
}

fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Result of [`oscillation_step_at_stopping`].
#[derive(Clone, Debug)]
pub struct StoppingOutcome {
    pub step: StepOutcome,
    /// Functionals against the profile before and after the step.
    pub before: Functionals,
    pub after: Functionals,
    /// `(I_{τ,ε}^{after} − I_{τ,ε}^{before}) / α₀²`.
    pub c_measured: f64,
}

/// Perturbation switched on at `ε`, assessed on the stopped ensemble.
///
/// The precondition is `I_{τ,ε} < −α₀` against the energy profile; it is
/// waived when no path has `τ ≥ 2ε`, where the functional cannot move.
pub fn oscillation_step_at_stopping(
    sub: &Subsolution,
    drivers: &[Arc<WienerPath>],
    taus: &[usize],
    eps: f64,
    alpha0: f64,
    opts: &StepOptions,
) -> Result<StoppingOutcome> {
    if drivers.len() != taus.len() {
        return Err(Error::GridMismatch("one τ per driver required".into()));
    }
    if !(eps > 0.0 && 2.0 * eps <= sub.horizon) {
        return Err(Error::config("eps", format!("need 0 < 2ε ≤ T, got ε = {eps}")));
    }
    let eval = |s: &Subsolution| -> Result<Functionals> {
        let Some(first) = drivers.first() else {
            return Err(Error::precondition("empty ensemble"));
        };
        let ev = PathEvaluator::new(s, &first.noise);
        let paths = drivers
            .iter()
            .zip(taus)
            .map(|(d, &t)| ev.evaluate(d, Reference::Profile, t))
            .collect::<Result<Vec<_>>>()?;
        functionals_i(&paths, eps)
    };
    let before = eval(sub)?;
    if before.active > 0.0 && !(before.i_tau < -alpha0) {
        return Err(Error::precondition(format!(
            "I_(τ,ε) = {} is not below −α₀ = {}",
            before.i_tau, -alpha0
        )));
    }
    let mut o = *opts;
    o.profile = TimeProfile::Ramp { start: eps, width: eps };
    let step = oscillation_step(sub, &o)?;
    let after = eval(&step.sub)?;
    Ok(StoppingOutcome {
        c_measured: (after.i_tau - before.i_tau) / (alpha0 * alpha0),
        step,
        before,
        after,
    })
}

/// Search controls for [`admissible_energy`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct E0Search {
    pub start: f64,
    pub cap: f64,
    /// Largest allowed `(e(0) − e(T))/e(0)`.
    pub theta_drop: f64,
    /// Largest allowed allowance as a fraction of `e(T)`.
    pub theta_gb: f64,
    pub delta: f64,
}

impl Default for E0Search {
    fn default() -> Self {
        E0Search {
            start: 1.0,
            cap: 1e8,
            theta_drop: 0.5,
            theta_gb: 0.25,
            delta: 0.01,
        }
    }
}

/// Energy profile with the driver constants it was calibrated on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleEnergy {
    pub profile: EnergyProfile,
    pub c_l: f64,
    /// Pointwise bound on `|GB_L|` over the calibration drivers.
    pub g_inf: f64,
    pub allowance: f64,
    pub e0: f64,
    pub iterations: usize,
    /// Constraint that was last violated before acceptance.
    pub binding: Option<String>,
}

/// `1.5 (2√(2e₀) g∞ + g∞²)`: bound on `e(v + g, H) − e(v, H)`.
pub fn driver_allowance(e0: f64, g_inf: f64) -> f64 {
    1.5 * (2.0 * (2.0 * e0).sqrt() * g_inf + g_inf * g_inf)
}

/// Doubling search for `e(0)` in `e(t) = e0 − C(L)(e0^{(1+β)/2}+1)t^κ`.
pub fn admissible_energy(
    drivers: &[Arc<WienerPath>],
    level: f64,
    horizon: f64,
    params: &StopParams,
    search: &E0Search,
) -> Result<AdmissibleEnergy> {
    if drivers.is_empty() {
        return Err(Error::precondition("no calibration drivers"));
    }
    let kappa = params.holder_exponent();
    let vol = TORUS_VOLUME;
    let sup_basis = (2.0 / vol).sqrt();
    let mut c_l = 0.0f64;
    let mut g_inf = 0.0f64;
    for d in drivers {
        let stop = stopping_time_tl(d, level, params)?;
        let end = stop.index.min(d.snap_index(horizon));
        let ito = iterated_ito(d);
        let g = d.noise.gains();
        let betas = d.betas();
        let m = d.modes();
        for j in 1..=end {
            let b = &betas[j * m..(j + 1) * m];
            let l2 = b.iter().zip(&g).map(|(x, c)| (x * c).powi(2)).sum::<f64>().sqrt();
            let l1: f64 = b.iter().zip(&g).map(|(x, c)| (x * c).abs()).sum();
            let t = d.time(j).powf(kappa);
            c_l = c_l.max((ito.values[j].abs() / vol).max(sup_basis * l2) / t);
            g_inf = g_inf.max(sup_basis * l1);
        }
    }
    let mut e0 = search.start;
    let mut binding = None;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let profile = EnergyProfile::PowerLaw {
            e0,
            c_l,
            beta: params.beta,
            kappa,
        };
        let e_t = profile.value(horizon);
        let allowance = driver_allowance(e0, g_inf);
        let failed = if !(e_t > 1.5 * g_inf * g_inf + search.delta) {
            Some("positivity")
        } else if (e0 - e_t) / e0 > search.theta_drop {
            Some("drop")
        } else if allowance > search.theta_gb * e_t {
            Some("driver_allowance")
        } else {
            None
        };
        match failed {
            None => {
                return Ok(AdmissibleEnergy {
                    profile,
                    c_l,
                    g_inf,
                    allowance,
                    e0,
                    iterations,
                    binding,
                })
            }
            Some(name) => {
                binding = Some(name.to_string());
                e0 *= 2.0;
                if e0 > search.cap {
                    return Err(Error::NoConvergence(format!(
                        "e(0) search exceeded cap {}; binding constraint `{name}`",
                        search.cap
                    )));
                }
            }
        }
    }
}

/// Controls for the depth-`K` recursion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignOptions {
    pub depth: usize,
    /// Frequency of the first layer; layer `k` uses `n0 · 2^{k−1}`.
    pub n0: usize,
    /// Margin of the first layer as a fraction of the design level; later
    /// layers halve it.
    pub delta: f64,
    pub angles: usize,
    pub phases: usize,
    pub retries: usize,
    pub min_shrink: f64,
}

impl Default for DesignOptions {
    fn default() -> Self {
        DesignOptions {
            depth: 5,
            n0: 1,
            delta: 0.01,
            angles: 16,
            phases: 8,
            retries: 3,
            min_shrink: 1e-3,
        }
    }
}

/// Per-layer record of the recursion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerLog {
    pub k: usize,
    pub frequency: usize,
    pub alpha: f64,
    pub gain: f64,
    pub c_gain: f64,
    pub margin: f64,
    pub weak_norm: f64,
    pub residual: f64,
    pub shrink: f64,
}

#[derive(Clone, Debug)]
pub struct Design {
    pub sub: Subsolution,
    pub log: Vec<LayerLog>,
    /// `α_K` after the last layer.
    pub alpha_final: f64,
}

/// Runs `v_k = v_{k−1} + w_{k,n(k)}` for `k = 1..=K`.
pub fn design_subsolution(base: &Subsolution, opts: &DesignOptions) -> Result<Design> {
    let mut sub = base.clone();
    let mut log = Vec::with_capacity(opts.depth);
    let delta = opts.delta * base.design_level();
    for k in 1..=opts.depth {
        let step_opts = StepOptions {
            frequency: opts.n0 << (k - 1),
            delta: delta / (1u64 << (k - 1)) as f64,
            angles: opts.angles,
            phases: opts.phases,
            retries: opts.retries,
            min_shrink: opts.min_shrink,
            max_shrink: 1.0,
            profile: TimeProfile::Constant,
        };
        let out = oscillation_step(&sub, &step_opts)?;
        if let Some(prev) = log.last().map(|l: &LayerLog| l.alpha) {
            if !(out.alpha < prev) {
                return Err(Error::numeric(
                    k,
                    format!("α not decreasing: α_{k} = {} after α_{} = {prev}", out.alpha, k - 1),
                ));
            }
        }
        log.push(LayerLog {
            k,
            frequency: out.frequency,
            alpha: out.alpha,
            gain: out.gain,
            c_gain: out.c_gain,
            margin: out.margin,
            weak_norm: out.weak_norm,
            residual: out.residual,
            shrink: out.shrink,
        });
        sub = out.sub;
    }
    let alpha_final = sub.alpha();
    if let Some(last) = log.last() {
        if !(alpha_final < last.alpha) {
            return Err(Error::numeric(opts.depth, "α not decreasing at the last layer"));
        }
    }
    Ok(Design { sub, log, alpha_final })
}

/// Emission controls for wild trajectories.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WildConfig {
    pub l: f64,
    pub level: f64,
    pub stop: StopParams,
    /// Frame stride; `None` keeps only the initial frame.
    pub frame_stride: Option<usize>,
    pub record_projections: bool,
    /// Stride of driver-inclusive margin audits; `None` skips them.
    pub audit_stride: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct WildOutput {
    pub trajectory: DissipativeTrajectory,
    pub stop: StopReport,
    /// Amplitude `a(t_j)` of the last layer.
    pub amplitude: Vec<f64>,
    /// `(index, e(t) − max e(x, H))` at audit times.
    pub audit: Vec<(usize, f64)>,
    pub alpha_final: f64,
}

/// Emits `x = v_base + a(t) w_K + GB_L` with `½‖x‖² = e_l` on the whole grid.
///
/// `a` solves the energy equality step by step (root nearest the previous
/// value); `y` carries `t H_base + ∫a V_K + (a − 1) C_K` plus the isotropic
/// part that makes `∫tr ℜ = z`.
pub fn emit_wild(design: &Design, driver: &Arc<WienerPath>, cfg: &WildConfig) -> Result<WildOutput> {
    let sub = &design.sub;
    let lat = &sub.lattice;
    if sub.blocks.iter().any(|b| b.profile != TimeProfile::Constant) {
        return Err(Error::precondition("emission needs time-independent layers"));
    }
    if !(cfg.l >= 2.0) {
        return Err(Error::config("l", format!("need l ≥ 2, got {}", cfg.l)));
    }
    let stop = stopping_time_tl(driver, cfg.level, &cfg.stop)?;
    let (stopped, _) = stopped_path(driver, stop.time);
    let stopped = Arc::new(stopped);
    let noise = &driver.noise;
    let m = noise.len();
    let g = noise.gains();
    let hs2 = noise.hs_norm(0.0).powi(2);
    let coef = defect_coefficient(cfg.l);
    let dt = driver.dt;
    let steps = driver.steps;
    let depth = sub.blocks.len();

    let (base_blocks, last) = match sub.blocks.split_last() {
        Some((l, rest)) => (rest, Some(l)),
        None => (&sub.blocks[..], None),
    };
    let mut base_line = vec![[0.0; 3]; lat.n()];
    let mut h_line = vec![[[0.0; 3]; 3]; lat.n()];
    for b in base_blocks {
        for j in 0..lat.n() {
            for d in 0..3 {
                base_line[j][d] += b.velocity[j][d];
            }
            for p in 0..3 {
                for q in 0..3 {
                    h_line[j][p][q] += b.stress[j][p][q];
                }
            }
        }
    }
    let zero_line = vec![[0.0; 3]; lat.n()];
    let zero_stress = vec![[[0.0; 3]; 3]; lat.n()];
    let wk_line = last.map(|b| b.velocity.clone()).unwrap_or(zero_line);
    let vk_line = last.map(|b| b.stress.clone()).unwrap_or_else(|| zero_stress.clone());
    let ck_line = last.map(|b| b.corrector.clone()).unwrap_or(zero_stress);
    let v_base = broadcast_velocity(lat, &base_line);
    let w_k = broadcast_velocity(lat, &wk_line);
    let p_base = noise.project(&v_base);
    let p_k = noise.project(&w_k);
    let bb = line_inner(&base_line, &base_line);
    let kk = line_inner(&wk_line, &wk_line);
    let bk = line_inner(&base_line, &wk_line);
    let keep_frames = cfg.frame_stride.is_some();
    let grids = keep_frames.then(|| {
        (
            broadcast_stress(lat, &h_line),
            broadcast_stress(lat, &vk_line),
            broadcast_stress(lat, &ck_line),
        )
    });

    let mut a = 1.0;
    let mut a_int = 0.0;
    let mut el = 0.5 * (bb + 2.0 * bk + kk);
    let mut trace_y = 0.0;
    let mut beta = vec![0.0; m];
    let mut amplitude = Vec::with_capacity(steps + 1);
    let mut scalars = ScalarSeries::default();
    let mut frames = Vec::new();
    let mut audit = Vec::new();
    let mut proj = cfg.record_projections.then(|| Projections {
        modes: m,
        x: Vec::with_capacity((steps + 1) * m),
        ydiv: Vec::with_capacity((steps + 1) * m),
    });
    for j in 0..=steps {
        let t = driver.time(j);
        let (mut qb, mut qk, mut gg) = (0.0, 0.0, 0.0);
        for i in 0..m {
            let gb = g[i] * beta[i];
            qb += gb * p_base[i];
            qk += gb * p_k[i];
            gg += gb * gb;
        }
        if j > 0 && depth > 0 {
            let qa = 0.5 * kk;
            let qb1 = bk + qk;
            let qc = 0.5 * (bb + 2.0 * qb + gg) - el;
            let disc = qb1 * qb1 - 4.0 * qa * qc;
            if !(disc >= 0.0) || qa == 0.0 {
                return Err(Error::numeric(
                    j,
                    format!("energy equality unreachable: discriminant {disc}"),
                ));
            }
            let r = disc.sqrt();
            let (r1, r2) = ((-qb1 + r) / (2.0 * qa), (-qb1 - r) / (2.0 * qa));
            a = if (r1 - a).abs() <= (r2 - a).abs() { r1 } else { r2 };
        }
        amplitude.push(a);
        let energy = bb + a * a * kk + 2.0 * a * bk + 2.0 * (qb + a * qk) + gg;
        let z = 2.0 * el;
        scalars.push(t, energy, z, 0.0, z, trace_y);
        if let Some(p) = proj.as_mut() {
            for i in 0..m {
                p.x.push(p_base[i] + a * p_k[i] + g[i] * beta[i]);
                p.ydiv.push((1.0 - a) * p_k[i]);
            }
        }
        let on_frame = j == 0 || cfg.frame_stride.is_some_and(|s| j % s == 0 || j == steps);
        let on_audit = cfg.audit_stride.is_some_and(|s| j % s == 0 || j == steps);
        if on_frame || on_audit {
            let mut x = v_base.clone();
            x.axpy(a, &w_k);
            x.axpy(1.0, noise.apply(&beta).as_vector());
            if on_audit {
                let h = broadcast_stress(lat, &combine_stress(&h_line, &vk_line, a));
                let grid = x.to_grid();
                let worst = (0..lat.len())
                    .map(|i| e_value(grid.at(i), &h.at(i)))
                    .fold(f64::MIN, f64::max);
                audit.push((j, sub.energy.value(t) - worst));
            }
            if on_frame {
                let y = match &grids {
                    Some((hb, vk, ck)) => {
                        let mut y = hb.scale(t);
                        y.axpy(a_int, vk);
                        y.axpy(a - 1.0, ck);
                        y.add_identity(trace_y / (3.0 * TORUS_VOLUME));
                        y
                    }
                    None => StressGrid::zeros(lat),
                };
                frames.push(Frame {
                    index: j,
                    time: t,
                    x,
                    y,
                    z,
                });
            }
        }
        if j < steps {
            let db = stopped.increment(j);
            let mut inc = 0.0;
            for i in 0..m {
                inc += g[i] * db[i] * (p_base[i] + a * p_k[i] + g[i] * beta[i]);
                beta[i] += db[i];
            }
            el += inc + if j < stop.index { coef * dt * hs2 } else { 0.0 };
            trace_y += dt * z;
            a_int += dt * a;
        }
    }
    let mut meta = TrajectoryMeta::new(
        format!("wild-l{}-s{}", cfg.l, driver.seed),
        Some(driver.seed),
        Origin::Wild {
            l: cfg.l,
            level: cfg.level,
            depth,
        },
        cfg.frame_stride.unwrap_or(0),
    );
    meta.record("dt", dt);
    meta.record("N", lat.n());
    meta.record("T_L", stop.time);
    meta.record("alpha_K", design.alpha_final);
    meta.record("c_gain", design.log.iter().map(|l| l.c_gain).collect::<Vec<_>>());
    Ok(WildOutput {
        trajectory: DissipativeTrajectory {
            dt,
            scalars,
            frames,
            projections: proj,
            wiener: Some(stopped),
            meta,
        },
        stop,
        amplitude,
        audit,
        alpha_final: design.alpha_final,
    })
}

fn combine_stress(base: &[Sym3], vk: &[Sym3], a: f64) -> Vec<Sym3> {
    base.iter()
        .zip(vk)
        .map(|(b, v)| {
            let mut m = *b;
            for p in 0..3 {
                for q in 0..3 {
                    m[p][q] += a * v[p][q];
                }
            }
            m
        })
        .collect()
}

/// Zero base, recursion of depth `opts.depth`, then [`emit_wild`].
pub fn wild_generate(
    lattice: &Arc<WaveLattice>,
    driver: &Arc<WienerPath>,
    energy: &AdmissibleEnergy,
    opts: &DesignOptions,
    cfg: &WildConfig,
) -> Result<WildOutput> {
    let base = Subsolution::zero(lattice, energy.profile, energy.allowance, driver.horizon());
    let design = design_subsolution(&base, opts)?;
    emit_wild(&design, driver, cfg)
}

/// Jumps across the seam of a concatenated trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeamReport {
    pub index: usize,
    pub time: f64,
    pub z_jump: f64,
    /// `‖x(τ+) − x(τ−)‖`, the Galerkin projection of the restart state.
    pub x_jump: f64,
    pub y_jump: f64,
}

/// Restarts the Galerkin scheme at `(Π_n x, y, z)(τ)` with fresh increments
/// of `driver` and concatenates.
pub fn extend_beyond(
    wild: &DissipativeTrajectory,
    tau_index: usize,
    cfg: &SolverConfig,
    driver: &Arc<WienerPath>,
) -> Result<(DissipativeTrajectory, SeamReport)> {
    let f = wild
        .frame_at(tau_index)
        .ok_or_else(|| Error::precondition(format!("τ index {tau_index} is not a stored frame")))?;
    let e = f.x.norm_sq();
    if e > f.z * (1.0 + 1e-9) + 1e-14 {
        return Err(Error::precondition(format!(
            "restart state outside 𝕏: ‖x‖² = {e} > z = {}",
            f.z
        )));
    }
    if (driver.dt - wild.dt).abs() > 1e-12 * wild.dt {
        return Err(Error::GridMismatch("driver and trajectory grids differ".into()));
    }
    let remaining = driver.steps.saturating_sub(tau_index).min(cfg.steps);
    let t0 = f.time;
    let mut scalars = ScalarSeries::default();
    let s = &wild.scalars;
    for j in 0..=tau_index {
        scalars.push(
            s.t[j],
            s.energy[j],
            s.z[j],
            s.dissipation[j],
            s.trace_r[j],
            s.trace_y[j],
        );
    }
    let mut frames: Vec<Frame> = wild.frames.iter().filter(|g| g.index <= tau_index).cloned().collect();
    let mut seam = SeamReport {
        index: tau_index,
        time: t0,
        z_jump: 0.0,
        x_jump: 0.0,
        y_jump: 0.0,
    };
    let wild_wiener = wild.wiener.clone().unwrap_or_else(|| driver.clone());
    let mut inc = wild_wiener.truncate(tau_index).increments().to_vec();
    let mut projections = None;
    if remaining > 0 {
        let mut c = cfg.clone();
        c.steps = remaining;
        c.dt = driver.dt;
        c.record_projections = wild.projections.is_some();
        let x = SpectralVelocity::new_checked(f.x.clone(), 1e-8)?;
        let init = InitialState {
            x,
            y: f.y.clone(),
            z: f.z,
        };
        let tail = Arc::new(driver.shifted(tau_index));
        let gal = simulate(&c, &init, &tail)?;
        let g0 = gal.initial().expect("galerkin keeps the initial frame");
        seam.z_jump = g0.z - f.z;
        seam.x_jump = (&g0.x - &f.x).norm_sq().sqrt();
        seam.y_jump = g0.y.max_abs_diff(&f.y);
        let gs = &gal.scalars;
        for j in 1..gs.len() {
            scalars.push(
                t0 + gs.t[j],
                gs.energy[j],
                gs.z[j],
                s.dissipation[tau_index] + gs.dissipation[j],
                gs.trace_r[j],
                gs.trace_y[j],
            );
        }
        for mut g in gal.frames.into_iter().skip(1) {
            g.index += tau_index;
            g.time += t0;
            frames.push(g);
        }
        inc.extend_from_slice(&tail.increments()[..remaining * driver.modes()]);
        if let (Some(pw), Some(pg)) = (&wild.projections, &gal.projections) {
            let m = pw.modes;
            let mut p = Projections {
                modes: m,
                x: pw.x[..(tau_index + 1) * m].to_vec(),
                ydiv: pw.ydiv[..(tau_index + 1) * m].to_vec(),
            };
            let base = pw.ydiv_row(tau_index).to_vec();
            for j in 1..pg.steps() {
                p.x.extend_from_slice(pg.x_row(j));
                p.ydiv.extend(pg.ydiv_row(j).iter().zip(&base).map(|(a, b)| a + b));
            }
            projections = Some(p);
        }
    } else if let Some(pw) = &wild.projections {
        let m = pw.modes;
        projections = Some(Projections {
            modes: m,
            x: pw.x[..(tau_index + 1) * m].to_vec(),
            ydiv: pw.ydiv[..(tau_index + 1) * m].to_vec(),
        });
    }
    let wiener = WienerPath::from_increments(&driver.noise, driver.dt, driver.seed, inc)?;
    let mut meta = wild.meta.clone();
    meta.id = format!("{}-ext{}", wild.meta.id, tau_index);
    meta.origin = Origin::Concatenated { seam_index: tau_index };
    meta.record("seam_x_jump", seam.x_jump);
    Ok((
        DissipativeTrajectory {
            dt: wild.dt,
            scalars,
            frames,
            projections,
            wiener: Some(Arc::new(wiener)),
            meta,
        },
        seam,
    ))
}

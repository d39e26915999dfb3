//! Vanishing-viscosity stochastic Navier–Stokes on the Galerkin range `Π_n`.
//!
//! Each step applies an integrating factor to the viscous term, treats the
//! dealiased nonlinearity explicitly and adds the truncated noise increment:
//! `u_{j+1} = E(u_j + Δt N(u_j)) + Π_n G ΔB_j` with `E = e^{−ν|k|²Δt}` and
//! `N(u) = −Π_n P div(u⊗u)`. The energy process accumulates left-point Itô sums
//! with the same increments.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{divergence_of_stress, nonlinear_stress, SpectralVelocity, StressGrid, WaveLattice};
use crate::noise::{sample_wiener, NoiseCoefficient, WienerPath};
use crate::trajectory::{DissipativeTrajectory, Frame, Origin, Projections, ScalarSeries, TrajectoryMeta};

/// Default CFL safety factor.
pub const DEFAULT_CFL: f64 = 0.5;

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub lattice: Arc<WaveLattice>,
    /// Galerkin cutoff `n` on `|k|_∞`.
    pub cutoff: usize,
    pub viscosity: f64,
    pub dt: f64,
    pub steps: usize,
    pub frame_stride: usize,
    pub cfl: f64,
    pub record_projections: bool,
}

impl SolverConfig {
    /// Config with `ν = 1/n`, frames every 10 steps and the default CFL factor.
    pub fn new(lattice: &Arc<WaveLattice>, cutoff: usize, dt: f64, steps: usize) -> Self {
        SolverConfig {
            lattice: lattice.clone(),
            cutoff,
            viscosity: if cutoff == 0 { 0.0 } else { 1.0 / cutoff as f64 },
            dt,
            steps,
            frame_stride: 10,
            cfl: DEFAULT_CFL,
            record_projections: false,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps as f64
    }

    /// Largest admissible `Δt` for initial data `u0`.
    pub fn max_dt(&self, u0: &SpectralVelocity) -> f64 {
        let n = self.lattice.n() as f64;
        let visc = if self.viscosity > 0.0 {
            1.0 / (self.viscosity * (n / 2.0).powi(2))
        } else {
            f64::INFINITY
        };
        let sup = u0.to_grid().sup_norm();
        let adv = if sup > 0.0 { 1.0 / (sup * n) } else { f64::INFINITY };
        self.cfl * visc.min(adv)
    }

    pub fn validate(&self, u0: &SpectralVelocity) -> Result<()> {
        if self.cutoff > self.lattice.dealias_cutoff() {
            return Err(Error::config(
                "Galerkin cutoff n <= (N-1)/3",
                format!("n = {}, N = {}", self.cutoff, self.lattice.n()),
            ));
        }
        if !(self.viscosity >= 0.0) {
            return Err(Error::config("viscosity >= 0", format!("nu = {}", self.viscosity)));
        }
        if !(self.dt > 0.0) {
            return Err(Error::config("dt > 0", format!("dt = {}", self.dt)));
        }
        if self.frame_stride == 0 {
            return Err(Error::config("frame stride >= 1", "stride = 0"));
        }
        let max = self.max_dt(u0);
        if self.dt > max {
            return Err(Error::config(
                "CFL guard dt <= c_cfl * min(1/(nu (N/2)^2), 1/(|u0|_inf N))",
                format!("dt = {} exceeds {max:.4e}", self.dt),
            ));
        }
        if *u0.lattice != *self.lattice {
            return Err(Error::GridMismatch("initial velocity lives on another lattice".into()));
        }
        Ok(())
    }
}

/// Initial point `(x₀, y₀, z₀)` of the canonical process.
#[derive(Clone, Debug)]
pub struct InitialState {
    pub x: SpectralVelocity,
    pub y: StressGrid,
    pub z: f64,
}

impl InitialState {
    /// `y₀ = 0` and `z₀ = ‖x₀‖²`.
    pub fn from_velocity(x: SpectralVelocity) -> Self {
        let z = x.norm_sq();
        let y = StressGrid::zeros(&x.lattice);
        InitialState { x, y, z }
    }
}

/// Mutable state of one Galerkin run.
#[derive(Clone, Debug)]
pub struct GalerkinState {
    pub index: usize,
    pub u: SpectralVelocity,
    pub y: StressGrid,
    pub z: f64,
    pub dissipation: f64,
    pub trace_y: f64,
    /// `⟨div(y − y₀), e_i⟩` on the noise basis.
    pub ydiv: Vec<f64>,
}

/// `−P div(u⊗u)` before the Galerkin truncation.
fn transport(u: &SpectralVelocity) -> SpectralVelocity {
    divergence_of_stress(&nonlinear_stress(u)).leray_project().scale(-1.0)
}

/// One step of the scheme; `xi` is the truncated noise increment `Π_n G ΔB_j`.
pub fn step(
    cfg: &SolverConfig,
    state: &GalerkinState,
    xi: &SpectralVelocity,
    noise: Option<&NoiseCoefficient>,
) -> Result<GalerkinState> {
    let u = &state.u;
    let full = transport(u);
    let nl = full.galerkin_project(cfg.cutoff)?;
    let mut w = u.clone();
    w.axpy(cfg.dt, &nl);
    let nu = cfg.viscosity;
    let dt = cfg.dt;
    let mut next = w.multiply_modes(|k2| (-nu * k2 * dt).exp());
    next.axpy(1.0, xi);
    let e = u.norm_sq();
    let z = state.z + 2.0 * u.inner(xi) + xi.norm_sq();
    let dissipation = state.dissipation + 2.0 * nu * dt * u.gradient_norm_sq();
    let mut y = state.y.clone();
    y.add_outer(dt, &u.dealias().to_grid());
    let mut ydiv = state.ydiv.clone();
    if let Some(g) = noise {
        for (acc, p) in ydiv.iter_mut().zip(g.project(&full)) {
            *acc -= dt * p;
        }
    }
    let index = state.index + 1;
    if !next.norm_sq().is_finite() || !z.is_finite() {
        return Err(Error::numeric(index, "non-finite velocity or energy"));
    }
    Ok(GalerkinState {
        index,
        u: next,
        y,
        z,
        dissipation,
        trace_y: state.trace_y + dt * e,
        ydiv,
    })
}

fn frame(state: &GalerkinState, dt: f64) -> Frame {
    Frame {
        index: state.index,
        time: state.index as f64 * dt,
        x: state.u.as_vector().clone(),
        y: state.y.clone(),
        z: state.z,
    }
}

/// Runs the scheme over `cfg.steps` steps of `wiener`.
pub fn simulate(cfg: &SolverConfig, init: &InitialState, wiener: &Arc<WienerPath>) -> Result<DissipativeTrajectory> {
    cfg.validate(&init.x)?;
    if (wiener.dt - cfg.dt).abs() > 1e-12 * cfg.dt || wiener.steps < cfg.steps {
        return Err(Error::GridMismatch(format!(
            "driver has dt = {}, J = {}; solver needs dt = {}, J = {}",
            wiener.dt, wiener.steps, cfg.dt, cfg.steps
        )));
    }
    if init.x.norm_sq() > init.z * (1.0 + 1e-12) + 1e-14 {
        return Err(Error::precondition("initial state violates ‖x₀‖² ≤ z₀"));
    }
    let noise = &wiener.noise;
    let m = noise.len();
    let u0 = init.x.galerkin_project(cfg.cutoff)?;
    let mut state = GalerkinState {
        index: 0,
        u: u0,
        y: init.y.clone(),
        z: init.z,
        dissipation: 0.0,
        trace_y: init.y.trace_integral(),
        ydiv: vec![0.0; m],
    };
    let mut scalars = ScalarSeries::default();
    let mut frames = vec![frame(&state, cfg.dt)];
    let mut proj = cfg.record_projections.then(|| Projections {
        modes: m,
        x: Vec::with_capacity((cfg.steps + 1) * m),
        ydiv: Vec::with_capacity((cfg.steps + 1) * m),
    });
    let record = |s: &GalerkinState, scalars: &mut ScalarSeries, proj: &mut Option<Projections>| {
        let e = s.u.norm_sq();
        scalars.push(s.index as f64 * cfg.dt, e, s.z, s.dissipation, e, s.trace_y);
        if let Some(p) = proj.as_mut() {
            p.x.extend(noise.project(&s.u));
            p.ydiv.extend_from_slice(&s.ydiv);
        }
    };
    record(&state, &mut scalars, &mut proj);
    let track = cfg.record_projections.then_some(noise.as_ref());
    for j in 0..cfg.steps {
        let xi = wiener.gb_increment(j).galerkin_project(cfg.cutoff)?;
        state = step(cfg, &state, &xi, track)?;
        record(&state, &mut scalars, &mut proj);
        if state.index % cfg.frame_stride == 0 || state.index == cfg.steps {
            frames.push(frame(&state, cfg.dt));
        }
    }
    let mut meta = TrajectoryMeta::new(
        format!("galerkin-n{}-s{}", cfg.cutoff, wiener.seed),
        Some(wiener.seed),
        Origin::Galerkin {
            cutoff: cfg.cutoff,
            viscosity: cfg.viscosity,
        },
        cfg.frame_stride,
    );
    meta.record("dt", cfg.dt);
    meta.record("N", cfg.lattice.n());
    Ok(DissipativeTrajectory {
        dt: cfg.dt,
        scalars,
        frames,
        projections: proj,
        wiener: Some(wiener.clone()),
        meta,
    })
}

/// Samples a driver for `seed` and runs [`simulate`].
pub fn simulate_seeded(
    cfg: &SolverConfig,
    init: &InitialState,
    noise: &Arc<NoiseCoefficient>,
    seed: u64,
) -> Result<DissipativeTrajectory> {
    let w = Arc::new(sample_wiener(noise, cfg.dt, cfg.steps, seed)?);
    simulate(cfg, init, &w)
}

/// Uniform-in-`n` bounds of one sweep member.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepBound {
    pub cutoff: usize,
    pub initial_energy: f64,
    pub z0: f64,
    pub sup_energy: f64,
    pub sup_z: f64,
    /// `max_t (‖x‖² − z)`, nonpositive when the energy inequality holds.
    pub worst_energy_gap: f64,
}

/// Runs every cutoff in `cutoffs` (with `ν = 1/n`) on the same driver.
pub fn vanishing_viscosity_sweep(
    base: &SolverConfig,
    cutoffs: &[usize],
    init: &InitialState,
    wiener: &Arc<WienerPath>,
) -> Result<(Vec<DissipativeTrajectory>, Vec<SweepBound>)> {
    let mut trajs = Vec::with_capacity(cutoffs.len());
    let mut bounds = Vec::with_capacity(cutoffs.len());
    for &n in cutoffs {
        let cfg = SolverConfig {
            cutoff: n,
            viscosity: 1.0 / n as f64,
            ..base.clone()
        };
        let tr = simulate(&cfg, init, wiener)?;
        let s = &tr.scalars;
        bounds.push(SweepBound {
            cutoff: n,
            initial_energy: s.energy[0],
            z0: s.z[0],
            sup_energy: s.energy.iter().cloned().fold(f64::MIN, f64::max),
            sup_z: s.z.iter().cloned().fold(f64::MIN, f64::max),
            worst_energy_gap: s.energy.iter().zip(&s.z).map(|(e, z)| e - z).fold(f64::MIN, f64::max),
        });
        trajs.push(tr);
    }
    Ok((trajs, bounds))
}

/// `z(t) − ‖x(t)‖² − (z₀ − ‖x₀‖²) − D(t)` at every step.
pub fn energy_audit(traj: &DissipativeTrajectory) -> Vec<f64> {
    let s = &traj.scalars;
    let gap0 = s.z[0] - s.energy[0];
    (0..s.len())
        .map(|j| s.z[j] - s.energy[j] - gap0 - s.dissipation[j])
        .collect()
}

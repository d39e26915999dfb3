use std::sync::Arc;

use approx::assert_relative_eq;
use euler_lab::convexint::*;
use euler_lab::dissipative::{check_m3, M3Tolerances};
use euler_lab::field::{sym_operator_norm, Sym3, WaveLattice, TORUS_VOLUME};
use euler_lab::galerkin::{simulate, InitialState, SolverConfig};
use euler_lab::noise::{sample_wiener, stopped_path, NoiseCoefficient, NoiseParams, WienerPath};
use euler_lab::rough::{iterated_ito, mbar_reconstruct, StopParams};
use proptest::prelude::*;

fn stop_params() -> StopParams {
    StopParams {
        delta: 0.1,
        beta: 0.375,
        p: 20.0,
        sigma: 0.5,
    }
}

fn noise(l: &Arc<WaveLattice>, cutoff: usize, c_g: f64) -> Arc<NoiseCoefficient> {
    let p = NoiseParams {
        cutoff: Some(cutoff),
        c_g,
        ..NoiseParams::default()
    };
    Arc::new(NoiseCoefficient::spectral(l, p).unwrap())
}

fn drivers(g: &Arc<NoiseCoefficient>, dt: f64, steps: usize, seeds: std::ops::Range<u64>) -> Vec<Arc<WienerPath>> {
    seeds
        .map(|s| Arc::new(sample_wiener(g, dt, steps, s).unwrap()))
        .collect()
}

fn unit_design(depth: usize) -> Design {
    let l = WaveLattice::new(36).unwrap();
    let base = Subsolution::zero(&l, EnergyProfile::Constant(1.0), 0.0, 1.0);
    let opts = DesignOptions {
        depth,
        ..DesignOptions::default()
    };
    design_subsolution(&base, &opts).unwrap()
}

#[test]
fn e_lambda_max_examples() {
    let z = [[0.0; 3]; 3];
    assert_eq!(e_lambda_max([0.0; 3], &z).unwrap(), 0.0);
    assert_relative_eq!(e_lambda_max([1.0, 0.0, 0.0], &z).unwrap(), 1.5, max_relative = 1e-14);
    let h = [[2.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]];
    assert_relative_eq!(e_lambda_max([0.0; 3], &h).unwrap(), 1.5, max_relative = 1e-14);
    let mut bad = z;
    bad[0][1] = 1.0;
    assert!(e_lambda_max([0.0; 3], &bad).is_err());
}

fn traceless(a: [f64; 5]) -> Sym3 {
    [[a[0], a[2], a[3]], [a[2], a[1], a[4]], [a[3], a[4], -a[0] - a[1]]]
}

proptest! {
    #[test]
    fn boundwh_inequalities(
        w in prop::array::uniform3(-5.0f64..5.0),
        a in prop::array::uniform5(-5.0f64..5.0),
    ) {
        let h = traceless(a);
        let e = e_lambda_max(w, &h).unwrap();
        let tol = 1e-12 * (1.0 + e);
        let w2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
        prop_assert!(0.5 * w2 <= e + tol);
        prop_assert!(sym_operator_norm(&h) <= 4.0 / 3.0 * e + tol);
    }

    #[test]
    fn smoothstep_derivative_matches_difference(t in 0.0f64..1.0) {
        let p = TimeProfile::Ramp { start: 0.2, width: 0.5 };
        let h = 1e-6;
        let fd = (p.value(t + h) - p.value(t - h)) / (2.0 * h);
        prop_assert!((fd - p.derivative(t)).abs() < 1e-5);
        prop_assert!((0.0..=1.0).contains(&p.value(t)));
    }
}

#[test]
fn recursion_on_zero_base_gains_half_the_gap() {
    let d = unit_design(5);
    let a0 = d.log[0].alpha;
    assert_relative_eq!(a0, TORUS_VOLUME, max_relative = 1e-12);
    let alphas: Vec<f64> = d.log.iter().map(|l| l.alpha).chain([d.alpha_final]).collect();
    for w in alphas.windows(2) {
        assert!(w[1] < w[0], "{alphas:?}");
    }
    let total: f64 = d.log.iter().map(|l| l.gain).sum();
    assert_relative_eq!(total, a0 - d.alpha_final, max_relative = 1e-10);
    assert!(total >= 0.5 * a0, "{}", total / a0);
    for l in &d.log {
        assert!(l.margin > 0.0 && l.residual < TOL_PDE && l.c_gain > 0.0, "{l:?}");
    }
    let audit = d.sub.audit(None, &[0.0, 0.5, 1.0]);
    assert!(audit.passes(0.0), "{audit:?}");
}

#[test]
fn boundary_margin_is_rejected() {
    let d = unit_design(1);
    let m = d.sub.margin();
    let opts = StepOptions::new(2, m);
    assert!(matches!(
        oscillation_step(&d.sub, &opts),
        Err(euler_lab::Error::Precondition(_))
    ));
    assert!(oscillation_step(&d.sub, &StepOptions::new(40, 0.5 * m)).is_err());
}

#[test]
fn single_step_on_zero_base() {
    let l = WaveLattice::new(36).unwrap();
    let base = Subsolution::zero(&l, EnergyProfile::Constant(1.0), 0.0, 1.0);
    let out = oscillation_step(&base, &StepOptions::new(2, 0.01)).unwrap();
    assert!(out.sub.kinetic(0.0) > 0.0);
    assert!(out.margin > 0.0);
    assert!(out.gain > 0.0 && out.c_gain > 0.0);
}

#[test]
fn weak_norm_decreases_with_frequency() {
    let l = WaveLattice::new(36).unwrap();
    let base = Subsolution::zero(&l, EnergyProfile::Constant(1.0), 0.0, 1.0);
    let mut last = f64::INFINITY;
    for n in [2, 4, 8] {
        let w = oscillation_step(&base, &StepOptions::new(n, 0.01)).unwrap().weak_norm;
        assert!(w < last, "{n}: {w} vs {last}");
        last = w;
    }
}

#[test]
fn ramped_layer_closes_the_equation() {
    let d = unit_design(2);
    let mut opts = StepOptions::new(4, 0.5 * d.sub.margin());
    opts.profile = TimeProfile::Ramp {
        start: 0.25,
        width: 0.25,
    };
    let out = oscillation_step(&d.sub, &opts).unwrap();
    let times: Vec<f64> = (0..=20).map(|i| 0.05 * i as f64).collect();
    let audit = out.sub.audit(None, &times);
    assert!(audit.passes(0.0), "{audit:?}");
    let b = out.sub.blocks.last().unwrap();
    assert!(b.velocity.iter().all(|v| v[2] == 0.0));
    assert_eq!(out.sub.kinetic(0.0), d.sub.kinetic(0.0));
    assert!(out.sub.kinetic(0.5) > d.sub.kinetic(0.5));
}

#[test]
fn admissible_energy_search() {
    let l = WaveLattice::new(16).unwrap();
    let sp = stop_params();
    let quiet = drivers(&noise(&l, 3, 0.0), 0.01, 50, 0..2);
    let a = admissible_energy(&quiet, 4.0, 0.5, &sp, &E0Search::default()).unwrap();
    assert_eq!(a.e0, 1.0);
    assert_eq!(a.c_l, 0.0);
    assert_eq!(a.iterations, 1);

    let ds = drivers(&noise(&l, 3, 1.0), 0.01, 50, 0..4);
    let mut last = 0.0;
    for level in [2.0, 4.0, 8.0] {
        let a = admissible_energy(&ds, level, 0.5, &sp, &E0Search::default()).unwrap();
        assert!(a.e0 >= last, "L = {level}");
        last = a.e0;
        for i in 0..=10 {
            let t = 0.05 * i as f64;
            assert!(a.profile.value(t) <= a.e0);
        }
        assert!(a.profile.value(0.5) > 1.5 * a.g_inf * a.g_inf);
    }
    let tight = E0Search {
        cap: 2.0,
        ..E0Search::default()
    };
    assert!(admissible_energy(&ds, 8.0, 0.5, &sp, &tight).is_err());
}

#[test]
fn functionals_edge_cases() {
    assert!(functionals_i(&[], 0.1).is_err());
    let flat = SubsolutionPath {
        dt: 0.1,
        kinetic: vec![0.0; 11],
        energy: vec![0.0; 11],
        tau_index: 10,
    };
    let f = functionals_i(&[flat.clone(), flat], 0.1).unwrap();
    assert_eq!((f.i_eps, f.i_tau), (0.0, 0.0));

    let p = SubsolutionPath {
        dt: 0.1,
        kinetic: vec![1.0; 11],
        energy: vec![3.0; 11],
        tau_index: 1,
    };
    let f = functionals_i(&[p], 0.2).unwrap();
    assert_relative_eq!(f.i_eps, -2.0 * 0.8, max_relative = 1e-12);
    assert_eq!(f.i_tau, 0.0);
    assert_eq!(f.active, 0.0);
}

#[test]
fn margin_integrates_into_negative_functional() {
    let l = WaveLattice::new(36).unwrap();
    let g = noise(&l, 3, 0.2);
    let ds = drivers(&g, 0.01, 50, 0..16);
    let sp = stop_params();
    let a = admissible_energy(&ds, 10.0, 0.5, &sp, &E0Search::default()).unwrap();
    let base = Subsolution::zero(&l, a.profile, a.allowance, 0.5);
    let d = design_subsolution(
        &base,
        &DesignOptions {
            depth: 2,
            ..DesignOptions::default()
        },
    )
    .unwrap();
    let ev = PathEvaluator::new(&d.sub, &g);
    let paths: Vec<_> = ds
        .iter()
        .map(|w| ev.evaluate(w, Reference::Profile, 50).unwrap())
        .collect();
    let eps = 0.0625;
    let f = functionals_i(&paths, eps).unwrap();
    let delta = d.sub.margin() + a.allowance;
    let bound = -delta * (0.5 - eps) * TORUS_VOLUME;
    assert!(f.i_eps <= bound, "{} vs {bound}", f.i_eps);
    let audit = d.sub.audit(Some(&ds[0]), &[0.0, 0.25, 0.5]);
    assert!(audit.worst_margin() > 0.0, "{audit:?}");
}

fn stopping_setup(c_g: f64, paths: usize) -> (Subsolution, Vec<Arc<WienerPath>>, Arc<NoiseCoefficient>) {
    let l = WaveLattice::new(36).unwrap();
    let g = noise(&l, 3, c_g);
    let ds = drivers(&g, 0.01, 40, 100..100 + paths as u64);
    let d = {
        let base = Subsolution::zero(&l, EnergyProfile::Constant(1.0), 0.0, 0.4);
        design_subsolution(
            &base,
            &DesignOptions {
                depth: 2,
                ..DesignOptions::default()
            },
        )
        .unwrap()
    };
    (d.sub, ds, g)
}

#[test]
fn stopping_step_is_inert_when_tau_is_early() {
    let (sub, ds, _) = stopping_setup(0.2, 8);
    let taus = vec![3; ds.len()];
    let opts = StepOptions::new(4, 0.5 * sub.margin());
    let out = oscillation_step_at_stopping(&sub, &ds, &taus, 0.05, 1e9, &opts).unwrap();
    assert_eq!(out.before.active, 0.0);
    assert_eq!((out.before.i_tau, out.after.i_tau), (0.0, 0.0));
}

#[test]
fn stopping_step_at_horizon_matches_plain_step() {
    let (sub, ds, _) = stopping_setup(0.0, 2);
    let taus = vec![40; ds.len()];
    let eps = 0.05;
    let opts = StepOptions::new(4, 0.5 * sub.margin());
    let alpha0 = 0.5 * -(sub.kinetic(0.4) - TORUS_VOLUME);
    let out = oscillation_step_at_stopping(&sub, &ds, &taus, eps, alpha0, &opts).unwrap();
    assert_eq!(out.before.active, 1.0);
    let gain = out.after.i_tau - out.before.i_tau;
    assert_relative_eq!(gain, out.step.gain, max_relative = 1e-9);
    let b = out.step.sub.blocks.last().unwrap();
    assert_eq!(b.profile.value(eps), 0.0);
}

#[test]
fn stopping_step_gain_on_held_out_paths() {
    let (sub, ds, g) = stopping_setup(0.2, 100);
    let sp = stop_params();
    let taus: Vec<usize> = ds
        .iter()
        .map(|w| {
            euler_lab::rough::stopping_time_tl(w, 2.0, &sp)
                .unwrap()
                .index
                .min(w.steps)
        })
        .collect();
    let stopped: Vec<Arc<WienerPath>> = ds
        .iter()
        .zip(&taus)
        .map(|(w, &t)| Arc::new(stopped_path(w, w.time(t)).0))
        .collect();
    let eps = 0.05;
    let ev = PathEvaluator::new(&sub, &g);
    let probe: Vec<_> = stopped
        .iter()
        .zip(&taus)
        .map(|(w, &t)| ev.evaluate(w, Reference::Profile, t).unwrap())
        .collect();
    let i0 = functionals_i(&probe, eps).unwrap();
    assert!(i0.active > 0.5, "{i0:?}");
    let alpha0 = -0.5 * i0.i_tau;
    let opts = StepOptions::new(4, 0.5 * sub.margin());
    let (cal, hold) = (0..50, 50..100);
    let c = oscillation_step_at_stopping(&sub, &stopped[cal.clone()], &taus[cal], eps, alpha0, &opts).unwrap();
    assert!(c.c_measured > 0.0);
    let h = oscillation_step_at_stopping(&sub, &stopped[hold.clone()], &taus[hold], eps, alpha0, &opts).unwrap();
    let gain = h.after.i_tau - h.before.i_tau;
    assert!(
        gain >= 0.5 * c.c_measured * alpha0 * alpha0,
        "{gain} vs c = {}",
        c.c_measured
    );

    let lat = &sub.lattice;
    let zero = Subsolution::zero(lat, EnergyProfile::Constant(1.0), 0.0, 0.4);
    let times: Vec<f64> = (0..=40).map(|i| 0.01 * i as f64).collect();
    let mut o2 = StepOptions::new(4, 0.01);
    o2.profile = TimeProfile::Ramp { start: eps, width: eps };
    let lo = oscillation_step(&zero, &o2).unwrap();
    o2.frequency = 8;
    o2.max_shrink = lo.shrink;
    let hi = oscillation_step(&zero, &o2).unwrap();
    assert_eq!(hi.shrink, lo.shrink);
    let n_lo = lo.sub.blocks.last().unwrap().weak_holder_norm(lat, 0.3, &times);
    let n_hi = hi.sub.blocks.last().unwrap().weak_holder_norm(lat, 0.3, &times);
    assert!(n_hi < n_lo, "{n_hi} vs {n_lo}");
}

fn wild_setup(
    n: usize,
    c_g: f64,
    dt: f64,
    steps: usize,
    depth: usize,
) -> (Arc<WaveLattice>, Arc<NoiseCoefficient>, AdmissibleEnergy, Design) {
    let l = WaveLattice::new(n).unwrap();
    let g = noise(&l, 3, c_g);
    let horizon = dt * steps as f64;
    let cal = drivers(&g, dt, steps, 900..908);
    let a = admissible_energy(&cal, 10.0, horizon, &stop_params(), &E0Search::default()).unwrap();
    let base = Subsolution::zero(&l, a.profile, a.allowance, horizon);
    let d = design_subsolution(
        &base,
        &DesignOptions {
            depth,
            ..DesignOptions::default()
        },
    )
    .unwrap();
    (l, g, a, d)
}

fn wild_cfg(l: f64, frames: Option<usize>) -> WildConfig {
    WildConfig {
        l,
        level: 10.0,
        stop: stop_params(),
        frame_stride: frames,
        record_projections: false,
        audit_stride: None,
    }
}

#[test]
fn depth_zero_emits_the_driver() {
    let (l, g, a, _) = wild_setup(16, 1.0, 0.01, 20, 1);
    let w = Arc::new(sample_wiener(&g, 0.01, 20, 3).unwrap());
    let base = Subsolution::zero(&l, a.profile, a.allowance, 0.2);
    let d = design_subsolution(
        &base,
        &DesignOptions {
            depth: 0,
            ..DesignOptions::default()
        },
    )
    .unwrap();
    assert_relative_eq!(d.alpha_final, TORUS_VOLUME * a.e0, max_relative = 1e-12);
    let out = emit_wild(&d, &w, &wild_cfg(2.0, Some(10))).unwrap();
    let f = out.trajectory.final_frame().unwrap();
    assert!(f.x.max_abs_diff(w.gb_at(20).as_vector()) < 1e-12);
    assert_relative_eq!(
        out.trajectory.scalars.energy[20],
        w.gb_at(20).norm_sq(),
        max_relative = 1e-10
    );
}

#[test]
fn wild_output_satisfies_energy_equality_and_m3() {
    let (_, g, _, d) = wild_setup(16, 1.0, 0.01, 30, 3);
    let w = Arc::new(sample_wiener(&g, 0.01, 30, 5).unwrap());
    let mut cfg = wild_cfg(2.0, Some(10));
    cfg.audit_stride = Some(10);
    let out = emit_wild(&d, &w, &cfg).unwrap();
    let tr = &out.trajectory;
    for (e, z) in tr.scalars.energy.iter().zip(&tr.scalars.z) {
        assert_relative_eq!(*e, *z, max_relative = 1e-10);
    }
    for f in &tr.frames {
        assert_relative_eq!(f.y.trace_integral(), tr.scalars.trace_y[f.index], max_relative = 1e-10);
    }
    assert!(check_m3(tr, &M3Tolerances::for_trajectory(tr)).passed());
    assert!(out.audit.iter().all(|(_, m)| *m > 0.0), "{:?}", out.audit);
    let paths = [SubsolutionPath::from_trajectory(tr, 30)];
    let f = functionals_i(&paths, 0.05).unwrap();
    assert!(f.i_eps.abs() < 1e-8 * tr.scalars.z[0], "{f:?}");
}

#[test]
fn defect_levels_share_data_and_split_slopes() {
    let (_, g, _, d) = wild_setup(16, 1.0, 0.01, 40, 3);
    let hs2 = g.hs_norm(0.0).powi(2);
    let mut diff = vec![0.0; 41];
    let paths = 30;
    for s in 0..paths {
        let w = Arc::new(sample_wiener(&g, 0.01, 40, 50 + s).unwrap());
        let a = emit_wild(&d, &w, &wild_cfg(2.0, None)).unwrap().trajectory;
        let b = emit_wild(&d, &w, &wild_cfg(f64::INFINITY, None)).unwrap().trajectory;
        assert_eq!(a.frames[0].x.max_abs_diff(&b.frames[0].x), 0.0);
        for j in 0..=40 {
            diff[j] += 0.5 * (b.scalars.z[j] - a.scalars.z[j]) / paths as f64;
        }
    }
    let t: Vec<f64> = (0..=40).map(|j| 0.01 * j as f64).collect();
    let slope = euler_lab::rough::regression_slope(&t, &diff).unwrap();
    assert_relative_eq!(slope, 0.5 * hs2, max_relative = 0.1);
}

#[test]
fn reconstructed_mbar_is_the_iterated_integral() {
    let (_, g, _, d) = wild_setup(16, 1.0, 1e-3, 50, 3);
    let w = Arc::new(sample_wiener(&g, 1e-3, 50, 8).unwrap());
    let out = emit_wild(&d, &w, &wild_cfg(2.0, Some(1))).unwrap();
    let tr = &out.trajectory;
    let x: Vec<_> = tr.frames.iter().map(|f| f.x.clone()).collect();
    let y: Vec<_> = tr.frames.iter().map(|f| f.y.clone()).collect();
    let idx: Vec<usize> = tr.frames.iter().map(|f| f.index).collect();
    let driver = tr.wiener.as_ref().unwrap();
    let mbar = mbar_reconstruct(&x, &y, &idx, driver, 2.0, (0.55, 0.49)).unwrap();
    let ito = iterated_ito(driver);
    let scale = ito.sup_abs();
    let err = mbar
        .values
        .iter()
        .zip(&ito.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(err <= 0.05 * scale, "{err} vs {scale}");
}

#[test]
fn extension_past_the_stopping_time() {
    let (l, g, _, d) = wild_setup(16, 0.5, 1e-3, 40, 3);
    let full = Arc::new(sample_wiener(&g, 1e-3, 80, 21).unwrap());
    let wild = emit_wild(&d, &full, &wild_cfg(2.0, Some(10))).unwrap().trajectory;
    let cfg = SolverConfig::new(&l, 5, 1e-3, 40);

    let (pure_wild, s) = extend_beyond(&wild, 80, &cfg, &full).unwrap();
    assert_eq!(pure_wild.scalars, wild.scalars);
    assert_eq!(s.z_jump, 0.0);

    let (tr, seam) = extend_beyond(&wild, 20, &cfg, &full).unwrap();
    assert_eq!(seam.z_jump, 0.0);
    assert_eq!(tr.scalars.z[20], wild.scalars.z[20]);
    assert_eq!(tr.steps(), 60);
    assert!(check_m3(&tr, &M3Tolerances::for_trajectory(&tr)).passed());

    let (zero, _) = extend_beyond(&wild, 0, &cfg, &full).unwrap();
    let f0 = wild.initial().unwrap();
    let init = InitialState {
        x: euler_lab::field::SpectralVelocity::new_checked(f0.x.clone(), 1e-8).unwrap(),
        y: f0.y.clone(),
        z: f0.z,
    };
    let direct = simulate(&cfg, &init, &full).unwrap();
    assert_eq!(zero.scalars.z, direct.scalars.z);

    assert!(extend_beyond(&wild, 15, &cfg, &full).is_err());
    let mut bad = wild.clone();
    bad.frames[2].z *= 0.5;
    assert!(extend_beyond(&bad, 20, &cfg, &full).is_err());
}

use std::sync::Arc;

use approx::assert_relative_eq;
use euler_lab::dissipative::*;
use euler_lab::ensemble::{run_seeds, seed_range};
use euler_lab::field::{outer_product, SpectralVelocity, StressGrid, WaveLattice};
use euler_lab::galerkin::*;
use euler_lab::noise::{NoiseCoefficient, NoiseParams};
use euler_lab::rough::ScalarPath;
use euler_lab::trajectory::{DissipativeTrajectory, Frame, Origin, ScalarSeries, TrajectoryMeta};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn setup(n: usize, noise_cutoff: usize, c_g: f64) -> (Arc<WaveLattice>, Arc<NoiseCoefficient>) {
    let l = WaveLattice::new(n).unwrap();
    let p = NoiseParams {
        cutoff: Some(noise_cutoff),
        c_g,
        ..NoiseParams::default()
    };
    (l.clone(), Arc::new(NoiseCoefficient::spectral(&l, p).unwrap()))
}

fn velocity(l: &Arc<WaveLattice>, seed: u64, cutoff: usize, norm: f64) -> SpectralVelocity {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = SpectralVelocity::random(l, &mut rng, cutoff, 1.0);
    let s = norm / u.norm_sq().sqrt();
    u.scale(s)
}

fn galerkin(stride: usize, seed: u64) -> DissipativeTrajectory {
    let (l, g) = setup(16, 3, 1.0);
    let mut cfg = SolverConfig::new(&l, 5, 0.005, 40);
    cfg.frame_stride = stride;
    let init = InitialState::from_velocity(velocity(&l, seed, 3, 1.0));
    simulate_seeded(&cfg, &init, &g, seed).unwrap()
}

/// Two frames of a static field with `y(t) = t(x⊗x + εI)`.
fn hand_built(eps: f64) -> DissipativeTrajectory {
    let l = WaveLattice::new(8).unwrap();
    let x = velocity(&l, 1, 2, 1.0).into_vector();
    let mut r = outer_product(&x);
    r.add_identity(eps);
    let h = 0.1;
    let frames = vec![
        Frame {
            index: 0,
            time: 0.0,
            x: x.clone(),
            y: StressGrid::zeros(&l),
            z: 10.0,
        },
        Frame {
            index: 1,
            time: h,
            x: x.clone(),
            y: r.scale(h),
            z: 10.0,
        },
    ];
    DissipativeTrajectory {
        dt: h,
        scalars: ScalarSeries::default(),
        frames,
        projections: None,
        wiener: None,
        meta: TrajectoryMeta::new("hand", None, Origin::Synthetic, 1),
    }
}

#[test]
fn galerkin_defect_is_small_and_shrinks_with_stride() {
    let coarse = compute_defect(&galerkin(4, 3));
    let fine = compute_defect(&galerkin(2, 3));
    assert!(!coarse.degenerate);
    let (a, b) = (coarse.worst_max_abs(), fine.worst_max_abs());
    assert!(a < 0.05, "{a}");
    let ratio = b / a;
    assert!((0.35..=0.65).contains(&ratio), "{ratio}");
}

#[test]
fn hand_built_defects() {
    let d = compute_defect(&hand_built(0.25));
    assert_relative_eq!(d.min_eigenvalue[0], 0.25, max_relative = 1e-9);
    let direct = d.defects[0].min_eigenvalue().0;
    assert_eq!(direct, d.min_eigenvalue[0]);
    assert_eq!(check_defect(&d, TOL_PSD).status, Status::Pass);

    let bad = compute_defect(&hand_built(-0.25));
    let c = check_defect(&bad, TOL_PSD);
    assert_eq!(c.status, Status::Fail);
    assert_eq!(c.violations.len(), 1);

    let mut single = hand_built(0.0);
    single.frames.truncate(1);
    let d = compute_defect(&single);
    assert!(d.degenerate);
    assert_eq!(check_defect(&d, TOL_PSD).status, Status::Degenerate);
}

#[test]
fn m3_on_galerkin_and_forced_violation() {
    let tr = galerkin(10, 8);
    let tol = M3Tolerances::for_trajectory(&tr);
    assert!(check_m3(&tr, &tol).passed());

    let mut bad = tr.clone();
    for z in bad.scalars.z.iter_mut() {
        *z *= 0.9;
    }
    let rep = check_m3(&bad, &tol);
    assert_eq!(rep.status(), Status::Fail);
    let c = rep.check("m3_energy").unwrap();
    assert_eq!(c.violations[0].index, 0);
    assert!(c.worst_margin < 0.0);
}

#[test]
fn m3_on_zero_trajectory_has_zero_margins() {
    let (l, g) = setup(8, 2, 0.0);
    let cfg = SolverConfig::new(&l, 2, 0.01, 10);
    let init = InitialState::from_velocity(SpectralVelocity::zeros(&l));
    let tr = simulate_seeded(&cfg, &init, &g, 0).unwrap();
    let rep = check_m3(&tr, &M3Tolerances::for_trajectory(&tr));
    assert!(rep.passed());
    for c in &rep.checks {
        assert_eq!(c.worst_margin, 0.0);
    }
}

fn martingale_ensemble(
    c_g: f64,
    zero_data: bool,
    paths: usize,
) -> (Arc<NoiseCoefficient>, Vec<usize>, Vec<MartingaleSample>, Vec<f64>) {
    let (l, g) = setup(8, 2, c_g);
    let mut cfg = SolverConfig::new(&l, 2, 0.01, 20);
    cfg.record_projections = true;
    let u0 = if zero_data {
        SpectralVelocity::zeros(&l)
    } else {
        velocity(&l, 5, 2, 0.3)
    };
    let init = InitialState::from_velocity(u0);
    let modes = vec![0, 5, g.len() - 1];
    let idx = vec![10, 20];
    let times: Vec<f64> = idx.iter().map(|&j| j as f64 * cfg.dt).collect();
    let samples = run_seeds(&seed_range(40_000, paths), 1, |s| {
        let tr = simulate_seeded(&cfg, &init, &g, s)?;
        martingale_observables(&tr, &g, &modes, &idx, cfg.viscosity)
    })
    .unwrap();
    (g, modes, samples, times)
}

#[test]
fn martingale_test_passes_on_galerkin_ensemble() {
    let (g, modes, samples, times) = martingale_ensemble(1.0, false, 1600);
    let (rep, cells) = martingale_test(&samples, &g, &modes, &times, &MartingaleOptions::default());
    assert!(rep.passed(), "{}", rep.to_json());
    assert_eq!(cells.len(), 6);
    for c in &cells {
        assert_relative_eq!(c.realized_qv, c.expected_variance, max_relative = 0.1);
    }
}

#[test]
fn martingale_test_catches_injected_drift() {
    let (g, modes, mut samples, times) = martingale_ensemble(1.0, false, 200);
    for s in samples.iter_mut() {
        for row in s.values.iter_mut() {
            for (v, t) in row.iter_mut().zip(&times) {
                *v += 0.5 * t;
            }
        }
    }
    let (rep, _) = martingale_test(&samples, &g, &modes, &times, &MartingaleOptions::default());
    assert_eq!(rep.check("martingale_mean").unwrap().status, Status::Fail);
}

#[test]
fn martingale_zero_noise_branch_and_underpowered() {
    let (g, modes, samples, times) = martingale_ensemble(0.0, true, 100);
    assert!(samples.iter().all(|s| s.values.iter().flatten().all(|&v| v == 0.0)));
    let (rep, cells) = martingale_test(&samples, &g, &modes, &times, &MartingaleOptions::default());
    assert!(rep.passed(), "{}", rep.to_json());
    assert!(cells.iter().all(|c| c.variance == 0.0 && c.realized_qv == 0.0));
    let (rep, _) = martingale_test(&samples[..50], &g, &modes, &times, &MartingaleOptions::default());
    assert_eq!(rep.status(), Status::Degenerate);
}

#[test]
fn standard_error_halves_with_fourfold_ensemble() {
    let (g, modes, samples, times) = martingale_ensemble(1.0, false, 800);
    let opts = MartingaleOptions::default();
    let (_, small) = martingale_test(&samples[..200], &g, &modes, &times, &opts);
    let (_, large) = martingale_test(&samples, &g, &modes, &times, &opts);
    for (a, b) in small.iter().zip(&large) {
        let r = b.se / a.se;
        assert!((0.4..=0.6).contains(&r), "{r}");
    }
}

#[test]
fn correlation_p_value_oracle() {
    let a: Vec<f64> = (0..50).map(|i| i as f64).collect();
    let (r, p) = correlation_p_value(&a, &a);
    assert_relative_eq!(r, 1.0, max_relative = 1e-12);
    assert!(p < 1e-12);
    let b: Vec<f64> = (0..50).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let c: Vec<f64> = (0..50).map(|i| if (i / 2) % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let (r, p) = correlation_p_value(&b, &c);
    assert!(r.abs() < 0.05 && p > 0.5, "{r} {p}");
}

#[test]
fn relative_energy_identities() {
    let tr = galerkin(10, 2);
    let mut exact = tr.clone();
    for f in exact.frames.iter_mut() {
        f.z = f.x.norm_sq();
    }
    let e = relative_energy(&exact, &exact).unwrap();
    assert!(e.value.iter().all(|v| v.abs() < 1e-12));

    let mut inflated = exact.clone();
    for f in inflated.frames.iter_mut() {
        f.z += 0.6;
    }
    let e = relative_energy(&inflated, &exact).unwrap();
    for (v, d) in e.value.iter().zip(&e.distance) {
        assert_relative_eq!(*v, 0.3, max_relative = 1e-10);
        assert_eq!(*d, 0.0);
    }
    assert!(e.is_nonnegative(1e-12));

    let mut other = exact.clone();
    other.frames.pop();
    assert!(relative_energy(&exact, &other).is_err());
}

#[test]
fn gronwall_monitor_passes_and_locates_breach() {
    let t: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
    let zero = ScalarPath::from_fn(t.clone(), |_| 0.0).unwrap();
    let grad = ScalarPath::from_fn(t.clone(), |_| 1.0).unwrap();
    assert!(gronwall_monitor(&zero, &grad, 2.0, 0.0).unwrap().passed());
    let fast = ScalarPath::from_fn(t.clone(), |s| (3.0 * s).exp()).unwrap();
    let rep = gronwall_monitor(&fast, &grad, 2.0, 0.0).unwrap();
    let c = &rep.checks[0];
    assert_eq!(c.status, Status::Fail);
    assert_eq!(c.violations[0].index, 1);
    let short = ScalarPath::from_fn(t[..5].to_vec(), |_| 0.0).unwrap();
    assert!(gronwall_monitor(&short, &grad, 2.0, 0.0).is_err());
}

#[test]
fn perturbed_pair_stays_in_gronwall_envelope() {
    let (l, g) = setup(16, 3, 1.0);
    let u0 = velocity(&l, 31, 3, 1.0);
    let eta = velocity(&l, 32, 3, 0.1);
    let mut cfg = SolverConfig::new(&l, 5, 0.005, 60);
    cfg.viscosity = 0.0;
    let strong = simulate_seeded(&cfg, &InitialState::from_velocity(u0.clone()), &g, 9).unwrap();
    let pert = simulate_seeded(&cfg, &InitialState::from_velocity(&u0 + &eta), &g, 9).unwrap();
    let e = relative_energy(&pert, &strong).unwrap();
    let grad = gradient_sup_series(&strong).unwrap();
    let path = e.path().unwrap();
    let tol = 0.1 * e.value[0];
    assert!(gronwall_monitor(&path, &grad, 2.0, tol).unwrap().passed());
}

#[test]
fn report_serializes() {
    let tr = galerkin(10, 1);
    let rep = check_m3(&tr, &M3Tolerances::for_trajectory(&tr));
    let back: VerificationReport = serde_json::from_str(&rep.to_json()).unwrap();
    assert_eq!(back, rep);
}

#[test]
fn m1_on_galerkin_and_hand_built() {
    let tr = galerkin(4, 3);
    let rep = check_m1(&tr, 1e-10, TOL_PSD);
    assert!(rep.passed(), "{}", rep.to_json());
    assert!(stride_allowance(&tr) > 0.0);
    assert!(check_m1(&hand_built(0.25), 1e-10, TOL_PSD).passed());
    let bad = check_m1(&hand_built(-0.25), 1e-10, TOL_PSD);
    assert_eq!(bad.check("m1_defect").unwrap().status, Status::Fail);
    assert_eq!(bad.check("m1_divergence").unwrap().status, Status::Pass);
    assert!(bad.check("m1_defect").unwrap().worst_margin < 0.0);
    assert!(rep.check("m1_defect").unwrap().worst_margin >= 0.0);
}

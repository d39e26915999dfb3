use std::sync::Arc;

use approx::assert_relative_eq;
use euler_lab::field::{SpectralVelocity, StressGrid, WaveLattice};
use euler_lab::noise::*;
use euler_lab::rough::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn grid(n: usize) -> Vec<f64> {
    (0..=n).map(|j| j as f64 / n as f64).collect()
}

fn noise(c_g: f64) -> Arc<NoiseCoefficient> {
    let l = WaveLattice::new(8).unwrap();
    let p = NoiseParams {
        c_g,
        cutoff: Some(2),
        ..NoiseParams::default()
    };
    Arc::new(NoiseCoefficient::spectral(&l, p).unwrap())
}

fn stop_params() -> StopParams {
    StopParams {
        delta: 0.1,
        beta: 0.375,
        p: 20.0,
        sigma: 0.5,
    }
}

#[test]
fn holder_examples() {
    let lin = ScalarPath::from_fn(grid(64), |t| t).unwrap();
    assert_relative_eq!(holder_seminorm(&lin, 0.5).unwrap().value, 1.0, max_relative = 1e-14);
    let c = ScalarPath::from_fn(grid(16), |_| 3.0).unwrap();
    assert_eq!(holder_seminorm(&c, 0.5).unwrap().value, 0.0);
    let one = ScalarPath::new(vec![0.0], vec![1.0]).unwrap();
    assert!(holder_seminorm(&one, 0.5).unwrap().degenerate);
    assert!(holder_seminorm(&lin, 1.0).is_err());
}

#[test]
fn holder_of_sqrt_matches_brute_force() {
    let times: Vec<f64> = (0..=256).map(|j| j as f64 / 256.0).collect();
    let p = ScalarPath::from_fn(times.clone(), f64::sqrt).unwrap();
    let mut brute: f64 = 0.0;
    for s in 0..times.len() {
        for t in s + 1..times.len() {
            brute = brute.max((times[t].sqrt() - times[s].sqrt()).abs() / (times[t] - times[s]).sqrt());
        }
    }
    let r = holder_seminorm(&p, 0.5).unwrap();
    assert!((r.value - brute).abs() < 1e-12);
    assert!((r.value - 1.0).abs() < 1e-12);
    assert!(!r.subsampled);
}

#[test]
fn holder_subsamples_large_grids() {
    let p = ScalarPath::from_fn(grid(4096), |t| t * t).unwrap();
    let r = holder_seminorm(&p, 0.5).unwrap();
    assert!(r.subsampled);
    assert!(r.value > 0.0);
}

#[test]
fn running_holder_ends_at_full_value() {
    let p = ScalarPath::from_fn(grid(100), |t| (5.0 * t).sin()).unwrap();
    let run = running_holder(&p, 0.4).unwrap();
    assert_eq!(*run.last().unwrap(), holder_seminorm(&p, 0.4).unwrap().value);
    assert!(run.windows(2).all(|w| w[1] >= w[0]));
}

fn slobodeckij_oracle(f: impl Fn(f64) -> f64, alpha: f64, p: f64, n: usize) -> f64 {
    let h = 1.0 / n as f64;
    let mut acc = 0.0;
    for i in 0..n {
        let t = (i as f64 + 0.5) * h;
        acc += f(t).abs().powf(p) * h;
        for j in 0..n {
            if i == j {
                continue;
            }
            let s = (j as f64 + 0.5) * h;
            acc += (f(t) - f(s)).abs().powf(p) / (t - s).abs().powf(1.0 + alpha * p) * h * h;
        }
    }
    acc.powf(1.0 / p)
}

#[test]
fn slobodeckij_of_linear_path_matches_quadrature() {
    let oracle = slobodeckij_oracle(|t| t, 0.25, 2.0, 2000);
    assert_relative_eq!(oracle, (13.0f64 / 15.0).sqrt(), max_relative = 1e-3);
    let p = ScalarPath::from_fn(grid(400), |t| t).unwrap();
    let v = sobolev_slobodeckij(&p, 0.25, 2.0).unwrap().value;
    assert!((v / oracle - 1.0).abs() < 0.02, "{v} vs {oracle}");
}

#[test]
fn slobodeckij_zero_scaling_and_rejection() {
    let z = ScalarPath::from_fn(grid(20), |_| 0.0).unwrap();
    assert_eq!(sobolev_slobodeckij(&z, 0.3, 4.0).unwrap().value, 0.0);
    let p = ScalarPath::from_fn(grid(50), |t| (3.0 * t).cos()).unwrap();
    let a = sobolev_slobodeckij(&p, 0.3, 4.0).unwrap().value;
    let b = sobolev_slobodeckij(&p.scale(2.0), 0.3, 4.0).unwrap().value;
    assert_relative_eq!(b, 2.0 * a, max_relative = 1e-13);
    assert!(sobolev_slobodeckij(&p, 1.2, 2.0).is_err());
    assert!(sobolev_slobodeckij(&p, 0.5, 0.5).is_err());
}

#[test]
fn slobodeckij_is_stable_under_refinement() {
    let f = |t: f64| (2.0 * t).sin() + t * t;
    let a = sobolev_slobodeckij(&ScalarPath::from_fn(grid(128), f).unwrap(), 0.375, 20.0).unwrap();
    let b = sobolev_slobodeckij(&ScalarPath::from_fn(grid(256), f).unwrap(), 0.375, 20.0).unwrap();
    let r = b.value / a.value;
    assert!(r < 1.2 && r > 1.0 / 1.2, "ratio {r}");
}

#[test]
fn young_closed_forms() {
    let r = young_integral_fn(|t| t, |t| t, (0.0, 1.0), (1.0, 1.0), TOL_YOUNG, Germ::Symmetric).unwrap();
    assert!((r.value - 0.5).abs() < 1e-10);
    let c = young_integral_fn(f64::sin, |_| 2.0, (0.0, 1.0), (1.0, 1.0), TOL_YOUNG, Germ::Symmetric).unwrap();
    assert_eq!(c.value, 0.0);
    let s = young_integral_fn(f64::sin, f64::sin, (0.0, 1.0), (1.0, 1.0), TOL_YOUNG, Germ::Symmetric).unwrap();
    assert!((s.value - 1f64.sin().powi(2) / 2.0).abs() < 1e-8);
    assert!(young_integral_fn(f64::sin, f64::sin, (0.0, 1.0), (0.5, 0.5), TOL_YOUNG, Germ::Left).is_err());
}

#[test]
fn young_left_germ_converges_for_smooth_pairs() {
    let r = young_integral_fn(f64::cos, |t| t * t, (0.0, 1.0), (1.0, 1.0), 1e-6, Germ::Left).unwrap();
    let exact = 2.0 * (1f64.sin() + 1f64.cos() - 1.0);
    assert!((r.value - exact).abs() < 1e-5);
    assert!(r.corrections.windows(2).skip(2).all(|w| w[1] < w[0]));
}

#[test]
fn sewing_remainder_rate_on_power_pair() {
    let (a, b) = (0.7, 0.5);
    let times = grid(4096);
    let f = ScalarPath::from_fn(times.clone(), |t| t.powf(a)).unwrap();
    let g = ScalarPath::from_fn(times, |t| t.powf(b)).unwrap();
    let r = young_integral(&g, &f, (b, a), Germ::Left).unwrap();
    let slope = r.remainder_slope.unwrap();
    assert!(slope >= a + b - 0.1, "slope {slope}");
    let exact = a / (a + b);
    assert!((r.integral.last() - exact).abs() < 1e-2);
}

#[test]
fn ito_and_young_agree_for_smooth_paths() {
    let mut errs = Vec::new();
    for n in [100, 200] {
        let t = grid(n);
        let g = ScalarPath::from_fn(t.clone(), |x| (3.0 * x).cos()).unwrap();
        let f = ScalarPath::from_fn(t, |x| x.exp()).unwrap();
        let left = young_integral(&g, &f, (1.0, 1.0), Germ::Left).unwrap().integral.last();
        let sym = young_integral(&g, &f, (1.0, 1.0), Germ::Symmetric)
            .unwrap()
            .integral
            .last();
        errs.push((left - sym).abs());
    }
    let rate = errs[0] / errs[1];
    assert!(rate > 1.8 && rate < 2.2, "{errs:?}");
}

#[test]
fn ito_integral_examples() {
    let g = noise(1.0);
    let w = sample_wiener(&g, 0.01, 100, 3).unwrap();
    let zero = ito_integral(&vec![0.0; 100 * g.len()], &w).unwrap();
    assert_eq!(zero.sup_abs(), 0.0);
    assert!(ito_integral(&vec![0.0; 10 * g.len()], &w).is_err());

    let u0 = SpectralVelocity::random(&g.lattice, &mut ChaCha8Rng::seed_from_u64(1), 2, 0.0);
    let coords: Vec<f64> = (0..100).flat_map(|_| g.project(u0.as_vector())).collect();
    let fine = ito_integral(&coords, &w).unwrap();
    let coarse_w = w.coarsen(2).unwrap();
    let coarse = ito_integral(&coords[..50 * g.len()], &coarse_w).unwrap();
    assert!((fine.last() - coarse.last()).abs() < 1e-12);
    let direct = ito_integral_fields(&vec![u0.as_vector().clone(); 100], &w).unwrap();
    assert!((direct.last() - fine.last()).abs() < 1e-12);
}

#[test]
fn ito_isometry_by_monte_carlo() {
    let g = noise(1.0);
    let u0 = SpectralVelocity::random(&g.lattice, &mut ChaCha8Rng::seed_from_u64(2), 2, 0.0);
    let c = g.project(u0.as_vector());
    let target: f64 = g.adjoint(u0.as_vector()).iter().map(|x| x * x).sum();
    let coords: Vec<f64> = (0..10).flat_map(|_| c.clone()).collect();
    let paths = 10_000;
    let mut vals = Vec::with_capacity(paths);
    for seed in 0..paths as u64 {
        let w = sample_wiener(&g, 0.1, 10, 50_000 + seed).unwrap();
        vals.push(ito_integral(&coords, &w).unwrap().last());
    }
    let mean = vals.iter().sum::<f64>() / paths as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (paths - 1) as f64;
    let se = (var / paths as f64).sqrt();
    assert!(mean.abs() < 3.0 * se);
    assert!((var / target - 1.0).abs() < 0.05, "{var} vs {target}");
}

#[test]
fn mbar_of_constant_paths_vanishes_for_l_two() {
    let g = noise(1.0);
    let w = sample_wiener(&g, 0.01, 20, 4).unwrap();
    let x0 = SpectralVelocity::random(&g.lattice, &mut ChaCha8Rng::seed_from_u64(3), 2, 0.0);
    let y0 = StressGrid::identity(&g.lattice, 0.3);
    let idx: Vec<usize> = (0..=20).step_by(5).collect();
    let xs = vec![x0.as_vector().clone(); idx.len()];
    let ys = vec![y0; idx.len()];
    let m2 = mbar_reconstruct(&xs, &ys, &idx, &w, 2.0, (1.0, 0.3)).unwrap();
    let minf = mbar_reconstruct(&xs, &ys, &idx, &w, f64::INFINITY, (1.0, 0.3)).unwrap();
    let hs2 = g.hs_norm(0.0).powi(2);
    let young = ito_integral(&(0..20).flat_map(|_| g.project(x0.as_vector())).collect::<Vec<_>>(), &w).unwrap();
    for (k, &j) in idx.iter().enumerate() {
        assert!((m2.values[k] + young.values[j]).abs() < 1e-12);
        let diff = m2.values[k] - minf.values[k];
        assert!((diff - 0.5 * hs2 * w.time(j)).abs() < 1e-12);
    }
    let zero = noise(0.0);
    let wz = sample_wiener(&zero, 0.01, 20, 4).unwrap();
    let mz = mbar_reconstruct(
        &xs,
        &vec![StressGrid::zeros(&g.lattice); idx.len()],
        &idx,
        &wz,
        2.0,
        (1.0, 0.3),
    )
    .unwrap();
    assert!(mz.sup_abs() < 1e-14);
    assert!(mbar_reconstruct(
        &xs,
        &vec![StressGrid::zeros(&g.lattice); idx.len()],
        &idx,
        &w,
        2.0,
        (0.5, 0.3)
    )
    .is_err());
}

#[test]
fn tl_cap_branch() {
    let g = noise(1.0);
    let w = sample_wiener(&g, 0.01, 50, 5).unwrap();
    let r = stopping_time_tl(&w, 1e6, &stop_params()).unwrap();
    assert_eq!(r.trigger, StopTrigger::Cap);
    assert_eq!(r.index, 50);
    let r = stopping_time_tl(&w, 1e6, &stop_params()).unwrap();
    assert_relative_eq!(r.time, 0.5, max_relative = 1e-12);
    assert!(stopping_time_tl(&w, 1.0, &stop_params()).is_err());
}

#[test]
fn tl_with_zero_noise_is_capped() {
    let g = noise(0.0);
    let w = sample_wiener(&g, 0.1, 40, 5).unwrap();
    let r = stopping_time_tl(&w, 2.0, &stop_params()).unwrap();
    assert_eq!(r.trigger, StopTrigger::Cap);
    assert_relative_eq!(r.time, 2.0, max_relative = 1e-12);
    let r = stopping_time_tl(&w, 10.0, &stop_params()).unwrap();
    assert_relative_eq!(r.time, 4.0, max_relative = 1e-12);
}

#[test]
fn tl_is_monotone_in_level() {
    let g = noise(40.0);
    for seed in 0..100 {
        let w = sample_wiener(&g, 0.02, 50, 100 + seed).unwrap();
        let a = stopping_time_tl(&w, 1.5, &stop_params()).unwrap();
        let b = stopping_time_tl(&w, 3.0, &stop_params()).unwrap();
        assert!(a.time <= b.time);
    }
}

#[test]
fn tl_decision_depends_only_on_the_past() {
    let g = noise(40.0);
    for seed in 0..10 {
        let w = sample_wiener(&g, 0.02, 60, 300 + seed).unwrap();
        let full = stopping_time_tl(&w, 1.5, &stop_params()).unwrap();
        for cut in [10, 30, 45] {
            let part = stopping_time_tl(&w.truncate(cut), 1.5, &stop_params()).unwrap();
            let full_before = full.index <= cut && full.trigger != StopTrigger::Cap;
            let part_before = part.trigger != StopTrigger::Cap;
            assert_eq!(full_before, part_before);
            if full_before {
                assert_eq!(full.index, part.index);
            }
        }
    }
}

#[test]
fn tau_caps_when_nothing_is_reached() {
    let g = noise(0.0);
    let w = sample_wiener(&g, 0.1, 20, 1).unwrap();
    let idx: Vec<usize> = (0..=20).collect();
    let mbar = ScalarPath::uniform(0.1, vec![0.0; 21]).unwrap();
    let r = stopping_time_tau(&w, &idx, &mbar, 5.0, &TAU_SCHEDULE, &stop_params()).unwrap();
    assert_relative_eq!(r.time, 2.0, max_relative = 1e-12);
    assert_eq!(r.profile.len(), 5);
}

#[test]
fn tau_matches_tl_when_mbar_is_the_iterated_integral() {
    let g = noise(40.0);
    for seed in 0..20 {
        let w = sample_wiener(&g, 0.02, 60, 700 + seed).unwrap();
        let tl = stopping_time_tl(&w, 1.5, &stop_params()).unwrap();
        let it = iterated_ito(&w);
        let idx: Vec<usize> = (0..=60).collect();
        let tau = stopping_time_tau(&w, &idx, &it, 1.5, &TAU_SCHEDULE, &stop_params()).unwrap();
        assert!(tau.time <= tl.time + 1e-12);
        assert!(tl.index - tau.index <= 1, "seed {seed}: {} vs {}", tau.index, tl.index);
        assert!(tau.profile.windows(2).all(|p| p[0].1 <= p[1].1));
    }
}

#[test]
fn gb_holder_is_stable_under_refinement() {
    let g = noise(1.0);
    for seed in 0..5 {
        let fine = sample_wiener(&g, 1.0 / 512.0, 512, seed).unwrap();
        let coarse = fine.coarsen(2).unwrap();
        let a = holder_seminorm(&VectorPath::from_wiener(&coarse, 1.0), 0.3)
            .unwrap()
            .value;
        let b = holder_seminorm(&VectorPath::from_wiener(&fine, 1.0), 0.3)
            .unwrap()
            .value;
        assert!(b >= a * (1.0 - 1e-12));
        assert!(b <= 2.0 * a);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn holder_never_decreases_under_refinement(
        coarse in prop::collection::vec(-1.0f64..1.0, 3..20),
        mids in prop::collection::vec(-1.0f64..1.0, 20),
        alpha in 0.1f64..0.9,
    ) {
        let n = coarse.len();
        let times_c: Vec<f64> = (0..n).map(|j| j as f64).collect();
        let mut tf = Vec::new();
        let mut vf = Vec::new();
        for j in 0..n {
            tf.push(j as f64);
            vf.push(coarse[j]);
            if j + 1 < n {
                tf.push(j as f64 + 0.5);
                vf.push(mids[j]);
            }
        }
        let a = holder_seminorm(&ScalarPath::new(times_c, coarse).unwrap(), alpha).unwrap().value;
        let b = holder_seminorm(&ScalarPath::new(tf, vf).unwrap(), alpha).unwrap().value;
        prop_assert!(b >= a);
    }

    #[test]
    fn slobodeckij_is_homogeneous(vals in prop::collection::vec(-2.0f64..2.0, 2..30), c in 0.1f64..5.0) {
        let p = ScalarPath::uniform(0.1, vals).unwrap();
        let a = sobolev_slobodeckij(&p, 0.3, 3.0).unwrap().value;
        let b = sobolev_slobodeckij(&p.scale(c), 0.3, 3.0).unwrap().value;
        prop_assert!((b - c * a).abs() <= 1e-10 * (1.0 + c * a));
    }
}

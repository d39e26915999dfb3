//! Checks of the dissipative-solution conditions on stored trajectories:
//! the defect `𝔑 = ℜ − x⊗x`, the energy compatibility `∫tr ℜ ≤ z`,
//! ensemble martingale tests, relative energy and its Grönwall envelope.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::field::{outer_product, SpectralVector, StressGrid};
use crate::noise::NoiseCoefficient;
use crate::rough::ScalarPath;
use crate::trajectory::DissipativeTrajectory;

/// Default PSD tolerance for defect eigenvalues.
pub const TOL_PSD: f64 = 1e-9;

/// Fraction of output strides allowed to violate an a.e. condition.
pub const FRAC_TOL: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Pass,
    Fail,
    Degenerate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub index: usize,
    pub time: f64,
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub status: Status,
    /// Smallest margin seen; negative values are violations.
    pub worst_margin: f64,
    pub violations: Vec<Violation>,
    pub p_value: Option<f64>,
    pub detail: String,
}

impl CheckResult {
    pub fn new(name: &str, status: Status, worst_margin: f64) -> Self {
        CheckResult {
            name: name.to_string(),
            status,
            worst_margin,
            violations: Vec::new(),
            p_value: None,
            detail: String::new(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub trajectory: Option<String>,
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn status(&self) -> Status {
        if self.checks.iter().any(|c| c.status == Status::Fail) {
            Status::Fail
        } else if self.checks.iter().any(|c| c.status == Status::Degenerate) {
            Status::Degenerate
        } else {
            Status::Pass
        }
    }

    pub fn passed(&self) -> bool {
        self.status() == Status::Pass
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn merge(&mut self, other: VerificationReport) {
        self.checks.extend(other.checks);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Defect `𝔑 = ℜ − x⊗x` at each frame that has a successor.
#[derive(Clone, Debug)]
pub struct DefectSeries {
    pub times: Vec<f64>,
    pub defects: Vec<StressGrid>,
    pub min_eigenvalue: Vec<f64>,
    pub trace_integral: Vec<f64>,
    pub max_abs: Vec<f64>,
    pub degenerate: bool,
}

impl DefectSeries {
    pub fn worst_min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn worst_max_abs(&self) -> f64 {
        self.max_abs.iter().cloned().fold(0.0, f64::max)
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        self.min_eigenvalue.iter().all(|&e| e >= -tol)
    }
}

/// `ℜ ≈ (y(t+h) − y(t))/h` between stored frames, then `𝔑 = ℜ − x(t)⊗x(t)`.
pub fn compute_defect(traj: &DissipativeTrajectory) -> DefectSeries {
    let mut out = DefectSeries {
        times: Vec::new(),
        defects: Vec::new(),
        min_eigenvalue: Vec::new(),
        trace_integral: Vec::new(),
        max_abs: Vec::new(),
        degenerate: traj.frames.len() < 2,
    };
    for w in traj.frames.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let h = b.time - a.time;
        let mut r = (&b.y - &a.y).scale(1.0 / h);
        r.axpy(-1.0, &outer_product(&a.x));
        out.times.push(a.time);
        out.min_eigenvalue.push(r.min_eigenvalue().0);
        out.trace_integral.push(r.trace_integral());
        out.max_abs.push(r.max_abs());
        out.defects.push(r);
    }
    out
}

/// PSD check of the defect series.
pub fn check_defect(series: &DefectSeries, tol_psd: f64) -> CheckResult {
    if series.degenerate {
        let mut c = CheckResult::new("defect_psd", Status::Degenerate, 0.0);
        c.detail = "fewer than two stored frames".into();
        return c;
    }
    let worst = series.worst_min_eigenvalue();
    let mut c = CheckResult::new(
        "defect_psd",
        if worst >= -tol_psd { Status::Pass } else { Status::Fail },
        worst,
    );
    for (k, &e) in series.min_eigenvalue.iter().enumerate() {
        if e < -tol_psd {
            c.violations.push(Violation {
                index: k,
                time: series.times[k],
                margin: e,
            });
        }
    }
    c
}

/// `3 max_k ‖x_{k+1}⊗x_{k+1} − x_k⊗x_k‖_max`: how far the frame-difference
/// estimate of `ℜ` can sit below `x⊗x` when `y` accumulates `x⊗x` between frames.
pub fn stride_allowance(traj: &DissipativeTrajectory) -> f64 {
    let outers: Vec<StressGrid> = traj.frames.iter().map(|f| outer_product(&f.x)).collect();
    3.0 * outers.windows(2).map(|w| w[1].max_abs_diff(&w[0])).fold(0.0, f64::max)
}

/// Divergence of every stored `x` and PSD of the defect up to
/// `tol_psd` plus [`stride_allowance`].
pub fn check_m1(traj: &DissipativeTrajectory, tol_div: f64, tol_psd: f64) -> VerificationReport {
    let mut div = CheckResult::new("m1_divergence", Status::Pass, f64::INFINITY);
    for f in &traj.frames {
        let m = tol_div - f.x.divergence_ratio();
        div.worst_margin = div.worst_margin.min(m);
        if m < 0.0 {
            div.violations.push(Violation {
                index: f.index,
                time: f.time,
                margin: m,
            });
        }
    }
    if traj.frames.is_empty() {
        div.status = Status::Degenerate;
        div.worst_margin = 0.0;
    } else if !div.violations.is_empty() {
        div.status = Status::Fail;
    }
    div.detail = format!("relative tolerance {tol_div:.1e}");
    let allowance = stride_allowance(traj);
    let tol = tol_psd + allowance;
    let mut defect = check_defect(&compute_defect(traj), tol);
    defect.name = "m1_defect".into();
    if defect.status != Status::Degenerate {
        defect.worst_margin += tol;
        for v in defect.violations.iter_mut() {
            v.margin += tol;
        }
    }
    defect.detail = format!("min eigenvalue vs −{tol_psd:.1e} − stride allowance {allowance:.3e}");
    VerificationReport {
        trajectory: Some(traj.meta.id.clone()),
        checks: vec![div, defect],
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct M3Tolerances {
    /// Absolute slack for `‖x‖² ≤ z`.
    pub energy: f64,
    /// Allowed fraction of steps violating `∫tr ℜ ≤ z`.
    pub frac: f64,
}

impl M3Tolerances {
    /// `5 Δt ‖G‖²` plus a relative round-off allowance.
    pub fn for_trajectory(traj: &DissipativeTrajectory) -> Self {
        let g2 = traj
            .wiener
            .as_ref()
            .map(|w| w.noise.hs_norm(0.0).powi(2))
            .unwrap_or(0.0);
        let scale = traj.scalars.z.iter().fold(0.0f64, |m, z| m.max(z.abs()));
        M3Tolerances {
            energy: 5.0 * traj.dt * g2 + 1e-10 * (1.0 + scale),
            frac: FRAC_TOL,
        }
    }
}

/// `∫tr ℜ(t) ≤ z(t)` for all but a fraction of steps, and `‖x(t)‖² ≤ z(t)` everywhere.
pub fn check_m3(traj: &DissipativeTrajectory, tol: &M3Tolerances) -> VerificationReport {
    let s = &traj.scalars;
    let n = s.len();
    let mut trace = CheckResult::new("m3_trace", Status::Pass, f64::INFINITY);
    let mut energy = CheckResult::new("m3_energy", Status::Pass, f64::INFINITY);
    for j in 0..n {
        let mt = s.z[j] - s.trace_r[j];
        trace.worst_margin = trace.worst_margin.min(mt);
        if mt < -tol.energy {
            trace.violations.push(Violation {
                index: j,
                time: s.t[j],
                margin: mt,
            });
        }
        let me = s.z[j] - s.energy[j];
        energy.worst_margin = energy.worst_margin.min(me);
        if me < -tol.energy {
            energy.violations.push(Violation {
                index: j,
                time: s.t[j],
                margin: me,
            });
        }
    }
    if n == 0 {
        trace.worst_margin = 0.0;
        energy.worst_margin = 0.0;
    }
    let frac = trace.violations.len() as f64 / n.max(1) as f64;
    trace.detail = format!("{} of {n} steps violate", trace.violations.len());
    if frac > tol.frac {
        trace.status = Status::Fail;
    }
    if !energy.violations.is_empty() {
        energy.status = Status::Fail;
    }
    energy.detail = format!("tolerance {:.3e}", tol.energy);
    VerificationReport {
        trajectory: Some(traj.meta.id.clone()),
        checks: vec![trace, energy],
    }
}

/// Per-path martingale observables `M^i_{t,0}` at the requested grid indices.
#[derive(Clone, Debug, PartialEq)]
pub struct MartingaleSample {
    /// `values[i][k]`: mode `i`, time `times[k]`.
    pub values: Vec<Vec<f64>>,
    /// Realized quadratic variation `Σ (ΔM^i)²` up to each requested time.
    pub realized_qv: Vec<Vec<f64>>,
    /// `⟨x(t_k), e_i⟩`, used as the past observable in the lag test.
    pub past: Vec<Vec<f64>>,
}

/// `M^i = ⟨x(t) − x(0), e_i⟩ + ⟨div(y(t) − y(0)), e_i⟩ − ν∫⟨x, Δe_i⟩`,
/// with the viscous integral taken by left-point sums at the scheme's
/// discrete rate `(1 − e^{−ν|k|²Δt})/Δt`.
pub fn martingale_observables(
    traj: &DissipativeTrajectory,
    noise: &NoiseCoefficient,
    modes: &[usize],
    times: &[usize],
    viscosity: f64,
) -> Result<MartingaleSample> {
    let p = traj
        .projections
        .as_ref()
        .ok_or_else(|| Error::precondition("martingale test needs per-step projections"))?;
    let steps = p.steps();
    if times.iter().any(|&t| t >= steps) {
        return Err(Error::GridMismatch("requested time beyond trajectory".into()));
    }
    let dt = traj.dt;
    let mut values = Vec::with_capacity(modes.len());
    let mut realized = Vec::with_capacity(modes.len());
    let mut past = Vec::with_capacity(modes.len());
    for &i in modes {
        let k2 = noise.modes[i].k_squared();
        let rate = if viscosity > 0.0 {
            (1.0 - (-viscosity * k2 * dt).exp()) / dt
        } else {
            0.0
        };
        let c0 = p.x_row(0)[i];
        let mut visc = 0.0;
        let mut qv = 0.0;
        let mut prev = 0.0;
        let mut row = Vec::with_capacity(times.len());
        let mut qrow = Vec::with_capacity(times.len());
        let mut prow = Vec::with_capacity(times.len());
        let mut next = 0;
        for j in 0..steps {
            let m = p.x_row(j)[i] - c0 + p.ydiv_row(j)[i] + visc;
            qv += (m - prev) * (m - prev);
            prev = m;
            while next < times.len() && times[next] == j {
                row.push(m);
                qrow.push(qv);
                prow.push(p.x_row(j)[i]);
                next += 1;
            }
            visc += dt * rate * p.x_row(j)[i];
        }
        values.push(row);
        realized.push(qrow);
        past.push(prow);
    }
    Ok(MartingaleSample {
        values,
        realized_qv: realized,
        past,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingaleOptions {
    pub min_paths: usize,
    pub mean_se: f64,
    pub qv_rel: f64,
    pub lag_p: f64,
}

impl Default for MartingaleOptions {
    fn default() -> Self {
        MartingaleOptions {
            min_paths: 100,
            mean_se: 3.0,
            qv_rel: 0.10,
            lag_p: 0.01,
        }
    }
}

/// Summary statistics of one `(mode, time)` cell of the martingale test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingaleCell {
    pub mode: usize,
    pub time: f64,
    pub mean: f64,
    pub se: f64,
    pub variance: f64,
    pub expected_variance: f64,
    pub realized_qv: f64,
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, var)
}

/// Two-sided p-value of a Pearson correlation over `n` pairs.
pub fn correlation_p_value(a: &[f64], b: &[f64]) -> (f64, f64) {
    let n = a.len();
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    if va <= 0.0 || vb <= 0.0 || n < 3 {
        return (0.0, 1.0);
    }
    let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n as f64 - 1.0);
    let r = (cov / (va * vb).sqrt()).clamp(-1.0, 1.0);
    let df = n as f64 - 2.0;
    let t = r * (df / (1.0 - r * r).max(1e-300)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (r, 2.0 * (1.0 - dist.cdf(t.abs())))
}

/// Ensemble martingale test: mean within `mean_se` standard errors of zero,
/// variance within `qv_rel` of `g_i² t`, and increments `M(t_{k+1}) − M(t_k)`
/// uncorrelated with `⟨x(t_k), e_i⟩`.
pub fn martingale_test(
    samples: &[MartingaleSample],
    noise: &NoiseCoefficient,
    modes: &[usize],
    times: &[f64],
    opts: &MartingaleOptions,
) -> (VerificationReport, Vec<MartingaleCell>) {
    let n = samples.len();
    let mut report = VerificationReport::default();
    if n < opts.min_paths {
        let mut c = CheckResult::new("martingale", Status::Degenerate, 0.0);
        c.detail = format!("{n} paths; at least {} required", opts.min_paths);
        report.checks.push(c);
        return (report, Vec::new());
    }
    let mut mean_check = CheckResult::new("martingale_mean", Status::Pass, f64::INFINITY);
    let mut qv_check = CheckResult::new("martingale_qv", Status::Pass, f64::INFINITY);
    let mut lag_check = CheckResult::new("martingale_lag", Status::Pass, f64::INFINITY);
    let mut cells = Vec::new();
    let mut min_p: f64 = 1.0;
    for (a, &i) in modes.iter().enumerate() {
        let g2 = noise.modes[i].g.powi(2);
        for (k, &t) in times.iter().enumerate() {
            let vals: Vec<f64> = samples.iter().map(|s| s.values[a][k]).collect();
            let (mean, var) = mean_var(&vals);
            let se = (var / n as f64).sqrt();
            let expected = g2 * t;
            let rqv = samples.iter().map(|s| s.realized_qv[a][k]).sum::<f64>() / n as f64;
            cells.push(MartingaleCell {
                mode: i,
                time: t,
                mean,
                se,
                variance: var,
                expected_variance: expected,
                realized_qv: rqv,
            });
            let mean_margin = if expected == 0.0 && var <= 1e-24 {
                1e-12 - mean.abs()
            } else {
                opts.mean_se * se - mean.abs()
            };
            mean_check.worst_margin = mean_check.worst_margin.min(mean_margin);
            if mean_margin < 0.0 {
                mean_check.violations.push(Violation {
                    index: a,
                    time: t,
                    margin: mean_margin,
                });
            }
            let qv_margin = if expected == 0.0 {
                1e-12 - var
            } else {
                opts.qv_rel - (var / expected - 1.0).abs()
            };
            qv_check.worst_margin = qv_check.worst_margin.min(qv_margin);
            if qv_margin < 0.0 {
                qv_check.violations.push(Violation {
                    index: a,
                    time: t,
                    margin: qv_margin,
                });
            }
            if k + 1 < times.len() {
                let inc: Vec<f64> = samples.iter().map(|s| s.values[a][k + 1] - s.values[a][k]).collect();
                let past: Vec<f64> = samples.iter().map(|s| s.past[a][k]).collect();
                let (_, p) = correlation_p_value(&inc, &past);
                min_p = min_p.min(p);
                let margin = p - opts.lag_p;
                lag_check.worst_margin = lag_check.worst_margin.min(margin);
                if margin < 0.0 {
                    lag_check.violations.push(Violation {
                        index: a,
                        time: t,
                        margin,
                    });
                }
            }
        }
    }
    for c in [&mut mean_check, &mut qv_check, &mut lag_check] {
        if !c.violations.is_empty() {
            c.status = Status::Fail;
        }
        if c.worst_margin == f64::INFINITY {
            c.worst_margin = 0.0;
        }
    }
    lag_check.p_value = Some(min_p);
    report.checks.extend([mean_check, qv_check, lag_check]);
    (report, cells)
}

/// Relative energy `½z − ⟨x,u⟩ + ½‖u‖²` and its two nonnegative parts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelativeEnergy {
    pub times: Vec<f64>,
    pub value: Vec<f64>,
    /// `½‖x − u‖²`.
    pub distance: Vec<f64>,
    /// `½(z − ‖x‖²)`.
    pub gap: Vec<f64>,
}

impl RelativeEnergy {
    pub fn is_nonnegative(&self, tol: f64) -> bool {
        self.value.iter().all(|&v| v >= -tol)
    }

    pub fn path(&self) -> Result<ScalarPath> {
        ScalarPath::new(self.times.clone(), self.value.clone())
    }
}

/// Relative energy of `traj` against the strong trajectory `strong` at common frames.
pub fn relative_energy(traj: &DissipativeTrajectory, strong: &DissipativeTrajectory) -> Result<RelativeEnergy> {
    let ia: Vec<usize> = traj.frames.iter().map(|f| f.index).collect();
    let ib: Vec<usize> = strong.frames.iter().map(|f| f.index).collect();
    if ia != ib || (traj.dt - strong.dt).abs() > 1e-15 * traj.dt.max(1.0) {
        return Err(Error::GridMismatch("relative energy needs a common frame grid".into()));
    }
    let mut out = RelativeEnergy {
        times: Vec::new(),
        value: Vec::new(),
        distance: Vec::new(),
        gap: Vec::new(),
    };
    for (a, b) in traj.frames.iter().zip(&strong.frames) {
        a.x.same_lattice(&b.x)?;
        let xu = a.x.inner(&b.x);
        let uu = b.x.norm_sq();
        let xx = a.x.norm_sq();
        out.times.push(a.time);
        out.value.push(0.5 * a.z - xu + 0.5 * uu);
        out.distance.push(0.5 * (&a.x - &b.x).norm_sq());
        out.gap.push(0.5 * (a.z - xx));
    }
    Ok(out)
}

/// `max_x |∇u(x)|` (Frobenius) on the grid.
pub fn gradient_sup(u: &SpectralVector) -> f64 {
    let l = &u.lattice;
    let mut sq = vec![0.0; l.len()];
    for axis in 0..3 {
        let mut d = SpectralVector::zeros(l);
        for idx in 0..l.len() {
            let k = l.mode(idx)[axis] as f64;
            for a in 0..3 {
                let c = u.coeffs[a][idx];
                d.coeffs[a][idx] = num_complex::Complex64::new(-c.im * k, c.re * k);
            }
        }
        let g = d.to_grid();
        for a in 0..3 {
            for (s, v) in sq.iter_mut().zip(&g.comps[a]) {
                *s += v * v;
            }
        }
    }
    sq.into_iter().fold(0.0, f64::max).sqrt()
}

/// `‖∇x‖_∞` at every frame.
pub fn gradient_sup_series(traj: &DissipativeTrajectory) -> Result<ScalarPath> {
    let times = traj.frames.iter().map(|f| f.time).collect();
    let vals = traj.frames.iter().map(|f| gradient_sup(&f.x)).collect();
    ScalarPath::new(times, vals)
}

/// `E_rel(t) ≤ E_rel(0) exp(∫_0^t c ‖Du‖_∞) + tol` on a common grid.
pub fn gronwall_monitor(e_rel: &ScalarPath, grad_sup: &ScalarPath, c: f64, tol: f64) -> Result<VerificationReport> {
    if e_rel.times != grad_sup.times {
        return Err(Error::GridMismatch("Grönwall inputs on different grids".into()));
    }
    let mut check = CheckResult::new("gronwall", Status::Pass, f64::INFINITY);
    let e0 = e_rel.values.first().copied().unwrap_or(0.0);
    let mut integral = 0.0;
    for k in 0..e_rel.times.len() {
        if k > 0 {
            let h = e_rel.times[k] - e_rel.times[k - 1];
            integral += 0.5 * h * c * (grad_sup.values[k] + grad_sup.values[k - 1]);
        }
        let envelope = e0 * integral.exp() + tol;
        let margin = envelope - e_rel.values[k];
        check.worst_margin = check.worst_margin.min(margin);
        if margin < 0.0 {
            if check.violations.is_empty() {
                check.detail = format!("first breach at t = {}", e_rel.times[k]);
            }
            check.violations.push(Violation {
                index: k,
                time: e_rel.times[k],
                margin,
            });
        }
    }
    if !check.violations.is_empty() {
        check.status = Status::Fail;
    }
    if check.worst_margin == f64::INFINITY {
        check.worst_margin = 0.0;
    }
    Ok(VerificationReport {
        trajectory: None,
        checks: vec![check],
    })
}

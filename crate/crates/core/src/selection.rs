//! Finite-ensemble selection: discounted functionals, iterated argmax chains,
//! the admissibility order on mean energy curves and restart tests.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dissipative::{CheckResult, Status, VerificationReport, FRAC_TOL};
use crate::error::{Error, Result};
use crate::field::SpectralVelocity;
use crate::galerkin::InitialState;
use crate::trajectory::DissipativeTrajectory;

/// Relative tie tolerance on functional values.
pub const TIE_TOL: f64 = 1e-6;
/// Tolerance on the sum of law weights.
pub const WEIGHT_TOL: f64 = 1e-12;

/// Weighted finite ensemble of trajectories sharing one initial datum.
#[derive(Clone, Debug)]
pub struct EnsembleLaw {
    pub label: String,
    pub members: Vec<Arc<DissipativeTrajectory>>,
    pub weights: Vec<f64>,
}

fn same_datum(a: &DissipativeTrajectory, b: &DissipativeTrajectory) -> Result<()> {
    let (fa, fb) = match (a.initial(), b.initial()) {
        (Some(fa), Some(fb)) => (fa, fb),
        _ => return Err(Error::precondition("trajectory has no initial frame")),
    };
    let same = fa.z == fb.z && fa.x.lattice == fb.x.lattice && fa.x.coeffs == fb.x.coeffs && fa.y.comps == fb.y.comps;
    if same {
        Ok(())
    } else {
        Err(Error::precondition(format!(
            "initial datum of `{}` differs from `{}`",
            b.meta.id, a.meta.id
        )))
    }
}

impl EnsembleLaw {
    pub fn new(label: impl Into<String>, members: Vec<Arc<DissipativeTrajectory>>, weights: Vec<f64>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::precondition("a law needs at least one trajectory"));
        }
        if members.len() != weights.len() {
            return Err(Error::precondition(format!(
                "{} members but {} weights",
                members.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::precondition("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::precondition(format!("weights sum to {total}, not 1")));
        }
        let first = &members[0];
        for m in &members[1..] {
            same_datum(first, m)?;
            if m.dt != first.dt || m.steps() != first.steps() {
                return Err(Error::GridMismatch(format!(
                    "`{}` has grid ({}, {}), `{}` has ({}, {})",
                    m.meta.id,
                    m.dt,
                    m.steps(),
                    first.meta.id,
                    first.dt,
                    first.steps()
                )));
            }
        }
        Ok(EnsembleLaw {
            label: label.into(),
            members,
            weights,
        })
    }

    /// Equal weights; the last weight absorbs rounding so the sum is exactly 1.
    pub fn uniform(label: impl Into<String>, members: Vec<Arc<DissipativeTrajectory>>) -> Result<Self> {
        let n = members.len();
        let mut w = vec![1.0 / n.max(1) as f64; n];
        if n > 0 {
            let head: f64 = w[..n - 1].iter().sum();
            w[n - 1] = 1.0 - head;
        }
        Self::new(label, members, w)
    }

    pub fn dt(&self) -> f64 {
        self.members[0].dt
    }

    pub fn steps(&self) -> usize {
        self.members[0].steps()
    }

    pub fn times(&self) -> &[f64] {
        &self.members[0].scalars.t
    }

    /// Weighted mean of a per-step scalar series.
    pub fn mean_series(&self, f: impl Fn(&DissipativeTrajectory) -> &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.steps() + 1];
        for (m, w) in self.members.iter().zip(&self.weights) {
            for (o, v) in out.iter_mut().zip(f(m)) {
                *o += w * v;
            }
        }
        out
    }

    /// SHA-256 of the member manifests and weights, as lowercase hex.
    pub fn manifest_hash(&self) -> String {
        let mut h = Sha256::new();
        for (m, w) in self.members.iter().zip(&self.weights) {
            h.update(serde_json::to_vec(&m.meta).expect("meta serializes"));
            h.update(m.dt.to_le_bytes());
            h.update((m.steps() as u64).to_le_bytes());
            h.update(w.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Scalar observable of the state `(x, y, z)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Observable {
    /// `‖x‖²`.
    Energy,
    /// `∫ tr y`.
    TraceY,
    Z,
    /// `∫ tr ℜ`.
    TraceR,
    /// `Σ_{|k|_∞ ≤ c} |x̂_k|²`, evaluated on the frame grid.
    LowMode(usize),
    Constant(f64),
}

/// Parsed entry of a functional chain: `[-]name`, where `name` is one of
/// `energy`, `trace_y`, `z`, `trace_r`, `lowmode<c>`, `one`, or `c1`
/// (shorthand for `-trace_y`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSpec {
    pub observable: Observable,
    pub sign: f64,
}

impl FunctionalSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim();
        let (neg, name) = match t.strip_prefix('-') {
            Some(rest) => (true, rest.trim()),
            None => (false, t.strip_prefix('+').unwrap_or(t).trim()),
        };
        let (observable, base) = match name {
            "energy" => (Observable::Energy, 1.0),
            "trace_y" => (Observable::TraceY, 1.0),
            "z" => (Observable::Z, 1.0),
            "trace_r" => (Observable::TraceR, 1.0),
            "one" => (Observable::Constant(1.0), 1.0),
            "c1" => (Observable::TraceY, -1.0),
            other => match other.strip_prefix("lowmode").map(str::parse::<usize>) {
                Some(Ok(c)) => (Observable::LowMode(c), 1.0),
                _ => return Err(Error::config("chain", format!("unknown functional `{s}`"))),
            },
        };
        Ok(FunctionalSpec {
            observable,
            sign: if neg { -base } else { base },
        })
    }

    pub fn name(&self) -> String {
        let base = match self.observable {
            Observable::Energy => "energy".to_string(),
            Observable::TraceY => "trace_y".to_string(),
            Observable::Z => "z".to_string(),
            Observable::TraceR => "trace_r".to_string(),
            Observable::LowMode(c) => format!("lowmode{c}"),
            Observable::Constant(c) => format!("const({c})"),
        };
        if self.sign < 0.0 {
            format!("-{base}")
        } else {
            base
        }
    }
}

/// `J(P) = E ∫₀^h e^{−λs} F(x(s), y(s), z(s)) ds` with `|F| ≤ bound`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscountedFunctional {
    pub lambda: f64,
    pub spec: FunctionalSpec,
    pub bound: f64,
    /// Integration horizon `h`; `None` uses the common trajectory horizon.
    pub horizon: Option<f64>,
}

impl DiscountedFunctional {
    pub fn new(lambda: f64, spec: FunctionalSpec, bound: f64) -> Self {
        DiscountedFunctional {
            lambda,
            spec,
            bound,
            horizon: None,
        }
    }

    pub fn name(&self) -> String {
        self.spec.name()
    }

    /// Integrand values `F` on a time grid of one trajectory.
    pub fn integrand(&self, t: &DissipativeTrajectory) -> (Vec<f64>, Vec<f64>) {
        let s = &t.scalars;
        let raw: (Vec<f64>, Vec<f64>) = match self.spec.observable {
            Observable::Energy => (s.t.clone(), s.energy.clone()),
            Observable::TraceY => (s.t.clone(), s.trace_y.clone()),
            Observable::Z => (s.t.clone(), s.z.clone()),
            Observable::TraceR => (s.t.clone(), s.trace_r.clone()),
            Observable::Constant(c) => (s.t.clone(), vec![c; s.len()]),
            Observable::LowMode(c) => {
                let times = t.frames.iter().map(|f| f.time).collect();
                let vals = t.frames.iter().map(|f| low_mode_energy(&f.x, c)).collect();
                (times, vals)
            }
        };
        let b = self.bound;
        let vals = raw.1.iter().map(|v| (self.spec.sign * v).clamp(-b, b)).collect();
        (raw.0, vals)
    }
}

fn low_mode_energy(x: &crate::field::SpectralVector, cutoff: usize) -> f64 {
    let l = &x.lattice;
    (0..l.len())
        .filter(|&i| l.is_active(i) && l.linf(i) <= cutoff)
        .map(|i| x.coeffs.iter().map(|c| c[i].norm_sqr()).sum::<f64>())
        .sum()
}

/// `∫_a^b e^{−λs} f(s) ds` for `f` linear between `f(a) = fa` and `f(b) = fb`.
fn exp_linear(lambda: f64, a: f64, b: f64, fa: f64, fb: f64) -> f64 {
    let h = b - a;
    if h <= 0.0 {
        return 0.0;
    }
    let x = lambda * h;
    let ea = (-lambda * a).exp();
    let e = (-x).exp();
    let m0 = -(-x).exp_m1() / lambda;
    let m1 = if x < 1e-4 {
        h * h * (0.5 - x / 3.0 + x * x / 8.0)
    } else {
        (1.0 - e * (1.0 + x)) / (lambda * lambda)
    };
    ea * (fa * m0 + (fb - fa) / h * m1)
}

/// Discounted integral of the left-continuous step function `f(s) = f_j` on `[t_j, t_{j+1})` over `[0, h]`.
pub fn discounted_integral_left(lambda: f64, t: &[f64], f: &[f64], h: f64) -> f64 {
    let mut acc = 0.0;
    for j in 0..t.len().saturating_sub(1) {
        let a = t[j];
        if a >= h {
            break;
        }
        let b = t[j + 1].min(h);
        acc += f[j] * (-lambda * a).exp() * -(-lambda * (b - a)).exp_m1() / lambda;
    }
    acc
}

/// Discounted integral of the piecewise-linear interpolant of `(t, f)` over `[0, h]`.
pub fn discounted_integral(lambda: f64, t: &[f64], f: &[f64], h: f64) -> f64 {
    let mut acc = 0.0;
    for j in 0..t.len().saturating_sub(1) {
        let (a, b) = (t[j], t[j + 1]);
        if a >= h {
            break;
        }
        if b <= h {
            acc += exp_linear(lambda, a, b, f[j], f[j + 1]);
        } else {
            let fh = f[j] + (f[j + 1] - f[j]) * (h - a) / (b - a);
            acc += exp_linear(lambda, a, h, f[j], fh);
        }
    }
    acc
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscountedValue {
    pub value: f64,
    /// `bound · e^{−λh} / λ`, the largest possible contribution beyond `h`.
    pub tail_bound: f64,
    pub horizon: f64,
    pub members: Vec<f64>,
}

/// Weighted discounted value of a law, integrating exactly against `e^{−λs}`
/// on each grid interval.
pub fn discounted_value(law: &EnsembleLaw, j: &DiscountedFunctional) -> Result<DiscountedValue> {
    if !(j.lambda > 0.0) {
        return Err(Error::config("lambda", format!("λ = {} must be > 0", j.lambda)));
    }
    let cover = law.members.iter().map(|m| m.horizon()).fold(f64::INFINITY, f64::min);
    let h = j.horizon.unwrap_or(cover);
    if h > cover * (1.0 + 1e-12) {
        return Err(Error::precondition(format!(
            "trajectories cover [0, {cover}] but the horizon is {h}"
        )));
    }
    let members: Vec<f64> = law
        .members
        .iter()
        .map(|m| {
            let (t, f) = j.integrand(m);
            discounted_integral(j.lambda, &t, &f, h)
        })
        .collect();
    let value = members.iter().zip(&law.weights).map(|(v, w)| v * w).sum();
    Ok(DiscountedValue {
        value,
        tail_bound: j.bound * (-j.lambda * h).exp() / j.lambda,
        horizon: h,
        members,
    })
}

/// Both sides of the integration-by-parts identity for `−∫tr y`.
///
/// `y` is interpolated linearly between grid points, so its derivative is the
/// step function of the stored `∫tr ℜ` at left endpoints; the right side
/// integrates that step function. `rhs_trapezoid` uses the linear interpolant
/// of `∫tr ℜ` instead and differs by `O(Δt)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct C1Identity {
    /// `E ∫₀^h e^{−λs} (−∫tr y(s)) ds`.
    pub lhs: f64,
    /// `−(1/λ) ∫tr y(0) + (1/λ) e^{−λh} E∫tr y(h) + (1/λ) E ∫₀^h e^{−λs} (−∫tr ℜ(s)) ds`.
    pub rhs: f64,
    pub boundary: f64,
    pub stress_term: f64,
    pub rhs_trapezoid: f64,
    pub gap: f64,
    pub relative_gap: f64,
}

pub fn energy_functional_c1(law: &EnsembleLaw, lambda: f64) -> Result<C1Identity> {
    if !(lambda > 0.0) {
        return Err(Error::config("lambda", format!("λ = {lambda} must be > 0")));
    }
    let h = law.members.iter().map(|m| m.horizon()).fold(f64::INFINITY, f64::min);
    let mut lhs = 0.0;
    let mut stress = 0.0;
    let mut stress_trap = 0.0;
    let mut boundary = 0.0;
    for (m, w) in law.members.iter().zip(&law.weights) {
        let s = &m.scalars;
        let neg_y: Vec<f64> = s.trace_y.iter().map(|v| -v).collect();
        let neg_r: Vec<f64> = s.trace_r.iter().map(|v| -v).collect();
        lhs += w * discounted_integral(lambda, &s.t, &neg_y, h);
        stress += w * discounted_integral_left(lambda, &s.t, &neg_r, h) / lambda;
        stress_trap += w * discounted_integral(lambda, &s.t, &neg_r, h) / lambda;
        let y0 = s.trace_y[0];
        let yh = interpolate(&s.t, &s.trace_y, h);
        boundary += w * (-y0 + (-lambda * h).exp() * yh) / lambda;
    }
    let rhs = boundary + stress;
    let gap = (lhs - rhs).abs();
    let scale = lhs.abs().max(rhs.abs());
    Ok(C1Identity {
        lhs,
        rhs,
        boundary,
        stress_term: stress,
        rhs_trapezoid: boundary + stress_trap,
        gap,
        relative_gap: if scale > 0.0 { gap / scale } else { 0.0 },
    })
}

fn interpolate(t: &[f64], f: &[f64], h: f64) -> f64 {
    match t.iter().position(|&s| s >= h) {
        Some(0) => f[0],
        Some(j) => f[j - 1] + (f[j] - f[j - 1]) * (h - t[j - 1]) / (t[j] - t[j - 1]),
        None => *f.last().unwrap_or(&0.0),
    }
}

/// Outcome of comparing two laws under `≺`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Equal,
    /// `P ≺ Q`.
    Less,
    /// `Q ≺ P`.
    Greater,
    Incomparable,
}

/// Compares the mean `∫tr ℜ(t)` curves of two laws stride by stride;
/// up to [`FRAC_TOL`] of the strides may violate a relation.
pub fn admissibility_order(p: &EnsembleLaw, q: &EnsembleLaw) -> Result<Verdict> {
    same_datum(&p.members[0], &q.members[0])?;
    if p.dt() != q.dt() || p.steps() != q.steps() {
        return Err(Error::GridMismatch(format!(
            "laws `{}` and `{}` live on different time grids",
            p.label, q.label
        )));
    }
    let mp = p.mean_series(|t| &t.scalars.trace_r);
    let mq = q.mean_series(|t| &t.scalars.trace_r);
    let scale = mp.iter().chain(&mq).fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = 1e-9 * (1.0 + scale);
    let allowed = (FRAC_TOL * mp.len() as f64).floor() as usize;
    let above = mp.iter().zip(&mq).filter(|(a, b)| **a > **b + tol).count();
    let below = mp.iter().zip(&mq).filter(|(a, b)| **a < **b - tol).count();
    Ok(match (above <= allowed, below <= allowed) {
        (true, true) => Verdict::Equal,
        (true, false) => Verdict::Less,
        (false, true) => Verdict::Greater,
        (false, false) => Verdict::Incomparable,
    })
}

/// Pairwise verdicts `matrix[i][j] = order(laws[i], laws[j])`.
pub fn admissibility_matrix(laws: &[EnsembleLaw]) -> Result<Vec<Vec<Verdict>>> {
    laws.iter()
        .map(|p| laws.iter().map(|q| admissibility_order(p, q)).collect())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateEntry {
    pub label: String,
    pub hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionRound {
    pub functional: String,
    pub lambda: f64,
    /// Value per candidate; `None` for candidates eliminated earlier.
    pub values: Vec<Option<f64>>,
    pub survivors: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionLog {
    pub candidates: Vec<CandidateEntry>,
    pub rounds: Vec<SelectionRound>,
    pub chosen: usize,
    pub chosen_label: String,
    pub chosen_hash: String,
    pub tie_tol: f64,
    pub admissibility: Option<Vec<Vec<Verdict>>>,
}

impl DecisionLog {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("log serializes")
    }
}

/// Iterated argmax: each functional keeps the survivors within `tie_tol`
/// (relative) of the best value; remaining ties go to the smallest manifest hash.
pub fn krylov_select(candidates: &[EnsembleLaw], chain: &[DiscountedFunctional], tie_tol: f64) -> Result<DecisionLog> {
    if candidates.is_empty() {
        return Err(Error::precondition("no candidate laws"));
    }
    let entries: Vec<CandidateEntry> = candidates
        .iter()
        .map(|c| CandidateEntry {
            label: c.label.clone(),
            hash: c.manifest_hash(),
        })
        .collect();
    let mut survivors: Vec<usize> = (0..candidates.len()).collect();
    let mut rounds = Vec::with_capacity(chain.len());
    for j in chain {
        let vals: Vec<(usize, f64)> = survivors
            .par_iter()
            .map(|&i| discounted_value(&candidates[i], j).map(|v| (i, v.value)))
            .collect::<Result<_>>()?;
        let best = vals.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
        let slack = if best != 0.0 { tie_tol * best.abs() } else { tie_tol };
        survivors = vals.iter().filter(|v| v.1 >= best - slack).map(|v| v.0).collect();
        let mut values = vec![None; candidates.len()];
        for (i, v) in &vals {
            values[*i] = Some(*v);
        }
        rounds.push(SelectionRound {
            functional: j.name(),
            lambda: j.lambda,
            values,
            survivors: survivors.clone(),
        });
    }
    let chosen = *survivors
        .iter()
        .min_by(|a, b| entries[**a].hash.cmp(&entries[**b].hash))
        .expect("survivors are nonempty");
    Ok(DecisionLog {
        chosen_label: entries[chosen].label.clone(),
        chosen_hash: entries[chosen].hash.clone(),
        candidates: entries,
        rounds,
        chosen,
        tie_tol,
        admissibility: None,
    })
}

/// Chain `(−∫tr y, rest...)` used in admissible mode.
pub fn admissible_chain(lambda: f64, bound: f64, rest: &[FunctionalSpec]) -> Vec<DiscountedFunctional> {
    let c1 = FunctionalSpec {
        observable: Observable::TraceY,
        sign: -1.0,
    };
    std::iter::once(c1)
        .chain(rest.iter().copied())
        .map(|s| DiscountedFunctional::new(lambda, s, bound))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartOptions {
    /// Significance level of the two-sample test.
    pub alpha: f64,
    /// Fewer paths yield a degenerate report.
    pub min_paths: usize,
    pub jobs: usize,
}

impl Default for RestartOptions {
    fn default() -> Self {
        RestartOptions {
            alpha: 0.01,
            min_paths: 20,
            jobs: 1,
        }
    }
}

/// Samples of the restart statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartSamples {
    pub continued_energy: Vec<f64>,
    pub restarted_energy: Vec<f64>,
    pub continued_z: Vec<f64>,
    pub restarted_z: Vec<f64>,
}

/// Two-sided Welch test of equal means; `(t, p)`.
pub fn welch_test(a: &[f64], b: &[f64]) -> (f64, f64) {
    let stats = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0).max(1.0);
        (n, m, v)
    };
    let (na, ma, va) = stats(a);
    let (nb, mb, vb) = stats(b);
    let se2 = va / na + vb / nb;
    let scale = ma.abs().max(mb.abs()).max(1e-300);
    if se2 <= (1e-14 * scale).powi(2) {
        let equal = (ma - mb).abs() <= 1e-12 * scale;
        return (0.0, if equal { 1.0 } else { 0.0 });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df.max(1.0)).expect("valid t distribution");
    (t, 2.0 * (1.0 - dist.cdf(t.abs())))
}

/// Runs each seed for `2m` steps, restarts a fresh trajectory from the state
/// at step `m` with an independent seed, and compares the terminal energy and
/// `z` of continued versus restarted trajectories with Welch tests.
pub fn restart_consistency_test<G>(
    generate: G,
    init: &InitialState,
    restart_index: usize,
    seeds: &[u64],
    opts: &RestartOptions,
) -> Result<(VerificationReport, RestartSamples)>
where
    G: Fn(&InitialState, u64, usize) -> Result<DissipativeTrajectory> + Sync + Send,
{
    let m = restart_index;
    if m == 0 {
        return Err(Error::precondition("restart index must be positive"));
    }
    let pairs = crate::ensemble::run_seeds(seeds, opts.jobs, |s| {
        let a = generate(init, s, 2 * m)?;
        let f = a.frame_at(m).ok_or_else(|| {
            Error::precondition(format!("no frame at restart index {m}; use a dividing frame stride"))
        })?;
        let state = InitialState {
            x: SpectralVelocity::new_checked(f.x.clone(), 1e-8)?,
            y: f.y.clone(),
            z: f.z,
        };
        let b = generate(&state, s ^ 0x5DEE_CE66_D1CE_4E5B, m)?;
        let last = |t: &DissipativeTrajectory, j: usize| -> Result<(f64, f64)> {
            match (t.scalars.energy.get(j), t.scalars.z.get(j)) {
                (Some(e), Some(z)) => Ok((*e, *z)),
                _ => Err(Error::precondition(format!("generator returned fewer than {j} steps"))),
            }
        };
        Ok((last(&a, 2 * m)?, last(&b, m)?))
    })?;
    let samples = RestartSamples {
        continued_energy: pairs.iter().map(|p| p.0 .0).collect(),
        restarted_energy: pairs.iter().map(|p| p.1 .0).collect(),
        continued_z: pairs.iter().map(|p| p.0 .1).collect(),
        restarted_z: pairs.iter().map(|p| p.1 .1).collect(),
    };
    let mut report = VerificationReport::default();
    for (name, a, b) in [
        ("restart_energy", &samples.continued_energy, &samples.restarted_energy),
        ("restart_z", &samples.continued_z, &samples.restarted_z),
    ] {
        if seeds.len() < opts.min_paths.max(2) {
            let mut c = CheckResult::new(name, Status::Degenerate, 0.0);
            c.detail = format!("{} paths, need {}", seeds.len(), opts.min_paths);
            report.checks.push(c);
            continue;
        }
        let (t, p) = welch_test(a, b);
        let status = if p > opts.alpha { Status::Pass } else { Status::Fail };
        let mut c = CheckResult::new(name, status, p - opts.alpha);
        c.p_value = Some(p);
        c.detail = format!("Welch t = {t:.4}");
        report.checks.push(c);
    }
    Ok((report, samples))
}

//! Discrete path seminorms, Young integration by sewing, Itô sums, the
//! reconstructed integral `M̄`, and the stopping times `T_L` and `τ_L`.
//!
//! Paths live on strictly increasing time grids. Field-valued paths are
//! represented by their coordinates on the noise basis together with a
//! per-coordinate weight, which turns any Sobolev norm of `GB` into a weighted
//! Euclidean norm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{divergence_of_stress, SpectralVector, StressGrid};
use crate::noise::WienerPath;

/// Largest grid size for which Hölder seminorms use every pair.
pub const ALL_PAIRS_LIMIT: usize = 2048;

/// Absolute tolerance for successive sewing levels.
pub const TOL_YOUNG: f64 = 1e-9;

/// A path on a time grid with a distance between its values.
pub trait MetricPath {
    fn len(&self) -> usize;
    fn time(&self, j: usize) -> f64;
    fn distance(&self, s: usize, t: usize) -> f64;
    fn magnitude(&self, j: usize) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_grid(times: &[f64]) -> Result<()> {
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::precondition("time grid must be strictly increasing"));
    }
    Ok(())
}

/// Real-valued path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl ScalarPath {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::GridMismatch(format!(
                "{} times for {} values",
                times.len(),
                values.len()
            )));
        }
        check_grid(&times)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::precondition("path values must be finite"));
        }
        Ok(ScalarPath { times, values })
    }

    /// `t_j = j · dt`.
    pub fn uniform(dt: f64, values: Vec<f64>) -> Result<Self> {
        let times = (0..values.len()).map(|j| j as f64 * dt).collect();
        Self::new(times, values)
    }

    pub fn from_fn(times: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = times.iter().map(|&t| f(t)).collect();
        Self::new(times, values)
    }

    pub fn last(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    pub fn scale(&self, c: f64) -> ScalarPath {
        ScalarPath {
            times: self.times.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl MetricPath for ScalarPath {
    fn len(&self) -> usize {
        self.values.len()
    }
    fn time(&self, j: usize) -> f64 {
        self.times[j]
    }
    fn distance(&self, s: usize, t: usize) -> f64 {
        (self.values[t] - self.values[s]).abs()
    }
    fn magnitude(&self, j: usize) -> f64 {
        self.values[j].abs()
    }
}

/// Coordinate path with norm `(Σ_i w_i c_i²)^{1/2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorPath {
    pub times: Vec<f64>,
    pub dim: usize,
    /// Row-major `len × dim` coordinates.
    pub data: Vec<f64>,
    pub weights: Vec<f64>,
}

impl VectorPath {
    pub fn new(times: Vec<f64>, dim: usize, data: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if data.len() != times.len() * dim || weights.len() != dim {
            return Err(Error::GridMismatch("vector path shape mismatch".into()));
        }
        check_grid(&times)?;
        Ok(VectorPath {
            times,
            dim,
            data,
            weights,
        })
    }

    /// `t ↦ GB(t)` with the `H^s` norm.
    pub fn from_wiener(path: &WienerPath, s: f64) -> Self {
        let weights = path
            .noise
            .modes
            .iter()
            .map(|m| m.g * m.g * (1.0 + m.k_squared()).powf(s))
            .collect();
        VectorPath {
            times: (0..=path.steps).map(|j| path.time(j)).collect(),
            dim: path.modes(),
            data: path.betas(),
            weights,
        }
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }
}

impl MetricPath for VectorPath {
    fn len(&self) -> usize {
        self.times.len()
    }
    fn time(&self, j: usize) -> f64 {
        self.times[j]
    }
    fn distance(&self, s: usize, t: usize) -> f64 {
        let (a, b) = (self.row(s), self.row(t));
        a.iter()
            .zip(b)
            .zip(&self.weights)
            .map(|((x, y), w)| w * (y - x) * (y - x))
            .sum::<f64>()
            .sqrt()
    }
    fn magnitude(&self, j: usize) -> f64 {
        self.row(j)
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * x * x)
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SeminormKind {
    Holder { alpha: f64 },
    SobolevSlobodeckij { alpha: f64, p: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeminormReport {
    pub kind: SeminormKind,
    pub value: f64,
    pub pairs: usize,
    pub subsampled: bool,
    pub degenerate: bool,
}

fn check_exponent(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::precondition(format!("exponent {alpha} outside (0,1)")));
    }
    Ok(())
}

/// Lags visited from each point: every lag, or powers of two above [`ALL_PAIRS_LIMIT`].
fn lags(len: usize) -> (Vec<usize>, bool) {
    if len <= ALL_PAIRS_LIMIT + 1 {
        ((1..len).collect(), false)
    } else {
        let mut v = Vec::new();
        let mut h = 1;
        while h < len {
            v.push(h);
            h *= 2;
        }
        (v, true)
    }
}

/// `max_{s≠t} d(f_s,f_t)/|t−s|^α` over grid pairs.
pub fn holder_seminorm(path: &impl MetricPath, alpha: f64) -> Result<SeminormReport> {
    check_exponent(alpha)?;
    let n = path.len();
    let kind = SeminormKind::Holder { alpha };
    if n < 2 {
        return Ok(SeminormReport {
            kind,
            value: 0.0,
            pairs: 0,
            subsampled: false,
            degenerate: true,
        });
    }
    let (lag, subsampled) = lags(n);
    let mut best: f64 = 0.0;
    let mut pairs = 0;
    for &h in &lag {
        for s in 0..n - h {
            let t = s + h;
            let r = path.distance(s, t) / (path.time(t) - path.time(s)).powf(alpha);
            best = best.max(r);
            pairs += 1;
        }
    }
    Ok(SeminormReport {
        kind,
        value: best,
        pairs,
        subsampled,
        degenerate: false,
    })
}

/// Hölder seminorm of the path restricted to `[t_0, t_j]`, for every `j`.
pub fn running_holder(path: &impl MetricPath, alpha: f64) -> Result<Vec<f64>> {
    check_exponent(alpha)?;
    let n = path.len();
    let (lag, _) = lags(n);
    let mut out = vec![0.0; n];
    let mut best: f64 = 0.0;
    for t in 1..n {
        for &h in &lag {
            if h > t {
                break;
            }
            let s = t - h;
            best = best.max(path.distance(s, t) / (path.time(t) - path.time(s)).powf(alpha));
        }
        out[t] = best;
    }
    Ok(out)
}

fn check_slobodeckij(alpha: f64, p: f64) -> Result<()> {
    check_exponent(alpha)?;
    if p < 1.0 {
        return Err(Error::precondition(format!("p = {p} must be at least 1")));
    }
    if alpha * p >= p + 1.0 {
        return Err(Error::precondition("alpha * p >= p + 1 is not integrable"));
    }
    Ok(())
}

fn cell(path: &impl MetricPath, j: usize) -> f64 {
    let n = path.len();
    if n < 2 {
        return 0.0;
    }
    if j + 1 < n {
        path.time(j + 1) - path.time(j)
    } else {
        path.time(j) - path.time(j - 1)
    }
}

/// `W^{α,p}` seminorm by Riemann sums: `(Σ_{s≠t} d^p/|t−s|^{1+αp} h_s h_t + Σ_t |f_t|^p h_t)^{1/p}`.
pub fn sobolev_slobodeckij(path: &impl MetricPath, alpha: f64, p: f64) -> Result<SeminormReport> {
    check_slobodeckij(alpha, p)?;
    let run = running_slobodeckij_sums(path, alpha, p);
    let n = path.len();
    Ok(SeminormReport {
        kind: SeminormKind::SobolevSlobodeckij { alpha, p },
        value: run.last().copied().unwrap_or(0.0).powf(1.0 / p),
        pairs: n * n.saturating_sub(1),
        subsampled: false,
        degenerate: n < 2,
    })
}

fn running_slobodeckij_sums(path: &impl MetricPath, alpha: f64, p: f64) -> Vec<f64> {
    let n = path.len();
    let mut out = vec![0.0; n];
    let mut acc = 0.0;
    let e = 1.0 + alpha * p;
    for t in 0..n {
        let ht = cell(path, t);
        acc += path.magnitude(t).powf(p) * ht;
        for s in 0..t {
            let d = path.distance(s, t);
            if d > 0.0 {
                acc += 2.0 * d.powf(p) / (path.time(t) - path.time(s)).powf(e) * ht * cell(path, s);
            }
        }
        out[t] = acc;
    }
    out
}

/// `W^{α,p}` seminorm of the path restricted to `[t_0, t_j]`, for every `j`.
pub fn running_sobolev_slobodeckij(path: &impl MetricPath, alpha: f64, p: f64) -> Result<Vec<f64>> {
    check_slobodeckij(alpha, p)?;
    Ok(running_slobodeckij_sums(path, alpha, p)
        .into_iter()
        .map(|v| v.powf(1.0 / p))
        .collect())
}

/// Local approximation `Ξ_{s,t}` of `∫_s^t g df`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Germ {
    /// `g_s (f_t − f_s)`.
    Left,
    /// `½(g_s + g_t)(f_t − f_s)`.
    #[default]
    Symmetric,
}

impl Germ {
    fn eval(self, gs: f64, gt: f64, df: f64) -> f64 {
        match self {
            Germ::Left => gs * df,
            Germ::Symmetric => 0.5 * (gs + gt) * df,
        }
    }
}

fn check_young(exponents: (f64, f64)) -> Result<()> {
    if exponents.0 + exponents.1 <= 1.0 {
        return Err(Error::precondition(format!(
            "Young pairing needs alpha + beta > 1, got {} + {}",
            exponents.0, exponents.1
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YoungReport {
    pub value: f64,
    pub level: usize,
    /// `|S_m − S_{m−1}|` for each visited level `m ≥ 1`.
    pub corrections: Vec<f64>,
}

/// `∫_a^b g df` for path functions, by dyadic compound sums refined until
/// successive levels differ by less than `tol`.
pub fn young_integral_fn(
    g: impl Fn(f64) -> f64,
    f: impl Fn(f64) -> f64,
    interval: (f64, f64),
    exponents: (f64, f64),
    tol: f64,
    germ: Germ,
) -> Result<YoungReport> {
    check_young(exponents)?;
    const MAX_LEVEL: usize = 26;
    let (a, b) = interval;
    let sum = |m: usize| -> f64 {
        let k = 1usize << m;
        let h = (b - a) / k as f64;
        let mut acc = 0.0;
        let (mut gs, mut fs) = (g(a), f(a));
        for i in 1..=k {
            let t = if i == k { b } else { a + i as f64 * h };
            let (gt, ft) = (g(t), f(t));
            acc += germ.eval(gs, gt, ft - fs);
            gs = gt;
            fs = ft;
        }
        acc
    };
    let mut prev = sum(0);
    let mut corrections = Vec::new();
    for m in 1..=MAX_LEVEL {
        let cur = sum(m);
        let c = (cur - prev).abs();
        corrections.push(c);
        if c < tol {
            return Ok(YoungReport {
                value: cur,
                level: m,
                corrections,
            });
        }
        prev = cur;
    }
    Err(Error::NoConvergence(format!(
        "sewing did not reach tol {tol:e} within {MAX_LEVEL} levels; last corrections {:?}",
        &corrections[corrections.len().saturating_sub(3)..]
    )))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YoungGridReport {
    /// Running integral `t_j ↦ Σ Ξ` on the finest grid.
    pub integral: ScalarPath,
    /// `|S_m − S_{m+1}|` between the grid subsampled by `2^m` and by `2^{m+1}`.
    pub level_corrections: Vec<f64>,
    /// `(mesh, max |δΞ_{s,u,t}|)` for each dyadic level.
    pub remainders: Vec<(f64, f64)>,
    /// Least-squares slope of `log max|δΞ|` against `log mesh`.
    pub remainder_slope: Option<f64>,
}

fn germ_vec(germ: Germ, gs: &[f64], gt: &[f64], fs: &[f64], ft: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..gs.len() {
        let df = ft[i] - fs[i];
        acc += germ.eval(gs[i], gt[i], df);
    }
    acc
}

fn row(v: &[f64], dim: usize, j: usize) -> &[f64] {
    &v[j * dim..(j + 1) * dim]
}

/// Least-squares slope of `ys` against `xs`.
pub fn regression_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

/// Young pairing `∫⟨g, df⟩` of two coordinate paths (`dim` columns each) on a
/// common grid, with per-level sewing diagnostics.
pub fn young_integral_coords(
    times: &[f64],
    g: &[f64],
    f: &[f64],
    dim: usize,
    exponents: (f64, f64),
    germ: Germ,
) -> Result<YoungGridReport> {
    check_young(exponents)?;
    check_grid(times)?;
    let n = times.len();
    if g.len() != n * dim || f.len() != n * dim {
        return Err(Error::GridMismatch("Young pairing on different grids".into()));
    }
    let mut values = vec![0.0; n];
    for j in 1..n {
        let x = germ_vec(
            germ,
            row(g, dim, j - 1),
            row(g, dim, j),
            row(f, dim, j - 1),
            row(f, dim, j),
        );
        values[j] = values[j - 1] + x;
    }
    let mut level_corrections = Vec::new();
    let mut remainders = Vec::new();
    let mut stride = 1;
    while 2 * stride < n {
        let coarse = 2 * stride;
        let usable = ((n - 1) / coarse) * coarse;
        let mut fine_sum = 0.0;
        let mut coarse_sum = 0.0;
        let mut worst: f64 = 0.0;
        let mut s = 0;
        while s + coarse <= usable {
            let (u, t) = (s + stride, s + coarse);
            let xsu = germ_vec(germ, row(g, dim, s), row(g, dim, u), row(f, dim, s), row(f, dim, u));
            let xut = germ_vec(germ, row(g, dim, u), row(g, dim, t), row(f, dim, u), row(f, dim, t));
            let xst = germ_vec(germ, row(g, dim, s), row(g, dim, t), row(f, dim, s), row(f, dim, t));
            fine_sum += xsu + xut;
            coarse_sum += xst;
            worst = worst.max((xst - xsu - xut).abs());
            s = t;
        }
        level_corrections.push((fine_sum - coarse_sum).abs());
        remainders.push((times[coarse] - times[0], worst));
        stride = coarse;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = remainders
        .iter()
        .filter(|(_, r)| *r > 0.0)
        .map(|(h, r)| (h.ln(), r.ln()))
        .unzip();
    Ok(YoungGridReport {
        integral: ScalarPath::new(times.to_vec(), values)?,
        level_corrections,
        remainders,
        remainder_slope: regression_slope(&xs, &ys),
    })
}

/// Young integral `∫ g df` of two scalar paths on a common grid.
pub fn young_integral(g: &ScalarPath, f: &ScalarPath, exponents: (f64, f64), germ: Germ) -> Result<YoungGridReport> {
    if g.times != f.times {
        return Err(Error::GridMismatch(
            "Young integrand and integrator grids differ".into(),
        ));
    }
    young_integral_coords(&g.times, &g.values, &f.values, 1, exponents, germ)
}

/// Left-point sums `Σ_j ⟨h(t_j), G ΔB_j⟩` from coordinates `⟨h(t_j), e_i⟩`
/// (`M` per step, at least `J` steps).
pub fn ito_integral(coords: &[f64], wiener: &WienerPath) -> Result<ScalarPath> {
    let m = wiener.modes();
    if m == 0 {
        return ScalarPath::uniform(wiener.dt, vec![0.0; wiener.steps + 1]);
    }
    if coords.len() % m != 0 || coords.len() / m < wiener.steps {
        return Err(Error::GridMismatch(format!(
            "integrand has {} values, need {} steps of {m} modes",
            coords.len(),
            wiener.steps
        )));
    }
    let g = wiener.noise.gains();
    let mut values = vec![0.0; wiener.steps + 1];
    for j in 0..wiener.steps {
        let h = &coords[j * m..(j + 1) * m];
        let db = wiener.increment(j);
        let x: f64 = h.iter().zip(db).zip(&g).map(|((a, b), c)| a * b * c).sum();
        values[j + 1] = values[j] + x;
    }
    ScalarPath::uniform(wiener.dt, values)
}

/// [`ito_integral`] for a field-valued integrand given at each grid time.
pub fn ito_integral_fields(fields: &[SpectralVector], wiener: &WienerPath) -> Result<ScalarPath> {
    let mut coords = Vec::with_capacity(fields.len() * wiener.modes());
    for f in fields {
        coords.extend(wiener.noise.project(f));
    }
    ito_integral(&coords, wiener)
}

/// Itô iterated integral `t ↦ ∫_0^t ⟨GB, G dB⟩` by left-point sums.
pub fn iterated_ito(wiener: &WienerPath) -> ScalarPath {
    let m = wiener.modes();
    let g2: Vec<f64> = wiener.noise.modes.iter().map(|x| x.g * x.g).collect();
    let mut beta = vec![0.0; m];
    let mut values = vec![0.0; wiener.steps + 1];
    for j in 0..wiener.steps {
        let db = wiener.increment(j);
        let mut x = 0.0;
        for i in 0..m {
            x += g2[i] * beta[i] * db[i];
            beta[i] += db[i];
        }
        values[j + 1] = values[j] + x;
    }
    ScalarPath::uniform(wiener.dt, values).expect("finite increments")
}

/// `½ − 1/l`, with `l = ∞` allowed.
pub fn defect_coefficient(l: f64) -> f64 {
    0.5 - 1.0 / l
}

/// `M̄` on a subgrid of the driver.
///
/// `indices[k]` is the driver grid index of the k-th sample, `energy[k] = ‖x‖²`
/// and `pairing` holds the coordinates of `x(0) − P div(y − y(0))` on the
/// noise basis at each sample.
pub fn mbar_from_projections(
    indices: &[usize],
    energy: &[f64],
    pairing: &[f64],
    wiener: &WienerPath,
    l: f64,
    exponents: (f64, f64),
    germ: Germ,
) -> Result<ScalarPath> {
    check_young(exponents)?;
    let m = wiener.modes();
    let k = indices.len();
    if energy.len() != k || pairing.len() != k * m {
        return Err(Error::GridMismatch("M̄ inputs have inconsistent lengths".into()));
    }
    if indices.iter().any(|&j| j > wiener.steps) {
        return Err(Error::GridMismatch("M̄ sample beyond the driver grid".into()));
    }
    let times: Vec<f64> = indices.iter().map(|&j| wiener.time(j)).collect();
    let betas = wiener.betas();
    let g = wiener.noise.gains();
    let mut gb = Vec::with_capacity(k * m);
    for &j in indices {
        gb.extend(betas[j * m..(j + 1) * m].iter().zip(&g).map(|(b, c)| b * c));
    }
    let young = young_integral_coords(&times, pairing, &gb, m, exponents, germ)?;
    let hs2 = wiener.noise.hs_norm(0.0).powi(2);
    let c = defect_coefficient(l);
    let values = (0..k)
        .map(|i| 0.5 * energy[i] - 0.5 * energy[0] - c * (times[i] - times[0]) * hs2 - young.integral.values[i])
        .collect();
    ScalarPath::new(times, values)
}

/// `M̄(t) = ½‖x(t)‖² − ½‖x(0)‖² − (½ − 1/l) t ‖G‖² − ∫⟨x(0) − P div(y − y(0)), G db⟩`
/// from stored frames of `x` and `y` at driver grid `indices`.
pub fn mbar_reconstruct(
    x: &[SpectralVector],
    y: &[StressGrid],
    indices: &[usize],
    wiener: &WienerPath,
    l: f64,
    exponents: (f64, f64),
) -> Result<ScalarPath> {
    if x.len() != indices.len() || y.len() != indices.len() || x.is_empty() {
        return Err(Error::GridMismatch("x, y and index lists differ in length".into()));
    }
    let x0 = &x[0];
    let y0 = &y[0];
    let energy: Vec<f64> = x.iter().map(|v| v.norm_sq()).collect();
    let mut pairing = Vec::with_capacity(x.len() * wiener.modes());
    for yk in y {
        let d = divergence_of_stress(&(yk - y0)).leray_project();
        let h = x0 - d.as_vector();
        pairing.extend(wiener.noise.project(&h));
    }
    mbar_from_projections(indices, &energy, &pairing, wiener, l, exponents, Germ::Left)
}

/// Exponents and levels entering the stopping times.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopParams {
    pub delta: f64,
    pub beta: f64,
    pub p: f64,
    pub sigma: f64,
}

impl StopParams {
    pub fn holder_exponent(&self) -> f64 {
        0.5 - 2.0 * self.delta
    }

    pub fn sobolev_exponent(&self) -> f64 {
        (3.0 + self.sigma) / 2.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopTrigger {
    Sobolev,
    Holder,
    Iterated,
    Cap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopReport {
    pub time: f64,
    pub index: usize,
    pub trigger: StopTrigger,
}

/// Running driver norms entering `T_L`: `‖GB(t)‖_{H^{(3+σ)/2}}`,
/// `‖GB‖_{C_t^{1/2−2δ}H¹}` and `‖∫⟨GB,GdB⟩‖_{W_t^{β,p}}`.
#[derive(Clone, Debug)]
pub struct DriverNorms {
    pub sobolev: Vec<f64>,
    pub holder: Vec<f64>,
    pub iterated: Vec<f64>,
}

impl DriverNorms {
    pub fn compute(wiener: &WienerPath, params: &StopParams) -> Result<Self> {
        let top = VectorPath::from_wiener(wiener, params.sobolev_exponent());
        let sobolev = (0..top.len()).map(|j| top.magnitude(j)).collect();
        let h1 = VectorPath::from_wiener(wiener, 1.0);
        let holder = running_holder(&h1, params.holder_exponent())?;
        let iterated = running_sobolev_slobodeckij(&iterated_ito(wiener), params.beta, params.p)?;
        Ok(DriverNorms {
            sobolev,
            holder,
            iterated,
        })
    }
}

/// First grid time at which a driver norm reaches `L`, capped at `L`.
pub fn stopping_time_tl(wiener: &WienerPath, level: f64, params: &StopParams) -> Result<StopReport> {
    if !(level > 1.0) {
        return Err(Error::precondition(format!("L = {level} must exceed 1")));
    }
    let norms = DriverNorms::compute(wiener, params)?;
    let cap = wiener.snap_index(level);
    Ok(first_crossing(wiener, &norms, &norms.iterated, None, level, false, cap))
}

fn first_crossing(
    wiener: &WienerPath,
    norms: &DriverNorms,
    iterated: &[f64],
    iterated_indices: Option<&[usize]>,
    threshold: f64,
    strict: bool,
    cap: usize,
) -> StopReport {
    let hit = |v: f64| if strict { v > threshold } else { v >= threshold };
    let iterated_first = match iterated_indices {
        None => iterated.iter().position(|&v| hit(v)),
        Some(idx) => iterated.iter().position(|&v| hit(v)).map(|k| idx[k]),
    };
    for j in 0..=cap {
        let trigger = if hit(norms.sobolev[j]) {
            Some(StopTrigger::Sobolev)
        } else if hit(norms.holder[j]) {
            Some(StopTrigger::Holder)
        } else if iterated_first == Some(j) {
            Some(StopTrigger::Iterated)
        } else {
            None
        };
        if let Some(trigger) = trigger {
            return StopReport {
                time: wiener.time(j),
                index: j,
                trigger,
            };
        }
    }
    StopReport {
        time: wiener.time(cap),
        index: cap,
        trigger: StopTrigger::Cap,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauReport {
    pub time: f64,
    pub index: usize,
    /// `(n, τ_L^n)` for each level of the schedule.
    pub profile: Vec<(u32, f64)>,
}

/// Default schedule for the thresholds `L − 1/n`.
pub const TAU_SCHEDULE: [u32; 5] = [1, 2, 4, 8, 16];

/// `τ_L` from the driver component `b` and a reconstructed `M̄` sampled at
/// driver grid indices: `τ_L^n` uses the strict thresholds `L − 1/n`, and the
/// value for the largest `n` of the schedule is returned.
pub fn stopping_time_tau(
    wiener: &WienerPath,
    mbar_indices: &[usize],
    mbar: &ScalarPath,
    level: f64,
    schedule: &[u32],
    params: &StopParams,
) -> Result<TauReport> {
    if schedule.is_empty() {
        return Err(Error::precondition("empty tau schedule"));
    }
    if mbar_indices.len() != mbar.len() {
        return Err(Error::GridMismatch("M̄ indices and values differ in length".into()));
    }
    let norms = DriverNorms::compute(wiener, params)?;
    let w = running_sobolev_slobodeckij(mbar, params.beta, params.p)?;
    let cap = wiener.snap_index(level);
    let mut profile = Vec::with_capacity(schedule.len());
    let mut last = None;
    for &n in schedule {
        let thr = level - 1.0 / n as f64;
        let r = first_crossing(wiener, &norms, &w, Some(mbar_indices), thr, true, cap);
        profile.push((n, r.time));
        last = Some(r);
    }
    let r = last.expect("nonempty schedule");
    Ok(TauReport {
        time: r.time,
        index: r.index,
        profile,
    })
}

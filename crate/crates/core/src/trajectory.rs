//! Time-gridded triples `(x, y, z)`: velocity, time-integrated Reynolds
//! stress and energy process.
//!
//! Scalars are kept at every grid step; full fields are kept as frames at a
//! fixed stride. Optional per-step projections onto the noise basis carry
//! everything the martingale and `M̄` checks need without storing fields.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{SpectralVector, StressGrid};
use crate::noise::WienerPath;

/// Snapshot of the full state at one grid index.
#[derive(Clone, Debug)]
pub struct Frame {
    pub index: usize,
    pub time: f64,
    pub x: SpectralVector,
    pub y: StressGrid,
    pub z: f64,
}

/// Per-step scalar observables.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScalarSeries {
    pub t: Vec<f64>,
    /// `‖x(t)‖²_{L²}`.
    pub energy: Vec<f64>,
    pub z: Vec<f64>,
    /// Accumulated viscous dissipation `2ν∫‖∇x‖²`.
    pub dissipation: Vec<f64>,
    /// `∫ tr ℜ(t)`.
    pub trace_r: Vec<f64>,
    /// `∫ tr y(t)`.
    pub trace_y: Vec<f64>,
}

impl ScalarSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn push(&mut self, t: f64, energy: f64, z: f64, dissipation: f64, trace_r: f64, trace_y: f64) {
        self.t.push(t);
        self.energy.push(energy);
        self.z.push(z);
        self.dissipation.push(dissipation);
        self.trace_r.push(trace_r);
        self.trace_y.push(trace_y);
    }

    /// CSV with header `t,energy,z,dissipation,trace_r,trace_y`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,energy,z,dissipation,trace_r,trace_y\n");
        for j in 0..self.len() {
            s.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                self.t[j], self.energy[j], self.z[j], self.dissipation[j], self.trace_r[j], self.trace_y[j]
            ));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut out = ScalarSeries::default();
        for (n, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("csv line {}: {e}", n + 1)))?;
            if v.len() != 6 {
                return Err(Error::Format(format!("csv line {} has {} columns", n + 1, v.len())));
            }
            out.push(v[0], v[1], v[2], v[3], v[4], v[5]);
        }
        Ok(out)
    }
}

/// Per-step coordinates on the noise basis: `⟨x(t_j), e_i⟩` and
/// `⟨div(y(t_j) − y(0)), e_i⟩`, row-major `(J+1) × modes`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Projections {
    pub modes: usize,
    pub x: Vec<f64>,
    pub ydiv: Vec<f64>,
}

impl Projections {
    pub fn x_row(&self, j: usize) -> &[f64] {
        &self.x[j * self.modes..(j + 1) * self.modes]
    }

    pub fn ydiv_row(&self, j: usize) -> &[f64] {
        &self.ydiv[j * self.modes..(j + 1) * self.modes]
    }

    pub fn steps(&self) -> usize {
        if self.modes == 0 {
            0
        } else {
            self.x.len() / self.modes
        }
    }

    /// Coordinates of `x(0) − P div(y(t_j) − y(0))` at every step.
    pub fn mbar_pairing(&self) -> Vec<f64> {
        let x0 = self.x_row(0);
        let mut out = Vec::with_capacity(self.ydiv.len());
        for j in 0..self.steps() {
            out.extend(x0.iter().zip(self.ydiv_row(j)).map(|(a, b)| a - b));
        }
        out
    }
}

/// JSON encoding of `f64` that writes non-finite values as `"inf"`, `"-inf"`, `"nan"`.
pub mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}

/// How a trajectory was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Origin {
    Galerkin {
        cutoff: usize,
        viscosity: f64,
    },
    Wild {
        #[serde(with = "extended_f64")]
        l: f64,
        level: f64,
        depth: usize,
    },
    Concatenated {
        seam_index: usize,
    },
    Synthetic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub id: String,
    pub seed: Option<u64>,
    pub origin: Origin,
    pub frame_stride: usize,
    /// Free-form numeric diagnostics recorded by the producer.
    pub diagnostics: serde_json::Map<String, serde_json::Value>,
}

impl TrajectoryMeta {
    pub fn new(id: impl Into<String>, seed: Option<u64>, origin: Origin, frame_stride: usize) -> Self {
        TrajectoryMeta {
            id: id.into(),
            seed,
            origin,
            frame_stride,
            diagnostics: serde_json::Map::new(),
        }
    }

    pub fn record(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.diagnostics.insert(key.to_string(), v);
    }

    /// `l` for wild output, `None` otherwise.
    pub fn defect_level(&self) -> Option<f64> {
        match self.origin {
            Origin::Wild { l, .. } => Some(l),
            _ => None,
        }
    }
}

/// Canonical process `(x, y, z)` on a uniform time grid.
#[derive(Clone, Debug)]
pub struct DissipativeTrajectory {
    pub dt: f64,
    pub scalars: ScalarSeries,
    pub frames: Vec<Frame>,
    pub projections: Option<Projections>,
    pub wiener: Option<Arc<WienerPath>>,
    pub meta: TrajectoryMeta,
}

impl DissipativeTrajectory {
    pub fn steps(&self) -> usize {
        self.scalars.len().saturating_sub(1)
    }

    pub fn horizon(&self) -> f64 {
        self.scalars.t.last().copied().unwrap_or(0.0)
    }

    pub fn initial(&self) -> Option<&Frame> {
        self.frames.first()
    }

    pub fn final_frame(&self) -> Option<&Frame> {
        self.frames.last()
    }

    /// Frame stored at grid index `j`, if any.
    pub fn frame_at(&self, j: usize) -> Option<&Frame> {
        self.frames
            .binary_search_by_key(&j, |f| f.index)
            .ok()
            .map(|k| &self.frames[k])
    }

    /// Drops every frame but the first, keeping scalars and projections.
    pub fn prune(mut self) -> Self {
        self.frames.truncate(1);
        self
    }

    /// Drops the per-step projections.
    pub fn without_projections(mut self) -> Self {
        self.projections = None;
        self
    }

    /// `(x, y, z)` at the first frame must lie in `{‖x₀‖² ≤ z₀}`.
    pub fn check_initial_state(&self, tol: f64) -> Result<()> {
        let f = self
            .initial()
            .ok_or_else(|| Error::precondition("trajectory has no frames"))?;
        let e = f.x.norm_sq();
        if e > f.z + tol {
            return Err(Error::precondition(format!(
                "initial state not admissible: ‖x₀‖² = {e} > z₀ = {}",
                f.z
            )));
        }
        Ok(())
    }
}

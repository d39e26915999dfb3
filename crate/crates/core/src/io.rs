//! Binary field records, Wiener path files and trajectory directories.
//!
//! A record is a 16-byte header followed by the payload:
//!
//! | bytes | content                                  |
//! |-------|------------------------------------------|
//! | 0..4  | magic `ELAB`                             |
//! | 4     | format version                           |
//! | 5     | [`FieldKind`]                            |
//! | 6..8  | flags, little-endian `u16`               |
//! | 8..12 | lattice size `N`, little-endian `u32`    |
//! | 12..16| component count, little-endian `u32`     |
//!
//! Spectral payloads hold, per component, the coefficients in lexicographic
//! order of `k ∈ [−N/2, N/2)³` as little-endian `(re, im)` pairs of `f64`.
//! Stresses are stored through their unfiltered discrete Fourier transform,
//! so nodal values round-trip exactly. Increment payloads hold plain
//! little-endian `f64` values (flag [`FLAG_REAL`]).
//!
//! A trajectory directory holds `scalars.csv`, `frames.bin`, optional
//! `driver.bin` and `projections.bin`, and `manifest.json`, which is written
//! last and marks the directory as complete.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{SpectralVector, StressGrid, WaveLattice, TORUS_VOLUME};
use crate::noise::{NoiseCoefficient, NoiseParams, StopRecord, WienerPath};
use crate::trajectory::{DissipativeTrajectory, Frame, Projections, ScalarSeries, TrajectoryMeta};

pub const MAGIC: [u8; 4] = *b"ELAB";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 16;
/// Payload is plain `f64` values rather than complex pairs.
pub const FLAG_REAL: u16 = 1;
/// Spectral payload keeps the Nyquist planes.
pub const FLAG_FULL_SPECTRUM: u16 = 2;

pub const MANIFEST: &str = "manifest.json";
pub const SCALARS: &str = "scalars.csv";
pub const FRAMES: &str = "frames.bin";
pub const DRIVER: &str = "driver.bin";
pub const PROJECTIONS: &str = "projections.bin";

/// Payload type of a record.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum FieldKind {
    Velocity = 1,
    Stress = 2,
    Increments = 3,
    Projections = 4,
}

impl FieldKind {
    fn from_byte(b: u8) -> Result<Self> {
        Ok(match b {
            1 => FieldKind::Velocity,
            2 => FieldKind::Stress,
            3 => FieldKind::Increments,
            4 => FieldKind::Projections,
            _ => return Err(Error::Format(format!("unknown field kind {b}"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RecordHeader {
    pub kind: FieldKind,
    pub flags: u16,
    pub n: u32,
    pub components: u32,
}

impl RecordHeader {
    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.kind as u8);
        out.extend_from_slice(&self.flags.to_le_bytes());
        out.extend_from_slice(&self.n.to_le_bytes());
        out.extend_from_slice(&self.components.to_le_bytes());
    }

    fn decode(buf: &[u8]) -> Result<Self> {
        if buf.len() < HEADER_LEN {
            return Err(Error::Format(format!("truncated header: {} bytes", buf.len())));
        }
        if buf[0..4] != MAGIC {
            return Err(Error::Format(format!("bad magic {:?}", &buf[0..4])));
        }
        if buf[4] != VERSION {
            return Err(Error::Format(format!("unsupported version {}", buf[4])));
        }
        Ok(RecordHeader {
            kind: FieldKind::from_byte(buf[5])?,
            flags: u16::from_le_bytes([buf[6], buf[7]]),
            n: u32::from_le_bytes(buf[8..12].try_into().unwrap()),
            components: u32::from_le_bytes(buf[12..16].try_into().unwrap()),
        })
    }

    fn payload_len(&self) -> usize {
        let per = if self.flags & FLAG_REAL != 0 { 8 } else { 16 };
        match self.kind {
            FieldKind::Velocity | FieldKind::Stress => {
                let n = self.n as usize;
                self.components as usize * n * n * n * per
            }
            FieldKind::Increments | FieldKind::Projections => self.components as usize * per,
        }
    }
}

/// Lattice indices in lexicographic order of `k ∈ [−N/2, N/2)³`.
pub fn lexicographic_order(lattice: &WaveLattice) -> Vec<usize> {
    let n = lattice.n();
    let h = n / 2;
    let axis: Vec<usize> = (0..n).map(|i| (i + h) % n).collect();
    let mut out = Vec::with_capacity(lattice.len());
    for &a in &axis {
        for &b in &axis {
            for &c in &axis {
                out.push(lattice.join([a, b, c]));
            }
        }
    }
    out
}

fn push_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Cursor { buf, pos: 0 }
    }

    fn header(&mut self) -> Result<RecordHeader> {
        let h = RecordHeader::decode(&self.buf[self.pos..])?;
        self.pos += HEADER_LEN;
        let need = h.payload_len();
        if self.buf.len() - self.pos < need {
            return Err(Error::Format(format!(
                "truncated payload: need {need} bytes, have {}",
                self.buf.len() - self.pos
            )));
        }
        Ok(h)
    }

    fn f64(&mut self) -> f64 {
        let v = f64::from_le_bytes(self.buf[self.pos..self.pos + 8].try_into().unwrap());
        self.pos += 8;
        v
    }

    fn rest(&self) -> &'a [u8] {
        &self.buf[self.pos..]
    }

    fn at_end(&self) -> bool {
        self.pos >= self.buf.len()
    }
}

fn expect(h: &RecordHeader, kind: FieldKind, lattice: Option<&WaveLattice>) -> Result<()> {
    if h.kind != kind {
        return Err(Error::Format(format!("expected {kind:?} record, found {:?}", h.kind)));
    }
    if let Some(l) = lattice {
        if h.n as usize != l.n() {
            return Err(Error::GridMismatch(format!(
                "record has N = {}, lattice has N = {}",
                h.n,
                l.n()
            )));
        }
    }
    Ok(())
}

/// Appends a velocity record.
pub fn encode_velocity(v: &SpectralVector, out: &mut Vec<u8>) {
    let l = &v.lattice;
    RecordHeader {
        kind: FieldKind::Velocity,
        flags: 0,
        n: l.n() as u32,
        components: 3,
    }
    .encode(out);
    let order = lexicographic_order(l);
    for c in &v.coeffs {
        for &idx in &order {
            push_f64(out, c[idx].re);
            push_f64(out, c[idx].im);
        }
    }
}

fn decode_velocity(cur: &mut Cursor, lattice: &Arc<WaveLattice>) -> Result<SpectralVector> {
    let h = cur.header()?;
    expect(&h, FieldKind::Velocity, Some(lattice))?;
    if h.components != 3 || h.flags & FLAG_REAL != 0 {
        return Err(Error::Format("velocity record must hold 3 complex components".into()));
    }
    let order = lexicographic_order(lattice);
    let mut v = SpectralVector::zeros(lattice);
    for c in v.coeffs.iter_mut() {
        for &idx in &order {
            let re = cur.f64();
            let im = cur.f64();
            c[idx] = Complex64::new(re, im);
        }
    }
    Ok(v)
}

/// Appends a stress record holding the full orthonormal transform of each entry.
pub fn encode_stress(s: &StressGrid, out: &mut Vec<u8>) {
    let l = &s.lattice;
    RecordHeader {
        kind: FieldKind::Stress,
        flags: FLAG_FULL_SPECTRUM,
        n: l.n() as u32,
        components: 6,
    }
    .encode(out);
    let order = lexicographic_order(l);
    let scale = TORUS_VOLUME.sqrt() / l.len() as f64;
    for c in &s.comps {
        let mut buf: Vec<Complex64> = c.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        l.fft3(&mut buf, false);
        for &idx in &order {
            push_f64(out, buf[idx].re * scale);
            push_f64(out, buf[idx].im * scale);
        }
    }
}

fn decode_stress(cur: &mut Cursor, lattice: &Arc<WaveLattice>) -> Result<StressGrid> {
    let h = cur.header()?;
    expect(&h, FieldKind::Stress, Some(lattice))?;
    if h.components != 6 || h.flags & FLAG_FULL_SPECTRUM == 0 {
        return Err(Error::Format(
            "stress record must hold 6 full-spectrum components".into(),
        ));
    }
    let order = lexicographic_order(lattice);
    let scale = TORUS_VOLUME.sqrt().recip();
    let mut s = StressGrid::zeros(lattice);
    for c in s.comps.iter_mut() {
        let mut buf = vec![Complex64::new(0.0, 0.0); lattice.len()];
        for &idx in &order {
            let re = cur.f64();
            let im = cur.f64();
            buf[idx] = Complex64::new(re, im);
        }
        lattice.fft3(&mut buf, true);
        for (dst, b) in c.iter_mut().zip(&buf) {
            *dst = b.re * scale;
        }
    }
    Ok(s)
}

fn encode_reals(kind: FieldKind, n: usize, values: &[f64], out: &mut Vec<u8>) {
    RecordHeader {
        kind,
        flags: FLAG_REAL,
        n: n as u32,
        components: values.len() as u32,
    }
    .encode(out);
    for &v in values {
        push_f64(out, v);
    }
}

fn decode_reals(cur: &mut Cursor, kind: FieldKind) -> Result<(RecordHeader, Vec<f64>)> {
    let h = cur.header()?;
    expect(&h, kind, None)?;
    if h.flags & FLAG_REAL == 0 {
        return Err(Error::Format(format!("{kind:?} record must be real")));
    }
    let v = (0..h.components).map(|_| cur.f64()).collect();
    Ok((h, v))
}

/// Reads the header of a record without decoding the payload.
pub fn peek_header(bytes: &[u8]) -> Result<RecordHeader> {
    RecordHeader::decode(bytes)
}

pub fn velocity_to_bytes(v: &SpectralVector) -> Vec<u8> {
    let mut out = Vec::new();
    encode_velocity(v, &mut out);
    out
}

pub fn velocity_from_bytes(bytes: &[u8], lattice: &Arc<WaveLattice>) -> Result<SpectralVector> {
    decode_velocity(&mut Cursor::new(bytes), lattice)
}

pub fn stress_to_bytes(s: &StressGrid) -> Vec<u8> {
    let mut out = Vec::new();
    encode_stress(s, &mut out);
    out
}

pub fn stress_from_bytes(bytes: &[u8], lattice: &Arc<WaveLattice>) -> Result<StressGrid> {
    decode_stress(&mut Cursor::new(bytes), lattice)
}

/// Manifest line trailing a Wiener path record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathManifest {
    pub seed: u64,
    pub gamma: f64,
    pub sigma: f64,
    pub c_g: f64,
    pub cutoff: Option<usize>,
    pub u1_decay: f64,
    pub dt: f64,
    #[serde(rename = "J")]
    pub steps: usize,
    pub modes: usize,
    pub n: usize,
    pub stop: Option<StopRecord>,
}

/// Increment record followed by a one-line JSON manifest.
pub fn path_to_bytes(w: &WienerPath) -> Vec<u8> {
    let mut out = Vec::new();
    let n = w.noise.lattice.n();
    encode_reals(FieldKind::Increments, n, w.increments(), &mut out);
    let p = &w.noise.params;
    let m = PathManifest {
        seed: w.seed,
        gamma: p.gamma,
        sigma: p.sigma,
        c_g: p.c_g,
        cutoff: p.cutoff,
        u1_decay: p.u1_decay,
        dt: w.dt,
        steps: w.steps,
        modes: w.modes(),
        n,
        stop: w.stop,
    };
    out.extend_from_slice(serde_json::to_string(&m).expect("manifest serializes").as_bytes());
    out.push(b'\n');
    out
}

/// Decodes a path file, rebuilding the noise coefficient from its manifest.
pub fn path_from_bytes(bytes: &[u8]) -> Result<WienerPath> {
    let mut cur = Cursor::new(bytes);
    let (h, inc) = decode_reals(&mut cur, FieldKind::Increments)?;
    let text =
        std::str::from_utf8(cur.rest()).map_err(|e| Error::Format(format!("path manifest is not UTF-8: {e}")))?;
    let m: PathManifest = serde_json::from_str(text.trim())?;
    if m.n != h.n as usize {
        return Err(Error::Format(format!("manifest N = {} but header N = {}", m.n, h.n)));
    }
    let lattice = WaveLattice::new(m.n)?;
    let params = NoiseParams {
        gamma: m.gamma,
        sigma: m.sigma,
        c_g: m.c_g,
        cutoff: m.cutoff,
        u1_decay: m.u1_decay,
    };
    let noise = Arc::new(NoiseCoefficient::spectral(&lattice, params)?);
    if noise.len() != m.modes || inc.len() != m.modes * m.steps {
        return Err(Error::Format(format!(
            "path has {} modes × {} steps but {} increments (rebuilt {} modes)",
            m.modes,
            m.steps,
            inc.len(),
            noise.len()
        )));
    }
    let mut w = WienerPath::from_increments(&noise, m.dt, m.seed, inc)?;
    if m.modes == 0 {
        w.steps = m.steps;
    }
    w.stop = m.stop;
    Ok(w)
}

pub fn write_path(path: &Path, w: &WienerPath) -> Result<()> {
    write_file(path, &path_to_bytes(w))
}

pub fn read_path(path: &Path) -> Result<WienerPath> {
    path_from_bytes(&read_file(path)?)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    Ok(())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    Ok(buf)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub index: usize,
    pub time: f64,
    pub z: f64,
}

/// Contents of `manifest.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryManifest {
    pub format: u8,
    pub n: usize,
    pub dt: f64,
    pub steps: usize,
    pub meta: TrajectoryMeta,
    pub frames: Vec<FrameEntry>,
    pub driver: Option<String>,
    pub projections: Option<usize>,
    /// Producer configuration, stored verbatim.
    #[serde(default)]
    pub config: serde_json::Value,
}

impl TrajectoryManifest {
    pub fn for_trajectory(t: &DissipativeTrajectory, config: serde_json::Value) -> Result<Self> {
        let first = t
            .frames
            .first()
            .ok_or_else(|| Error::precondition("trajectory has no frames"))?;
        Ok(TrajectoryManifest {
            format: VERSION,
            n: first.x.lattice.n(),
            dt: t.dt,
            steps: t.steps(),
            meta: t.meta.clone(),
            frames: t
                .frames
                .iter()
                .map(|f| FrameEntry {
                    index: f.index,
                    time: f.time,
                    z: f.z,
                })
                .collect(),
            driver: t.wiener.as_ref().map(|_| DRIVER.to_string()),
            projections: t.projections.as_ref().map(|p| p.modes),
            config,
        })
    }
}

/// Writes a trajectory directory; the manifest is written last.
pub fn write_trajectory(
    dir: &Path,
    t: &DissipativeTrajectory,
    config: serde_json::Value,
) -> Result<TrajectoryManifest> {
    fs::create_dir_all(dir)?;
    let stale = dir.join(MANIFEST);
    if stale.exists() {
        fs::remove_file(&stale)?;
    }
    let manifest = TrajectoryManifest::for_trajectory(t, config)?;
    write_file(&dir.join(SCALARS), t.scalars.to_csv().as_bytes())?;
    let mut frames = Vec::new();
    for f in &t.frames {
        encode_velocity(&f.x, &mut frames);
        encode_stress(&f.y, &mut frames);
    }
    write_file(&dir.join(FRAMES), &frames)?;
    if let Some(w) = &t.wiener {
        write_path(&dir.join(DRIVER), w)?;
    }
    if let Some(p) = &t.projections {
        let mut out = Vec::new();
        encode_reals(FieldKind::Projections, manifest.n, &p.x, &mut out);
        encode_reals(FieldKind::Projections, manifest.n, &p.ydiv, &mut out);
        write_file(&dir.join(PROJECTIONS), &out)?;
    }
    write_file(&dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<TrajectoryManifest> {
    let path = dir.join(MANIFEST);
    if !path.exists() {
        return Err(Error::Format(format!("{} has no manifest", dir.display())));
    }
    Ok(serde_json::from_slice(&read_file(&path)?)?)
}

/// Reads a complete trajectory directory.
pub fn read_trajectory(dir: &Path) -> Result<DissipativeTrajectory> {
    let m = read_manifest(dir)?;
    let lattice = WaveLattice::new(m.n)?;
    let scalars_text = fs::read_to_string(dir.join(SCALARS))?;
    let scalars = ScalarSeries::from_csv(&scalars_text)?;
    let bytes = read_file(&dir.join(FRAMES))?;
    let mut cur = Cursor::new(&bytes);
    let mut frames = Vec::with_capacity(m.frames.len());
    for e in &m.frames {
        let x = decode_velocity(&mut cur, &lattice)?;
        let y = decode_stress(&mut cur, &lattice)?;
        frames.push(Frame {
            index: e.index,
            time: e.time,
            x,
            y,
            z: e.z,
        });
    }
    if !cur.at_end() {
        return Err(Error::Format("trailing bytes in frames file".into()));
    }
    let wiener = match &m.driver {
        Some(name) => Some(Arc::new(read_path(&dir.join(name))?)),
        None => None,
    };
    let projections = match m.projections {
        Some(modes) => {
            let bytes = read_file(&dir.join(PROJECTIONS))?;
            let mut cur = Cursor::new(&bytes);
            let (_, x) = decode_reals(&mut cur, FieldKind::Projections)?;
            let (_, ydiv) = decode_reals(&mut cur, FieldKind::Projections)?;
            Some(Projections { modes, x, ydiv })
        }
        None => None,
    };
    Ok(DissipativeTrajectory {
        dt: m.dt,
        scalars,
        frames,
        projections,
        wiener,
        meta: m.meta,
    })
}

/// Trajectory directories (those holding a manifest) directly below `dir`, sorted by name.
pub fn list_trajectories(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir)? {
        let p = e?.path();
        if p.is_dir() && p.join(MANIFEST).exists() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

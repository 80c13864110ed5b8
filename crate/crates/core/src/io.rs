//! Plain-text file formats.
//!
//! Numbers are written with Rust's shortest round-trip `Display`, so every
//! value reads back bit-for-bit. Each structured format starts with a magic
//! line such as `RETMESH 1`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;

use crate::beltrami::BeltramiField;
use crate::error::{Error, Result};
use crate::flatten::DiskParameterization;
use crate::mesh::CorticalMesh;
use crate::prf::{BoldSeries, Stimulus};
use crate::registration::{EnergyTerms, RegistrationConfig};
use crate::retinotopy::{from_polar_deg, polar_angle_deg};
use crate::{Point2, Point3};

pub fn read_text(path: impl AsRef<Path>) -> Result<String> {
    std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    if let Some(dir) = path.as_ref().parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path.as_ref(), text).map_err(|e| Error::io(path, e))
}

/// Line reader that skips blank lines and `#` comments and reports
/// positions.
struct Lines<'a> {
    name: &'a str,
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn new(name: &'a str, text: &'a str) -> Self {
        Self { name, inner: text.lines().enumerate().peekable(), line: 0 }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse { source_name: self.name.to_string(), line: self.line, msg: msg.into() }
    }

    fn next(&mut self) -> Result<&'a str> {
        for (i, l) in self.inner.by_ref() {
            let t = l.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            self.line = i + 1;
            return Ok(t);
        }
        Err(Error::Parse {
            source_name: self.name.to_string(),
            line: self.line + 1,
            msg: "unexpected end of file".into(),
        })
    }

    fn expect_end(&mut self) -> Result<()> {
        match self.next() {
            Ok(l) => Err(self.err(format!("trailing content `{l}`"))),
            Err(_) => Ok(()),
        }
    }

    fn magic(&mut self, magic: &str) -> Result<()> {
        let l = self.next()?;
        if l != magic {
            return Err(self.err(format!("expected `{magic}`, found `{l}`")));
        }
        Ok(())
    }

    /// `key N` line.
    fn count(&mut self, key: &str) -> Result<usize> {
        let l = self.next()?;
        let mut it = l.split_whitespace();
        match (it.next(), it.next().map(str::parse::<usize>), it.next()) {
            (Some(k), Some(Ok(n)), None) if k == key => Ok(n),
            _ => Err(self.err(format!("expected `{key} <count>`, found `{l}`"))),
        }
    }

    fn numbers<T: FromStr>(&mut self, n: usize) -> Result<Vec<T>> {
        let l = self.next()?;
        let vals: Vec<T> = l
            .split_whitespace()
            .map(|t| t.parse::<T>().map_err(|_| self.err(format!("bad number `{t}`"))))
            .collect::<Result<_>>()?;
        if vals.len() != n {
            return Err(self.err(format!("expected {n} values, found {}", vals.len())));
        }
        Ok(vals)
    }
}

pub fn format_mesh(mesh: &CorticalMesh) -> String {
    let mut s = format!("RETMESH 1\nvertices {}\n", mesh.vertex_count());
    for v in mesh.vertices() {
        let _ = writeln!(s, "{} {} {}", v[0], v[1], v[2]);
    }
    let _ = writeln!(s, "faces {}", mesh.face_count());
    for f in mesh.faces() {
        let _ = writeln!(s, "{} {} {}", f[0], f[1], f[2]);
    }
    s
}

pub fn parse_mesh(name: &str, text: &str) -> Result<CorticalMesh> {
    let mut r = Lines::new(name, text);
    r.magic("RETMESH 1")?;
    let nv = r.count("vertices")?;
    let mut verts: Vec<Point3> = Vec::with_capacity(nv);
    for _ in 0..nv {
        let v = r.numbers::<f64>(3)?;
        verts.push([v[0], v[1], v[2]]);
    }
    let nf = r.count("faces")?;
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let f = r.numbers::<usize>(3)?;
        faces.push([f[0], f[1], f[2]]);
    }
    r.expect_end()?;
    CorticalMesh::new(verts, faces)
}

pub fn format_uv(param: &DiskParameterization) -> String {
    let mut s = format!("RETUV 1\nvertices {}\n", param.uv.len());
    for p in &param.uv {
        let _ = writeln!(s, "{} {}", p[0], p[1]);
    }
    let _ = writeln!(s, "boundary {}", param.boundary_ids.len());
    for b in &param.boundary_ids {
        let _ = writeln!(s, "{b}");
    }
    s
}

pub fn parse_uv(name: &str, text: &str) -> Result<DiskParameterization> {
    let mut r = Lines::new(name, text);
    r.magic("RETUV 1")?;
    let n = r.count("vertices")?;
    let mut uv = Vec::with_capacity(n);
    for _ in 0..n {
        let p = r.numbers::<f64>(2)?;
        uv.push([p[0], p[1]]);
    }
    let nb = r.count("boundary")?;
    let mut ids = Vec::with_capacity(nb);
    for _ in 0..nb {
        let b = r.numbers::<usize>(1)?[0];
        if b >= n {
            return Err(r.err(format!("boundary vertex {b} out of range")));
        }
        ids.push(b);
    }
    r.expect_end()?;
    Ok(DiskParameterization::new(uv, ids))
}

/// Plain point list, used for registration maps and ground-truth
/// deformations.
pub fn format_points(points: &[Point2]) -> String {
    let mut s = format!("RETPTS 1\npoints {}\n", points.len());
    for p in points {
        let _ = writeln!(s, "{} {}", p[0], p[1]);
    }
    s
}

pub fn parse_points(name: &str, text: &str) -> Result<Vec<Point2>> {
    let mut r = Lines::new(name, text);
    r.magic("RETPTS 1")?;
    let n = r.count("points")?;
    let mut pts = Vec::with_capacity(n);
    for _ in 0..n {
        let p = r.numbers::<f64>(2)?;
        pts.push([p[0], p[1]]);
    }
    r.expect_end()?;
    Ok(pts)
}

pub fn format_mu(field: &BeltramiField) -> String {
    let mut s = format!("RETMU 1\nfaces {}\n", field.len());
    for m in &field.mu {
        let _ = writeln!(s, "{} {}", m.re, m.im);
    }
    s
}

pub fn parse_mu(name: &str, text: &str) -> Result<BeltramiField> {
    let mut r = Lines::new(name, text);
    r.magic("RETMU 1")?;
    let n = r.count("faces")?;
    let mut mu = Vec::with_capacity(n);
    for _ in 0..n {
        let p = r.numbers::<f64>(2)?;
        mu.push(Complex64::new(p[0], p[1]));
    }
    r.expect_end()?;
    Ok(BeltramiField::new(mu))
}

/// Frames are rows of `0`/`1` characters, `height * width` per line.
pub fn format_stimulus(stim: &Stimulus) -> String {
    let mut s = format!(
        "RETSTIM 1\nheight {}\nwidth {}\nextent {}\ntr {}\nframes {}\n",
        stim.height(),
        stim.width(),
        stim.extent_deg(),
        stim.tr(),
        stim.frame_count()
    );
    for f in stim.frames() {
        s.extend(f.iter().map(|&v| if v == 0 { '0' } else { '1' }));
        s.push('\n');
    }
    s
}

pub fn parse_stimulus(name: &str, text: &str) -> Result<Stimulus> {
    let mut r = Lines::new(name, text);
    r.magic("RETSTIM 1")?;
    let h = r.count("height")?;
    let w = r.count("width")?;
    let mut scalar = |key: &str| -> Result<f64> {
        let l = r.next()?;
        match l.split_once(' ') {
            Some((k, v)) if k == key => v.trim().parse().map_err(|_| r.err(format!("bad {key} `{v}`"))),
            _ => Err(r.err(format!("expected `{key} <value>`"))),
        }
    };
    let extent = scalar("extent")?;
    let tr = scalar("tr")?;
    let n = r.count("frames")?;
    let mut frames = Vec::with_capacity(n);
    for _ in 0..n {
        let l = r.next()?;
        if l.len() != h * w {
            return Err(r.err(format!("frame has {} pixels, expected {}", l.len(), h * w)));
        }
        let frame = l
            .bytes()
            .map(|b| match b {
                b'0' => Ok(0u8),
                b'1' => Ok(1u8),
                _ => Err(r.err("frame pixels must be 0 or 1")),
            })
            .collect::<Result<Vec<u8>>>()?;
        frames.push(frame);
    }
    r.expect_end()?;
    Stimulus::new(frames, h, w, extent, tr)
}

/// Polar-angle convention of a pRF file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AngleConvention {
    /// Degrees counter-clockwise from the positive x axis.
    #[default]
    MathCcwFromPositiveX,
    /// Degrees clockwise from the upper vertical meridian.
    CwFromUpperVertical,
}

impl AngleConvention {
    pub fn name(self) -> &'static str {
        match self {
            Self::MathCcwFromPositiveX => "math_ccw_from_positive_x",
            Self::CwFromUpperVertical => "cw_from_upper_vertical",
        }
    }

    /// Converts an angle in this convention to the internal one.
    pub fn to_math(self, angle: f64) -> f64 {
        match self {
            Self::MathCcwFromPositiveX => angle,
            Self::CwFromUpperVertical => 90.0 - angle,
        }
    }
}

impl FromStr for AngleConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "math_ccw_from_positive_x" => Ok(Self::MathCcwFromPositiveX),
            "cw_from_upper_vertical" => Ok(Self::CwFromUpperVertical),
            other => Err(Error::InvalidArgument(format!("unknown angle convention `{other}`"))),
        }
    }
}

/// pRF parameters read from a CSV file, visual coordinates already in the
/// internal Cartesian frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PrfTable {
    pub visual: Vec<Point2>,
    pub sigma: Vec<f64>,
    pub r2: Vec<f64>,
}

pub const PRF_HEADER: &str = "vertex,ecc,ang,sigma,r2";

pub fn format_prf_csv(visual: &[Point2], sigma: &[f64], r2: &[f64]) -> String {
    let mut s = format!("# angle_convention: {}\n{PRF_HEADER}\n", AngleConvention::MathCcwFromPositiveX.name());
    for i in 0..visual.len() {
        let v = visual[i];
        let _ = writeln!(s, "{},{},{},{},{}", i, v[0].hypot(v[1]), polar_angle_deg(v), sigma[i], r2[i]);
    }
    s
}

/// `override_convention` replaces the file's declared convention (used for
/// case manifests that declare the transform themselves).
pub fn parse_prf_csv(name: &str, text: &str, override_convention: Option<AngleConvention>) -> Result<PrfTable> {
    let err = |line: usize, msg: String| Error::Parse { source_name: name.to_string(), line, msg };
    let mut convention = AngleConvention::default();
    let mut header_seen = false;
    let mut rows: Vec<(usize, Point2, f64, f64)> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let ln = k + 1;
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((key, value)) = rest.split_once(':') {
                if key.trim() == "angle_convention" {
                    convention = value.trim().parse().map_err(|e: Error| err(ln, e.to_string()))?;
                }
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        if !header_seen {
            if line != PRF_HEADER {
                return Err(err(ln, format!("expected header `{PRF_HEADER}`")));
            }
            header_seen = true;
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 5 {
            return Err(err(ln, format!("expected 5 fields, found {}", cells.len())));
        }
        let vertex: usize = cells[0].parse().map_err(|_| err(ln, format!("bad vertex `{}`", cells[0])))?;
        let num = |i: usize| cells[i].trim().parse::<f64>().map_err(|_| err(ln, format!("bad number `{}`", cells[i])));
        let (ecc, ang, sigma, r2) = (num(1)?, num(2)?, num(3)?, num(4)?);
        rows.push((vertex, [ecc, ang], sigma, r2));
        if vertex != rows.len() - 1 {
            return Err(err(ln, format!("vertex ids must be 0..n in order, found {vertex}")));
        }
    }
    if !header_seen {
        return Err(err(1, "missing header".into()));
    }
    let convention = override_convention.unwrap_or(convention);
    Ok(PrfTable {
        visual: rows.iter().map(|r| from_polar_deg(r.1[0], convention.to_math(r.1[1]))).collect(),
        sigma: rows.iter().map(|r| r.2).collect(),
        r2: rows.iter().map(|r| r.3).collect(),
    })
}

/// One row per vertex: `vertex,t0,t1,...`, preceded by a `# tr:` line.
pub fn format_bold_csv(bold: &BoldSeries) -> String {
    let t = bold.samples.first().map_or(0, Vec::len);
    let mut s = format!("# tr: {}\nvertex", bold.tr);
    for k in 0..t {
        let _ = write!(s, ",t{k}");
    }
    s.push('\n');
    for (i, series) in bold.samples.iter().enumerate() {
        let _ = write!(s, "{i}");
        for v in series {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

pub fn parse_bold_csv(name: &str, text: &str) -> Result<BoldSeries> {
    let err = |line: usize, msg: String| Error::Parse { source_name: name.to_string(), line, msg };
    let mut tr = None;
    let mut width = None;
    let mut samples = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let ln = k + 1;
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(v) = rest.trim().strip_prefix("tr:") {
                tr = Some(v.trim().parse::<f64>().map_err(|_| err(ln, format!("bad tr `{v}`")))?);
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        match width {
            None => {
                if cells[0] != "vertex" {
                    return Err(err(ln, "expected header starting with `vertex`".into()));
                }
                width = Some(cells.len());
            }
            Some(w) => {
                if cells.len() != w {
                    return Err(err(ln, format!("expected {w} fields, found {}", cells.len())));
                }
                if cells[0].parse::<usize>().ok() != Some(samples.len()) {
                    return Err(err(ln, format!("vertex ids must be 0..n in order, found `{}`", cells[0])));
                }
                let row = cells[1..]
                    .iter()
                    .map(|c| c.parse::<f64>().map_err(|_| err(ln, format!("bad number `{c}`"))))
                    .collect::<Result<Vec<f64>>>()?;
                samples.push(row);
            }
        }
    }
    let tr = tr.ok_or_else(|| err(1, "missing `# tr:` line".into()))?;
    Ok(BoldSeries { samples, tr })
}

pub fn format_energy_trace(trace: &[EnergyTerms]) -> String {
    let mut s = String::from("iteration,data,smooth,total\n");
    for (i, e) in trace.iter().enumerate() {
        let _ = writeln!(s, "{i},{},{},{}", e.data, e.smooth, e.total);
    }
    s
}

pub fn parse_energy_trace(name: &str, text: &str) -> Result<Vec<EnergyTerms>> {
    let err = |line: usize, msg: String| Error::Parse { source_name: name.to_string(), line, msg };
    let mut lines = text.lines();
    if lines.next() != Some("iteration,data,smooth,total") {
        return Err(err(1, "unexpected header".into()));
    }
    lines
        .enumerate()
        .map(|(k, l)| {
            let c: Vec<&str> = l.split(',').collect();
            let num = |i: usize| {
                c.get(i).and_then(|v| v.parse::<f64>().ok()).ok_or_else(|| err(k + 2, format!("bad row `{l}`")))
            };
            Ok(EnergyTerms { data: num(1)?, smooth: num(2)?, total: num(3)? })
        })
        .collect()
}

/// `key = value` lines with `#` comments. Later keys override earlier ones.
pub fn parse_key_values(name: &str, text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            source_name: name.to_string(),
            line: k + 1,
            msg: format!("expected `key = value`, found `{line}`"),
        })?;
        out.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(out)
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::InvalidArgument(format!("bad value `{value}` for `{key}`")))
}

/// Applies registration settings from a key-value map. Keys not belonging
/// to the registration are returned untouched for other consumers.
pub fn apply_registration_keys(
    config: &mut RegistrationConfig,
    keys: &BTreeMap<String, String>,
) -> Result<BTreeMap<String, String>> {
    let mut rest = BTreeMap::new();
    for (k, v) in keys {
        match k.as_str() {
            "smoothness_weight" => config.smoothness_weight = parse_value(k, v)?,
            "epsilon" => config.epsilon = parse_value(k, v)?,
            "max_outer_iterations" => config.max_outer_iterations = parse_value(k, v)?,
            "energy_tolerance" => config.energy_tolerance = parse_value(k, v)?,
            "step_size" => config.step_size = parse_value(k, v)?,
            "backtrack_factor" => config.backtrack_factor = parse_value(k, v)?,
            "max_halvings" => config.max_halvings = parse_value(k, v)?,
            "r2_threshold" => config.r2_threshold = parse_value(k, v)?,
            "smooth_convention" => config.smooth_convention = v.parse()?,
            "damping" => config.damping = parse_value(k, v)?,
            _ => {
                rest.insert(k.clone(), v.clone());
            }
        }
    }
    config.validate()?;
    Ok(rest)
}

pub fn format_registration_config(c: &RegistrationConfig) -> String {
    format!(
        "smoothness_weight = {}\nepsilon = {}\nmax_outer_iterations = {}\nenergy_tolerance = {}\nstep_size = {}\n\
         backtrack_factor = {}\nmax_halvings = {}\nr2_threshold = {}\nsmooth_convention = {}\ndamping = {}\n",
        c.smoothness_weight,
        c.epsilon,
        c.max_outer_iterations,
        c.energy_tolerance,
        c.step_size,
        c.backtrack_factor,
        c.max_halvings,
        c.r2_threshold,
        c.smooth_convention,
        c.damping
    )
}

//! Flattening of disk-topology patches onto the unit disk.
//!
//! [`harmonic_disk_map`] pins the boundary loop to the unit circle by
//! cumulative 3D arc length and solves the discrete Laplace equation for the
//! interior, with cotangent edge weights clamped at zero. The result is a
//! convex-combination embedding and therefore flip-free.
//!
//! [`conformal_refine`] then lowers angle distortion with the boundary held
//! fixed: it measures the Beltrami coefficient `mu_g` of the current
//! surface-to-disk map `g` in per-face isometric frames, solves for a disk
//! self-map `h` with coefficient `-mu_g * g_z / conj(g_z)` (the value that
//! makes `h o g` conformal), and keeps the composition if it lowers the mean
//! `|mu|`.

use std::collections::HashMap;

use num_complex::Complex64;

use crate::beltrami::{affine_derivatives, clamp_beltrami, linear_beltrami_solve, BeltramiField, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::mesh::{count_flipped, CorticalMesh};
use crate::sparse::{solve_spd, CsrMatrix};
use crate::{par, Point2, Point3};

/// Per-vertex unit-disk coordinates of a flattened patch.
#[derive(Debug, Clone, PartialEq)]
pub struct DiskParameterization {
    pub uv: Vec<Point2>,
    /// Boundary loop in counter-clockwise order.
    pub boundary_ids: Vec<usize>,
}

impl DiskParameterization {
    pub fn new(uv: Vec<Point2>, boundary_ids: Vec<usize>) -> Self {
        Self { uv, boundary_ids }
    }

    /// Builds a parameterization for `mesh` from given coordinates, taking
    /// the boundary loop from the mesh.
    pub fn from_mesh(mesh: &CorticalMesh, uv: Vec<Point2>) -> Result<Self> {
        if uv.len() != mesh.vertex_count() {
            return Err(Error::InvalidArgument(format!(
                "{} uv coordinates for {} vertices",
                uv.len(),
                mesh.vertex_count()
            )));
        }
        Ok(Self { uv, boundary_ids: mesh.boundary_loop()? })
    }

    /// Largest `| |uv| - 1 |` over boundary vertices.
    pub fn boundary_radius_error(&self) -> f64 {
        self.boundary_ids.iter().map(|&b| (self.uv[b][0].hypot(self.uv[b][1]) - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// Edge weights for the harmonic map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HarmonicWeights {
    /// Cotangent weights with negative values clamped to zero.
    #[default]
    ClampedCotangent,
    /// Tutte weights: every edge weighs one.
    Uniform,
}

fn sub(a: &Point3, b: &Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: &Point3, b: &Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: &Point3, b: &Point3) -> Point3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm(a: &Point3) -> f64 {
    dot(a, a).sqrt()
}

/// Summed half-cotangent weight per undirected edge, in 3D.
pub(crate) fn cotangent_edge_weights(mesh: &CorticalMesh) -> HashMap<(usize, usize), f64> {
    let v = mesh.vertices();
    let mut w: HashMap<(usize, usize), f64> = HashMap::with_capacity(mesh.face_count() * 2);
    for f in mesh.faces() {
        for k in 0..3 {
            let o = f[k];
            let (a, b) = (f[(k + 1) % 3], f[(k + 2) % 3]);
            let ea = sub(&v[a], &v[o]);
            let eb = sub(&v[b], &v[o]);
            let cot = dot(&ea, &eb) / norm(&cross(&ea, &eb));
            *w.entry((a.min(b), a.max(b))).or_default() += 0.5 * cot;
        }
    }
    w
}

/// Solves `sum_j w_ij (x_i - x_j) = 0` on unpinned vertices.
fn solve_weighted_laplace(
    nv: usize,
    weights: &[((usize, usize), f64)],
    pins: &[(usize, Point2)],
) -> Result<Vec<Point2>> {
    let mut pinned: Vec<Option<Point2>> = vec![None; nv];
    for &(v, p) in pins {
        pinned[v] = Some(p);
    }
    let mut slot = vec![usize::MAX; nv];
    let mut free = 0;
    for v in 0..nv {
        if pinned[v].is_none() {
            slot[v] = free;
            free += 1;
        }
    }
    let mut trip = Vec::with_capacity(weights.len() * 4);
    let mut diag = vec![0.0; free];
    let mut rhs = [vec![0.0; free], vec![0.0; free]];
    for &((a, b), w) in weights {
        for (i, j) in [(a, b), (b, a)] {
            let si = slot[i];
            if si == usize::MAX {
                continue;
            }
            diag[si] += w;
            match pinned[j] {
                Some(p) => {
                    rhs[0][si] += w * p[0];
                    rhs[1][si] += w * p[1];
                }
                None => trip.push((si, slot[j], -w)),
            }
        }
    }
    if let Some(v) = diag.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::SolverFailure(format!("free vertex slot {v} has no positive edge weight")));
    }
    trip.extend(diag.iter().enumerate().map(|(i, &d)| (i, i, d)));
    let sol = solve_spd(&CsrMatrix::from_triplets(free, trip), &rhs)?;
    Ok((0..nv)
        .map(|v| match pinned[v] {
            Some(p) => p,
            None => [sol[0][slot[v]], sol[1][slot[v]]],
        })
        .collect())
}

/// Unit-circle positions for the boundary loop by cumulative arc length.
fn circle_boundary(mesh: &CorticalMesh, boundary: &[usize]) -> Vec<(usize, Point2)> {
    let v = mesh.vertices();
    let n = boundary.len();
    let seg: Vec<f64> = (0..n).map(|k| norm(&sub(&v[boundary[(k + 1) % n]], &v[boundary[k]]))).collect();
    let total: f64 = seg.iter().sum();
    let mut s = 0.0;
    boundary
        .iter()
        .enumerate()
        .map(|(k, &b)| {
            let t = std::f64::consts::TAU * s / total;
            s += seg[k];
            (b, [t.cos(), t.sin()])
        })
        .collect()
}

/// Harmonic map of a disk patch onto the unit disk with clamped cotangent
/// weights. Falls back to uniform weights if clamping leaves the embedding
/// with flipped triangles.
pub fn harmonic_disk_map(mesh: &CorticalMesh) -> Result<DiskParameterization> {
    let param = harmonic_disk_map_with(mesh, HarmonicWeights::ClampedCotangent)?;
    if count_flipped(&param.uv, mesh.faces()) == 0 {
        return Ok(param);
    }
    harmonic_disk_map_with(mesh, HarmonicWeights::Uniform)
}

pub fn harmonic_disk_map_with(mesh: &CorticalMesh, weights: HarmonicWeights) -> Result<DiskParameterization> {
    let boundary = mesh.boundary_loop()?;
    let pins = circle_boundary(mesh, &boundary);
    let mut w: Vec<((usize, usize), f64)> = match weights {
        HarmonicWeights::ClampedCotangent => {
            cotangent_edge_weights(mesh).into_iter().map(|(e, w)| (e, w.max(0.0))).collect()
        }
        HarmonicWeights::Uniform => mesh.edges().into_iter().map(|e| (e, 1.0)).collect(),
    };
    w.sort_unstable_by_key(|a| a.0);
    let uv = solve_weighted_laplace(mesh.vertex_count(), &w, &pins)?;
    Ok(DiskParameterization { uv, boundary_ids: boundary })
}

/// Isometric 2D frame of a 3D triangle, counter-clockwise.
fn local_frame(a: &Point3, b: &Point3, c: &Point3) -> [Point2; 3] {
    let e1 = sub(b, a);
    let e2 = sub(c, a);
    let l1 = norm(&e1);
    let x = [e1[0] / l1, e1[1] / l1, e1[2] / l1];
    let n = cross(&e1, &e2);
    let y = cross(&n, &x);
    let ly = norm(&y);
    let y = [y[0] / ly, y[1] / ly, y[2] / ly];
    [[0.0, 0.0], [l1, 0.0], [dot(&e2, &x), dot(&e2, &y)]]
}

/// `(f_z, f_zbar)` of the surface-to-disk map on every face.
fn surface_derivatives(mesh: &CorticalMesh, uv: &[Point2]) -> Vec<Option<(Complex64, Complex64)>> {
    let v = mesh.vertices();
    let faces = mesh.faces();
    par::map_range(faces.len(), |fi| {
        let f = faces[fi];
        let q = local_frame(&v[f[0]], &v[f[1]], &v[f[2]]);
        affine_derivatives([&q[0], &q[1], &q[2]], [&uv[f[0]], &uv[f[1]], &uv[f[2]]])
    })
}

/// Summary of angle distortion of a surface-to-disk map.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformalError {
    pub mean: f64,
    pub max: f64,
    /// Per-face `|mu|`; infinite where `f_z` vanishes.
    pub per_face: Vec<f64>,
}

/// `|mu|` statistics of the map from the 3D patch to its parameterization.
pub fn conformal_error(mesh: &CorticalMesh, param: &DiskParameterization) -> ConformalError {
    let per_face: Vec<f64> = surface_derivatives(mesh, &param.uv)
        .into_iter()
        .map(|d| match d {
            Some((fz, fzb)) if fz.norm() > 0.0 => (fzb / fz).norm(),
            _ => f64::INFINITY,
        })
        .collect();
    let n = per_face.len().max(1) as f64;
    ConformalError {
        mean: per_face.iter().sum::<f64>() / n,
        max: per_face.iter().copied().fold(0.0, f64::max),
        per_face,
    }
}

/// Runs up to `iterations` Beltrami-composition passes. Returns the refined
/// parameterization together with the mean `|mu|` before the first pass and
/// after every pass.
pub fn conformal_refine_traced(
    mesh: &CorticalMesh,
    param: &DiskParameterization,
    iterations: usize,
) -> Result<(DiskParameterization, Vec<f64>)> {
    let faces = mesh.faces();
    let mut current = param.clone();
    let mut err = conformal_error(mesh, &current).mean;
    let mut trace = vec![err];
    for _ in 0..iterations {
        let derivs = surface_derivatives(mesh, &current.uv);
        let mut target = Vec::with_capacity(faces.len());
        for (fi, d) in derivs.iter().enumerate() {
            let (gz, gzb) = d.ok_or(Error::DegenerateSourceFace(fi))?;
            if gz.norm() == 0.0 {
                return Err(Error::ConformalSingularity(fi));
            }
            target.push(-(gzb / gz) * gz / gz.conj());
        }
        let pins: Vec<(usize, Point2)> = current.boundary_ids.iter().map(|&b| (b, current.uv[b])).collect();
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..12 {
            let field =
                clamp_beltrami(&BeltramiField::new(target.iter().map(|m| m * scale).collect()), DEFAULT_EPSILON);
            let uv = linear_beltrami_solve(faces, &current.uv, &field, &pins)?;
            if count_flipped(&uv, faces) == 0 {
                let cand = DiskParameterization { uv, boundary_ids: current.boundary_ids.clone() };
                let e = conformal_error(mesh, &cand).mean;
                if e < err {
                    accepted = Some((cand, e));
                    break;
                }
            }
            scale *= 0.5;
        }
        if let Some((cand, e)) = accepted {
            current = cand;
            err = e;
        }
        trace.push(err);
    }
    Ok((current, trace))
}

/// Reduces the angle distortion of `param` with its boundary held fixed.
/// The output never has more flipped triangles than zero and its mean `|mu|`
/// never exceeds the input's.
pub fn conformal_refine(
    mesh: &CorticalMesh,
    param: &DiskParameterization,
    iterations: usize,
) -> Result<DiskParameterization> {
    conformal_refine_traced(mesh, param, iterations).map(|(p, _)| p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::validate_topology;

    /// Concentric-ring disk mesh with `rings` rings and 6k vertices on ring k.
    pub(crate) fn ring_disk(rings: usize) -> (Vec<Point2>, Vec<[usize; 3]>) {
        crate::synth::ring_disk_mesh(rings)
    }

    fn hex_fan() -> CorticalMesh {
        let mut v = vec![[0.0, 0.0, 0.0]];
        for k in 0..6 {
            let t = k as f64 * std::f64::consts::TAU / 6.0;
            v.push([t.cos(), t.sin(), 0.0]);
        }
        let f = (0..6).map(|k| [0, 1 + k, 1 + (k + 1) % 6]).collect();
        CorticalMesh::new(v, f).unwrap()
    }

    #[test]
    fn hexagonal_fan() {
        let m = hex_fan();
        let p = harmonic_disk_map(&m).unwrap();
        assert!(p.uv[0][0].abs() < 1e-12 && p.uv[0][1].abs() < 1e-12);
        for k in 0..6 {
            let b = p.uv[1 + k];
            let t = k as f64 * std::f64::consts::TAU / 6.0;
            assert!((b[0] - t.cos()).abs() < 1e-12 && (b[1] - t.sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_weights_have_mean_value_property() {
        let (p, f) = ring_disk(6);
        let bumpy: Vec<Point3> = p.iter().map(|q| [q[0], q[1], 0.3 * (3.0 * q[0]).sin() * q[1]]).collect();
        let m = CorticalMesh::new(bumpy, f).unwrap();
        let param = harmonic_disk_map_with(&m, HarmonicWeights::Uniform).unwrap();
        let nbrs = m.vertex_neighbors();
        let boundary: std::collections::HashSet<usize> = param.boundary_ids.iter().copied().collect();
        for (i, n) in nbrs.iter().enumerate() {
            if boundary.contains(&i) {
                continue;
            }
            let avg = n.iter().fold([0.0, 0.0], |acc, &j| [acc[0] + param.uv[j][0], acc[1] + param.uv[j][1]]);
            let k = n.len() as f64;
            assert!((avg[0] / k - param.uv[i][0]).abs() < 1e-9);
            assert!((avg[1] / k - param.uv[i][1]).abs() < 1e-9);
        }
        assert!(validate_topology(&m).unwrap().is_disk);
    }

    #[test]
    fn conformal_error_identity_and_shear() {
        let (p, f) = ring_disk(5);
        let m = CorticalMesh::from_planar(&p, f).unwrap();
        let id = DiskParameterization::from_mesh(&m, p.clone()).unwrap();
        assert!(conformal_error(&m, &id).mean < 1e-10);
        let shear = DiskParameterization::from_mesh(&m, p.iter().map(|q| [2.0 * q[0], q[1]]).collect()).unwrap();
        for e in conformal_error(&m, &shear).per_face {
            assert!((e - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn refine_zero_iterations_and_fixed_point() {
        let (p, f) = ring_disk(5);
        let m = CorticalMesh::from_planar(&p, f).unwrap();
        let id = DiskParameterization::from_mesh(&m, p.clone()).unwrap();
        assert_eq!(conformal_refine(&m, &id, 0).unwrap(), id);
        let out = conformal_refine(&m, &id, 3).unwrap();
        for (a, b) in out.uv.iter().zip(&id.uv) {
            assert!((a[0] - b[0]).abs() < 1e-8 && (a[1] - b[1]).abs() < 1e-8);
        }
    }

    #[test]
    fn refine_reduces_distortion_on_curved_patch() {
        let (p, f) = ring_disk(8);
        let bumpy: Vec<Point3> =
            p.iter().map(|q| [q[0], q[1], 0.6 * (-4.0 * ((q[0] - 0.3).powi(2) + q[1] * q[1])).exp()]).collect();
        let m = CorticalMesh::new(bumpy, f.clone()).unwrap();
        let h = harmonic_disk_map(&m).unwrap();
        let (out, trace) = conformal_refine_traced(&m, &h, 5).unwrap();
        assert!(trace[1] < trace[0], "{trace:?}");
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(count_flipped(&out.uv, &f), 0);
        assert!(out.boundary_radius_error() <= 1e-9);
    }
}

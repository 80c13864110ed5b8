//! Triangle meshes, topology checks and orientation tests.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::{Point2, Point3};

/// Smallest admissible triangle area, in mm².
pub const MIN_FACE_AREA: f64 = 1e-12;

/// Oriented triangle mesh of a cortical patch.
///
/// Faces are counter-clockwise when seen from outside. Construction checks
/// index bounds, repeated vertices and degenerate faces; the manifold and
/// connectivity conditions are checked by [`validate_topology`].
#[derive(Debug, Clone, PartialEq)]
pub struct CorticalMesh {
    vertices: Vec<Point3>,
    faces: Vec<[usize; 3]>,
}

impl CorticalMesh {
    pub fn new(vertices: Vec<Point3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let nv = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            for &i in f {
                if i >= nv {
                    return Err(Error::IndexOutOfBounds { face: fi, index: i, vertex_count: nv });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::RepeatedVertex { face: fi });
            }
            let area = triangle_area_3d(&vertices[f[0]], &vertices[f[1]], &vertices[f[2]]);
            if !(area >= MIN_FACE_AREA) {
                return Err(Error::DegenerateFace { face: fi, area });
            }
        }
        Ok(Self { vertices, faces })
    }

    /// Lifts planar points into the z = 0 plane.
    pub fn from_planar(points: &[Point2], faces: Vec<[usize; 3]>) -> Result<Self> {
        Self::new(points.iter().map(|p| [p[0], p[1], 0.0]).collect(), faces)
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Undirected edges as `(min, max)` pairs, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> =
            self.faces.iter().flat_map(|f| (0..3).map(move |k| ordered(f[k], f[(k + 1) % 3]))).collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Boundary vertex loop of a disk mesh, following face orientation
    /// (counter-clockwise around the interior) and starting at the smallest
    /// boundary vertex index.
    pub fn boundary_loop(&self) -> Result<Vec<usize>> {
        let report = validate_topology(self)?;
        if !report.is_disk {
            return Err(Error::NotADisk {
                euler: report.euler_characteristic,
                boundary_loops: report.boundary_loop_count,
            });
        }
        let next = boundary_successors(&self.faces);
        let start = *next.keys().min().expect("disk has a boundary");
        let mut loop_ids = vec![start];
        let mut cur = next[&start][0];
        while cur != start {
            loop_ids.push(cur);
            cur = next[&cur][0];
        }
        Ok(loop_ids)
    }

    /// Per-vertex sorted neighbour lists.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nbrs = vec![Vec::new(); self.vertices.len()];
        for (a, b) in self.edges() {
            nbrs[a].push(b);
            nbrs[b].push(a);
        }
        for n in &mut nbrs {
            n.sort_unstable();
        }
        nbrs
    }
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

pub(crate) fn triangle_area_3d(a: &Point3, b: &Point3, c: &Point3) -> f64 {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
    0.5 * (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt()
}

/// Twice the signed area of a planar triangle.
#[inline]
pub fn signed_area2(a: &Point2, b: &Point2, c: &Point2) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Summary of the combinatorial structure of a mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TopologyReport {
    pub vertex_count: usize,
    pub face_count: usize,
    pub boundary_loop_count: usize,
    pub euler_characteristic: i64,
    pub is_disk: bool,
}

/// Boundary half-edges `a -> b` (those without a twin), keyed by tail.
fn boundary_successors(faces: &[[usize; 3]]) -> HashMap<usize, Vec<usize>> {
    let mut directed: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.len() * 3);
    for f in faces {
        for k in 0..3 {
            *directed.entry((f[k], f[(k + 1) % 3])).or_default() += 1;
        }
    }
    let mut next: HashMap<usize, Vec<usize>> = HashMap::new();
    for f in faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            if !directed.contains_key(&(b, a)) {
                next.entry(a).or_default().push(b);
            }
        }
    }
    for succ in next.values_mut() {
        succ.sort_unstable();
    }
    next
}

/// Checks edge-manifoldness, orientation consistency and connectivity, and
/// reports the Euler characteristic and number of boundary loops.
pub fn validate_topology(mesh: &CorticalMesh) -> Result<TopologyReport> {
    let faces = mesh.faces();
    let nv = mesh.vertex_count();

    let mut undirected: HashMap<(usize, usize), u32> = HashMap::with_capacity(faces.len() * 2);
    for f in faces {
        for k in 0..3 {
            let e = ordered(f[k], f[(k + 1) % 3]);
            let c = undirected.entry(e).or_default();
            *c += 1;
            if *c > 2 {
                return Err(Error::NonManifoldEdge(e.0, e.1));
            }
        }
    }

    let mut directed: HashMap<(usize, usize), ()> = HashMap::with_capacity(faces.len() * 3);
    for f in faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            if directed.insert((a, b), ()).is_some() {
                let e = ordered(a, b);
                return Err(Error::InconsistentOrientation(e.0, e.1));
            }
        }
    }

    // union-find over vertices
    let mut parent: Vec<usize> = (0..nv).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for f in faces {
        for k in 1..3 {
            let (ra, rb) = (find(&mut parent, f[0]), find(&mut parent, f[k]));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let components = (0..nv).filter(|&v| find(&mut parent, v) == v).count();
    if components > 1 {
        return Err(Error::MultipleComponents(components));
    }

    // boundary loops by walking unvisited boundary half-edges
    let next = boundary_successors(faces);
    let mut used: HashMap<(usize, usize), bool> = HashMap::new();
    let mut tails: Vec<usize> = next.keys().copied().collect();
    tails.sort_unstable();
    let mut loops = 0;
    for &t in &tails {
        for &h in &next[&t] {
            if used.contains_key(&(t, h)) {
                continue;
            }
            loops += 1;
            let (mut a, mut b) = (t, h);
            loop {
                used.insert((a, b), true);
                match next.get(&b).and_then(|s| s.iter().find(|&&c| !used.contains_key(&(b, c)))) {
                    Some(&c) => {
                        a = b;
                        b = c;
                    }
                    None => break,
                }
            }
            let _ = a;
        }
    }

    let euler = nv as i64 - undirected.len() as i64 + faces.len() as i64;
    Ok(TopologyReport {
        vertex_count: nv,
        face_count: faces.len(),
        boundary_loop_count: loops,
        euler_characteristic: euler,
        is_disk: euler == 1 && loops == 1,
    })
}

/// Sign of `(p1 - p0) x (p2 - p0)` per face.
pub fn triangle_orientation_signs(points: &[Point2], faces: &[[usize; 3]]) -> Vec<i8> {
    faces
        .iter()
        .map(|f| {
            let a = signed_area2(&points[f[0]], &points[f[1]], &points[f[2]]);
            if a > 0.0 {
                1
            } else if a < 0.0 {
                -1
            } else {
                0
            }
        })
        .collect()
}

/// Number of faces that are not strictly positively oriented. Degenerate
/// faces count as flipped.
pub fn count_flipped(points: &[Point2], faces: &[[usize; 3]]) -> usize {
    faces.iter().filter(|f| !(signed_area2(&points[f[0]], &points[f[1]], &points[f[2]]) > 0.0)).count()
}

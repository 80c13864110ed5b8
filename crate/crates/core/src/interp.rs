//! Point location and barycentric interpolation on a template's disk.

use crate::mesh::signed_area2;
use crate::retinotopy::RetinotopicMap;
use crate::{par, Point2};

/// Points outside the template triangulation but within this distance of
/// its boundary are projected onto it; farther points are invalid.
pub const PROJECTION_BAND: f64 = 0.02;

/// Template values at a query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemplateSample {
    pub visual: Point2,
    pub prf_size: f64,
    pub valid: bool,
    /// Containing (or, if projected, nearest boundary) face.
    pub face: Option<usize>,
    pub projected: bool,
}

impl TemplateSample {
    fn invalid() -> Self {
        Self { visual: [f64::NAN, f64::NAN], prf_size: f64::NAN, valid: false, face: None, projected: false }
    }
}

/// Uniform bucket grid over a template parameterization.
#[derive(Debug, Clone)]
pub struct TemplateSampler<'a> {
    template: &'a RetinotopicMap,
    origin: Point2,
    cell: f64,
    dims: usize,
    buckets: Vec<Vec<usize>>,
    /// Boundary edges `(a, b, face)` in loop order.
    boundary_edges: Vec<(usize, usize, usize)>,
    /// d(visual)/d(uv) per face, row-major `[[dx/du, dx/dv], [dy/du, dy/dv]]`.
    jacobians: Vec<[[f64; 2]; 2]>,
}

impl<'a> TemplateSampler<'a> {
    pub fn new(template: &'a RetinotopicMap) -> Self {
        let uv = &template.param.uv;
        let faces = template.faces();
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in uv {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
        let dims = ((faces.len() as f64 / 2.0).sqrt().ceil() as usize).clamp(1, 512);
        let cell = extent / dims as f64;
        let mut buckets = vec![Vec::new(); dims * dims];
        let clampi = |x: f64| (x.floor().max(0.0) as usize).min(dims - 1);
        for (fi, f) in faces.iter().enumerate() {
            let mut flo = [f64::INFINITY; 2];
            let mut fhi = [f64::NEG_INFINITY; 2];
            for &v in f {
                for k in 0..2 {
                    flo[k] = flo[k].min(uv[v][k]);
                    fhi[k] = fhi[k].max(uv[v][k]);
                }
            }
            let (i0, i1) = (clampi((flo[0] - lo[0]) / cell), clampi((fhi[0] - lo[0]) / cell));
            let (j0, j1) = (clampi((flo[1] - lo[1]) / cell), clampi((fhi[1] - lo[1]) / cell));
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * dims + i].push(fi);
                }
            }
        }

        let mut edge_face = std::collections::HashMap::new();
        for (fi, f) in faces.iter().enumerate() {
            for k in 0..3 {
                edge_face.insert((f[k], f[(k + 1) % 3]), fi);
            }
        }
        let b = &template.param.boundary_ids;
        let boundary_edges = (0..b.len())
            .filter_map(|k| {
                let (a, c) = (b[k], b[(k + 1) % b.len()]);
                edge_face.get(&(a, c)).map(|&fi| (a, c, fi))
            })
            .collect();

        let jacobians = faces
            .iter()
            .map(|f| {
                let p = [uv[f[0]], uv[f[1]], uv[f[2]]];
                let area2 = signed_area2(&p[0], &p[1], &p[2]);
                let mut j = [[0.0; 2]; 2];
                for i in 0..3 {
                    let (a, c) = (p[(i + 1) % 3], p[(i + 2) % 3]);
                    let g = [-(c[1] - a[1]) / area2, (c[0] - a[0]) / area2];
                    let val = template.visual[f[i]];
                    for r in 0..2 {
                        j[r][0] += val[r] * g[0];
                        j[r][1] += val[r] * g[1];
                    }
                }
                j
            })
            .collect();

        Self { template, origin: lo, cell, dims, buckets, boundary_edges, jacobians }
    }

    pub fn template(&self) -> &RetinotopicMap {
        self.template
    }

    /// Spatial derivative of the template's visual field on a face.
    pub fn jacobian(&self, face: usize) -> [[f64; 2]; 2] {
        self.jacobians[face]
    }

    fn barycentric(&self, face: usize, q: &Point2) -> [f64; 3] {
        let f = self.template.faces()[face];
        let uv = &self.template.param.uv;
        let (a, b, c) = (&uv[f[0]], &uv[f[1]], &uv[f[2]]);
        let total = signed_area2(a, b, c);
        [signed_area2(q, b, c) / total, signed_area2(a, q, c) / total, signed_area2(a, b, q) / total]
    }

    fn sample_face(&self, face: usize, w: [f64; 3], projected: bool) -> TemplateSample {
        let f = self.template.faces()[face];
        let vis = &self.template.visual;
        let sig = &self.template.prf_size;
        TemplateSample {
            visual: [
                w[0] * vis[f[0]][0] + w[1] * vis[f[1]][0] + w[2] * vis[f[2]][0],
                w[0] * vis[f[0]][1] + w[1] * vis[f[1]][1] + w[2] * vis[f[2]][1],
            ],
            prf_size: w[0] * sig[f[0]] + w[1] * sig[f[1]] + w[2] * sig[f[2]],
            valid: true,
            face: Some(face),
            projected,
        }
    }

    fn locate(&self, q: &Point2) -> Option<(usize, [f64; 3])> {
        let gx = (q[0] - self.origin[0]) / self.cell;
        let gy = (q[1] - self.origin[1]) / self.cell;
        let eps = 1e-9;
        if !(gx >= -eps && gy >= -eps && gx <= self.dims as f64 + eps && gy <= self.dims as f64 + eps) {
            return None;
        }
        let i = (gx.floor().max(0.0) as usize).min(self.dims - 1);
        let j = (gy.floor().max(0.0) as usize).min(self.dims - 1);
        // buckets hold faces in increasing index order, so the first hit is
        // the lowest-index containing face
        self.buckets[j * self.dims + i].iter().find_map(|&fi| {
            let w = self.barycentric(fi, q);
            (w[0] >= -1e-12 && w[1] >= -1e-12 && w[2] >= -1e-12).then_some((fi, w))
        })
    }

    pub fn sample(&self, q: Point2) -> TemplateSample {
        if !(q[0].is_finite() && q[1].is_finite()) {
            return TemplateSample::invalid();
        }
        if let Some((fi, w)) = self.locate(&q) {
            return self.sample_face(fi, w, false);
        }
        let uv = &self.template.param.uv;
        let mut best: Option<(f64, usize, f64)> = None;
        for (ei, &(a, b, _)) in self.boundary_edges.iter().enumerate() {
            let (pa, pb) = (uv[a], uv[b]);
            let d = [pb[0] - pa[0], pb[1] - pa[1]];
            let len2 = d[0] * d[0] + d[1] * d[1];
            let t = (((q[0] - pa[0]) * d[0] + (q[1] - pa[1]) * d[1]) / len2).clamp(0.0, 1.0);
            let foot = [pa[0] + t * d[0], pa[1] + t * d[1]];
            let dist = (q[0] - foot[0]).hypot(q[1] - foot[1]);
            if best.is_none_or(|(bd, _, _)| dist < bd) {
                best = Some((dist, ei, t));
            }
        }
        match best {
            Some((dist, ei, t)) if dist <= PROJECTION_BAND => {
                let (a, b, fi) = self.boundary_edges[ei];
                let f = self.template.faces()[fi];
                let mut w = [0.0; 3];
                for k in 0..3 {
                    if f[k] == a {
                        w[k] = 1.0 - t;
                    } else if f[k] == b {
                        w[k] = t;
                    }
                }
                self.sample_face(fi, w, true)
            }
            _ => TemplateSample::invalid(),
        }
    }

    pub fn sample_all(&self, points: &[Point2]) -> Vec<TemplateSample> {
        par::map_slice(points, |&q| self.sample(q))
    }
}

/// Template visual coordinates and pRF size at each query point.
pub fn interpolate_template(template: &RetinotopicMap, points: &[Point2]) -> Vec<TemplateSample> {
    TemplateSampler::new(template).sample_all(points)
}

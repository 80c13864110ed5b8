//! Beltrami coefficients of piecewise-linear planar maps.
//!
//! On a triangle the map is affine, `f(z) = a z + b conj(z) + c`, so
//! `mu = b / a` is constant per face and the face keeps its orientation iff
//! `|mu| < 1`. [`linear_beltrami_solve`] goes the other way: given `mu` per
//! face and Dirichlet data it assembles the generalized Laplacian
//! `div(A grad u) = 0`, `div(A grad v) = 0` with
//!
//! ```text
//! A = 1/(1-|mu|^2) [ (1-Re mu)^2 + (Im mu)^2     -2 Im mu                 ]
//!                  [ -2 Im mu                     (1+Re mu)^2 + (Im mu)^2 ]
//! ```
//!
//! and solves it with the pinned vertices eliminated.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::mesh::signed_area2;
use crate::par;
use crate::sparse::{solve_spd, CsrMatrix};
use crate::Point2;

/// Default clamp margin: `|mu| <= 1 - 0.05` after projection.
pub const DEFAULT_EPSILON: f64 = 0.05;

/// `|f_z|` below this makes `mu` meaningless.
pub const SINGULARITY_THRESHOLD: f64 = 1e-14;

/// Per-face Beltrami coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct BeltramiField {
    pub mu: Vec<Complex64>,
}

impl BeltramiField {
    pub fn new(mu: Vec<Complex64>) -> Self {
        Self { mu }
    }

    pub fn zeros(face_count: usize) -> Self {
        Self { mu: vec![Complex64::new(0.0, 0.0); face_count] }
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn max_modulus(&self) -> f64 {
        self.mu.iter().map(|m| m.norm()).fold(0.0, f64::max)
    }

    pub fn mean_modulus(&self) -> f64 {
        if self.mu.is_empty() {
            return 0.0;
        }
        self.mu.iter().map(|m| m.norm()).sum::<f64>() / self.mu.len() as f64
    }
}

#[inline]
fn c(p: &Point2) -> Complex64 {
    Complex64::new(p[0], p[1])
}

/// Wirtinger derivatives `(f_z, f_zbar)` of the affine map taking the source
/// triangle onto the target triangle. `None` if the source is degenerate.
pub fn affine_derivatives(src: [&Point2; 3], dst: [&Point2; 3]) -> Option<(Complex64, Complex64)> {
    let area2 = signed_area2(src[0], src[1], src[2]);
    let e1 = c(src[1]) - c(src[0]);
    let e2 = c(src[2]) - c(src[0]);
    let scale = e1.norm_sqr() + e2.norm_sqr();
    if !(area2.abs() > 1e-14 * scale) {
        return None;
    }
    let d1 = c(dst[1]) - c(dst[0]);
    let d2 = c(dst[2]) - c(dst[0]);
    let det = e1 * e2.conj() - e2 * e1.conj();
    let fz = (d1 * e2.conj() - d2 * e1.conj()) / det;
    let fzb = (e1 * d2 - e2 * d1) / det;
    Some((fz, fzb))
}

/// Beltrami coefficient of the piecewise-linear map `source -> target`.
pub fn compute_beltrami(faces: &[[usize; 3]], source: &[Point2], target: &[Point2]) -> Result<BeltramiField> {
    let per_face = par::map_range(faces.len(), |fi| {
        let f = faces[fi];
        let (fz, fzb) = affine_derivatives(
            [&source[f[0]], &source[f[1]], &source[f[2]]],
            [&target[f[0]], &target[f[1]], &target[f[2]]],
        )
        .ok_or(Error::DegenerateSourceFace(fi))?;
        if fz.norm() < SINGULARITY_THRESHOLD {
            return Err(Error::ConformalSingularity(fi));
        }
        Ok(fzb / fz)
    });
    per_face.into_iter().collect::<Result<Vec<_>>>().map(BeltramiField::new)
}

/// Radially projects every coefficient with `|mu| > 1 - epsilon` back onto
/// that circle, keeping its argument. Panics unless `0 < epsilon < 1`.
pub fn clamp_beltrami(field: &BeltramiField, epsilon: f64) -> BeltramiField {
    assert!(epsilon > 0.0 && epsilon < 1.0, "epsilon must lie in (0, 1), got {epsilon}");
    let radius = 1.0 - epsilon;
    // a few ulps of slack so that clamping already-clamped values is a no-op
    let trigger = radius * (1.0 + 4.0 * f64::EPSILON);
    let mu = par::map_slice(&field.mu, |&m| {
        let r = m.norm();
        if r > trigger {
            m * (radius / r)
        } else {
            m
        }
    });
    BeltramiField::new(mu)
}

/// Metric `(alpha, beta, gamma)` of the generalized Laplacian for one face.
#[inline]
pub fn lbs_coefficients(mu: Complex64) -> (f64, f64, f64) {
    let (re, im) = (mu.re, mu.im);
    let denom = 1.0 - mu.norm_sqr();
    (((1.0 - re) * (1.0 - re) + im * im) / denom, -2.0 * im / denom, ((1.0 + re) * (1.0 + re) + im * im) / denom)
}

/// Local 3x3 stiffness `area * grad(phi_i)^T M grad(phi_j)` of the linear
/// hat functions on a source triangle, for the symmetric metric
/// `M = [[m00, m01], [m01, m11]]`.
pub(crate) fn local_stiffness(p: [&Point2; 3], m00: f64, m01: f64, m11: f64) -> [[f64; 3]; 3] {
    let area2 = signed_area2(p[0], p[1], p[2]);
    let grads: [[f64; 2]; 3] = std::array::from_fn(|i| {
        let a = p[(i + 1) % 3];
        let b = p[(i + 2) % 3];
        // rotate (b - a) by +90 degrees
        [-(b[1] - a[1]) / area2, (b[0] - a[0]) / area2]
    });
    let area = 0.5 * area2.abs();
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        let mg = [m00 * grads[i][0] + m01 * grads[i][1], m01 * grads[i][0] + m11 * grads[i][1]];
        for j in 0..3 {
            k[j][i] = area * (mg[0] * grads[j][0] + mg[1] * grads[j][1]);
        }
    }
    k
}

/// Solves the Dirichlet problem `div(A grad phi) = 0` componentwise for
/// per-face local stiffness matrices. Pinned vertices take the given values.
pub(crate) fn solve_dirichlet(
    vertex_count: usize,
    faces: &[[usize; 3]],
    local: &[[[f64; 3]; 3]],
    pins: &[(usize, Point2)],
) -> Result<Vec<Point2>> {
    let mut pinned: Vec<Option<Point2>> = vec![None; vertex_count];
    for &(v, p) in pins {
        if v >= vertex_count {
            return Err(Error::InvalidArgument(format!("pinned vertex {v} out of range")));
        }
        pinned[v] = Some(p);
    }
    let mut slot = vec![usize::MAX; vertex_count];
    let mut free = 0;
    for v in 0..vertex_count {
        if pinned[v].is_none() {
            slot[v] = free;
            free += 1;
        }
    }
    let mut trip = Vec::with_capacity(faces.len() * 9);
    let mut rhs_u = vec![0.0; free];
    let mut rhs_v = vec![0.0; free];
    for (f, k) in faces.iter().zip(local) {
        for a in 0..3 {
            let ia = slot[f[a]];
            if ia == usize::MAX {
                continue;
            }
            for b in 0..3 {
                match pinned[f[b]] {
                    Some(p) => {
                        rhs_u[ia] -= k[a][b] * p[0];
                        rhs_v[ia] -= k[a][b] * p[1];
                    }
                    None => trip.push((ia, slot[f[b]], k[a][b])),
                }
            }
        }
    }
    let sol = if free > 0 {
        let a = CsrMatrix::from_triplets(free, trip);
        solve_spd(&a, &[rhs_u, rhs_v])?
    } else {
        vec![Vec::new(), Vec::new()]
    };
    Ok((0..vertex_count)
        .map(|v| match pinned[v] {
            Some(p) => p,
            None => [sol[0][slot[v]], sol[1][slot[v]]],
        })
        .collect())
}

/// Reconstructs the piecewise-linear map whose Beltrami coefficient matches
/// `field` on the `source` triangulation, subject to the pinned positions.
pub fn linear_beltrami_solve(
    faces: &[[usize; 3]],
    source: &[Point2],
    field: &BeltramiField,
    pins: &[(usize, Point2)],
) -> Result<Vec<Point2>> {
    if field.len() != faces.len() {
        return Err(Error::InvalidArgument(format!("field has {} entries for {} faces", field.len(), faces.len())));
    }
    if pins.len() < 2 {
        return Err(Error::ConstraintInsufficient(pins.len()));
    }
    if let Some((face, m)) = field.mu.iter().enumerate().find(|(_, m)| !(m.norm() < 1.0)) {
        return Err(Error::MuOutOfRange { face, modulus: m.norm() });
    }
    let local = par::map_range(faces.len(), |fi| {
        let f = faces[fi];
        let p = [&source[f[0]], &source[f[1]], &source[f[2]]];
        if !(signed_area2(p[0], p[1], p[2]).abs() > 0.0) {
            return Err(Error::DegenerateSourceFace(fi));
        }
        let (al, be, ga) = lbs_coefficients(field.mu[fi]);
        Ok(local_stiffness(p, al, be, ga))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    solve_dirichlet(source.len(), faces, &local, pins)
}

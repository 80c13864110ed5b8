use crate::error::{Error, Result};
use crate::flatten::DiskParameterization;
use crate::mesh::CorticalMesh;
use crate::Point2;

/// A retinotopic map on a flattened cortical patch.
///
/// `visual` holds Cartesian visual-field coordinates in degrees
/// (`x = ecc cos(angle)`, `y = ecc sin(angle)`, angle counter-clockwise from
/// the positive x axis). The same type serves as subject and template.
#[derive(Debug, Clone, PartialEq)]
pub struct RetinotopicMap {
    pub mesh: CorticalMesh,
    pub param: DiskParameterization,
    pub visual: Vec<Point2>,
    /// pRF size sigma in degrees.
    pub prf_size: Vec<f64>,
    /// Variance explained R^2 of the pRF fit.
    pub variance_explained: Vec<f64>,
}

impl RetinotopicMap {
    pub fn new(
        mesh: CorticalMesh,
        param: DiskParameterization,
        visual: Vec<Point2>,
        prf_size: Vec<f64>,
        variance_explained: Vec<f64>,
    ) -> Result<Self> {
        let n = mesh.vertex_count();
        for (name, len) in [
            ("uv", param.uv.len()),
            ("visual", visual.len()),
            ("prf_size", prf_size.len()),
            ("variance_explained", variance_explained.len()),
        ] {
            if len != n {
                return Err(Error::InvalidArgument(format!("{name} has {len} entries for {n} vertices")));
            }
        }
        for i in 0..n {
            if !(visual[i][0].is_finite() && visual[i][1].is_finite()) {
                return Err(Error::InvalidArgument(format!("vertex {i} has non-finite visual coordinates")));
            }
            if variance_explained[i] > 0.0 && !(prf_size[i] > 0.0) {
                return Err(Error::InvalidArgument(format!("vertex {i} has R^2 > 0 but sigma {}", prf_size[i])));
            }
        }
        Ok(Self { mesh, param, visual, prf_size, variance_explained })
    }

    pub fn vertex_count(&self) -> usize {
        self.mesh.vertex_count()
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        self.mesh.faces()
    }

    pub fn eccentricity(&self, i: usize) -> f64 {
        self.visual[i][0].hypot(self.visual[i][1])
    }

    /// Polar angle in degrees, counter-clockwise from +x, in (-180, 180].
    pub fn polar_angle_deg(&self, i: usize) -> f64 {
        polar_angle_deg(self.visual[i])
    }
}

/// Polar angle of a visual-field point in degrees, in (-180, 180].
pub fn polar_angle_deg(p: Point2) -> f64 {
    let a = p[1].atan2(p[0]).to_degrees();
    if a <= -180.0 {
        a + 360.0
    } else {
        a
    }
}

/// Cartesian coordinates from eccentricity and polar angle (degrees).
pub fn from_polar_deg(ecc: f64, angle_deg: f64) -> Point2 {
    let t = angle_deg.to_radians();
    [ecc * t.cos(), ecc * t.sin()]
}

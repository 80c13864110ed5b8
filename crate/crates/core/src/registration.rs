//! Diffeomorphic registration of a subject map onto a template.
//!
//! Each outer iteration takes a damped Gauss-Newton step on the energy,
//! then projects the stepped map back onto the diffeomorphisms of the disk:
//! its Beltrami coefficient is clamped to `|mu| <= 1 - epsilon` and the map
//! is rebuilt by the linear Beltrami solver with the boundary pinned to the
//! unit circle. A trial is accepted only if it is flip-free and lowers the
//! total energy; otherwise the step is shrunk.

use std::collections::HashMap;
use std::str::FromStr;

use crate::beltrami::{clamp_beltrami, compute_beltrami, linear_beltrami_solve, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::interp::{TemplateSample, TemplateSampler};
use crate::mesh::count_flipped;
use crate::retinotopy::RetinotopicMap;
use crate::sparse::{solve_spd, CsrMatrix};
use crate::{par, Point2};

/// What the smoothness term measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SmoothConvention {
    /// Dirichlet energy of the displacement `f - id`; zero at the identity.
    #[default]
    Displacement,
    /// Dirichlet energy of `f` itself.
    Absolute,
}

impl FromStr for SmoothConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "displacement" => Ok(Self::Displacement),
            "absolute" => Ok(Self::Absolute),
            other => Err(Error::InvalidArgument(format!("unknown smoothness convention `{other}`"))),
        }
    }
}

impl std::fmt::Display for SmoothConvention {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Displacement => "displacement",
            Self::Absolute => "absolute",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationConfig {
    pub smoothness_weight: f64,
    pub epsilon: f64,
    pub max_outer_iterations: usize,
    /// Stop once the relative decrease of the total energy falls below this.
    pub energy_tolerance: f64,
    /// Largest vertex displacement of a trial step, in disk units.
    pub step_size: f64,
    pub backtrack_factor: f64,
    pub max_halvings: usize,
    /// Vertices with R² below this carry zero weight.
    pub r2_threshold: f64,
    pub smooth_convention: SmoothConvention,
    /// Levenberg-Marquardt damping relative to the mean Hessian diagonal.
    pub damping: f64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            smoothness_weight: 0.1,
            epsilon: DEFAULT_EPSILON,
            max_outer_iterations: 200,
            energy_tolerance: 1e-6,
            step_size: 0.05,
            backtrack_factor: 0.5,
            max_halvings: 20,
            r2_threshold: 0.1,
            smooth_convention: SmoothConvention::Displacement,
            damping: 1e-6,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if !(self.smoothness_weight > 0.0 && self.smoothness_weight.is_finite()) {
            return bad("smoothness_weight must be positive");
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad("epsilon must lie in (0, 1)");
        }
        if !(self.energy_tolerance > 0.0) {
            return bad("energy_tolerance must be positive");
        }
        if !(self.step_size > 0.0) {
            return bad("step_size must be positive");
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad("backtrack_factor must lie in (0, 1)");
        }
        if !(self.damping >= 0.0) {
            return bad("damping must be non-negative");
        }
        Ok(())
    }

    /// Data weight of a vertex with variance explained `r2`.
    pub fn weight(&self, r2: f64) -> f64 {
        if r2 >= self.r2_threshold {
            r2.max(0.0)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyTerms {
    pub data: f64,
    pub smooth: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    /// Target position in the template disk of every subject vertex.
    pub f: Vec<Point2>,
    /// Energy of the initial map followed by every accepted iterate.
    pub energy_trace: Vec<EnergyTerms>,
    pub final_mu_max: f64,
    pub converged: bool,
}

impl RegistrationResult {
    pub fn iterations(&self) -> usize {
        self.energy_trace.len().saturating_sub(1)
    }
}

/// Cotangent edge weights `(cot a + cot b) / 2` of a planar triangulation,
/// so that `sum w_ij |u_i - u_j|^2` is the Dirichlet energy of `u`.
fn planar_cotangent_weights(faces: &[[usize; 3]], uv: &[Point2]) -> Vec<(usize, usize, f64)> {
    let mut w: HashMap<(usize, usize), f64> = HashMap::new();
    for f in faces {
        for k in 0..3 {
            let (o, a, b) = (uv[f[k]], uv[f[(k + 1) % 3]], uv[f[(k + 2) % 3]]);
            let e1 = [a[0] - o[0], a[1] - o[1]];
            let e2 = [b[0] - o[0], b[1] - o[1]];
            let cot = (e1[0] * e2[0] + e1[1] * e2[1]) / (e1[0] * e2[1] - e1[1] * e2[0]).abs();
            let key = (f[(k + 1) % 3].min(f[(k + 2) % 3]), f[(k + 1) % 3].max(f[(k + 2) % 3]));
            *w.entry(key).or_insert(0.0) += 0.5 * cot;
        }
    }
    let mut out: Vec<_> = w.into_iter().map(|((i, j), v)| (i, j, v)).collect();
    out.sort_unstable_by_key(|&(i, j, _)| (i, j));
    out
}

/// Precomputed pieces shared by every energy evaluation of one run.
struct Problem<'a> {
    subject: &'a RetinotopicMap,
    sampler: TemplateSampler<'a>,
    config: &'a RegistrationConfig,
    edges: Vec<(usize, usize, f64)>,
    weights: Vec<f64>,
    is_boundary: Vec<bool>,
}

impl<'a> Problem<'a> {
    fn new(subject: &'a RetinotopicMap, template: &'a RetinotopicMap, config: &'a RegistrationConfig) -> Self {
        let n = subject.vertex_count();
        let mut is_boundary = vec![false; n];
        for &b in &subject.param.boundary_ids {
            is_boundary[b] = true;
        }
        Self {
            subject,
            sampler: TemplateSampler::new(template),
            config,
            edges: planar_cotangent_weights(subject.faces(), &subject.param.uv),
            weights: subject.variance_explained.iter().map(|&r| config.weight(r)).collect(),
            is_boundary,
        }
    }

    fn displacement(&self, f: &[Point2]) -> Vec<Point2> {
        match self.config.smooth_convention {
            SmoothConvention::Displacement => {
                f.iter().zip(&self.subject.param.uv).map(|(a, b)| [a[0] - b[0], a[1] - b[1]]).collect()
            }
            SmoothConvention::Absolute => f.to_vec(),
        }
    }

    fn energy_with(&self, f: &[Point2], samples: &[TemplateSample]) -> EnergyTerms {
        let vis = &self.subject.visual;
        let mut data = 0.0;
        for i in 0..f.len() {
            if self.weights[i] > 0.0 && samples[i].valid {
                let r = [vis[i][0] - samples[i].visual[0], vis[i][1] - samples[i].visual[1]];
                data += self.weights[i] * (r[0] * r[0] + r[1] * r[1]);
            }
        }
        data /= f.len() as f64;
        let d = self.displacement(f);
        let mut dirichlet = 0.0;
        for &(i, j, w) in &self.edges {
            dirichlet += w * ((d[i][0] - d[j][0]).powi(2) + (d[i][1] - d[j][1]).powi(2));
        }
        let smooth = self.config.smoothness_weight * dirichlet;
        EnergyTerms { data, smooth, total: data + smooth }
    }

    fn energy(&self, f: &[Point2]) -> (EnergyTerms, Vec<TemplateSample>) {
        let samples = self.sampler.sample_all(f);
        (self.energy_with(f, &samples), samples)
    }

    /// Damped Gauss-Newton direction. Boundary vertices move only along the
    /// circle's tangent, which also removes the translation null space of
    /// the smoothness term.
    fn direction(&self, f: &[Point2], samples: &[TemplateSample]) -> Result<(Vec<Point2>, f64)> {
        let n = f.len();
        let lambda = self.config.smoothness_weight;
        // dof basis per vertex: (first dof, directions)
        let mut base = vec![0usize; n];
        let mut dirs: Vec<[Option<Point2>; 2]> = Vec::with_capacity(n);
        let mut m = 0;
        for v in 0..n {
            base[v] = m;
            if self.is_boundary[v] {
                let r = f[v][0].hypot(f[v][1]);
                dirs.push([Some([-f[v][1] / r, f[v][0] / r]), None]);
                m += 1;
            } else {
                dirs.push([Some([1.0, 0.0]), Some([0.0, 1.0])]);
                m += 2;
            }
        }

        let vis = &self.subject.visual;
        // per-vertex data Hessian block and gradient
        let data_terms = par::map_range(n, |i| {
            let (w, s) = (self.weights[i] / n as f64, &samples[i]);
            match (w > 0.0 && s.valid, s.face) {
                (true, Some(face)) => {
                    let j = self.sampler.jacobian(face);
                    let r = [vis[i][0] - s.visual[0], vis[i][1] - s.visual[1]];
                    let h = [
                        [
                            2.0 * w * (j[0][0] * j[0][0] + j[1][0] * j[1][0]),
                            2.0 * w * (j[0][0] * j[0][1] + j[1][0] * j[1][1]),
                        ],
                        [
                            2.0 * w * (j[0][1] * j[0][0] + j[1][1] * j[1][0]),
                            2.0 * w * (j[0][1] * j[0][1] + j[1][1] * j[1][1]),
                        ],
                    ];
                    let g =
                        [-2.0 * w * (j[0][0] * r[0] + j[1][0] * r[1]), -2.0 * w * (j[0][1] * r[0] + j[1][1] * r[1])];
                    (h, g)
                }
                _ => ([[0.0; 2]; 2], [0.0; 2]),
            }
        });

        let d = self.displacement(f);
        let mut lap_diag = vec![0.0; n];
        let mut grad: Vec<Point2> = data_terms.iter().map(|t| t.1).collect();
        let mut trip = Vec::with_capacity(8 * self.edges.len() + 4 * n);
        for &(i, j, w) in &self.edges {
            let c = 2.0 * lambda * w;
            lap_diag[i] += c;
            lap_diag[j] += c;
            let diff = [d[i][0] - d[j][0], d[i][1] - d[j][1]];
            grad[i][0] += c * diff[0];
            grad[i][1] += c * diff[1];
            grad[j][0] -= c * diff[0];
            grad[j][1] -= c * diff[1];
            for (a, b) in [(i, j), (j, i)] {
                for (pa, da) in dirs[a].iter().enumerate() {
                    for (pb, db) in dirs[b].iter().enumerate() {
                        if let (Some(da), Some(db)) = (da, db) {
                            trip.push((base[a] + pa, base[b] + pb, -c * (da[0] * db[0] + da[1] * db[1])));
                        }
                    }
                }
            }
        }
        let mut rhs = vec![0.0; m];
        let mut diag_sum = 0.0;
        for v in 0..n {
            let mut h = data_terms[v].0;
            h[0][0] += lap_diag[v];
            h[1][1] += lap_diag[v];
            for (pa, da) in dirs[v].iter().enumerate() {
                let Some(da) = da else { continue };
                rhs[base[v] + pa] = -(da[0] * grad[v][0] + da[1] * grad[v][1]);
                for (pb, db) in dirs[v].iter().enumerate() {
                    let Some(db) = db else { continue };
                    let val = da[0] * (h[0][0] * db[0] + h[0][1] * db[1]) + da[1] * (h[1][0] * db[0] + h[1][1] * db[1]);
                    if pa == pb {
                        diag_sum += val;
                    }
                    trip.push((base[v] + pa, base[v] + pb, val));
                }
            }
        }
        let grad_norm = rhs.iter().map(|g| g * g).sum::<f64>().sqrt();
        let shift = self.config.damping * diag_sum / m as f64 + f64::MIN_POSITIVE;
        for p in 0..m {
            trip.push((p, p, shift));
        }
        let h = CsrMatrix::from_triplets(m, trip);
        let x = solve_spd(&h, &[rhs])?.pop().unwrap();
        let step = (0..n)
            .map(|v| {
                let mut s = [0.0; 2];
                for (p, dv) in dirs[v].iter().enumerate() {
                    if let Some(dv) = dv {
                        s[0] += x[base[v] + p] * dv[0];
                        s[1] += x[base[v] + p] * dv[1];
                    }
                }
                s
            })
            .collect();
        Ok((step, grad_norm))
    }

    /// Projects a stepped map onto flip-free disk diffeomorphisms; `None`
    /// if the projection itself fails or leaves flipped faces.
    fn project(&self, stepped: &mut [Point2]) -> Option<Vec<Point2>> {
        let uv = &self.subject.param.uv;
        let faces = self.subject.faces();
        let mut pins = Vec::with_capacity(self.subject.param.boundary_ids.len());
        for &b in &self.subject.param.boundary_ids {
            let r = stepped[b][0].hypot(stepped[b][1]);
            stepped[b] = [stepped[b][0] / r, stepped[b][1] / r];
            pins.push((b, stepped[b]));
        }
        let mu = compute_beltrami(faces, uv, stepped).ok()?;
        let mu = clamp_beltrami(&mu, self.config.epsilon);
        let f = linear_beltrami_solve(faces, uv, &mu, &pins).ok()?;
        (f.iter().all(|p| p[0].is_finite() && p[1].is_finite()) && count_flipped(&f, faces) == 0).then_some(f)
    }
}

fn check_inputs(subject: &RetinotopicMap, template: &RetinotopicMap) -> Result<()> {
    if count_flipped(&subject.param.uv, subject.faces()) != 0 {
        return Err(Error::InvalidArgument("subject parameterization has flipped faces".into()));
    }
    if count_flipped(&template.param.uv, template.faces()) != 0 {
        return Err(Error::InvalidArgument("template parameterization has flipped faces".into()));
    }
    Ok(())
}

/// Data, smoothness and total energy of the map `f` from the subject disk
/// into the template disk.
///
/// The data term is divided by the vertex count so that the smoothness
/// weight means the same thing at every mesh resolution. Vertices whose
/// image falls off the template are left out of it.
pub fn registration_energy(
    subject: &RetinotopicMap,
    template: &RetinotopicMap,
    f: &[Point2],
    config: &RegistrationConfig,
) -> Result<EnergyTerms> {
    if f.len() != subject.vertex_count() {
        return Err(Error::InvalidArgument(format!(
            "map has {} points for {} vertices",
            f.len(),
            subject.vertex_count()
        )));
    }
    Ok(Problem::new(subject, template, config).energy(f).0)
}

pub fn register(
    subject: &RetinotopicMap,
    template: &RetinotopicMap,
    config: &RegistrationConfig,
) -> Result<RegistrationResult> {
    config.validate()?;
    check_inputs(subject, template)?;
    let problem = Problem::new(subject, template, config);
    let faces = subject.faces();

    let mut f = subject.param.uv.clone();
    let (mut current, mut samples) = problem.energy(&f);
    let mut trace = vec![current];
    let mut converged = false;

    for iteration in 0..config.max_outer_iterations {
        let (dir, grad_norm) = problem.direction(&f, &samples)?;
        if current.total == 0.0 || grad_norm <= 1e-14 * (1.0 + current.total) {
            converged = true;
            break;
        }
        let longest = dir.iter().map(|d| d[0].hypot(d[1])).fold(0.0, f64::max);
        let mut alpha = if longest > config.step_size { config.step_size / longest } else { 1.0 };
        let mut accepted = None;
        for _ in 0..=config.max_halvings {
            let mut trial: Vec<Point2> =
                f.iter().zip(&dir).map(|(p, d)| [p[0] + alpha * d[0], p[1] + alpha * d[1]]).collect();
            if let Some(candidate) = problem.project(&mut trial) {
                let (e, s) = problem.energy(&candidate);
                if e.total < current.total {
                    accepted = Some((candidate, e, s));
                    break;
                }
            }
            alpha *= config.backtrack_factor;
        }
        let Some((candidate, e, s)) = accepted else {
            if iteration == 0 {
                return Err(Error::NoProgress);
            }
            // the line search stalled: no descent left at this resolution
            converged = true;
            break;
        };
        let relative = (current.total - e.total) / current.total;
        f = candidate;
        current = e;
        samples = s;
        trace.push(e);
        if relative < config.energy_tolerance {
            converged = true;
            break;
        }
    }

    let final_mu_max = compute_beltrami(faces, &subject.param.uv, &f)?.max_modulus();
    Ok(RegistrationResult { f, energy_trace: trace, final_mu_max, converged })
}

/// Subject map with template values pulled back through a registration.
#[derive(Debug, Clone, PartialEq)]
pub struct RegisteredMap {
    pub map: RetinotopicMap,
    /// Vertices whose image could not be interpolated; they keep their
    /// original values.
    pub invalid: Vec<usize>,
}

pub fn apply_registration(subject: &RetinotopicMap, template: &RetinotopicMap, f: &[Point2]) -> Result<RegisteredMap> {
    if f.len() != subject.vertex_count() {
        return Err(Error::InvalidArgument(format!(
            "map has {} points for {} vertices",
            f.len(),
            subject.vertex_count()
        )));
    }
    let samples = TemplateSampler::new(template).sample_all(f);
    let mut map = subject.clone();
    let mut invalid = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        if s.valid {
            map.visual[i] = s.visual;
            map.prf_size[i] = s.prf_size;
        } else {
            invalid.push(i);
        }
    }
    Ok(RegisteredMap { map, invalid })
}

//! Synthetic retinotopic data with known ground truth.
//!
//! The template is a log-polar schematic on a concentric-ring disk mesh:
//! disk radius `r` maps to eccentricity `ecc_min * (ecc_max / ecc_min)^r`
//! and disk angle maps to polar angle. Subjects are the template pulled back
//! through a random smooth quasiconformal deformation of the disk, plus
//! isotropic visual-coordinate noise.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::beltrami::{compute_beltrami, linear_beltrami_solve, BeltramiField};
use crate::error::{Error, Result};
use crate::flatten::DiskParameterization;
use crate::interp::TemplateSampler;
use crate::mesh::CorticalMesh;
use crate::prf::{canonical_hrf, predict_bold_batch, BoldSeries, HrfParams, Stimulus};
use crate::retinotopy::{from_polar_deg, RetinotopicMap};
use crate::{Point2, Point3};

/// Highest total degree of the `z^j conj(z)^k` terms in random Beltrami
/// fields.
pub const MU_HARMONIC_ORDER: usize = 3;

/// Largest prescribed modulus handed to the solver.
const MAX_PRESCRIBED: f64 = 0.99;

/// Variance-explained profile `R^2 = base * exp(-decay * ecc)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct R2Profile {
    pub base: f64,
    pub decay: f64,
}

impl Default for R2Profile {
    fn default() -> Self {
        Self { base: 0.8, decay: 0.02 }
    }
}

impl R2Profile {
    pub fn at(&self, ecc: f64) -> f64 {
        self.base * (-self.decay * ecc).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    /// Target vertex count of the disk mesh.
    pub mesh_resolution: usize,
    /// Eccentricity at the disk centre and rim, degrees.
    pub ecc_range: [f64; 2],
    /// Polar-angle span covered by one band, degrees.
    pub wedge_deg: f64,
    /// 1 for a single wedge, 3 for mirrored bands.
    pub bands: usize,
    pub sigma_intercept: f64,
    pub sigma_slope: f64,
    pub patch_radius_mm: f64,
    pub bump_amplitude_mm: f64,
    pub deformation_mu_max: f64,
    pub visual_noise_sd: f64,
    pub r2_profile: R2Profile,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            mesh_resolution: 5000,
            ecc_range: [0.5, 40.0],
            wedge_deg: 360.0,
            bands: 1,
            sigma_intercept: 0.1,
            sigma_slope: 0.25,
            patch_radius_mm: 30.0,
            bump_amplitude_mm: 3.0,
            deformation_mu_max: 0.4,
            visual_noise_sd: 0.5,
            r2_profile: R2Profile::default(),
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.deformation_mu_max >= 0.0 && self.deformation_mu_max < 1.0) {
            return Err(Error::InvalidArgument(format!("mu_max {} not in [0, 1)", self.deformation_mu_max)));
        }
        if !(self.ecc_range[0] > 0.0 && self.ecc_range[1] > self.ecc_range[0]) {
            return Err(Error::InvalidArgument(format!("bad eccentricity range {:?}", self.ecc_range)));
        }
        if !(self.bands == 1 || self.bands == 3) {
            return Err(Error::InvalidArgument(format!("bands must be 1 or 3, got {}", self.bands)));
        }
        if !(self.visual_noise_sd >= 0.0) || self.mesh_resolution < 7 {
            return Err(Error::InvalidArgument("invalid noise level or mesh resolution".into()));
        }
        Ok(())
    }
}

/// Independent stream for one generator stage.
fn stage_rng(seed: u64, stage: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage);
    rng
}

/// Concentric-ring triangulation of the unit disk: one centre vertex and
/// `6k` equally spaced vertices on ring `k` at radius `k / rings`.
/// Vertex 0 is the centre; the first vertex of each ring lies at angle 0.
pub fn ring_disk_mesh(rings: usize) -> (Vec<Point2>, Vec<[usize; 3]>) {
    assert!(rings >= 1);
    let mut pts = vec![[0.0, 0.0]];
    let mut start = vec![0usize];
    for k in 1..=rings {
        start.push(pts.len());
        let n = 6 * k;
        let r = k as f64 / rings as f64;
        for j in 0..n {
            let t = std::f64::consts::TAU * j as f64 / n as f64;
            let (s, c) = t.sin_cos();
            pts.push(if k == rings { [c, s] } else { [r * c, r * s] });
        }
    }
    let mut faces = Vec::new();
    let mut push = |a: usize, b: usize, c: usize, pts: &[Point2]| {
        if crate::mesh::signed_area2(&pts[a], &pts[b], &pts[c]) > 0.0 {
            faces.push([a, b, c]);
        } else {
            faces.push([a, c, b]);
        }
    };
    for j in 0..6 {
        push(0, 1 + j, 1 + (j + 1) % 6, &pts);
    }
    for k in 2..=rings {
        let (ni, no) = (6 * (k - 1), 6 * k);
        let (si, so) = (start[k - 1], start[k]);
        let (mut i, mut j) = (0, 0);
        while i < ni || j < no {
            let ai = (i + 1) as f64 / ni as f64;
            let bj = (j + 1) as f64 / no as f64;
            if j == no || (i < ni && ai < bj) {
                push(si + i % ni, so + j % no, si + (i + 1) % ni, &pts);
                i += 1;
            } else {
                push(si + i % ni, so + j % no, so + (j + 1) % no, &pts);
                j += 1;
            }
        }
    }
    (pts, faces)
}

/// Ring count whose vertex count `1 + 3K(K+1)` is closest to `target`.
pub fn rings_for_resolution(target: usize) -> usize {
    let k = ((target as f64 - 1.0) / 3.0).max(0.0).sqrt();
    let lo = (k.floor() as usize).max(1);
    let count = |k: usize| 1 + 3 * k * (k + 1);
    if count(lo + 1).abs_diff(target) < count(lo).abs_diff(target) {
        lo + 1
    } else {
        lo
    }
}

/// Smooth seeded height field, zero on the rim.
fn bump_field(seed: u64) -> impl Fn(Point2) -> f64 {
    let mut rng = stage_rng(seed, 1);
    let bumps: Vec<(Point2, f64, f64)> = (0..4)
        .map(|_| {
            let c = [rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6)];
            (c, rng.random_range(-1.0..1.0), rng.random_range(0.2..0.45))
        })
        .collect();
    move |p: Point2| {
        let rim = 1.0 - (p[0] * p[0] + p[1] * p[1]);
        bumps
            .iter()
            .map(|(c, a, w)| a * (-((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)) / (2.0 * w * w)).exp())
            .sum::<f64>()
            * rim
    }
}

/// Polar angle (degrees) for a disk angle in (-pi, pi].
fn polar_angle_for(spec: &SyntheticSpec, theta: f64) -> f64 {
    let u = (theta + std::f64::consts::PI) / std::f64::consts::TAU;
    let half = 0.5 * spec.wedge_deg;
    if spec.bands == 1 {
        -half + spec.wedge_deg * u
    } else {
        let scaled = u * spec.bands as f64;
        let band = (scaled.floor() as usize).min(spec.bands - 1);
        let t = scaled - band as f64;
        let t = if band.is_multiple_of(2) { t } else { 1.0 - t };
        -half + spec.wedge_deg * t
    }
}

/// Visual coordinate of the schematic template at a disk point.
pub fn template_visual(spec: &SyntheticSpec, p: Point2) -> Point2 {
    let r = p[0].hypot(p[1]).min(1.0);
    let theta = p[1].atan2(p[0]);
    let ecc = spec.ecc_range[0] * (spec.ecc_range[1] / spec.ecc_range[0]).powf(r);
    from_polar_deg(ecc, polar_angle_for(spec, theta))
}

/// Schematic template map on a bumpy disk patch.
pub fn synth_template(spec: &SyntheticSpec) -> Result<RetinotopicMap> {
    spec.validate()?;
    let (uv, faces) = ring_disk_mesh(rings_for_resolution(spec.mesh_resolution));
    let bump = bump_field(spec.seed);
    let verts: Vec<Point3> = uv
        .iter()
        .map(|&p| [spec.patch_radius_mm * p[0], spec.patch_radius_mm * p[1], spec.bump_amplitude_mm * bump(p)])
        .collect();
    let mesh = CorticalMesh::new(verts, faces)?;
    let param = DiskParameterization::from_mesh(&mesh, uv.clone())?;
    let visual: Vec<Point2> = uv.iter().map(|&p| template_visual(spec, p)).collect();
    let sigma = visual.iter().map(|v| spec.sigma_intercept + spec.sigma_slope * v[0].hypot(v[1])).collect();
    let n = uv.len();
    RetinotopicMap::new(mesh, param, visual, sigma, vec![1.0; n])
}

/// A ground-truth deformation of a disk parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct Deformation {
    /// Deformed position of every vertex; the ideal registration target.
    pub forward: Vec<Point2>,
    /// Beltrami coefficient prescribed to the solver.
    pub prescribed: BeltramiField,
    /// Beltrami coefficient of the reconstructed map.
    pub realized: BeltramiField,
}

impl Deformation {
    pub fn identity(param: &DiskParameterization, face_count: usize) -> Self {
        Self {
            forward: param.uv.clone(),
            prescribed: BeltramiField::zeros(face_count),
            realized: BeltramiField::zeros(face_count),
        }
    }
}

/// Random smooth Beltrami field `sum c_jk z^j conj(z)^k` on face centroids,
/// normalized to a maximum modulus of one.
fn random_mu_shape(faces: &[[usize; 3]], uv: &[Point2], seed: u64) -> Vec<Complex64> {
    let mut rng = stage_rng(seed, 2);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut coeffs = Vec::new();
    for j in 0..=MU_HARMONIC_ORDER {
        for k in 0..=(MU_HARMONIC_ORDER - j) {
            let c = Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
            coeffs.push((j as i32, k as i32, c));
        }
    }
    let mu: Vec<Complex64> = faces
        .iter()
        .map(|f| {
            let z = Complex64::new(
                (uv[f[0]][0] + uv[f[1]][0] + uv[f[2]][0]) / 3.0,
                (uv[f[0]][1] + uv[f[1]][1] + uv[f[2]][1]) / 3.0,
            );
            coeffs.iter().map(|&(j, k, c)| c * z.powi(j) * z.conj().powi(k)).sum()
        })
        .collect();
    let m = mu.iter().map(|m| m.norm()).fold(0.0, f64::max);
    mu.into_iter().map(|v| v / m).collect()
}

/// Quasiconformal self-map of the disk with the boundary fixed whose
/// realized Beltrami coefficient satisfies `max |mu| <= mu_max`, as close
/// to the bound as a prescribed modulus below one allows.
pub fn synth_deformation(
    faces: &[[usize; 3]],
    param: &DiskParameterization,
    mu_max: f64,
    seed: u64,
) -> Result<Deformation> {
    if !(0.0..1.0).contains(&mu_max) {
        return Err(Error::InvalidArgument(format!("mu_max {mu_max} not in [0, 1)")));
    }
    if mu_max == 0.0 {
        return Ok(Deformation::identity(param, faces.len()));
    }
    let shape = random_mu_shape(faces, &param.uv, seed);
    let pins: Vec<(usize, Point2)> = param.boundary_ids.iter().map(|&b| (b, param.uv[b])).collect();
    // pinning the boundary makes the realized coefficient smaller than the
    // prescribed one and not linear in the amplitude, so bisect for the
    // largest amplitude whose realized max |mu| stays within the bound
    let solve = |amplitude: f64| -> Result<Deformation> {
        let prescribed = BeltramiField::new(shape.iter().map(|m| m * amplitude).collect());
        let forward = linear_beltrami_solve(faces, &param.uv, &prescribed, &pins)?;
        let realized = compute_beltrami(faces, &param.uv, &forward)?;
        Ok(Deformation { forward, prescribed, realized })
    };
    let feasible =
        |d: &Deformation| d.realized.max_modulus() <= mu_max && crate::mesh::count_flipped(&d.forward, faces) == 0;
    let (mut lo, mut hi) = (0.0, MAX_PRESCRIBED);
    let top = solve(hi)?;
    if feasible(&top) {
        return Ok(top);
    }
    let mut best: Option<Deformation> = None;
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        let d = solve(mid)?;
        if feasible(&d) {
            lo = mid;
            let done = d.realized.max_modulus() >= 0.995 * mu_max;
            best = Some(d);
            if done {
                break;
            }
        } else {
            hi = mid;
        }
    }
    if let Some(d) = best {
        return Ok(d);
    }
    Err(Error::SolverFailure("could not meet the requested mu bound".into()))
}

/// Subject map: template visual field sampled at the deformed positions,
/// plus isotropic Gaussian noise of `visual_noise_sd` degrees per axis.
pub fn synth_subject(
    template: &RetinotopicMap,
    deformation: &Deformation,
    visual_noise_sd: f64,
    r2_profile: R2Profile,
    seed: u64,
) -> Result<RetinotopicMap> {
    let truth = ground_truth_visual(template, deformation)?;
    let mut rng = stage_rng(seed, 3);
    let noise = Normal::new(0.0, visual_noise_sd.max(0.0)).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut visual = Vec::with_capacity(truth.len());
    let mut sigma = Vec::with_capacity(truth.len());
    let mut r2 = Vec::with_capacity(truth.len());
    for (v, s) in truth {
        let (nx, ny) =
            if visual_noise_sd > 0.0 { (noise.sample(&mut rng), noise.sample(&mut rng)) } else { (0.0, 0.0) };
        visual.push([v[0] + nx, v[1] + ny]);
        sigma.push(s);
        r2.push(r2_profile.at(v[0].hypot(v[1])));
    }
    RetinotopicMap::new(template.mesh.clone(), template.param.clone(), visual, sigma, r2)
}

/// Noise-free subject visual coordinates and pRF sizes.
pub fn ground_truth_visual(template: &RetinotopicMap, deformation: &Deformation) -> Result<Vec<(Point2, f64)>> {
    let sampler = TemplateSampler::new(template);
    sampler
        .sample_all(&deformation.forward)
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            if s.valid {
                Ok((s.visual, s.prf_size))
            } else {
                Err(Error::InvalidArgument(format!("deformed vertex {i} left the template disk")))
            }
        })
        .collect()
}

/// Bar sweeps at `n_sweeps` orientations `k * 180 / n_sweeps` degrees, each
/// followed by its reverse. The bar is `extent / 8` wide.
pub fn synth_bar_stimulus(
    n_sweeps: usize,
    frames_per_sweep: usize,
    extent_deg: f64,
    resolution: usize,
    tr: f64,
) -> Result<Stimulus> {
    if n_sweeps == 0 || frames_per_sweep == 0 || resolution == 0 {
        return Err(Error::InvalidArgument("sweep counts and resolution must be positive".into()));
    }
    let width = extent_deg / 8.0;
    let half = 0.5 * extent_deg;
    let probe = Stimulus::new(vec![vec![0; resolution * resolution]], resolution, resolution, extent_deg, tr)?;
    let mut frames = Vec::with_capacity(n_sweeps * 2 * frames_per_sweep);
    for k in 0..n_sweeps {
        let theta = std::f64::consts::PI * k as f64 / n_sweeps as f64;
        let n = [theta.cos(), theta.sin()];
        let reach = half * (n[0].abs() + n[1].abs());
        let positions: Vec<f64> = (0..frames_per_sweep)
            .map(|s| {
                if frames_per_sweep == 1 {
                    0.0
                } else {
                    -reach + 2.0 * reach * s as f64 / (frames_per_sweep - 1) as f64
                }
            })
            .collect();
        for dir in [1.0, -1.0] {
            for &s in &positions {
                let centre = dir * s;
                let mut frame = vec![0u8; resolution * resolution];
                for r in 0..resolution {
                    for c in 0..resolution {
                        let p = probe.pixel_position(r, c);
                        if (p[0] * n[0] + p[1] * n[1] - centre).abs() <= 0.5 * width {
                            frame[r * resolution + c] = 1;
                        }
                    }
                }
                frames.push(frame);
            }
        }
    }
    Stimulus::new(frames, resolution, resolution, extent_deg, tr)
}

/// Settings for synthetic BOLD series.
#[derive(Debug, Clone, PartialEq)]
pub struct BoldSpec {
    pub n_sweeps: usize,
    pub frames_per_sweep: usize,
    pub extent_deg: f64,
    pub resolution: usize,
    pub tr: f64,
    pub hrf: HrfParams,
    pub hrf_duration: f64,
    pub gain: f64,
    pub baseline: f64,
    pub noise_sd: f64,
}

impl Default for BoldSpec {
    fn default() -> Self {
        Self {
            n_sweeps: 4,
            frames_per_sweep: 16,
            extent_deg: 80.0,
            resolution: 81,
            tr: 1.0,
            hrf: HrfParams::default(),
            hrf_duration: 32.0,
            gain: 1.0,
            baseline: 0.0,
            noise_sd: 1.0,
        }
    }
}

/// Noise-free and noisy BOLD series from ground-truth pRFs.
pub fn synth_bold(
    stimulus: &Stimulus,
    prfs: &[(f64, f64, f64)],
    spec: &BoldSpec,
    seed: u64,
) -> Result<(BoldSeries, BoldSeries)> {
    let hrf = canonical_hrf(&spec.hrf, stimulus.tr(), spec.hrf_duration);
    let clean: Vec<Vec<f64>> = predict_bold_batch(stimulus, prfs, &hrf)?
        .into_iter()
        .map(|s| s.into_iter().map(|v| spec.gain * v + spec.baseline).collect())
        .collect();
    let mut rng = stage_rng(seed, 4);
    let noise = Normal::new(0.0, spec.noise_sd.max(0.0)).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let noisy = clean
        .iter()
        .map(|s| s.iter().map(|v| if spec.noise_sd > 0.0 { v + noise.sample(&mut rng) } else { *v }).collect())
        .collect();
    Ok((BoldSeries { samples: clean, tr: stimulus.tr() }, BoldSeries { samples: noisy, tr: stimulus.tr() }))
}

/// Everything a synthetic experiment needs.
#[derive(Debug, Clone)]
pub struct SyntheticCase {
    pub template: RetinotopicMap,
    pub subject: RetinotopicMap,
    pub deformation: Deformation,
    pub stimulus: Stimulus,
    pub bold_clean: BoldSeries,
    pub bold_noisy: BoldSeries,
}

pub fn synth_case(spec: &SyntheticSpec, bold: &BoldSpec) -> Result<SyntheticCase> {
    let template = synth_template(spec)?;
    let deformation = synth_deformation(template.faces(), &template.param, spec.deformation_mu_max, spec.seed)?;
    let subject = synth_subject(&template, &deformation, spec.visual_noise_sd, spec.r2_profile, spec.seed)?;
    let stimulus = synth_bar_stimulus(bold.n_sweeps, bold.frames_per_sweep, bold.extent_deg, bold.resolution, bold.tr)?;
    let prfs: Vec<(f64, f64, f64)> =
        ground_truth_visual(&template, &deformation)?.into_iter().map(|(v, s)| (v[0], v[1], s)).collect();
    let (bold_clean, bold_noisy) = synth_bold(&stimulus, &prfs, bold, spec.seed)?;
    Ok(SyntheticCase { template, subject, deformation, stimulus, bold_clean, bold_noisy })
}

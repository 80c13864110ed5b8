//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL line
//! per criterion and exits nonzero if any criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use retmap::case::write_synthetic_case;
use retmap::eval::{DvWeighting, EvalOptions};
use retmap::pipeline::{run_pipeline, PipelineConfig};
use retmap::prf::{aic, fit_gain_and_metrics, AIC_PARAMETERS};
use retmap::synth::{
    ring_disk_mesh, rings_for_resolution, synth_case, synth_deformation, synth_subject, synth_template, BoldSpec,
    SyntheticSpec,
};
use retmap::{
    compute_beltrami, count_flipped, emit_report, evaluate_run, harmonic_disk_map, linear_beltrami_solve, par,
    register, validate_topology, visual_coordinate_change, CorticalMesh, Point2, Point3, RegistrationConfig,
    RegistrationResult, ReportFormat,
};

type Outcome = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

/// Energy traces of every registration run by the suite.
#[derive(Default)]
struct Traces(Vec<(String, Vec<f64>)>);

impl Traces {
    fn push(&mut self, name: String, r: &RegistrationResult) {
        self.0.push((name, r.energy_trace.iter().map(|e| e.total).collect()));
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn area2(a: Point2, b: Point2, c: Point2) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

// ---------------------------------------------------------------- 1

fn tables_format(traces: &mut Traces) -> Outcome {
    let spec = SyntheticSpec { mesh_resolution: 300, deformation_mu_max: 0.3, seed: 1, ..Default::default() };
    let bold = BoldSpec { resolution: 25, frames_per_sweep: 12, ..Default::default() };
    let case = synth_case(&spec, &bold).map_err(|e| e.to_string())?;
    let r = register(&case.subject, &case.template, &RegistrationConfig::default()).map_err(|e| e.to_string())?;
    traces.push("layout".into(), &r);
    let report =
        evaluate_run(&case.subject, &case.template, &r, &case.stimulus, &case.bold_noisy, &EvalOptions::default())
            .map_err(|e| e.to_string())?;
    let text = emit_report(&report, ReportFormat::Text).map_err(|e| e.to_string())?;
    let header = text.lines().next().unwrap_or_default();
    let cols = ["Method", "d|v|", "F_flip", "RMSE (Raw/Reg)", "Correlation p_c (Raw/Reg)", "AIC (Raw/Reg)"];
    let pos: Vec<Option<usize>> = cols.iter().map(|c| header.find(c)).collect();
    check!(pos.iter().all(Option::is_some), "missing column in `{header}`");
    check!(pos.windows(2).all(|w| w[0] < w[1]), "column order differs in `{header}`");
    Ok("published tables need the 44-observer dataset; substituted by criteria 2-10, report layout checked".into())
}

// ---------------------------------------------------------------- 2, 3

struct RecoveryCase {
    mu: f64,
    noise: f64,
    seed: u64,
    flips: usize,
    converged: bool,
    dv_initial: f64,
    dv_final: f64,
    seconds: f64,
}

fn recovery_cases(traces: &mut Traces) -> Result<Vec<RecoveryCase>, String> {
    let mus = [0.2, 0.4, 0.6];
    let noises = [0.0, 0.5, 1.0];
    let config = RegistrationConfig::default();
    let mut out = Vec::new();
    for k in 0..25u64 {
        let (mu, noise) = (mus[k as usize % 3], noises[(k as usize / 3) % 3]);
        let seed = 1000 + k;
        let spec = SyntheticSpec { deformation_mu_max: mu, visual_noise_sd: noise, seed, ..Default::default() };
        let template = synth_template(&spec).map_err(|e| e.to_string())?;
        let d = synth_deformation(template.faces(), &template.param, mu, seed).map_err(|e| e.to_string())?;
        let subject = synth_subject(&template, &d, noise, spec.r2_profile, seed).map_err(|e| e.to_string())?;
        let clock = Instant::now();
        let r = register(&subject, &template, &config).map_err(|e| format!("case {k}: {e}"))?;
        let seconds = clock.elapsed().as_secs_f64();
        let dv =
            |f: &[Point2]| visual_coordinate_change(&subject, &template, f, config.r2_threshold, DvWeighting::None);
        out.push(RecoveryCase {
            mu,
            noise,
            seed,
            flips: count_flipped(&r.f, subject.faces()),
            converged: r.converged,
            dv_initial: dv(&subject.param.uv).map_err(|e| e.to_string())?,
            dv_final: dv(&r.f).map_err(|e| e.to_string())?,
            seconds,
        });
        traces.push(format!("recovery seed {seed}"), &r);
    }
    Ok(out)
}

fn no_flips(cases: &[RecoveryCase]) -> Outcome {
    let converged = cases.iter().filter(|c| c.converged).count();
    let worst = cases.iter().map(|c| c.seconds).fold(0.0, f64::max);
    for c in cases {
        check!(
            !c.converged || c.flips == 0,
            "mu {} noise {} seed {}: {} flipped faces",
            c.mu,
            c.noise,
            c.seed,
            c.flips
        );
        check!(c.seconds <= 60.0, "seed {} took {:.1} s", c.seed, c.seconds);
    }
    check!(converged == cases.len(), "only {converged}/{} runs converged", cases.len());
    Ok(format!("{} cases, all converged, F_flip = 0, slowest {worst:.1} s", cases.len()))
}

fn alignment(cases: &[RecoveryCase]) -> Outcome {
    let (mut worst_clean, mut worst_noisy, mut n) = (0.0f64, 0.0f64, 0);
    for c in cases.iter().filter(|c| c.mu <= 0.5 && c.noise <= 0.5) {
        let ratio = c.dv_final / c.dv_initial;
        let bound = if c.noise == 0.0 { 0.1 } else { 0.5 };
        check!(
            ratio <= bound,
            "mu {} noise {} seed {}: d|v| {:.4} -> {:.4} (ratio {ratio:.3} > {bound})",
            c.mu,
            c.noise,
            c.seed,
            c.dv_initial,
            c.dv_final
        );
        if c.noise == 0.0 {
            worst_clean = worst_clean.max(ratio);
        } else {
            worst_noisy = worst_noisy.max(ratio);
        }
        n += 1;
    }
    check!(n > 0, "no eligible cases");
    Ok(format!("{n} cases, worst ratio {worst_clean:.3} (noise 0), {worst_noisy:.3} (noise 0.5)"))
}

// ---------------------------------------------------------------- 4

fn bold_fit(traces: &mut Traces) -> Outcome {
    let n_cases = 10u64;
    let (mut improved, mut vertices, mut pc_raw) = (0, 0usize, Vec::new());
    for k in 0..n_cases {
        let seed = 2000 + k;
        let spec = SyntheticSpec { deformation_mu_max: 0.4, visual_noise_sd: 0.5, seed, ..Default::default() };
        let case = synth_case(&spec, &BoldSpec::default()).map_err(|e| e.to_string())?;
        let r = register(&case.subject, &case.template, &RegistrationConfig::default()).map_err(|e| e.to_string())?;
        traces.push(format!("bold seed {seed}"), &r);
        let report =
            evaluate_run(&case.subject, &case.template, &r, &case.stimulus, &case.bold_noisy, &EvalOptions::default())
                .map_err(|e| e.to_string())?;
        let row = &report.rows[0];
        pc_raw.push(row.pc_raw);
        if row.rmse_reg < row.rmse_raw && row.pc_reg > row.pc_raw {
            improved += 1;
        }
        for d in &report.detail {
            let (da, dr) = (d.reg.aic - d.raw.aic, d.reg.rss - d.raw.rss);
            check!(
                da.signum() == dr.signum() || (da == 0.0 && dr == 0.0),
                "seed {seed} vertex {}: AIC and RSS disagree",
                d.vertex
            );
        }
        vertices += report.detail.len();
    }
    let lo = pc_raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = pc_raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    check!(lo >= 0.25 && hi <= 0.55, "raw p_c range [{lo:.3}, {hi:.3}] outside the intended SNR regime");
    check!(improved as f64 >= 0.9 * n_cases as f64, "improved on {improved}/{n_cases} cases");
    Ok(format!(
        "improved on {improved}/{n_cases} cases, raw p_c in [{lo:.3}, {hi:.3}], AIC/RSS agree on {vertices} vertices"
    ))
}

// ---------------------------------------------------------------- 5

fn beltrami_algebra() -> Outcome {
    let (uv, faces) = ring_disk_mesh(3);
    let mu0 = compute_beltrami(&faces, &uv, &uv).map_err(|e| e.to_string())?;
    check!(mu0.max_modulus() == 0.0, "identity gives |mu| = {}", mu0.max_modulus());

    let mut g = rng(5);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let a = Complex64::from_polar(g.random_range(0.2..3.0), g.random_range(-3.1..3.1));
        let b = a * Complex64::from_polar(g.random_range(0.0..0.98), g.random_range(-3.1..3.1));
        let t = Complex64::new(g.random_range(-1.0..1.0), g.random_range(-1.0..1.0));
        let target: Vec<Point2> = uv
            .iter()
            .map(|p| {
                let z = Complex64::new(p[0], p[1]);
                let w = a * z + b * z.conj() + t;
                [w.re, w.im]
            })
            .collect();
        let mu = compute_beltrami(&faces, &uv, &target).map_err(|e| e.to_string())?;
        for m in &mu.mu {
            worst = worst.max((m - b / a).norm());
        }
    }
    check!(worst <= 1e-12, "affine map error {worst:e}");

    // random single triangles against the signed-area oracle
    let tri = [[0usize, 1, 2]];
    let (mut flipped, mut total) = (0, 0);
    while total < 1000 {
        let pts = |g: &mut ChaCha8Rng| -> Vec<Point2> {
            (0..3).map(|_| [g.random_range(-1.0..1.0), g.random_range(-1.0..1.0)]).collect()
        };
        let src = pts(&mut g);
        let dst = pts(&mut g);
        let (sa, da) = (area2(src[0], src[1], src[2]), area2(dst[0], dst[1], dst[2]));
        if sa.abs() < 1e-3 || da.abs() < 1e-3 {
            continue;
        }
        let src = if sa < 0.0 { vec![src[0], src[2], src[1]] } else { src };
        let dst_o = if sa < 0.0 { vec![dst[0], dst[2], dst[1]] } else { dst };
        let oracle_flip = area2(dst_o[0], dst_o[1], dst_o[2]) < 0.0;
        let m = compute_beltrami(&tri, &src, &dst_o).map_err(|e| e.to_string())?.mu[0].norm();
        check!((m > 1.0) == oracle_flip, "|mu| = {m} but oracle flip = {oracle_flip}");
        check!(count_flipped(&dst_o, &tri) == usize::from(oracle_flip), "count_flipped disagrees with the oracle");
        flipped += usize::from(oracle_flip);
        total += 1;
    }
    Ok(format!("mu(id) = 0, max |mu - b/a| = {worst:.1e} over 1000 maps, {flipped}/{total} flipped triangles classified exactly"))
}

// ---------------------------------------------------------------- 6

/// Jittered ring mesh on the unit disk.
fn jittered_disk(rings: usize, jitter: f64, g: &mut ChaCha8Rng) -> (Vec<Point2>, Vec<[usize; 3]>) {
    let (mut p, f) = ring_disk_mesh(rings);
    let h = 1.0 / rings as f64;
    for q in p.iter_mut() {
        if q[0].hypot(q[1]) < 1.0 - 0.5 * h {
            q[0] += g.random_range(-jitter..jitter) * h;
            q[1] += g.random_range(-jitter..jitter) * h;
        }
    }
    (p, f)
}

fn lbs_roundtrip() -> Outcome {
    let mut g = rng(6);
    let mut worst = 0.0f64;
    let mut worst_mu = 0.0f64;
    for trial in 0..50 {
        let rings = g.random_range(6..=20);
        let (uv, faces) = jittered_disk(rings, 0.25, &mut g);
        check!(count_flipped(&uv, &faces) == 0, "trial {trial}: jittered source flipped");
        // global affine part plus a smooth polynomial perturbation
        let a = Complex64::from_polar(g.random_range(0.5..2.0), g.random_range(-3.1..3.1));
        let b = a * Complex64::from_polar(g.random_range(0.0..0.5), g.random_range(-3.1..3.1));
        let c: Vec<Complex64> =
            (0..4).map(|_| Complex64::new(g.random_range(-1.0..1.0), g.random_range(-1.0..1.0))).collect();
        let mut amp = 0.3;
        let target = loop {
            let t: Vec<Point2> = uv
                .iter()
                .map(|p| {
                    let z = Complex64::new(p[0], p[1]);
                    let w = a * z
                        + b * z.conj()
                        + amp * (c[0] * z * z + c[1] * z * z.conj() + c[2] * z.conj() * z.conj() + c[3] * z * z * z);
                    [w.re, w.im]
                })
                .collect();
            if count_flipped(&t, &faces) == 0 {
                break t;
            }
            amp *= 0.5;
        };
        let mu = compute_beltrami(&faces, &uv, &target).map_err(|e| e.to_string())?;
        worst_mu = worst_mu.max(mu.max_modulus());
        let mesh = CorticalMesh::from_planar(&uv, faces.clone()).map_err(|e| e.to_string())?;
        let boundary = mesh.boundary_loop().map_err(|e| e.to_string())?;
        let pins: Vec<(usize, Point2)> = boundary.iter().map(|&b| (b, target[b])).collect();
        let rec = linear_beltrami_solve(&faces, &uv, &mu, &pins).map_err(|e| e.to_string())?;
        let err = rec.iter().zip(&target).map(|(p, q)| (p[0] - q[0]).hypot(p[1] - q[1])).fold(0.0, f64::max);
        check!(err <= 1e-8, "trial {trial}: max vertex error {err:e}");
        worst = worst.max(err);
    }
    Ok(format!("50 maps (max |mu| up to {worst_mu:.2}), max vertex error {worst:.1e}"))
}

// ---------------------------------------------------------------- 7

/// Random disk-topology surface: jittered rings, random interior edge flips,
/// an anisotropic scale and a bumpy height field.
fn random_surface(g: &mut ChaCha8Rng, rings: usize) -> CorticalMesh {
    let (p, mut faces) = jittered_disk(rings, 0.3, g);
    let flips = g.random_range(0..=faces.len() / 4);
    let mut edge_faces = std::collections::HashMap::new();
    for (fi, f) in faces.iter().enumerate() {
        for k in 0..3 {
            edge_faces.insert((f[k], f[(k + 1) % 3]), fi);
        }
    }
    let mut touched = vec![false; faces.len()];
    for _ in 0..flips {
        let f1 = g.random_range(0..faces.len());
        let k = g.random_range(0..3);
        let [a, b, c] = [faces[f1][k], faces[f1][(k + 1) % 3], faces[f1][(k + 2) % 3]];
        let Some(&f2) = edge_faces.get(&(b, a)) else { continue };
        if touched[f1] || touched[f2] {
            continue;
        }
        let d = *faces[f2].iter().find(|&&v| v != a && v != b).unwrap();
        if area2(p[a], p[d], p[c]) <= 1e-6 || area2(p[d], p[b], p[c]) <= 1e-6 {
            continue;
        }
        faces[f1] = [a, d, c];
        faces[f2] = [d, b, c];
        touched[f1] = true;
        touched[f2] = true;
    }
    let (sx, sy) = (g.random_range(10.0..40.0), g.random_range(10.0..40.0));
    let bumps: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (g.random_range(-1.0..1.0), g.random_range(-1.0..1.0), g.random_range(0.2..0.6), g.random_range(-8.0..8.0))
        })
        .collect();
    let vertices: Vec<Point3> = p
        .iter()
        .map(|q| {
            let z: f64 = bumps
                .iter()
                .map(|&(cx, cy, w, h)| h * (-((q[0] - cx).powi(2) + (q[1] - cy).powi(2)) / (w * w)).exp())
                .sum();
            [sx * q[0], sy * q[1], z]
        })
        .collect();
    CorticalMesh::new(vertices, faces).expect("random surface")
}

fn flattening() -> Outcome {
    let mut g = rng(7);
    let big = rings_for_resolution(5000);
    let (mut worst_r, mut slowest, mut large) = (0.0f64, 0.0f64, 0);
    for trial in 0..100 {
        // every fourth mesh is full size for the runtime bound
        let rings = if trial % 4 == 0 { big } else { g.random_range(3..big) };
        let mesh = random_surface(&mut g, rings);
        validate_topology(&mesh).map_err(|e| format!("trial {trial}: {e}"))?;
        let clock = Instant::now();
        let param = harmonic_disk_map(&mesh).map_err(|e| format!("trial {trial}: {e}"))?;
        let secs = clock.elapsed().as_secs_f64();
        let r =
            param.boundary_ids.iter().map(|&b| (param.uv[b][0].hypot(param.uv[b][1]) - 1.0).abs()).fold(0.0, f64::max);
        let flips = count_flipped(&param.uv, mesh.faces());
        check!(r <= 1e-9, "trial {trial}: boundary off the circle by {r:e}");
        check!(flips == 0, "trial {trial}: {flips} flipped faces");
        if mesh.vertex_count() >= 4500 {
            check!(secs <= 5.0, "trial {trial}: {} vertices took {secs:.2} s", mesh.vertex_count());
            slowest = slowest.max(secs);
            large += 1;
        }
        worst_r = worst_r.max(r);
    }
    Ok(format!("100 meshes, boundary error <= {worst_r:.1e}, F_flip = 0, slowest of {large} 5k meshes {slowest:.2} s"))
}

// ---------------------------------------------------------------- 8

fn monotone(traces: &Traces) -> Outcome {
    check!(!traces.0.is_empty(), "no registration runs recorded");
    for (name, t) in &traces.0 {
        check!(t.windows(2).all(|w| w[1] <= w[0]), "{name}: energy increased in {t:?}");
    }
    let accepted: usize = traces.0.iter().map(|(_, t)| t.len() - 1).sum();
    Ok(format!("{} runs, {accepted} accepted steps, all non-increasing", traces.0.len()))
}

// ---------------------------------------------------------------- 9

/// Brute-force reference: normal equations by Cramer's rule, textbook Pearson.
fn reference_fit(o: &[f64], p: &[f64]) -> (f64, f64, f64) {
    let n = o.len() as f64;
    let (sx, sy): (f64, f64) = (p.iter().sum(), o.iter().sum());
    let sxx: f64 = p.iter().map(|x| x * x).sum();
    let sxy: f64 = p.iter().zip(o).map(|(x, y)| x * y).sum();
    let det = n * sxx - sx * sx;
    let gain = (n * sxy - sx * sy) / det;
    let base = (sxx * sy - sx * sxy) / det;
    let rss: f64 = p.iter().zip(o).map(|(x, y)| (y - gain * x - base).powi(2)).sum();
    let (mx, my) = (sx / n, sy / n);
    let cov: f64 = p.iter().zip(o).map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = p.iter().map(|x| (x - mx).powi(2)).sum();
    let vy: f64 = o.iter().map(|y| (y - my).powi(2)).sum();
    let pearson = cov / (vx * vy).sqrt();
    let rmse = (rss / n).sqrt();
    let k = 5.0;
    (pearson, rmse, n * (rss / n).ln() + 2.0 * k)
}

fn metric_oracles() -> Outcome {
    let mut g = rng(9);
    let mut worst = [0.0f64; 3];
    for trial in 0..1000 {
        let n = g.random_range(8..200);
        let p: Vec<f64> = (0..n).map(|_| g.random_range(-2.0..2.0)).collect();
        let gain = g.random_range(-3.0..3.0);
        let noise = g.random_range(0.01..2.0);
        let o: Vec<f64> = p.iter().map(|x| gain * x + 0.5 + noise * g.random_range(-1.0..1.0)).collect();
        let fit = fit_gain_and_metrics(&o, &p).map_err(|e| format!("trial {trial}: {e}"))?;
        let (rp, rr, ra) = reference_fit(&o, &p);
        let errs = [(fit.pearson - rp).abs(), (fit.rmse - rr).abs(), (fit.aic - ra).abs() / ra.abs().max(1.0)];
        for (w, e) in worst.iter_mut().zip(errs) {
            *w = w.max(e);
        }
    }
    check!(
        worst.iter().all(|&e| e <= 1e-12),
        "max errors pearson {:e} rmse {:e} aic {:e}",
        worst[0],
        worst[1],
        worst[2]
    );
    check!(AIC_PARAMETERS == 5, "AIC uses k = {AIC_PARAMETERS}");
    let a = aic(100, 100.0, 5);
    check!(a == 10.0, "aic(100, 100, 5) = {a}");
    Ok(format!(
        "1000 pairs, max errors pearson {:.1e} rmse {:.1e} aic {:.1e}, aic(100, 100, 5) = 10",
        worst[0], worst[1], worst[2]
    ))
}

// ---------------------------------------------------------------- 10

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = SyntheticSpec { mesh_resolution: 2000, seed: 77, ..Default::default() };
    let case = synth_case(&spec, &BoldSpec::default()).map_err(|e| e.to_string())?;
    let (s, t) = write_synthetic_case(&case, tmp.path().join("subject"), tmp.path().join("template"))
        .map_err(|e| e.to_string())?;
    let config = PipelineConfig::default();
    let a = run_pipeline(&s, &t, &config, tmp.path().join("a")).map_err(|e| e.to_string())?;
    let trace: Vec<f64> = a.registration.energy_trace.iter().map(|e| e.total).collect();
    check!(trace.windows(2).all(|w| w[1] <= w[0]), "pipeline energy increased in {trace:?}");
    run_pipeline(&s, &t, &config, tmp.path().join("b")).map_err(|e| e.to_string())?;
    par::with_threads(1, || run_pipeline(&s, &t, &config, tmp.path().join("c"))).map_err(|e| e.to_string())?;
    // rerun into an existing output directory
    run_pipeline(&s, &t, &config, tmp.path().join("a")).map_err(|e| e.to_string())?;
    let files = read_dir_bytes(&tmp.path().join("a"));
    for other in ["b", "c"] {
        let o = read_dir_bytes(&tmp.path().join(other));
        check!(o.len() == files.len(), "run {other} wrote {} files, expected {}", o.len(), files.len());
        for ((na, ba), (nb, bb)) in files.iter().zip(&o) {
            check!(na == nb && ba == bb, "{na} differs in run {other}");
        }
    }
    let again = synth_case(&spec, &BoldSpec::default()).map_err(|e| e.to_string())?;
    check!(
        again.subject == case.subject && again.bold_noisy.samples == case.bold_noisy.samples,
        "synth_case is not reproducible"
    );
    Ok(format!("{} output files byte-identical across reruns and thread counts", files.len()))
}

// ----------------------------------------------------------------

fn run(n: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let clock = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into()))
    });
    let secs = clock.elapsed().as_secs_f64();
    match &outcome {
        Ok(d) => println!("criterion {n:>2} PASS  {name}: {d} [{secs:.1} s]"),
        Err(d) => println!("criterion {n:>2} FAIL  {name}: {d} [{secs:.1} s]"),
    }
    outcome.is_ok()
}

fn main() {
    // `cargo test -- --list` and filters from the libtest CLI are accepted but ignored
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut traces = Traces::default();
    let mut ok = Vec::new();
    ok.push(run(1, "table layout", || tables_format(&mut traces)));
    let mut cases = Vec::new();
    ok.push(run(2, "diffeomorphism", || {
        cases = recovery_cases(&mut traces)?;
        no_flips(&cases)
    }));
    ok.push(run(3, "alignment improvement", || alignment(&cases)));
    ok.push(run(4, "BOLD fit improvement", || bold_fit(&mut traces)));
    ok.push(run(5, "Beltrami algebra", beltrami_algebra));
    ok.push(run(6, "LBS roundtrip", lbs_roundtrip));
    ok.push(run(7, "flattening", flattening));
    ok.push(run(8, "energy monotonicity", || monotone(&traces)));
    ok.push(run(9, "metric oracles", metric_oracles));
    ok.push(run(10, "determinism", determinism));
    let passed = ok.iter().filter(|&&b| b).count();
    println!("acceptance: {passed}/{} criteria passed", ok.len());
    if passed != ok.len() {
        std::process::exit(1);
    }
}

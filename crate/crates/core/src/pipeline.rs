//! End-to-end run: flatten, register, transfer, plot, evaluate, report.
//!
//! Every output is written as soon as its stage finishes, so a failure in a
//! later stage leaves the earlier files in place. Errors carry the name of
//! the failing stage.

use std::path::{Path, PathBuf};

use crate::case::CaseDirectory;
use crate::error::{Error, Result};
use crate::eval::{emit_detail_csv, emit_report, evaluate_run, EvalOptions, EvalReport, ReportFormat};
use crate::flatten::{harmonic_disk_map, DiskParameterization};
use crate::io;
use crate::mesh::{count_flipped, CorticalMesh};
use crate::plot::{plot_disk_map, ColormapMode};
use crate::registration::{apply_registration, register, RegistrationConfig, RegistrationResult};
use crate::retinotopy::RetinotopicMap;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineConfig {
    pub registration: RegistrationConfig,
    pub eval: EvalOptions,
}

#[derive(Debug, Clone)]
pub struct PipelineOutputs {
    pub dir: PathBuf,
    pub registration: RegistrationResult,
    pub report: EvalReport,
    pub files: Vec<PathBuf>,
}

struct Out {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Out {
    fn write(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        io::write_text(&path, text)?;
        self.files.push(path);
        Ok(())
    }
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

/// Mesh and disk parameterization of a case, flattening when the case has no
/// stored parameterization.
pub fn load_or_flatten(case: &CaseDirectory) -> Result<(CorticalMesh, DiskParameterization, bool)> {
    let mesh = stage("load", case.load_mesh())?;
    match stage("load", case.load_uv())? {
        Some(uv) => Ok((mesh, uv, false)),
        None => {
            let uv = stage("flatten", harmonic_disk_map(&mesh))?;
            Ok((mesh, uv, true))
        }
    }
}

pub fn load_map(case: &CaseDirectory) -> Result<(RetinotopicMap, bool)> {
    let (mesh, uv, flattened) = load_or_flatten(case)?;
    Ok((stage("load", case.load_map(mesh, uv))?, flattened))
}

/// Summary lines written next to a registration.
pub fn registration_summary(result: &RegistrationResult, faces: &[[usize; 3]]) -> String {
    let last = result.energy_trace.last();
    format!(
        "f_flip = {}\nconverged = {}\niterations = {}\nfinal_mu_max = {}\nfinal_energy = {}\n",
        count_flipped(&result.f, faces),
        result.converged,
        result.iterations(),
        result.final_mu_max,
        last.map_or(f64::NAN, |e| e.total)
    )
}

/// Writes the map, trace and summary of a registration.
fn write_registration(
    out: &mut Out,
    subject: &RetinotopicMap,
    template: &RetinotopicMap,
    r: &RegistrationResult,
) -> Result<RetinotopicMap> {
    out.write("registration.txt", &io::format_points(&r.f))?;
    out.write("energy_trace.csv", &io::format_energy_trace(&r.energy_trace))?;
    out.write("registration_summary.txt", &registration_summary(r, subject.faces()))?;
    let applied = apply_registration(subject, template, &r.f)?;
    let m = &applied.map;
    out.write("registered_prf.csv", &io::format_prf_csv(&m.visual, &m.prf_size, &m.variance_explained))?;
    Ok(applied.map)
}

fn write_panels(out: &mut Out, raw: &RetinotopicMap, registered: &RetinotopicMap) -> Result<()> {
    for (tag, map) in [("raw", raw), ("registered", registered)] {
        let uv = &map.param.uv;
        let ecc: Vec<f64> = (0..map.vertex_count()).map(|i| map.eccentricity(i)).collect();
        let ang: Vec<f64> = (0..map.vertex_count()).map(|i| map.polar_angle_deg(i)).collect();
        out.write(
            &format!("disk_eccentricity_{tag}.svg"),
            &plot_disk_map(uv, map.faces(), &ecc, ColormapMode::Sequential, &format!("eccentricity ({tag})")),
        )?;
        out.write(
            &format!("disk_polar_angle_{tag}.svg"),
            &plot_disk_map(uv, map.faces(), &ang, ColormapMode::Cyclic, &format!("polar angle ({tag})")),
        )?;
    }
    Ok(())
}

pub fn run_pipeline(
    case: &CaseDirectory,
    template: &CaseDirectory,
    config: &PipelineConfig,
    out_dir: impl AsRef<Path>,
) -> Result<PipelineOutputs> {
    let mut out = Out { dir: out_dir.as_ref().to_path_buf(), files: Vec::new() };
    std::fs::create_dir_all(&out.dir).map_err(|e| Error::io(&out.dir, e).in_stage("load"))?;

    let (subject, flattened) = load_map(case)?;
    if flattened {
        stage("flatten", out.write("uv.txt", &io::format_uv(&subject.param)))?;
    }
    let (template_map, _) = load_map(template)?;

    let result = stage("register", register(&subject, &template_map, &config.registration))?;
    let registered = stage("apply", write_registration(&mut out, &subject, &template_map, &result))?;
    stage("plot", write_panels(&mut out, &subject, &registered))?;

    let report = stage(
        "evaluate",
        (|| {
            let stimulus = case.load_stimulus()?;
            let bold = case.load_bold()?;
            evaluate_run(&subject, &template_map, &result, &stimulus, &bold, &config.eval)
        })(),
    )?;
    stage(
        "report",
        (|| {
            out.write("report.csv", &emit_report(&report, ReportFormat::Csv)?)?;
            out.write("report.txt", &emit_report(&report, ReportFormat::Text)?)?;
            out.write("report.svg", &emit_report(&report, ReportFormat::Svg)?)?;
            out.write("report_vertices.csv", &emit_detail_csv(&report))
        })(),
    )?;
    Ok(PipelineOutputs { dir: out.dir, registration: result, report, files: out.files })
}

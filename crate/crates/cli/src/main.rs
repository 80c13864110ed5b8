use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use retmap::case::{write_synthetic_case, CaseDirectory};
use retmap::eval::{emit_detail_csv, parse_report_csv, DvWeighting, EvalOptions};
use retmap::flatten::{conformal_error, conformal_refine, harmonic_disk_map};
use retmap::io;
use retmap::pipeline::{load_map, registration_summary, run_pipeline, PipelineConfig};
use retmap::plot::plot_face_field;
use retmap::prf::{canonical_hrf, predict_bold_batch, BoldSeries};
use retmap::registration::{apply_registration, register, RegistrationConfig, SmoothConvention};
use retmap::synth::{synth_case, BoldSpec, SyntheticSpec};
use retmap::{emit_report, evaluate_run, par, Error, ReportFormat, Result};

#[derive(Parser)]
#[command(
    name = "retmap",
    version,
    about = "Flip-free registration of retinotopic maps"
)]
struct Cli {
    /// Seed for synthetic data generation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 uses every core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Suppress informational output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Map a case's mesh onto the unit disk.
    Flatten {
        /// Mesh file (`RETMESH 1`).
        #[arg(long, required_unless_present = "case", conflicts_with = "case")]
        mesh: Option<PathBuf>,
        /// Case directory whose mesh is flattened.
        #[arg(long)]
        case: Option<PathBuf>,
        /// Output parameterization file.
        #[arg(long)]
        out: PathBuf,
        /// Beltrami refinement passes after the harmonic map.
        #[arg(long, default_value_t = 0)]
        refine: usize,
        /// Disk wireframe coloured by `|mu|`.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Register a subject map to a template.
    Register {
        #[arg(long)]
        subject: PathBuf,
        #[arg(long)]
        template: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        knobs: RegisterKnobs,
    },
    /// Score a registration against the case's BOLD series.
    Evaluate {
        #[arg(long)]
        case: PathBuf,
        #[arg(long)]
        template: PathBuf,
        /// Registration map written by `register`.
        #[arg(long)]
        registration: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write report.svg.
        #[arg(long)]
        svg: bool,
        #[command(flatten)]
        knobs: EvalKnobs,
    },
    /// Generate a synthetic subject and template.
    Synth {
        /// Output directory; receives `subject/` and `template/`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5000)]
        resolution: usize,
        #[arg(long, default_value_t = 0.4)]
        mu_max: f64,
        /// Visual-coordinate noise SD in degrees.
        #[arg(long, default_value_t = 0.5)]
        noise: f64,
        #[arg(long, default_value_t = 0.5)]
        ecc_min: f64,
        #[arg(long, default_value_t = 40.0)]
        ecc_max: f64,
        /// 1 for a single wedge, 3 for mirrored bands.
        #[arg(long, default_value_t = 1)]
        bands: usize,
        #[arg(long, default_value_t = 360.0)]
        wedge: f64,
        /// White-noise SD added to the BOLD series.
        #[arg(long, default_value_t = 1.0)]
        bold_noise: f64,
        #[arg(long, default_value_t = 4)]
        sweeps: usize,
        #[arg(long, default_value_t = 16)]
        frames_per_sweep: usize,
        #[arg(long, default_value_t = 81)]
        stimulus_resolution: usize,
    },
    /// Predict BOLD series from a case's pRF table and stimulus.
    PredictBold {
        #[arg(long)]
        case: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-render a report CSV.
    Report {
        #[arg(long)]
        input: PathBuf,
        /// text, csv or svg.
        #[arg(long, default_value = "text")]
        format: String,
        /// Output file; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full run for one or more cases against one template.
    Pipeline {
        #[arg(long, required = true)]
        case: Vec<PathBuf>,
        #[arg(long)]
        template: PathBuf,
        /// Output directory; one subdirectory per case when several are given.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        knobs: RegisterKnobs,
        #[command(flatten)]
        eval: EvalKnobs,
    },
}

#[derive(Args, Clone)]
struct RegisterKnobs {
    /// Smoothness term convention: displacement or absolute.
    #[arg(long)]
    smooth_convention: Option<SmoothConvention>,
    #[arg(long)]
    smoothness_weight: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
}

#[derive(Args, Clone)]
struct EvalKnobs {
    /// d|v| averaging: none or r2.
    #[arg(long)]
    dv_weighting: Option<DvWeighting>,
    #[arg(long)]
    label: Option<String>,
}

fn load_config(path: Option<&Path>) -> Result<BTreeMap<String, String>> {
    match path {
        Some(p) => io::parse_key_values(&p.display().to_string(), &io::read_text(p)?),
        None => Ok(BTreeMap::new()),
    }
}

/// Registration and evaluation settings from the config file and flags,
/// flags taking precedence.
fn settings(
    keys: &BTreeMap<String, String>,
    reg: Option<&RegisterKnobs>,
    ev: Option<&EvalKnobs>,
) -> Result<(RegistrationConfig, EvalOptions)> {
    let mut rc = RegistrationConfig::default();
    let rest = io::apply_registration_keys(&mut rc, keys)?;
    let mut eo = EvalOptions {
        r2_threshold: rc.r2_threshold,
        ..Default::default()
    };
    for (k, v) in &rest {
        match k.as_str() {
            "dv_weighting" => eo.dv_weighting = v.parse()?,
            "label" => eo.label = v.clone(),
            "hrf_duration" => {
                eo.hrf_duration = v
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad hrf_duration `{v}`")))?
            }
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown configuration key `{other}`"
                )))
            }
        }
    }
    if let Some(r) = reg {
        if let Some(c) = r.smooth_convention {
            rc.smooth_convention = c;
        }
        if let Some(w) = r.smoothness_weight {
            rc.smoothness_weight = w;
        }
        if let Some(n) = r.max_iterations {
            rc.max_outer_iterations = n;
        }
    }
    if let Some(e) = ev {
        if let Some(w) = e.dv_weighting {
            eo.dv_weighting = w;
        }
        if let Some(l) = &e.label {
            eo.label = l.clone();
        }
    }
    rc.validate()?;
    Ok((rc, eo))
}

fn say(quiet: bool, msg: impl AsRef<str>) {
    if !quiet {
        println!("{}", msg.as_ref());
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    io::write_text(path, text)
}

fn run(cli: &Cli) -> std::result::Result<(), (&'static str, Error)> {
    let keys = load_config(cli.config.as_deref()).map_err(|e| ("config", e))?;
    let quiet = cli.quiet;
    match &cli.command {
        Command::Flatten {
            mesh,
            case,
            out,
            refine,
            plot,
        } => {
            let at = |e| ("flatten", e);
            let mesh = match (mesh, case) {
                (Some(m), _) => {
                    io::parse_mesh(&m.display().to_string(), &io::read_text(m).map_err(at)?)
                }
                (None, Some(c)) => CaseDirectory::open(c).and_then(|c| c.load_mesh()),
                (None, None) => Err(Error::InvalidArgument(
                    "--mesh or --case is required".into(),
                )),
            }
            .map_err(at)?;
            let mut param = harmonic_disk_map(&mesh).map_err(at)?;
            if *refine > 0 {
                param = conformal_refine(&mesh, &param, *refine).map_err(at)?;
            }
            write(out, &io::format_uv(&param)).map_err(at)?;
            let ce = conformal_error(&mesh, &param);
            if let Some(p) = plot {
                // faces with undefined mu are drawn at the top of the scale
                let finite_max = ce
                    .per_face
                    .iter()
                    .copied()
                    .filter(|v| v.is_finite())
                    .fold(0.0, f64::max);
                let per_face: Vec<f64> = ce
                    .per_face
                    .iter()
                    .map(|&v| if v.is_finite() { v } else { finite_max })
                    .collect();
                write(
                    p,
                    &plot_face_field(&param.uv, mesh.faces(), &per_face, "|mu|"),
                )
                .map_err(at)?;
            }
            let flips = retmap::count_flipped(&param.uv, mesh.faces());
            say(
                quiet,
                format!(
                    "boundary_error = {}\nf_flip = {flips}\nmean_abs_mu = {}",
                    param.boundary_radius_error(),
                    ce.mean
                ),
            );
        }
        Command::Register {
            subject,
            template,
            out,
            knobs,
        } => {
            let at = |e| ("register", e);
            let (rc, _) = settings(&keys, Some(knobs), None).map_err(at)?;
            let (s, _) = load_map(&CaseDirectory::open(subject).map_err(at)?).map_err(at)?;
            let (t, _) = load_map(&CaseDirectory::open(template).map_err(at)?).map_err(at)?;
            let r = register(&s, &t, &rc).map_err(at)?;
            let applied = apply_registration(&s, &t, &r.f).map_err(at)?;
            let m = &applied.map;
            write(&out.join("registration.txt"), &io::format_points(&r.f)).map_err(at)?;
            write(
                &out.join("energy_trace.csv"),
                &io::format_energy_trace(&r.energy_trace),
            )
            .map_err(at)?;
            write(
                &out.join("registered_prf.csv"),
                &io::format_prf_csv(&m.visual, &m.prf_size, &m.variance_explained),
            )
            .map_err(at)?;
            let summary = registration_summary(&r, s.faces());
            write(&out.join("registration_summary.txt"), &summary).map_err(at)?;
            say(quiet, summary.trim_end());
        }
        Command::Evaluate {
            case,
            template,
            registration,
            out,
            svg,
            knobs,
        } => {
            let at = |e| ("evaluate", e);
            let (_, eo) = settings(&keys, None, Some(knobs)).map_err(at)?;
            let case = CaseDirectory::open(case).map_err(at)?;
            let (s, _) = load_map(&case).map_err(at)?;
            let (t, _) = load_map(&CaseDirectory::open(template).map_err(at)?).map_err(at)?;
            let f = io::parse_points(
                &registration.display().to_string(),
                &io::read_text(registration).map_err(at)?,
            )
            .map_err(at)?;
            let faces = s.faces();
            let final_mu_max = retmap::compute_beltrami(faces, &s.param.uv, &f)
                .map_err(at)?
                .max_modulus();
            let result = retmap::RegistrationResult {
                f,
                energy_trace: Vec::new(),
                final_mu_max,
                converged: true,
            };
            let stim = case.load_stimulus().map_err(at)?;
            let bold = case.load_bold().map_err(at)?;
            let report = evaluate_run(&s, &t, &result, &stim, &bold, &eo).map_err(at)?;
            write(
                &out.join("report.csv"),
                &emit_report(&report, ReportFormat::Csv).map_err(at)?,
            )
            .map_err(at)?;
            let text = emit_report(&report, ReportFormat::Text).map_err(at)?;
            write(&out.join("report.txt"), &text).map_err(at)?;
            write(&out.join("report_vertices.csv"), &emit_detail_csv(&report)).map_err(at)?;
            if *svg {
                write(
                    &out.join("report.svg"),
                    &emit_report(&report, ReportFormat::Svg).map_err(at)?,
                )
                .map_err(at)?;
            }
            say(quiet, text.trim_end());
        }
        Command::Synth {
            out,
            resolution,
            mu_max,
            noise,
            ecc_min,
            ecc_max,
            bands,
            wedge,
            bold_noise,
            sweeps,
            frames_per_sweep,
            stimulus_resolution,
        } => {
            let at = |e| ("synth", e);
            let spec = SyntheticSpec {
                mesh_resolution: *resolution,
                ecc_range: [*ecc_min, *ecc_max],
                wedge_deg: *wedge,
                bands: *bands,
                deformation_mu_max: *mu_max,
                visual_noise_sd: *noise,
                seed: cli.seed,
                ..Default::default()
            };
            let bold = BoldSpec {
                n_sweeps: *sweeps,
                frames_per_sweep: *frames_per_sweep,
                extent_deg: 2.0 * ecc_max,
                resolution: *stimulus_resolution,
                noise_sd: *bold_noise,
                ..Default::default()
            };
            let case = synth_case(&spec, &bold).map_err(at)?;
            write_synthetic_case(&case, out.join("subject"), out.join("template")).map_err(at)?;
            say(
                quiet,
                format!(
                    "vertices = {}\nrealized_mu_max = {}\nsubject = {}\ntemplate = {}",
                    case.subject.vertex_count(),
                    case.deformation.realized.max_modulus(),
                    out.join("subject").display(),
                    out.join("template").display()
                ),
            );
        }
        Command::PredictBold { case, out } => {
            let at = |e| ("predict-bold", e);
            let (_, eo) = settings(&keys, None, None).map_err(at)?;
            let case = CaseDirectory::open(case).map_err(at)?;
            let prf = case.load_prf().map_err(at)?;
            let stim = case.load_stimulus().map_err(at)?;
            let hrf = canonical_hrf(&eo.hrf, stim.tr(), eo.hrf_duration);
            let prfs: Vec<_> = prf
                .visual
                .iter()
                .zip(&prf.sigma)
                .map(|(v, &s)| (v[0], v[1], s))
                .collect();
            let samples = predict_bold_batch(&stim, &prfs, &hrf).map_err(at)?;
            write(
                out,
                &io::format_bold_csv(&BoldSeries {
                    samples,
                    tr: stim.tr(),
                }),
            )
            .map_err(at)?;
            say(quiet, format!("series = {}", prfs.len()));
        }
        Command::Report { input, format, out } => {
            let at = |e| ("report", e);
            let fmt: ReportFormat = format.parse().map_err(at)?;
            let report = parse_report_csv(&io::read_text(input).map_err(at)?).map_err(at)?;
            let text = emit_report(&report, fmt).map_err(at)?;
            match out {
                Some(p) => write(p, &text).map_err(at)?,
                None => print!("{text}"),
            }
        }
        Command::Pipeline {
            case,
            template,
            out,
            knobs,
            eval,
        } => {
            let (rc, eo) = settings(&keys, Some(knobs), Some(eval)).map_err(|e| ("pipeline", e))?;
            let config = PipelineConfig {
                registration: rc,
                eval: eo,
            };
            let template = CaseDirectory::open(template).map_err(|e| ("load", e))?;
            let cases = case
                .iter()
                .map(CaseDirectory::open)
                .collect::<Result<Vec<_>>>()
                .map_err(|e| ("load", e))?;
            let dirs: Vec<PathBuf> = if cases.len() == 1 {
                vec![out.clone()]
            } else {
                case.iter()
                    .enumerate()
                    .map(|(i, c)| {
                        out.join(c.file_name().map_or_else(
                            || format!("case{i}"),
                            |n| n.to_string_lossy().into_owned(),
                        ))
                    })
                    .collect()
            };
            let jobs: Vec<(&CaseDirectory, &PathBuf)> = cases.iter().zip(&dirs).collect();
            let results = par::map_slice(&jobs, |(c, d)| run_pipeline(c, &template, &config, d));
            for (r, d) in results.into_iter().zip(&dirs) {
                let outputs = r.map_err(|e| ("pipeline", e))?;
                let row = &outputs.report.rows[0];
                say(
                    quiet,
                    format!(
                        "{}: d_v {} -> {} f_flip {} rmse {} -> {}",
                        d.display(),
                        row.d_v_raw,
                        row.d_v,
                        row.f_flip,
                        row.rmse_raw,
                        row.rmse_reg
                    ),
                );
            }
        }
    }
    Ok(())
}

/// `stage=<s> code=<c> msg=<m>` on one line.
fn error_line(fallback: &str, err: &Error) -> String {
    let (stage, inner) = match err {
        Error::Stage { stage, source } => (*stage, source.as_ref()),
        e => (fallback, e),
    };
    let msg = inner.to_string().replace(['\n', '\r'], " ");
    format!("stage={stage} code={} msg={msg}", inner.code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let rendered = e.render().to_string();
            let msg: Vec<&str> = rendered
                .lines()
                .take_while(|l| !l.starts_with("Usage:"))
                .map(|l| l.trim().trim_start_matches("error: "))
                .filter(|l| !l.is_empty())
                .collect();
            eprintln!("stage=cli code=usage msg={}", msg.join(" "));
            return ExitCode::from(2);
        }
    };
    let jobs = if cli.jobs == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        cli.jobs
    };
    match par::with_threads(jobs, || run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err((stage, err)) => {
            eprintln!("{}", error_line(stage, &err));
            ExitCode::FAILURE
        }
    }
}

//! Raw-versus-registered evaluation and report rendering.
//!
//! The raw map places each subject vertex at its own disk position in the
//! template (structural correspondence, `f = id`); the registered map uses
//! the registration `f`. Both are scored over one shared vertex set.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::interp::TemplateSampler;
use crate::mesh::count_flipped;
use crate::prf::{canonical_hrf, fit_gain_and_metrics, predict_bold_batch, BoldSeries, FitEntry, HrfParams, Stimulus};
use crate::registration::RegistrationResult;
use crate::retinotopy::RetinotopicMap;
use crate::Point2;

/// How d|v| averages over vertices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DvWeighting {
    #[default]
    None,
    /// Weighted by variance explained.
    R2,
}

impl FromStr for DvWeighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "r2" => Ok(Self::R2),
            other => Err(Error::InvalidArgument(format!("unknown d|v| weighting `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub label: String,
    pub r2_threshold: f64,
    pub dv_weighting: DvWeighting,
    pub hrf: HrfParams,
    pub hrf_duration: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            label: "drrm".into(),
            r2_threshold: 0.1,
            dv_weighting: DvWeighting::None,
            hrf: HrfParams::default(),
            hrf_duration: 32.0,
        }
    }
}

fn dv_mean(values: &[(f64, f64)], weighting: DvWeighting) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyVertexSet);
    }
    Ok(match weighting {
        DvWeighting::None => values.iter().map(|v| v.0).sum::<f64>() / values.len() as f64,
        DvWeighting::R2 => {
            let w: f64 = values.iter().map(|v| v.1).sum();
            if !(w > 0.0) {
                return Err(Error::EmptyVertexSet);
            }
            values.iter().map(|v| v.0 * v.1).sum::<f64>() / w
        }
    })
}

/// Mean distance in degrees between subject coordinates and the template
/// coordinates at `f`, over vertices with R² at or above the threshold and
/// a valid interpolation.
pub fn visual_coordinate_change(
    subject: &RetinotopicMap,
    template: &RetinotopicMap,
    f: &[Point2],
    r2_threshold: f64,
    weighting: DvWeighting,
) -> Result<f64> {
    if f.len() != subject.vertex_count() {
        return Err(Error::InvalidArgument(format!(
            "map has {} points for {} vertices",
            f.len(),
            subject.vertex_count()
        )));
    }
    let samples = TemplateSampler::new(template).sample_all(f);
    let values: Vec<(f64, f64)> = samples
        .iter()
        .enumerate()
        .filter(|(i, s)| s.valid && subject.variance_explained[*i] >= r2_threshold)
        .map(|(i, s)| {
            let v = subject.visual[i];
            ((v[0] - s.visual[0]).hypot(v[1] - s.visual[1]), subject.variance_explained[i])
        })
        .collect();
    dv_mean(&values, weighting)
}

/// One paired Raw/Reg comparison row.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub label: String,
    /// d|v| before registration (`f = id`).
    pub d_v_raw: f64,
    pub d_v: f64,
    pub f_flip: usize,
    pub rmse_raw: f64,
    pub rmse_reg: f64,
    pub pc_raw: f64,
    pub pc_reg: f64,
    pub aic_raw: f64,
    pub aic_reg: f64,
    pub n_included: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertexDetail {
    pub vertex: usize,
    pub d_v_raw: f64,
    pub d_v: f64,
    pub raw: FitEntry,
    pub reg: FitEntry,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    /// Per-vertex values for the included vertices, in index order.
    pub detail: Vec<VertexDetail>,
}

impl EvalReport {
    /// Vertex indices that entered both the raw and the registered aggregates.
    pub fn included(&self) -> Vec<usize> {
        self.detail.iter().map(|d| d.vertex).collect()
    }
}

/// Scores the raw and registered maps against observed BOLD series.
pub fn evaluate_run(
    subject: &RetinotopicMap,
    template: &RetinotopicMap,
    registration: &RegistrationResult,
    stimulus: &Stimulus,
    observed: &BoldSeries,
    options: &EvalOptions,
) -> Result<EvalReport> {
    let n = subject.vertex_count();
    if registration.f.len() != n || observed.samples.len() != n {
        return Err(Error::InvalidArgument(format!(
            "subject has {n} vertices, registration {} and BOLD {}",
            registration.f.len(),
            observed.samples.len()
        )));
    }
    if let Some(s) = observed.samples.iter().find(|s| s.len() != stimulus.frame_count()) {
        return Err(Error::InvalidArgument(format!(
            "BOLD series has {} samples for {} stimulus frames",
            s.len(),
            stimulus.frame_count()
        )));
    }
    let sampler = TemplateSampler::new(template);
    let raw = sampler.sample_all(&subject.param.uv);
    let reg = sampler.sample_all(&registration.f);
    let candidates: Vec<usize> = (0..n)
        .filter(|&i| subject.variance_explained[i] >= options.r2_threshold && raw[i].valid && reg[i].valid)
        .collect();

    let hrf = canonical_hrf(&options.hrf, stimulus.tr(), options.hrf_duration);
    let prfs = |s: &[crate::interp::TemplateSample]| -> Vec<(f64, f64, f64)> {
        candidates.iter().map(|&i| (s[i].visual[0], s[i].visual[1], s[i].prf_size)).collect()
    };
    let pred_raw = predict_bold_batch(stimulus, &prfs(&raw), &hrf)?;
    let pred_reg = predict_bold_batch(stimulus, &prfs(&reg), &hrf)?;

    let mut detail = Vec::with_capacity(candidates.len());
    let mut dv_pairs = Vec::with_capacity(candidates.len());
    for (k, &i) in candidates.iter().enumerate() {
        let obs = &observed.samples[i];
        // a vertex enters only if both fits are defined, keeping the sets paired
        let (Ok(fr), Ok(fg)) = (fit_gain_and_metrics(obs, &pred_raw[k]), fit_gain_and_metrics(obs, &pred_reg[k]))
        else {
            continue;
        };
        let v = subject.visual[i];
        let d_raw = (v[0] - raw[i].visual[0]).hypot(v[1] - raw[i].visual[1]);
        let d_reg = (v[0] - reg[i].visual[0]).hypot(v[1] - reg[i].visual[1]);
        dv_pairs.push((d_raw, d_reg, subject.variance_explained[i]));
        detail.push(VertexDetail { vertex: i, d_v_raw: d_raw, d_v: d_reg, raw: fr, reg: fg });
    }
    if detail.is_empty() {
        return Err(Error::EmptyVertexSet);
    }
    let m = detail.len() as f64;
    let mean = |g: &dyn Fn(&VertexDetail) -> f64| detail.iter().map(g).sum::<f64>() / m;
    let raw_pairs: Vec<(f64, f64)> = dv_pairs.iter().map(|p| (p.0, p.2)).collect();
    let reg_pairs: Vec<(f64, f64)> = dv_pairs.iter().map(|p| (p.1, p.2)).collect();
    let row = EvalRow {
        label: options.label.clone(),
        d_v_raw: dv_mean(&raw_pairs, options.dv_weighting)?,
        d_v: dv_mean(&reg_pairs, options.dv_weighting)?,
        f_flip: count_flipped(&registration.f, subject.faces()),
        rmse_raw: mean(&|d| d.raw.rmse),
        rmse_reg: mean(&|d| d.reg.rmse),
        pc_raw: mean(&|d| d.raw.pearson),
        pc_reg: mean(&|d| d.reg.pearson),
        aic_raw: mean(&|d| d.raw.aic),
        aic_reg: mean(&|d| d.reg.aic),
        n_included: detail.len(),
    };
    Ok(EvalReport { rows: vec![row], detail })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
    Svg,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" | "txt" => Ok(Self::Text),
            "csv" => Ok(Self::Csv),
            "svg" => Ok(Self::Svg),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

pub const REPORT_CSV_HEADER: &str =
    "label,d_v_raw,d_v,f_flip,rmse_raw,rmse_reg,pc_raw,pc_reg,aic_raw,aic_reg,n_included";

pub fn emit_report(report: &EvalReport, format: ReportFormat) -> Result<String> {
    if report.rows.is_empty() {
        return Err(Error::InvalidArgument("report has no rows".into()));
    }
    if let Some(r) = report.rows.iter().find(|r| r.label.contains([',', '\n', '\r'])) {
        return Err(Error::InvalidArgument(format!("label `{}` contains a separator", r.label)));
    }
    Ok(match format {
        ReportFormat::Csv => emit_csv(report),
        ReportFormat::Text => emit_text(report),
        ReportFormat::Svg => emit_svg(report),
    })
}

fn emit_csv(report: &EvalReport) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.label,
            r.d_v_raw,
            r.d_v,
            r.f_flip,
            r.rmse_raw,
            r.rmse_reg,
            r.pc_raw,
            r.pc_reg,
            r.aic_raw,
            r.aic_reg,
            r.n_included
        );
    }
    out
}

/// Parses the CSV produced by [`emit_report`]; vertex detail is not stored
/// there and comes back empty.
pub fn parse_report_csv(text: &str) -> Result<EvalReport> {
    let err = |line: usize, msg: String| Error::Parse { source_name: "report.csv".into(), line, msg };
    let mut lines = text.lines();
    if lines.next() != Some(REPORT_CSV_HEADER) {
        return Err(err(1, "unexpected header".into()));
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let ln = k + 2;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 11 {
            return Err(err(ln, format!("expected 11 fields, found {}", cells.len())));
        }
        let num = |i: usize| cells[i].parse::<f64>().map_err(|e| err(ln, format!("field {}: {e}", i + 1)));
        let int = |i: usize| cells[i].parse::<usize>().map_err(|e| err(ln, format!("field {}: {e}", i + 1)));
        rows.push(EvalRow {
            label: cells[0].to_string(),
            d_v_raw: num(1)?,
            d_v: num(2)?,
            f_flip: int(3)?,
            rmse_raw: num(4)?,
            rmse_reg: num(5)?,
            pc_raw: num(6)?,
            pc_reg: num(7)?,
            aic_raw: num(8)?,
            aic_reg: num(9)?,
            n_included: int(10)?,
        });
    }
    Ok(EvalReport { rows, detail: Vec::new() })
}

fn emit_text(report: &EvalReport) -> String {
    let header = ["Method", "d|v|", "F_flip", "RMSE (Raw/Reg)", "Correlation p_c (Raw/Reg)", "AIC (Raw/Reg)"];
    let body: Vec<[String; 6]> = report
        .rows
        .iter()
        .map(|r| {
            [
                r.label.clone(),
                format!("{:.3}", r.d_v),
                r.f_flip.to_string(),
                format!("{:.3}/{:.3}", r.rmse_raw, r.rmse_reg),
                format!("{:.3}/{:.3}", r.pc_raw, r.pc_reg),
                format!("{:.1}/{:.1}", r.aic_raw, r.aic_reg),
            ]
        })
        .collect();
    let mut width = header.map(str::len);
    for row in &body {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[&str]| {
        let joined: Vec<String> = cells.iter().zip(&width).map(|(c, w)| format!("{c:<w$}")).collect();
        out.push_str(joined.join("  ").trim_end());
        out.push('\n');
    };
    line(&header);
    for row in &body {
        line(&row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}

fn emit_svg(report: &EvalReport) -> String {
    // grouped bars, one panel per metric, raw in grey and registered in blue
    type Pick = fn(&EvalRow) -> (f64, f64);
    let metrics: [(&str, Pick); 3] =
        [("d|v|", |r| (r.d_v_raw, r.d_v)), ("RMSE", |r| (r.rmse_raw, r.rmse_reg)), ("p_c", |r| (r.pc_raw, r.pc_reg))];
    let (pw, ph, pad) = (220.0, 180.0, 30.0);
    let width = metrics.len() as f64 * pw;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{}\" viewBox=\"0 0 {width} {}\">",
        ph + 2.0 * pad,
        ph + 2.0 * pad
    );
    for (m, (name, get)) in metrics.iter().enumerate() {
        let x0 = m as f64 * pw + pad;
        let values: Vec<(f64, f64)> = report.rows.iter().map(get).collect();
        let top = values.iter().flat_map(|v| [v.0.abs(), v.1.abs()]).filter(|v| v.is_finite()).fold(0.0, f64::max);
        let scale = if top > 0.0 { (ph - pad) / top } else { 0.0 };
        let _ = writeln!(out, "<text x=\"{x0}\" y=\"{}\" font-size=\"12\">{}</text>", pad - 8.0, xml_escape(name));
        let slot = (pw - 2.0 * pad) / values.len().max(1) as f64;
        for (k, (raw, reg)) in values.iter().enumerate() {
            for (j, (v, fill)) in [(raw, "#999999"), (reg, "#3366cc")].iter().enumerate() {
                let h = if v.is_finite() { v.abs() * scale } else { 0.0 };
                let x = x0 + k as f64 * slot + j as f64 * slot / 2.0;
                let _ = writeln!(
                    out,
                    "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{h:.2}\" fill=\"{fill}\"/>",
                    pad + ph - pad - h,
                    slot / 2.0 - 2.0
                );
            }
            let _ = writeln!(
                out,
                "<text x=\"{:.2}\" y=\"{}\" font-size=\"10\">{}</text>",
                x0 + k as f64 * slot,
                ph + pad - 10.0,
                xml_escape(&report.rows[k].label)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

pub(crate) fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub const DETAIL_CSV_HEADER: &str =
    "vertex,d_v_raw,d_v,rmse_raw,rmse_reg,pc_raw,pc_reg,aic_raw,aic_reg,rss_raw,rss_reg";

/// Per-vertex table of the included vertices.
pub fn emit_detail_csv(report: &EvalReport) -> String {
    let mut out = String::from(DETAIL_CSV_HEADER);
    out.push('\n');
    for d in &report.detail {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            d.vertex,
            d.d_v_raw,
            d.d_v,
            d.raw.rmse,
            d.reg.rmse,
            d.raw.pearson,
            d.reg.pearson,
            d.raw.aic,
            d.reg.aic,
            d.raw.rss,
            d.reg.rss
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_bar_stimulus, synth_template, SyntheticSpec};

    fn template() -> RetinotopicMap {
        synth_template(&SyntheticSpec { mesh_resolution: 400, ..Default::default() }).unwrap()
    }

    fn row(label: &str) -> EvalRow {
        EvalRow {
            label: label.into(),
            d_v_raw: 1.25,
            d_v: 0.1 + 0.2,
            f_flip: 0,
            rmse_raw: 2.0 / 3.0,
            rmse_reg: 0.5,
            pc_raw: 0.3,
            pc_reg: 0.45,
            aic_raw: -12.5,
            aic_reg: -20.0,
            n_included: 10,
        }
    }

    #[test]
    fn dv_examples() {
        let t = template();
        assert_eq!(visual_coordinate_change(&t, &t, &t.param.uv, 0.1, DvWeighting::None).unwrap(), 0.0);

        // ten included vertices, one of them off by one degree in x
        let mut s = t.clone();
        for (i, r) in s.variance_explained.iter_mut().enumerate() {
            *r = if i < 10 { 1.0 } else { 0.0 };
        }
        s.visual[3][0] += 1.0;
        let dv = visual_coordinate_change(&s, &t, &t.param.uv, 0.1, DvWeighting::None).unwrap();
        assert!((dv - 0.1).abs() < 1e-12);

        s.variance_explained.iter_mut().for_each(|r| *r = 0.0);
        assert!(matches!(
            visual_coordinate_change(&s, &t, &t.param.uv, 0.1, DvWeighting::None),
            Err(Error::EmptyVertexSet)
        ));
    }

    #[test]
    fn dv_is_rotation_invariant_in_visual_space() {
        let t = template();
        let mut s = t.clone();
        for (i, v) in s.visual.iter_mut().enumerate() {
            v[0] += (i as f64 * 0.37).sin();
            v[1] += (i as f64 * 0.11).cos();
        }
        let rot = |m: &mut RetinotopicMap| {
            let (c, sn) = (1.1f64.cos(), 1.1f64.sin());
            m.visual.iter_mut().for_each(|v| *v = [c * v[0] - sn * v[1], sn * v[0] + c * v[1]]);
        };
        let a = visual_coordinate_change(&s, &t, &t.param.uv, 0.1, DvWeighting::None).unwrap();
        let (mut s2, mut t2) = (s.clone(), t.clone());
        rot(&mut s2);
        rot(&mut t2);
        let b = visual_coordinate_change(&s2, &t2, &t2.param.uv, 0.1, DvWeighting::None).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn identity_registration_gives_identical_columns() {
        let t = template();
        let stim = synth_bar_stimulus(2, 10, 24.0, 21, 1.0).unwrap();
        let hrf = canonical_hrf(&HrfParams::default(), 1.0, 32.0);
        let prfs: Vec<_> = t.visual.iter().zip(&t.prf_size).map(|(v, &s)| (v[0], v[1], s)).collect();
        let mut samples = predict_bold_batch(&stim, &prfs, &hrf).unwrap();
        for (i, s) in samples.iter_mut().enumerate() {
            for (k, v) in s.iter_mut().enumerate() {
                *v += 0.01 * ((i * 31 + k * 7) as f64).sin();
            }
        }
        let bold = BoldSeries { samples, tr: 1.0 };
        let reg =
            RegistrationResult { f: t.param.uv.clone(), energy_trace: vec![], final_mu_max: 0.0, converged: true };
        let r = evaluate_run(&t, &t, &reg, &stim, &bold, &EvalOptions::default()).unwrap();
        let row = &r.rows[0];
        assert_eq!(row.rmse_raw, row.rmse_reg);
        assert_eq!(row.pc_raw, row.pc_reg);
        assert_eq!(row.aic_raw, row.aic_reg);
        assert_eq!(row.d_v_raw, row.d_v);
        assert_eq!(row.f_flip, count_flipped(&reg.f, t.faces()));
        assert_eq!(row.n_included, r.included().len());
    }

    #[test]
    fn csv_round_trip() {
        let report = EvalReport { rows: vec![row("lh")], detail: vec![] };
        let csv = emit_report(&report, ReportFormat::Csv).unwrap();
        assert_eq!(csv.lines().count(), 2);
        let again = emit_report(&parse_report_csv(&csv).unwrap(), ReportFormat::Csv).unwrap();
        assert_eq!(csv, again);
        assert_eq!(parse_report_csv(&csv).unwrap(), report);
    }

    #[test]
    fn text_column_order() {
        let report = EvalReport { rows: vec![row("lh"), row("rh")], detail: vec![] };
        let text = emit_report(&report, ReportFormat::Text).unwrap();
        let header = text.lines().next().unwrap();
        let pos: Vec<usize> =
            ["d|v|", "F_flip", "RMSE", "Correlation", "AIC"].iter().map(|k| header.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn formats() {
        assert!(matches!("xlsx".parse::<ReportFormat>(), Err(Error::UnknownFormat(_))));
        let report = EvalReport { rows: vec![row("a<b")], detail: vec![] };
        let svg = emit_report(&report, ReportFormat::Svg).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("a&lt;b"));
        assert_eq!(svg, emit_report(&report, ReportFormat::Svg).unwrap());
        assert!(emit_report(&EvalReport::default(), ReportFormat::Csv).is_err());
    }
}

//! Deterministic SVG renderings of per-vertex fields on the disk.

use std::fmt::Write as _;

use crate::eval::xml_escape;
use crate::Point2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColormapMode {
    /// Linear ramp between the field's minimum and maximum.
    Sequential,
    /// Angles in degrees on a periodic hue wheel.
    Cyclic,
}

pub type Rgb = [u8; 3];

// viridis anchors
const SEQUENTIAL: [[f64; 3]; 5] =
    [[68.0, 1.0, 84.0], [59.0, 82.0, 139.0], [33.0, 145.0, 140.0], [94.0, 201.0, 98.0], [253.0, 231.0, 37.0]];

/// Sequential colour for `t` in `[0, 1]` (clamped).
pub fn sequential_color(t: f64) -> Rgb {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (SEQUENTIAL.len() - 1) as f64;
    let i = (x.floor() as usize).min(SEQUENTIAL.len() - 2);
    let f = x - i as f64;
    let mut c = [0u8; 3];
    for k in 0..3 {
        c[k] = (SEQUENTIAL[i][k] + f * (SEQUENTIAL[i + 1][k] - SEQUENTIAL[i][k])).round() as u8;
    }
    c
}

/// Hue-wheel colour for an angle in degrees; period 360.
pub fn cyclic_color(angle_deg: f64) -> Rgb {
    let h = angle_deg.rem_euclid(360.0) / 60.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    // slightly desaturated so the wheel reads well on white
    let mix = |v: f64| (40.0 + 200.0 * v).round() as u8;
    [mix(r), mix(g), mix(b)]
}

fn face_value(values: &[f64], f: &[usize; 3], mode: ColormapMode) -> f64 {
    match mode {
        ColormapMode::Sequential => (values[f[0]] + values[f[1]] + values[f[2]]) / 3.0,
        ColormapMode::Cyclic => {
            // circular mean so faces straddling the seam get a seam colour
            let (mut s, mut c) = (0.0, 0.0);
            for &v in f {
                let t = values[v].to_radians();
                s += t.sin();
                c += t.cos();
            }
            s.atan2(c).to_degrees()
        }
    }
}

/// Triangle-fill rendering of a per-vertex field over disk coordinates.
pub fn plot_disk_map(uv: &[Point2], faces: &[[usize; 3]], values: &[f64], mode: ColormapMode, title: &str) -> String {
    let per_face: Vec<f64> = faces.iter().map(|f| face_value(values, f, mode)).collect();
    render(uv, faces, &per_face, mode, title, None)
}

/// Sequential rendering of a per-face scalar with the triangle edges drawn.
pub fn plot_face_field(uv: &[Point2], faces: &[[usize; 3]], per_face: &[f64], title: &str) -> String {
    render(uv, faces, per_face, ColormapMode::Sequential, title, Some([60, 60, 60]))
}

fn render(
    uv: &[Point2],
    faces: &[[usize; 3]],
    per_face: &[f64],
    mode: ColormapMode,
    title: &str,
    edge: Option<Rgb>,
) -> String {
    let size = 400.0;
    let margin = 20.0;
    let scale = (size - 2.0 * margin) / 2.0;
    let to_px = |p: &Point2| [margin + (p[0] + 1.0) * scale, margin + (1.0 - p[1]) * scale];
    let (lo, hi) = per_face
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let color = |v: f64| match mode {
        ColormapMode::Sequential => sequential_color(if hi > lo { (v - lo) / (hi - lo) } else { 0.5 }),
        ColormapMode::Cyclic => cyclic_color(v),
    };
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{}\" viewBox=\"0 0 {size} {}\">",
        size + 20.0,
        size + 20.0
    );
    let _ = writeln!(out, "<text x=\"{margin}\" y=\"14\" font-size=\"12\">{}</text>", xml_escape(title));
    let _ = writeln!(out, "<g transform=\"translate(0 10)\" stroke-width=\"0.2\">");
    for (f, &v) in faces.iter().zip(per_face) {
        let c = color(v);
        let s = edge.unwrap_or(c);
        let p: Vec<[f64; 2]> = f.iter().map(|&v| to_px(&uv[v])).collect();
        let _ = writeln!(
            out,
            "<polygon points=\"{:.3},{:.3} {:.3},{:.3} {:.3},{:.3}\" fill=\"#{:02x}{:02x}{:02x}\" stroke=\"#{:02x}{:02x}{:02x}\"/>",
            p[0][0], p[0][1], p[1][0], p[1][1], p[2][0], p[2][1], c[0], c[1], c[2], s[0], s[1], s[2]
        );
    }
    out.push_str("</g>\n</svg>\n");
    out
}

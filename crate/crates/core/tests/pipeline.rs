use retmap::case::{write_synthetic_case, CaseDirectory, CaseFile};
use retmap::io::AngleConvention;
use retmap::pipeline::{run_pipeline, PipelineConfig};
use retmap::synth::{synth_case, BoldSpec, SyntheticSpec};

const OUTPUTS: [&str; 12] = [
    "registration.txt",
    "energy_trace.csv",
    "registration_summary.txt",
    "registered_prf.csv",
    "disk_eccentricity_raw.svg",
    "disk_polar_angle_raw.svg",
    "disk_eccentricity_registered.svg",
    "disk_polar_angle_registered.svg",
    "report.csv",
    "report.txt",
    "report.svg",
    "report_vertices.csv",
];

#[test]
fn recovery_case_produces_full_flip_free_output() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        mesh_resolution: 1500,
        deformation_mu_max: 0.4,
        visual_noise_sd: 0.5,
        seed: 21,
        ..Default::default()
    };
    let case = synth_case(&spec, &BoldSpec::default()).unwrap();
    let (s, t) = write_synthetic_case(&case, dir.path().join("s"), dir.path().join("t")).unwrap();
    assert!(s.has(CaseFile::Truth) && s.has(CaseFile::BoldClean));
    let out = run_pipeline(&s, &t, &PipelineConfig::default(), dir.path().join("out")).unwrap();
    for name in OUTPUTS {
        assert!(out.dir.join(name).is_file(), "{name} missing");
    }
    let row = &out.report.rows[0];
    assert_eq!(row.f_flip, 0);
    assert!(row.d_v < 0.5 * row.d_v_raw, "{} -> {}", row.d_v_raw, row.d_v);
    assert!(row.rmse_reg < row.rmse_raw);
    assert!(row.pc_reg > row.pc_raw);
    let trace = &out.registration.energy_trace;
    assert!(trace.windows(2).all(|w| w[1].total <= w[0].total));
}

#[test]
fn neuroscience_angle_convention_is_converted_on_load() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec { mesh_resolution: 200, seed: 2, ..Default::default() };
    let bold = BoldSpec { resolution: 21, frames_per_sweep: 10, ..Default::default() };
    let case = synth_case(&spec, &bold).unwrap();
    let (s, _) = write_synthetic_case(&case, dir.path().join("s"), dir.path().join("t")).unwrap();
    let native = s.load_prf().unwrap();

    // rewrite the table as eccentricity / clockwise-from-upper-vertical angle
    let mut w = retmap::case::CaseWriter::create(dir.path().join("cw")).unwrap();
    w.angle_convention(AngleConvention::CwFromUpperVertical);
    let mut text = String::from("# angle_convention: cw_from_upper_vertical\nvertex,ecc,ang,sigma,r2\n");
    for i in 0..native.visual.len() {
        let v = native.visual[i];
        let ecc = v[0].hypot(v[1]);
        let math = v[1].atan2(v[0]).to_degrees();
        text.push_str(&format!("{i},{},{},{},{}\n", ecc, 90.0 - math, native.sigma[i], native.r2[i]));
    }
    w.write(CaseFile::Prf, &text).unwrap();
    let cw = w.finish().unwrap();
    let converted = CaseDirectory::open(cw.root()).unwrap().load_prf().unwrap();
    for (a, b) in converted.visual.iter().zip(&native.visual) {
        assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9, "{a:?} vs {b:?}");
    }
}

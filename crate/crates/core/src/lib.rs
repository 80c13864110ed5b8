//! Flip-free registration of retinotopic maps.
//!
//! A cortical patch with disk topology is flattened onto the unit disk, a
//! subject's visual-field coordinates are aligned to a template's by
//! minimizing a weighted data term plus a smoothness term, and every accepted
//! map is kept quasiconformal (`|mu| < 1` on each face) by projecting the
//! Beltrami coefficient and reconstructing with the linear Beltrami solver.
//!
//! The crate also carries a linear population-receptive-field forward model
//! used to score maps against BOLD time series, a synthetic data generator
//! with known ground truth, and the text formats / case directories used by
//! the `retmap` command line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beltrami;
pub mod case;
pub mod error;
pub mod eval;
pub mod flatten;
pub mod interp;
pub mod io;
pub mod mesh;
pub mod par;
pub mod pipeline;
pub mod plot;
pub mod prf;
pub mod registration;
pub mod retinotopy;
pub mod sparse;
pub mod synth;

pub use beltrami::{clamp_beltrami, compute_beltrami, linear_beltrami_solve, BeltramiField};
pub use error::{Error, Result};
pub use eval::{emit_report, evaluate_run, visual_coordinate_change, EvalReport, ReportFormat};
pub use flatten::{conformal_error, conformal_refine, harmonic_disk_map, DiskParameterization};
pub use interp::{interpolate_template, TemplateSample, TemplateSampler};
pub use mesh::{count_flipped, triangle_orientation_signs, validate_topology, CorticalMesh, TopologyReport};
pub use prf::{
    canonical_hrf, fit_gain_and_metrics, predict_bold, prf_drive, BoldSeries, FitMetrics, HrfParams, Stimulus,
};
pub use registration::{
    apply_registration, register, registration_energy, EnergyTerms, RegisteredMap, RegistrationConfig,
    RegistrationResult, SmoothConvention,
};
pub use retinotopy::RetinotopicMap;

/// 2D point used for disk and visual-field coordinates.
pub type Point2 = [f64; 2];
/// 3D point in millimetres.
pub type Point3 = [f64; 3];

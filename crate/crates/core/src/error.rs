use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("face {face} references vertex {index} but the mesh has {vertex_count} vertices")]
    IndexOutOfBounds { face: usize, index: usize, vertex_count: usize },
    #[error("face {face} repeats a vertex")]
    RepeatedVertex { face: usize },
    #[error("face {face} has area {area:e} below 1e-12")]
    DegenerateFace { face: usize, area: f64 },
    #[error("edge ({0}, {1}) is shared by more than two faces")]
    NonManifoldEdge(usize, usize),
    #[error("mesh has {0} connected components")]
    MultipleComponents(usize),
    #[error("faces adjacent across edge ({0}, {1}) have inconsistent orientation")]
    InconsistentOrientation(usize, usize),
    #[error("mesh is not a topological disk (euler {euler}, {boundary_loops} boundary loops)")]
    NotADisk { euler: i64, boundary_loops: usize },
    #[error("source face {0} is degenerate")]
    DegenerateSourceFace(usize),
    #[error("face {0} has |f_z| below 1e-14; Beltrami coefficient undefined")]
    ConformalSingularity(usize),
    #[error("Beltrami coefficient on face {face} has modulus {modulus} >= 1")]
    MuOutOfRange { face: usize, modulus: f64 },
    #[error("at least two pinned vertices are required, got {0}")]
    ConstraintInsufficient(usize),
    #[error("linear solve failed: {0}")]
    SolverFailure(String),
    #[error("line search made no progress at the first iteration")]
    NoProgress,
    #[error("sigma must be positive, got {0}")]
    SigmaNonPositive(f64),
    #[error("series is degenerate (zero variance)")]
    DegenerateSeries,
    #[error("no vertices left to aggregate")]
    EmptyVertexSet,
    #[error("unknown report format `{0}`")]
    UnknownFormat(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error in {source_name} line {line}: {msg}")]
    Parse { source_name: String, line: usize, msg: String },
    #[error("checksum mismatch for {0}")]
    ChecksumMismatch(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Short machine-readable code for command line diagnostics.
    pub fn code(&self) -> &'static str {
        match self {
            Error::IndexOutOfBounds { .. } => "index_out_of_bounds",
            Error::RepeatedVertex { .. } => "repeated_vertex",
            Error::DegenerateFace { .. } => "degenerate_face",
            Error::NonManifoldEdge(..) => "non_manifold_edge",
            Error::MultipleComponents(_) => "multiple_components",
            Error::InconsistentOrientation(..) => "inconsistent_orientation",
            Error::NotADisk { .. } => "not_a_disk",
            Error::DegenerateSourceFace(_) => "degenerate_source_face",
            Error::ConformalSingularity(_) => "conformal_singularity",
            Error::MuOutOfRange { .. } => "mu_out_of_range",
            Error::ConstraintInsufficient(_) => "constraint_insufficient",
            Error::SolverFailure(_) => "solver_failure",
            Error::NoProgress => "no_progress",
            Error::SigmaNonPositive(_) => "sigma_non_positive",
            Error::DegenerateSeries => "degenerate_series",
            Error::EmptyVertexSet => "empty_vertex_set",
            Error::UnknownFormat(_) => "unknown_format",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Parse { .. } => "parse",
            Error::ChecksumMismatch(_) => "checksum_mismatch",
            Error::Io { .. } => "io",
            Error::Stage { source, .. } => source.code(),
        }
    }

    /// Pipeline stage this error was raised in, if it was wrapped by one.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage { stage, source: Box::new(e) },
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Error {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }
}

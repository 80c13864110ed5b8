//! Case directories: one subject (or template) per directory, with a
//! manifest of SHA-256 checksums verified on every load.
//!
//! Manifest layout (`manifest.txt`):
//!
//! ```text
//! RETCASE 1
//! angle_convention math_ccw_from_positive_x
//! sha256 <hex> mesh.txt
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::flatten::DiskParameterization;
use crate::io::{self, AngleConvention};
use crate::mesh::CorticalMesh;
use crate::prf::{BoldSeries, Stimulus};
use crate::retinotopy::RetinotopicMap;
use crate::synth::SyntheticCase;
use crate::Point2;

pub const MANIFEST: &str = "manifest.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CaseFile {
    Mesh,
    Uv,
    Prf,
    Stimulus,
    Bold,
    BoldClean,
    /// Ground-truth forward deformation of synthetic cases.
    Truth,
}

impl CaseFile {
    pub const ALL: [CaseFile; 7] =
        [Self::Mesh, Self::Uv, Self::Prf, Self::Stimulus, Self::Bold, Self::BoldClean, Self::Truth];

    pub fn file_name(self) -> &'static str {
        match self {
            Self::Mesh => "mesh.txt",
            Self::Uv => "uv.txt",
            Self::Prf => "prf.csv",
            Self::Stimulus => "stimulus.txt",
            Self::Bold => "bold.csv",
            Self::BoldClean => "bold_clean.csv",
            Self::Truth => "truth.txt",
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    /// Convention of the polar angles stored in `prf.csv`.
    pub angle_convention: AngleConvention,
    /// File name to checksum.
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub fn format(&self) -> String {
        let mut s = format!("RETCASE 1\nangle_convention {}\n", self.angle_convention.name());
        for (name, sum) in &self.files {
            let _ = writeln!(s, "sha256 {sum} {name}");
        }
        s
    }

    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse { source_name: name.to_string(), line, msg };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some((_, l)) if l.trim() == "RETCASE 1" => {}
            _ => return Err(err(1, "expected `RETCASE 1`".into())),
        }
        let mut m = Manifest::default();
        for (i, l) in lines {
            let parts: Vec<&str> = l.split_whitespace().collect();
            match parts.as_slice() {
                ["angle_convention", c] => {
                    m.angle_convention = c.parse().map_err(|e: Error| err(i + 1, e.to_string()))?
                }
                ["sha256", sum, file] if sum.len() == 64 => {
                    m.files.insert(file.to_string(), sum.to_string());
                }
                _ => return Err(err(i + 1, format!("unrecognized manifest line `{l}`"))),
            }
        }
        Ok(m)
    }
}

/// A case directory opened for reading. Files are read lazily and each read
/// is checked against the manifest.
#[derive(Debug, Clone)]
pub struct CaseDirectory {
    root: PathBuf,
    manifest: Manifest,
}

impl CaseDirectory {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let mpath = root.join(MANIFEST);
        let manifest = Manifest::parse(&mpath.display().to_string(), &io::read_text(&mpath)?)?;
        for kind in CaseFile::ALL {
            let name = kind.file_name();
            if root.join(name).exists() && !manifest.files.contains_key(name) {
                return Err(Error::ChecksumMismatch(format!("{name} is present but not listed in the manifest")));
            }
        }
        Ok(Self { root, manifest })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn path(&self, kind: CaseFile) -> PathBuf {
        self.root.join(kind.file_name())
    }

    pub fn has(&self, kind: CaseFile) -> bool {
        self.manifest.files.contains_key(kind.file_name())
    }

    fn read(&self, kind: CaseFile) -> Result<String> {
        let name = kind.file_name();
        let path = self.path(kind);
        let expected =
            self.manifest.files.get(name).ok_or_else(|| {
                Error::io(&path, std::io::Error::new(std::io::ErrorKind::NotFound, "not in manifest"))
            })?;
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if &sha256_hex(&bytes) != expected {
            return Err(Error::ChecksumMismatch(path.display().to_string()));
        }
        String::from_utf8(bytes).map_err(|_| Error::Parse {
            source_name: path.display().to_string(),
            line: 0,
            msg: "not valid UTF-8".into(),
        })
    }

    fn label(&self, kind: CaseFile) -> String {
        self.path(kind).display().to_string()
    }

    pub fn load_mesh(&self) -> Result<CorticalMesh> {
        io::parse_mesh(&self.label(CaseFile::Mesh), &self.read(CaseFile::Mesh)?)
    }

    pub fn load_uv(&self) -> Result<Option<DiskParameterization>> {
        if !self.has(CaseFile::Uv) {
            return Ok(None);
        }
        io::parse_uv(&self.label(CaseFile::Uv), &self.read(CaseFile::Uv)?).map(Some)
    }

    pub fn load_prf(&self) -> Result<io::PrfTable> {
        // the manifest's declared convention wins over the file's own line
        io::parse_prf_csv(&self.label(CaseFile::Prf), &self.read(CaseFile::Prf)?, Some(self.manifest.angle_convention))
    }

    /// Assembles the retinotopic map on the given parameterization.
    pub fn load_map(&self, mesh: CorticalMesh, param: DiskParameterization) -> Result<RetinotopicMap> {
        let prf = self.load_prf()?;
        RetinotopicMap::new(mesh, param, prf.visual, prf.sigma, prf.r2)
    }

    pub fn load_stimulus(&self) -> Result<Stimulus> {
        io::parse_stimulus(&self.label(CaseFile::Stimulus), &self.read(CaseFile::Stimulus)?)
    }

    pub fn load_bold(&self) -> Result<BoldSeries> {
        io::parse_bold_csv(&self.label(CaseFile::Bold), &self.read(CaseFile::Bold)?)
    }

    pub fn load_bold_clean(&self) -> Result<BoldSeries> {
        io::parse_bold_csv(&self.label(CaseFile::BoldClean), &self.read(CaseFile::BoldClean)?)
    }

    pub fn load_truth(&self) -> Result<Option<Vec<Point2>>> {
        if !self.has(CaseFile::Truth) {
            return Ok(None);
        }
        io::parse_points(&self.label(CaseFile::Truth), &self.read(CaseFile::Truth)?).map(Some)
    }
}

/// Writes files into a case directory and records their checksums; the
/// manifest is written by [`CaseWriter::finish`].
#[derive(Debug)]
pub struct CaseWriter {
    root: PathBuf,
    manifest: Manifest,
}

impl CaseWriter {
    pub fn create(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self { root, manifest: Manifest::default() })
    }

    pub fn angle_convention(&mut self, c: AngleConvention) -> &mut Self {
        self.manifest.angle_convention = c;
        self
    }

    pub fn write(&mut self, kind: CaseFile, text: &str) -> Result<&mut Self> {
        io::write_text(self.root.join(kind.file_name()), text)?;
        self.manifest.files.insert(kind.file_name().to_string(), sha256_hex(text.as_bytes()));
        Ok(self)
    }

    pub fn finish(self) -> Result<CaseDirectory> {
        io::write_text(self.root.join(MANIFEST), &self.manifest.format())?;
        CaseDirectory::open(&self.root)
    }
}

/// Writes a map's mesh, parameterization and pRF table.
pub fn write_map(writer: &mut CaseWriter, map: &RetinotopicMap) -> Result<()> {
    writer.write(CaseFile::Mesh, &io::format_mesh(&map.mesh))?;
    writer.write(CaseFile::Uv, &io::format_uv(&map.param))?;
    writer.write(CaseFile::Prf, &io::format_prf_csv(&map.visual, &map.prf_size, &map.variance_explained))?;
    Ok(())
}

/// Writes a synthetic experiment as a subject directory and a template
/// directory.
pub fn write_synthetic_case(
    case: &SyntheticCase,
    subject_dir: impl AsRef<Path>,
    template_dir: impl AsRef<Path>,
) -> Result<(CaseDirectory, CaseDirectory)> {
    let mut s = CaseWriter::create(subject_dir)?;
    write_map(&mut s, &case.subject)?;
    s.write(CaseFile::Stimulus, &io::format_stimulus(&case.stimulus))?;
    s.write(CaseFile::Bold, &io::format_bold_csv(&case.bold_noisy))?;
    s.write(CaseFile::BoldClean, &io::format_bold_csv(&case.bold_clean))?;
    s.write(CaseFile::Truth, &io::format_points(&case.deformation.forward))?;
    let mut t = CaseWriter::create(template_dir)?;
    write_map(&mut t, &case.template)?;
    Ok((s.finish()?, t.finish()?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_case, BoldSpec, SyntheticSpec};

    #[test]
    fn sha256_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn manifest_round_trip() {
        let mut m = Manifest { angle_convention: AngleConvention::CwFromUpperVertical, files: BTreeMap::new() };
        m.files.insert("mesh.txt".into(), sha256_hex(b"x"));
        assert_eq!(Manifest::parse("m", &m.format()).unwrap(), m);
        assert!(Manifest::parse("m", "RETCASE 1\nbogus line\n").is_err());
    }

    #[test]
    fn synthetic_case_round_trip_and_checksums() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec { mesh_resolution: 200, ..Default::default() };
        let bold = BoldSpec { resolution: 21, frames_per_sweep: 8, ..Default::default() };
        let case = synth_case(&spec, &bold).unwrap();
        let (s, t) = write_synthetic_case(&case, dir.path().join("s"), dir.path().join("t")).unwrap();
        let mesh = s.load_mesh().unwrap();
        assert_eq!(mesh, case.subject.mesh);
        let uv = s.load_uv().unwrap().unwrap();
        assert_eq!(uv, case.subject.param);
        let map = s.load_map(mesh, uv).unwrap();
        for (a, b) in map.visual.iter().zip(&case.subject.visual) {
            assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
        }
        assert_eq!(s.load_bold().unwrap(), case.bold_noisy);
        assert_eq!(s.load_truth().unwrap().unwrap(), case.deformation.forward);
        assert!(!t.has(CaseFile::Stimulus));
        assert!(t.load_truth().unwrap().is_none());

        std::fs::write(s.path(CaseFile::Bold), "tampered").unwrap();
        assert!(matches!(s.load_bold(), Err(Error::ChecksumMismatch(_))));
        std::fs::write(t.path(CaseFile::Bold), "stray").unwrap();
        assert!(matches!(CaseDirectory::open(t.root()), Err(Error::ChecksumMismatch(_))));
    }
}

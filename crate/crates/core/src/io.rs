//! File formats: matrix and phase JSON files, experiment record CSV and
//! experiment metadata.
//!
//! All JSON documents carry a `schema_version` of the form `major.minor`;
//! loaders accept any minor revision of a known major version.

use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::circuit::{canonical_phase, PhaseProgram, PhaseSlot};
use crate::experiments::ExperimentRecord;
use crate::numerics::ComplexMatrix;

pub const SCHEMA_VERSION: &str = "1.0";
const SCHEMA_MAJOR: u32 = 1;

/// Unitarity defect above which loading a unitary prints a warning.
pub const UNITARY_WARN_TOL: f64 = 1e-8;
/// Unitarity defect above which loading a unitary fails.
pub const UNITARY_REJECT_TOL: f64 = 1e-6;

#[derive(Debug)]
pub enum IoError {
    Io { path: PathBuf, source: std::io::Error },
    /// Syntax or type error with the offending line quoted.
    Parse { path: PathBuf, line: usize, column: usize, message: String, context: String },
    Schema { path: PathBuf, message: String },
    NotUnitary { path: PathBuf, deviation: f64 },
    Csv { path: PathBuf, message: String },
}

impl fmt::Display for IoError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IoError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            IoError::Parse { path, line, column, message, context } => {
                write!(f, "{}:{line}:{column}: {message}\n  {line:>4} | {context}", path.display())
            }
            IoError::Schema { path, message } => write!(f, "{}: {message}", path.display()),
            IoError::NotUnitary { path, deviation } => write!(
                f,
                "{}: matrix is not unitary, ||U^H U - I||_F = {deviation:.3e} exceeds {UNITARY_REJECT_TOL:e}",
                path.display()
            ),
            IoError::Csv { path, message } => write!(f, "{}: {message}", path.display()),
        }
    }
}

impl std::error::Error for IoError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            IoError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

pub type IoResult<T> = std::result::Result<T, IoError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

fn schema(path: &Path, message: impl Into<String>) -> IoError {
    IoError::Schema { path: path.to_path_buf(), message: message.into() }
}

fn read_text(path: &Path) -> IoResult<String> {
    let mut s = String::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(io_err(path))?;
    Ok(s)
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> IoResult<T> {
    serde_json::from_str(text).map_err(|e| {
        let line = e.line();
        IoError::Parse {
            path: path.to_path_buf(),
            line,
            column: e.column(),
            message: strip_position(&e.to_string()),
            context: text.lines().nth(line.saturating_sub(1)).unwrap_or("").trim_end().to_string(),
        }
    })
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

fn check_version(path: &Path, version: &str) -> IoResult<()> {
    let major = version
        .split('.')
        .next()
        .and_then(|m| m.parse::<u32>().ok())
        .ok_or_else(|| schema(path, format!("malformed schema_version '{version}'")))?;
    if major != SCHEMA_MAJOR {
        return Err(schema(
            path,
            format!("unsupported schema_version '{version}' (this build reads {SCHEMA_MAJOR}.x)"),
        ));
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> IoResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable document");
    s.push('\n');
    s
}

// ---------------------------------------------------------------------------
// Matrices

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixRole {
    Unitary,
    General,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixFile {
    pub schema_version: String,
    pub role: MatrixRole,
    pub n: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl MatrixFile {
    pub fn new(matrix: &ComplexMatrix, role: MatrixRole) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            role,
            n: matrix.rows(),
            re: matrix.real_part(),
            im: matrix.imag_part(),
        }
    }

    pub fn to_matrix(&self) -> crate::Result<ComplexMatrix> {
        ComplexMatrix::from_parts(&self.re, &self.im)
    }
}

/// A loaded matrix and any non-fatal diagnostics.
#[derive(Clone, Debug)]
pub struct LoadedMatrix {
    pub matrix: ComplexMatrix,
    pub role: MatrixRole,
    pub warnings: Vec<String>,
}

pub fn read_matrix(path: &Path) -> IoResult<LoadedMatrix> {
    let text = read_text(path)?;
    let file: MatrixFile = parse_json(path, &text)?;
    check_version(path, &file.schema_version)?;
    if file.re.len() != file.n || file.re.iter().any(|r| r.len() != file.n) {
        return Err(schema(path, format!("'re' must be a {0}x{0} grid", file.n)));
    }
    if file.im.len() != file.n || file.im.iter().any(|r| r.len() != file.n) {
        return Err(schema(path, format!("'im' must be a {0}x{0} grid", file.n)));
    }
    let matrix = file.to_matrix().map_err(|e| schema(path, e.to_string()))?;
    let mut warnings = Vec::new();
    if file.role == MatrixRole::Unitary {
        let deviation = matrix.unitarity_defect();
        if !(deviation <= UNITARY_REJECT_TOL) {
            return Err(IoError::NotUnitary { path: path.to_path_buf(), deviation });
        }
        if deviation > UNITARY_WARN_TOL {
            warnings.push(format!(
                "{}: ||U^H U - I||_F = {deviation:.3e} exceeds {UNITARY_WARN_TOL:e}; the fit will target the \
                 matrix as given, which no interlaced circuit reproduces exactly (its nearest unitary is the \
                 polar factor of the orthogonal Procrustes problem)",
                path.display()
            ));
        }
    }
    Ok(LoadedMatrix { matrix, role: file.role, warnings })
}

pub fn write_matrix(path: &Path, matrix: &ComplexMatrix, role: MatrixRole) -> IoResult<()> {
    if !matrix.is_finite() {
        return Err(schema(path, "matrix has non-finite entries"));
    }
    write_text(path, &to_json(&MatrixFile::new(matrix, role)))
}

// ---------------------------------------------------------------------------
// Phases

/// Mask entry: the string `"free"` or the value of a stuck shifter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaskEntry(pub PhaseSlot);

impl Serialize for MaskEntry {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            PhaseSlot::Free => s.serialize_str("free"),
            PhaseSlot::Fixed(v) => s.serialize_f64(v),
        }
    }
}

impl<'de> Deserialize<'de> for MaskEntry {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl de::Visitor<'_> for V {
            type Value = MaskEntry;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("\"free\" or a fixed phase in radians")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<MaskEntry, E> {
                if v == "free" {
                    Ok(MaskEntry(PhaseSlot::Free))
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<MaskEntry, E> {
                Ok(MaskEntry(PhaseSlot::Fixed(v)))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<MaskEntry, E> {
                Ok(MaskEntry(PhaseSlot::Fixed(v as f64)))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<MaskEntry, E> {
                Ok(MaskEntry(PhaseSlot::Fixed(v as f64)))
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseFile {
    pub schema_version: String,
    pub n: usize,
    pub m: usize,
    /// Coupling scale of the lattice the phases were fitted for.
    #[serde(default = "unit_kappa")]
    pub kappa: f64,
    /// `m x n` grid in radians, canonical range `[0, 2π)`.
    pub theta: Vec<Vec<f64>>,
    pub mask: Vec<Vec<MaskEntry>>,
}

fn unit_kappa() -> f64 {
    1.0
}

impl PhaseFile {
    pub fn new(program: &PhaseProgram, kappa: f64) -> Self {
        let (m, n) = (program.layers(), program.ports());
        Self {
            schema_version: SCHEMA_VERSION.into(),
            n,
            m,
            kappa,
            theta: program.canonical_grid(),
            mask: (0..m)
                .map(|l| (0..n).map(|p| MaskEntry(program.slot(l, p))).collect())
                .collect(),
        }
    }

    pub fn to_program(&self) -> crate::Result<PhaseProgram> {
        let theta: Vec<f64> = self.theta.concat();
        let mask: Vec<PhaseSlot> = self.mask.iter().flatten().map(|e| e.0).collect();
        PhaseProgram::from_parts(self.m, self.n, theta, mask)
    }
}

pub fn read_phases(path: &Path) -> IoResult<PhaseFile> {
    let text = read_text(path)?;
    let file: PhaseFile = parse_json(path, &text)?;
    check_version(path, &file.schema_version)?;
    if file.n == 0 || file.m == 0 {
        return Err(schema(path, "n and m must be positive"));
    }
    let grid_ok = |rows: &[usize]| rows.len() == file.m && rows.iter().all(|&l| l == file.n);
    if !grid_ok(&file.theta.iter().map(Vec::len).collect::<Vec<_>>()) {
        return Err(schema(path, format!("'theta' must be a {}x{} grid", file.m, file.n)));
    }
    if !grid_ok(&file.mask.iter().map(Vec::len).collect::<Vec<_>>()) {
        return Err(schema(path, format!("'mask' must be a {}x{} grid", file.m, file.n)));
    }
    if file.theta.iter().flatten().any(|t| !t.is_finite()) || !file.kappa.is_finite() {
        return Err(schema(path, "phases and kappa must be finite"));
    }
    Ok(file)
}

pub fn write_phases(path: &Path, program: &PhaseProgram, kappa: f64) -> IoResult<()> {
    write_text(path, &to_json(&PhaseFile::new(program, kappa)))
}

/// Phases in the canonical range, as stored in phase files.
pub fn canonical_phases(program: &PhaseProgram) -> Vec<f64> {
    program.as_vector().iter().map(|&t| canonical_phase(t)).collect()
}

// ---------------------------------------------------------------------------
// Experiment records

pub fn write_records<W: Write>(out: W, records: &[ExperimentRecord], header: bool) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(header).from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records_file(path: &Path, records: &[ExperimentRecord]) -> IoResult<()> {
    let mut buf = Vec::new();
    write_records(&mut buf, records, true).map_err(|e| IoError::Csv { path: path.to_path_buf(), message: e.to_string() })?;
    write_text(path, std::str::from_utf8(&buf).expect("csv output is utf-8"))
}

/// Reads a record file. With `tolerate_truncation`, a malformed final row (an
/// interrupted write) is dropped instead of reported.
pub fn read_records_file(path: &Path, tolerate_truncation: bool) -> IoResult<Vec<ExperimentRecord>> {
    let text = read_text(path)?;
    let mut rdr = csv::ReaderBuilder::new().flexible(tolerate_truncation).from_reader(text.as_bytes());
    let rows: Vec<csv::Result<ExperimentRecord>> = rdr.deserialize().collect();
    let count = rows.len();
    let mut out = Vec::with_capacity(count);
    for (i, row) in rows.into_iter().enumerate() {
        match row {
            Ok(r) => out.push(r),
            Err(_) if tolerate_truncation && i + 1 == count => break,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                return Err(IoError::Parse {
                    path: path.to_path_buf(),
                    line,
                    column: 0,
                    message: e.to_string(),
                    context: text.lines().nth(line.saturating_sub(1)).unwrap_or("").to_string(),
                });
            }
        }
    }
    Ok(out)
}

/// Run description written next to the record file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentMetadata {
    pub schema_version: String,
    pub experiment: String,
    pub crate_version: String,
    pub rng: String,
    pub master_seed: u64,
    pub records: usize,
    pub config: serde_json::Value,
    pub summary: serde_json::Value,
}

pub fn write_metadata(path: &Path, meta: &ExperimentMetadata) -> IoResult<()> {
    write_text(path, &to_json(meta))
}

pub fn read_metadata(path: &Path) -> IoResult<ExperimentMetadata> {
    let text = read_text(path)?;
    let meta: ExperimentMetadata = parse_json(path, &text)?;
    check_version(path, &meta.schema_version)?;
    Ok(meta)
}

pub fn write_svg(path: &Path, svg: &str) -> IoResult<()> {
    write_text(path, svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Fault;
    use crate::sampling::{haar_unitary, uniform_phases};
    use num_complex::Complex64;

    #[test]
    fn matrix_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.json");
        let u = haar_unitary(5, 3);
        write_matrix(&path, &u, MatrixRole::Unitary).unwrap();
        let back = read_matrix(&path).unwrap();
        assert_eq!(back.matrix, u);
        assert!(back.warnings.is_empty());
    }

    #[test]
    fn near_unitary_warns_and_far_unitary_fails() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.json");
        let mut u = ComplexMatrix::identity(3);
        u.as_mut_slice()[0] = Complex64::new(1.0 + 1e-7, 0.0);
        write_matrix(&path, &u, MatrixRole::Unitary).unwrap();
        assert_eq!(read_matrix(&path).unwrap().warnings.len(), 1);
        u.as_mut_slice()[0] = Complex64::new(1.0 + 1e-4, 0.0);
        write_matrix(&path, &u, MatrixRole::Unitary).unwrap();
        match read_matrix(&path) {
            Err(IoError::NotUnitary { deviation, .. }) => assert!((deviation - 2e-4).abs() < 1e-6),
            other => panic!("{other:?}"),
        }
        write_matrix(&path, &u, MatrixRole::General).unwrap();
        assert!(read_matrix(&path).unwrap().warnings.is_empty());
    }

    #[test]
    fn parse_errors_quote_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        fs::write(&path, "{\n  \"schema_version\": \"1.0\",\n  \"role\": \"unitary\",\n  \"n\": 1,\n  \"re\": [[1.0]],\n  \"im\": [[0.0]] oops\n}\n").unwrap();
        match read_matrix(&path) {
            Err(IoError::Parse { line, context, .. }) => {
                assert_eq!(line, 6);
                assert!(context.contains("oops"));
            }
            other => panic!("{other:?}"),
        }
        let msg = read_matrix(&path).unwrap_err().to_string();
        assert!(msg.contains("bad.json:6:"), "{msg}");
    }

    #[test]
    fn unknown_major_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.json");
        let mut f = MatrixFile::new(&ComplexMatrix::identity(2), MatrixRole::Unitary);
        f.schema_version = "1.7".into();
        fs::write(&path, serde_json::to_string(&f).unwrap()).unwrap();
        assert!(read_matrix(&path).is_ok());
        f.schema_version = "2.0".into();
        fs::write(&path, serde_json::to_string(&f).unwrap()).unwrap();
        assert!(matches!(read_matrix(&path), Err(IoError::Schema { .. })));
    }

    #[test]
    fn ragged_grids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.json");
        let mut f = MatrixFile::new(&ComplexMatrix::identity(2), MatrixRole::General);
        f.re[1].pop();
        fs::write(&path, serde_json::to_string(&f).unwrap()).unwrap();
        assert!(matches!(read_matrix(&path), Err(IoError::Schema { .. })));
    }

    #[test]
    fn phase_file_round_trip_with_faults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        let program = PhaseProgram::from_grid(&uniform_phases(3, 4, 1))
            .unwrap()
            .apply_fault_plan(&[Fault { layer: 1, port: 2, value: 0.5 }])
            .unwrap();
        write_phases(&path, &program, 1.0).unwrap();
        let file = read_phases(&path).unwrap();
        let back = file.to_program().unwrap();
        assert_eq!(back.mask(), program.mask());
        assert_eq!(back.as_vector(), canonical_phases(&program).as_slice());
        write_phases(&path, &back, 1.0).unwrap();
        assert_eq!(read_phases(&path).unwrap(), file);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"free\""));
    }

    #[test]
    fn bad_mask_string_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        fs::write(
            &path,
            r#"{"schema_version":"1.0","n":1,"m":1,"theta":[[0.0]],"mask":[["stuck"]]}"#,
        )
        .unwrap();
        assert!(matches!(read_phases(&path), Err(IoError::Parse { .. })));
    }
}

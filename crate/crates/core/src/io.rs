//! File formats: DSM v1 matrices and the JSON basis, dataset, vector-list and
//! fragment-manifest files.
//!
//! DSM v1 is plain text: a header line `dsm 1 <dim>` followed by `dim` rows
//! of `dim` whitespace-separated decimals. Values are written with 17
//! significant digits so a write/read cycle is lossless.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kem::{FragmentScheme, KernelDensity, KernelKind};
use crate::matrix::DenseSymMatrix;
use crate::scattering::{GaussianBasis, GaussianFunction, ScatteringDataset, Vec3, POSITION_UNITS};

/// Asymmetry accepted when reading a matrix file.
pub const DSM_SYMMETRY_TOLERANCE: f64 = 1e-9;

pub fn format_matrix(m: &DenseSymMatrix) -> Result<String> {
    if !m.is_finite() {
        return Err(Error::InvalidMatrix(
            "refusing to write non-finite entries".into(),
        ));
    }
    let n = m.dim();
    let mut out = format!("dsm 1 {n}\n");
    for i in 0..n {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:.16e}")).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    Ok(out)
}

pub fn parse_matrix(text: &str) -> Result<DenseSymMatrix> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (hline, header) = lines
        .by_ref()
        .find(|(_, l)| !l.is_empty())
        .ok_or(Error::Parse {
            line: 1,
            message: "empty matrix file".into(),
        })?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let dim = match fields.as_slice() {
        ["dsm", "1", d] => d.parse::<usize>().ok().filter(|&d| d > 0),
        _ => None,
    }
    .ok_or_else(|| Error::Parse {
        line: hline,
        message: format!("malformed header {header:?}, expected `dsm 1 <dim>`"),
    })?;

    let mut entries = Vec::with_capacity(dim * dim);
    let mut row_lines = Vec::with_capacity(dim);
    for (lineno, line) in lines {
        if line.is_empty() {
            continue;
        }
        if row_lines.len() == dim {
            return Err(Error::Parse {
                line: lineno,
                message: format!("unexpected content after {dim} rows"),
            });
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != dim {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected {dim} values, found {}", tokens.len()),
            });
        }
        for tok in tokens {
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("non-numeric token {tok:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("non-finite value {tok:?}"),
                });
            }
            entries.push(v);
        }
        row_lines.push(lineno);
    }
    if row_lines.len() != dim {
        return Err(Error::Parse {
            line: text.lines().count().max(1),
            message: format!("expected {dim} rows, found {}", row_lines.len()),
        });
    }
    DenseSymMatrix::from_row_major_with_tolerance(dim, entries, DSM_SYMMETRY_TOLERANCE).map_err(
        |e| match e {
            Error::Asymmetric {
                row,
                col,
                deviation,
            } => Error::Parse {
                line: row_lines[col],
                message: format!(
                    "matrix not symmetric: entry ({col},{row}) differs from ({row},{col}) by {deviation:e}"
                ),
            },
            other => other,
        },
    )
}

pub fn read_matrix(path: &Path) -> Result<DenseSymMatrix> {
    parse_matrix(&read_text(path)?).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

pub fn write_matrix(path: &Path, m: &DenseSymMatrix) -> Result<()> {
    write_text(path, &format_matrix(m)?)
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| Error::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.display().to_string(),
        source,
    })
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: "<memory>".into(),
        source,
    })?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json_pretty(value)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasisFile {
    pub units: String,
    pub functions: Vec<GaussianFunction>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum BasisFileRepr {
    Full(BasisFile),
    Bare(Vec<GaussianFunction>),
}

pub fn read_basis(path: &Path) -> Result<GaussianBasis> {
    let file = match read_json::<BasisFileRepr>(path)? {
        BasisFileRepr::Full(f) => f,
        BasisFileRepr::Bare(functions) => BasisFile {
            units: POSITION_UNITS.into(),
            functions,
        },
    };
    if file.units != POSITION_UNITS {
        return Err(Error::invalid(format!(
            "{}: basis units must be {POSITION_UNITS}, found {}",
            path.display(),
            file.units
        )));
    }
    GaussianBasis::new(file.functions)
}

pub fn write_basis(path: &Path, basis: &GaussianBasis) -> Result<()> {
    write_json(
        path,
        &BasisFile {
            units: POSITION_UNITS.into(),
            functions: basis.functions().to_vec(),
        },
    )
}

pub fn read_dataset(path: &Path) -> Result<ScatteringDataset> {
    let ds: ScatteringDataset = read_json(path)?;
    ds.validate()?;
    Ok(ds)
}

/// A list of 3-vectors (scattering vectors or grid points).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VectorListFile {
    pub units: String,
    pub vectors: Vec<Vec3>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum VectorListRepr {
    Full(VectorListFile),
    Bare(Vec<Vec3>),
}

pub fn read_vectors(path: &Path, expected_units: &str) -> Result<Vec<Vec3>> {
    match read_json::<VectorListRepr>(path)? {
        VectorListRepr::Bare(v) => Ok(v),
        VectorListRepr::Full(f) if f.units == expected_units => Ok(f.vectors),
        VectorListRepr::Full(f) => Err(Error::invalid(format!(
            "{}: expected units {expected_units}, found {}",
            path.display(),
            f.units
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKindTag {
    Single,
    Double,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelEntry {
    pub kind: KernelKindTag,
    pub members: Vec<usize>,
    pub matrix_file: String,
}

impl KernelEntry {
    pub fn kernel_kind(&self) -> Result<KernelKind> {
        match (&self.kind, self.members.as_slice()) {
            (KernelKindTag::Single, [i]) => Ok(KernelKind::Single(*i)),
            (KernelKindTag::Double, [i, j]) if i < j => Ok(KernelKind::Double(*i, *j)),
            (KernelKindTag::Double, [i, j]) if j < i => Ok(KernelKind::Double(*j, *i)),
            _ => Err(Error::invalid(format!(
                "kernel entry {:?} with members {:?} is malformed",
                self.kind, self.members
            ))),
        }
    }

    pub fn from_kind(kind: KernelKind, matrix_file: String) -> Self {
        match kind {
            KernelKind::Single(i) => Self {
                kind: KernelKindTag::Single,
                members: vec![i],
                matrix_file,
            },
            KernelKind::Double(i, j) => Self {
                kind: KernelKindTag::Double,
                members: vec![i, j],
                matrix_file,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FragmentManifest {
    pub full_dim: usize,
    pub singles: Vec<Vec<usize>>,
    #[serde(default)]
    pub kernels: Vec<KernelEntry>,
}

impl FragmentManifest {
    pub fn scheme(&self) -> Result<FragmentScheme> {
        FragmentScheme::new(self.full_dim, self.singles.clone())
    }

    /// Loads every kernel matrix, resolving paths relative to `base_dir`.
    pub fn load_kernels(
        &self,
        scheme: &FragmentScheme,
        base_dir: &Path,
    ) -> Result<(Vec<KernelDensity>, Vec<KernelDensity>)> {
        let mut doubles = Vec::new();
        let mut singles = Vec::new();
        for entry in &self.kernels {
            let kind = entry.kernel_kind()?;
            if !scheme.contains(kind) {
                return Err(Error::invalid(format!(
                    "kernel {} is not in the scheme",
                    kind.label()
                )));
            }
            let path = resolve(base_dir, &entry.matrix_file);
            let matrix = read_matrix(&path)?;
            let kd = KernelDensity::new(kind, matrix, scheme.indices(kind))?;
            match kind {
                KernelKind::Single(_) => singles.push(kd),
                KernelKind::Double(..) => doubles.push(kd),
            }
        }
        doubles.sort_by_key(|k| k.kind);
        singles.sort_by_key(|k| k.kind);
        Ok((doubles, singles))
    }
}

pub fn resolve(base_dir: &Path, file: &str) -> PathBuf {
    let p = Path::new(file);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

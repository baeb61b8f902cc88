//! File formats and the exit-code contract.

use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use phase_isometry::{DecompositionError, NormSpec};
use serde::{Deserialize, Serialize};
use serde_json::json;

pub const EXIT_FAILED_CHECK: u8 = 1;
pub const EXIT_MALFORMED: u8 = 64;
pub const EXIT_DIMENSION: u8 = 65;
pub const EXIT_IO: u8 = 66;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Malformed { source: String, line: Option<usize>, message: String },
    Dimension { source: String, line: Option<usize>, expected: usize, found: usize },
    Io { path: PathBuf, message: String },
    Decomposition(DecompositionError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Malformed { .. } => EXIT_MALFORMED,
            CliError::Dimension { .. } => EXIT_DIMENSION,
            CliError::Io { .. } => EXIT_IO,
            CliError::Decomposition(e) => u8::try_from(e.exit_code()).unwrap_or(3),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut value = match self {
            CliError::Usage(message) => json!({ "error": "Usage", "message": message }),
            CliError::Malformed { source, line, message } => {
                json!({ "error": "MalformedInput", "source": source, "line": line, "message": message })
            }
            CliError::Dimension { source, line, expected, found } => json!({
                "error": "DimensionMismatch",
                "source": source,
                "line": line,
                "expected": expected,
                "found": found,
            }),
            CliError::Io { path, message } => json!({ "error": "Io", "path": path, "message": message }),
            CliError::Decomposition(e) => json!({
                "error": e.kind(),
                "message": e.to_string(),
                "witness": e.witness(),
            }),
        };
        value["exit_code"] = json!(self.exit_code());
        value
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Malformed { source, line: Some(line), message } => write!(f, "{source}:{line}: {message}"),
            CliError::Malformed { source, line: None, message } => write!(f, "{source}: {message}"),
            CliError::Dimension { source, line, expected, found } => {
                let at = line.map(|l| format!(":{l}")).unwrap_or_default();
                write!(f, "{source}{at}: expected {expected} coordinates, found {found}")
            }
            CliError::Io { path, message } => write!(f, "{}: {message}", path.display()),
            CliError::Decomposition(e) => write!(f, "{e}"),
        }
    }
}

impl From<DecompositionError> for CliError {
    fn from(e: DecompositionError) -> Self {
        CliError::Decomposition(e)
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io { path: path.to_owned(), message: e.to_string() })
}

/// A space from a JSON file, or from inline JSON when the argument starts with `{`.
pub fn load_space(arg: &str) -> Result<NormSpec, CliError> {
    let (source, text) = if arg.trim_start().starts_with('{') {
        ("--space".to_owned(), arg.to_owned())
    } else {
        (arg.to_owned(), read_text(Path::new(arg))?)
    };
    serde_json::from_str(&text).map_err(|e| CliError::Malformed { source, line: Some(e.line()), message: e.to_string() })
}

/// A JSON array of numbers with the expected length.
pub fn parse_vector(name: &str, text: &str, dim: usize) -> Result<DVector<f64>, CliError> {
    let coords: Vec<f64> = serde_json::from_str(text)
        .map_err(|e| CliError::Malformed { source: name.to_owned(), line: None, message: e.to_string() })?;
    if coords.len() != dim {
        return Err(CliError::Dimension { source: name.to_owned(), line: None, expected: dim, found: coords.len() });
    }
    Ok(DVector::from_vec(coords))
}

/// Query points paired with their images.
pub type Table = Vec<(DVector<f64>, DVector<f64>)>;

/// One line of a sample file.
#[derive(Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub fx: Vec<f64>,
}

/// Reads `{"x": [...], "fx": [...]}` lines; blank lines are skipped.
pub fn read_samples(
    path: &Path,
    domain: &NormSpec,
    codomain: &NormSpec,
) -> Result<Table, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::Io { path: path.to_owned(), message: e.to_string() })?;
    let source = path.display().to_string();
    let mut samples = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::Io { path: path.to_owned(), message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let number = i + 1;
        let s: Sample = serde_json::from_str(&line).map_err(|e| CliError::Malformed {
            source: source.clone(),
            line: Some(number),
            message: e.to_string(),
        })?;
        for (v, dim) in [(&s.x, domain.dim()), (&s.fx, codomain.dim())] {
            if v.len() != dim {
                return Err(CliError::Dimension { source: source.clone(), line: Some(number), expected: dim, found: v.len() });
            }
        }
        samples.push((DVector::from_vec(s.x), DVector::from_vec(s.fx)));
    }
    Ok(samples)
}

pub fn write_samples(path: &Path, samples: &[(DVector<f64>, DVector<f64>)]) -> Result<(), CliError> {
    let io_err = |e: io::Error| CliError::Io { path: path.to_owned(), message: e.to_string() };
    let mut out = io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
    for (x, fx) in samples {
        let line = serde_json::to_string(&Sample { x: x.as_slice().to_vec(), fx: fx.as_slice().to_vec() })
            .expect("finite samples serialize");
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Pretty JSON to `out`, or to stdout.
pub fn emit(out: Option<&Path>, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    match out {
        Some(path) => {
            fs::write(path, text + "\n").map_err(|e| CliError::Io { path: path.to_owned(), message: e.to_string() })
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

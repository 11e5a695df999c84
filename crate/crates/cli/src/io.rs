//! Input loading, atomic output and the one-line error format.

use std::fmt;
use std::io::Write;
use std::path::Path;

use lhst_core::matrix_io::parse_matrix;
use ndarray::Array2;

/// Printed as `ERROR:<kind>: <message>`.
#[derive(Debug)]
pub struct CliError {
    kind: &'static str,
    message: String,
}

impl CliError {
    /// Engine error raised while reading `path`.
    pub fn at(path: &Path, err: lhst_core::Error) -> Self {
        Self {
            kind: err.kind(),
            message: format!("{}: {err}", path.display()),
        }
    }
}

impl From<lhst_core::Error> for CliError {
    fn from(err: lhst_core::Error) -> Self {
        Self {
            kind: err.kind(),
            message: err.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ERROR:{}: {}", self.kind, self.message)
    }
}

/// Unreadable inputs are reported as parse errors.
pub fn read_input(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError {
        kind: "ParseError",
        message: format!("{}: {e}", path.display()),
    })
}

/// Reads `path` or `path#block`. The whole string wins when it names an
/// existing file.
pub fn read_matrix(source: &str) -> Result<Array2<f64>, CliError> {
    let (path, block) = match source.rsplit_once('#') {
        Some((path, block)) if !Path::new(source).exists() => (path, Some(block)),
        _ => (source, None),
    };
    let path = Path::new(path);
    parse_matrix(&read_input(path)?, block).map_err(|e| CliError::at(path, e))
}

/// Standard output, or a temp file in the target directory renamed over
/// `path`.
pub fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError {
        kind: "IoError",
        message: e.to_string(),
    };
    match path {
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(io_err)?;
            stdout.flush().map_err(io_err)
        }
        Some(path) => {
            let dir = match path.parent() {
                Some(d) if !d.as_os_str().is_empty() => d,
                _ => Path::new("."),
            };
            let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
            tmp.write_all(text.as_bytes()).map_err(io_err)?;
            tmp.as_file().sync_all().map_err(io_err)?;
            tmp.persist(path).map_err(|e| io_err(e.error))?;
            Ok(())
        }
    }
}

use std::path::PathBuf;

use fdia_core::attack::AttackError;
use fdia_core::detection::DetectionError;
use fdia_core::estimation::EstimationError;
use fdia_core::experiment::ExperimentError;
use fdia_core::grid::GridError;
use fdia_core::measurement::MeasurementError;
use fdia_core::refinement::RefinementError;

/// A malformed line in one of the text formats.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        ParseError { line, message: message.into() }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{source_name}: {error}")]
    Parse { source_name: String, error: ParseError },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Refinement(#[from] RefinementError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub fn parse(source_name: impl Into<String>, error: ParseError) -> Self {
        Error::Parse { source_name: source_name.into(), error }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &std::path::Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Splits a CSV data line, checking the field count.
pub(crate) fn fields(line: &str, lineno: usize, expected: usize) -> Result<Vec<&str>, ParseError> {
    let parts: Vec<&str> = line.split(',').map(str::trim).collect();
    if parts.len() != expected {
        return Err(ParseError::new(
            lineno,
            format!("expected {expected} fields, found {}", parts.len()),
        ));
    }
    Ok(parts)
}

pub(crate) fn number<T: std::str::FromStr>(field: &str, what: &str, lineno: usize) -> Result<T, ParseError> {
    field.parse().map_err(|_| ParseError::new(lineno, format!("invalid {what} `{field}`")))
}

/// Checks the header line and yields `(line number, line)` for data lines,
/// skipping blanks and `#` comments.
pub(crate) fn data_lines<'a>(
    text: &'a str,
    header: &str,
) -> Result<impl Iterator<Item = (usize, &'a str)>, ParseError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some((_, first)) if first.replace(' ', "") == header => Ok(lines),
        Some((n, first)) => Err(ParseError::new(n, format!("expected header `{header}`, found `{first}`"))),
        None => Err(ParseError::new(0, format!("empty input, expected header `{header}`"))),
    }
}

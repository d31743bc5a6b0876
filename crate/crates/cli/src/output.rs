//! Report envelopes and writers.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::CliError;

pub const SCHEMA_VERSION: &str = "geomech.run-report/1";

#[derive(Clone, Debug, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub residual: f64,
    pub tolerance: f64,
}

impl CheckLine {
    pub fn at_most(name: &str, residual: f64, tolerance: f64) -> Self {
        CheckLine { name: name.into(), passed: residual <= tolerance, residual, tolerance }
    }
}

#[derive(Debug, Serialize)]
pub struct RunReport<'a, T: Serialize> {
    pub schema: &'static str,
    pub command: &'a [String],
    pub results: T,
    pub checks: Vec<CheckLine>,
}

impl<'a, T: Serialize> RunReport<'a, T> {
    pub fn new(command: &'a [String], results: T, checks: Vec<CheckLine>) -> Self {
        RunReport { schema: SCHEMA_VERSION, command, results, checks }
    }
}

pub fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Pretty JSON to `out`, or to stdout.
pub fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    emit_bytes(text.as_bytes(), out)
}

pub fn emit_bytes(bytes: &[u8], out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, bytes).map_err(|e| io_error(path, e)),
        None => std::io::stdout().lock().write_all(bytes).map_err(|e| CliError::Io(e.to_string())),
    }
}

/// Round-trippable 17-significant-digit form.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row.iter().map(|v| format_float(*v))).map_err(io)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

/// Comma-separated floats.
pub fn parse_vector(flag: &str, text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| CliError::usage(flag, format!("`{}` is not a number", s.trim()))))
        .collect()
}

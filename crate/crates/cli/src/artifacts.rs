//! File formats for results: JSON artifacts (schema-versioned, serialized
//! with full float round-trip fidelity) and CSV tables with a fixed header
//! and 17-significant-digit decimal floats.

use crate::error::{CliError, CliResult};
use qmemtime_core::{RealMatrix, Tau};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const SCHEMA_VERSION: &str = "1";

/// Dense matrix as row-major nested arrays, the on-disk convention for all
/// matrix payloads.
pub fn matrix_to_rows(m: &RealMatrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Parses row-major nested arrays; rejects ragged or empty shapes with a
/// message naming `context`.
pub fn rows_to_matrix(rows: &[Vec<f64>], context: &str) -> Result<RealMatrix, String> {
    if rows.is_empty() {
        return Err(format!("{context}: matrix has no rows"));
    }
    let ncols = rows[0].len();
    if ncols == 0 {
        return Err(format!("{context}: matrix has no columns"));
    }
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(format!(
            "{context}: row {i} has {} entries, expected {ncols}",
            row.len()
        ));
    }
    Ok(RealMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Decimal rendering with 17 significant digits; infinities render as
/// `inf`/`-inf` to keep CSV columns parseable.
pub fn fmt_float(x: f64) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{x:.16e}")
}

/// Crossing time as a CSV field.
pub fn fmt_tau(tau: &Tau) -> String {
    match tau {
        Tau::Finite(t) => fmt_float(*t),
        Tau::Unbounded => "inf".into(),
    }
}

/// Optional value as a CSV field; absent values render as `nan` so every
/// row has the full column count.
pub fn fmt_opt(x: Option<f64>) -> String {
    match x {
        Some(v) => fmt_float(v),
        None => "nan".into(),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Serializes a JSON artifact with pretty formatting and a trailing
/// newline. Field order follows the struct definition, so output is
/// byte-reproducible.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut body = serde_json::to_string_pretty(value).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    body.push('\n');
    fs::write(path, body).map_err(|e| io_err(path, e))
}

/// Writes a CSV table with the given header; the caller supplies
/// preformatted fields.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut body = String::new();
    body.push_str(&header.join(","));
    body.push('\n');
    for row in rows {
        body.push_str(&row.join(","));
        body.push('\n');
    }
    fs::write(path, body).map_err(|e| io_err(path, e))
}

/// Serialized crossing time: a tagged value so an unbounded result stays
/// distinguishable after round trips.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TauArtifact {
    Finite { value: f64 },
    Unbounded,
}

impl From<&Tau> for TauArtifact {
    fn from(tau: &Tau) -> Self {
        match tau {
            Tau::Finite(t) => TauArtifact::Finite { value: *t },
            Tau::Unbounded => TauArtifact::Unbounded,
        }
    }
}

/// `realize` output: the full state-space realization.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StateSpaceArtifact {
    pub schema_version: String,
    pub n: usize,
    pub nu: usize,
    pub m: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "A0")]
    pub a0: Vec<Vec<f64>>,
    #[serde(rename = "Atilde")]
    pub atilde: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    pub mho_re: Vec<Vec<f64>>,
    pub mho_im: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub j_field: Vec<Vec<f64>>,
}

/// `isolate` output: rows, completion, transformed blocks, and residuals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsolationArtifact {
    pub schema_version: String,
    pub s: usize,
    /// Isolation dimension `n - rank(M)` of the coupling matrix.
    pub d: usize,
    #[serde(rename = "F")]
    pub f: Vec<Vec<f64>>,
    #[serde(rename = "T")]
    pub t: Vec<Vec<f64>>,
    pub a11: Vec<Vec<f64>>,
    pub a12: Vec<Vec<f64>>,
    pub a21: Vec<Vec<f64>>,
    pub a22: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "G")]
    pub g: Vec<Vec<f64>>,
    pub residual_fb: f64,
    pub residual_drift: f64,
}

/// `decohere` output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecoherenceArtifact {
    pub schema_version: String,
    pub epsilon: f64,
    pub tau: TauArtifact,
    pub tau_hat: Option<f64>,
    pub ratio: Option<f64>,
    pub threshold: f64,
    pub crossing_bracket: Option<(f64, f64)>,
    pub near_tangency: bool,
}

/// One `sweep` row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRowArtifact {
    pub epsilon: f64,
    pub tau: TauArtifact,
    pub tau_hat: Option<f64>,
    pub ratio: Option<f64>,
}

/// `sweep` output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepArtifact {
    pub schema_version: String,
    pub rows: Vec<SweepRowArtifact>,
    pub fitted_slope: Option<f64>,
}

/// `optimize` output: the retuned block plus before/after diagnostics at
/// the reported threshold level (baseline is a zero direct coupling).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizeArtifact {
    pub schema_version: String,
    #[serde(rename = "R12_opt")]
    pub r12_opt: Vec<Vec<f64>>,
    pub residual: f64,
    pub k_norm: f64,
    pub grad_norm: f64,
    pub g_matrix_rank: usize,
    pub nullity: usize,
    pub f_before: f64,
    pub f_after: f64,
    pub gain_before: f64,
    pub gain_after: f64,
    pub epsilon: f64,
    pub tau_hat_before: Option<f64>,
    pub tau_hat_after: Option<f64>,
}

/// One verification check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckArtifact {
    pub name: String,
    pub status: String,
    pub detail: String,
}

/// `verify` output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyArtifact {
    pub schema_version: String,
    pub mode: String,
    pub seed: u64,
    pub checks: Vec<CheckArtifact>,
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
}

//! Output records and their JSON, CSV and plain-text renderings.
//!
//! Every record carries `"schema_version": 1` and a fixed field list. Floats
//! are written with 17 significant digits so they read back to the same
//! `f64`; exact results also carry a `"p/q"` string.

use std::io::{self, Write};
use std::str::FromStr;

use empcheb_core::{BoundValue, ConfidenceEllipsoid, Error as CoreError};
use nalgebra::{DMatrix, DVector};
use num_rational::BigRational;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Number, Value};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
    Human,
}

/// An `f64` serialized with 17 significant digits; non-finite values as null.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F17(pub f64);

impl F17 {
    pub fn text(self) -> Option<String> {
        self.0.is_finite().then(|| format!("{:.16e}", self.0))
    }
}

impl Serialize for F17 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.text() {
            Some(text) => Number::from_str(&text).map_err(serde::ser::Error::custom)?.serialize(s),
            None => s.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for F17 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        // Parse the literal text: Rust's float parser is correctly rounded.
        let n = Number::deserialize(d)?;
        n.to_string().parse().map(F17).map_err(serde::de::Error::custom)
    }
}

pub fn rational_text(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// A probability bound as written in every record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundField {
    pub formula: &'static str,
    pub exact: bool,
    pub value: F17,
    pub rational: Option<String>,
}

impl From<&BoundValue> for BoundField {
    fn from(b: &BoundValue) -> Self {
        BoundField {
            formula: b.formula.as_str(),
            exact: b.exact,
            value: F17(b.value),
            rational: b.rational.as_ref().map(rational_text),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactField {
    pub value: F17,
    pub rational: String,
}

impl From<&BigRational> for ExactField {
    fn from(r: &BigRational) -> Self {
        ExactField {
            value: F17(num_traits::ToPrimitive::to_f64(r).unwrap_or(f64::NAN)),
            rational: rational_text(r),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundRecord {
    pub schema_version: u32,
    pub command: &'static str,
    pub dim: usize,
    pub count: u64,
    pub lambda_sq: String,
    pub numeric_mode: &'static str,
    #[serde(flatten)]
    pub bound: BoundField,
}

#[derive(Debug, Clone, Serialize)]
pub struct InvertRecord {
    pub schema_version: u32,
    pub command: &'static str,
    pub dim: usize,
    pub count: u64,
    pub epsilon: F17,
    pub feasible: bool,
    /// Largest admissible `⌊bound·(N+1)⌋`.
    pub step: Option<String>,
    /// Infimum of feasible `λ²`, exact.
    pub boundary_lambda_sq: Option<ExactField>,
    pub lambda: Option<F17>,
    pub safe_lambda: Option<F17>,
    pub safe_lambda_sq: Option<F17>,
    pub bound_at_safe_lambda: Option<BoundField>,
    /// Smallest reachable bound when infeasible.
    pub achievable: Option<ExactField>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleSizeRecord {
    pub schema_version: u32,
    pub command: &'static str,
    pub dim: usize,
    pub lambda_sq: String,
    pub epsilon: F17,
    pub feasible: bool,
    pub first: Option<u64>,
    pub sustained: Option<u64>,
    /// `n/λ²` when infeasible.
    pub limit: Option<ExactField>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerdictRecord {
    pub schema_version: u32,
    pub command: &'static str,
    pub index: u64,
    pub line: u64,
    pub distance_sq: F17,
    pub threshold_sq: F17,
    pub flagged: bool,
    pub stats_count: u64,
    pub bound: BoundField,
}

/// Exported confidence ellipsoid. `lower` is the Cholesky factor of the
/// covariance in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidRecord {
    pub schema_version: u32,
    pub command: String,
    pub dim: usize,
    pub epsilon: F17,
    pub source_count: u64,
    pub center: Vec<F17>,
    pub lower: Vec<F17>,
    pub radius_sq: F17,
    pub radius: F17,
    /// Written for reference; recomputed on import.
    #[serde(skip_deserializing)]
    pub coverage_bound: Option<BoundField>,
}

impl EllipsoidRecord {
    pub fn new(ellipsoid: &ConfidenceEllipsoid, epsilon: f64) -> Self {
        let lower = ellipsoid.chol_factor();
        let dim = lower.nrows();
        EllipsoidRecord {
            schema_version: SCHEMA_VERSION,
            command: "ellipsoid".into(),
            dim,
            epsilon: F17(epsilon),
            source_count: ellipsoid.source_count(),
            center: ellipsoid.center().iter().map(|&v| F17(v)).collect(),
            lower: (0..dim * dim).map(|k| F17(lower[(k / dim, k % dim)])).collect(),
            radius_sq: F17(ellipsoid.radius_sq()),
            radius: F17(ellipsoid.radius_sq().sqrt()),
            coverage_bound: Some(ellipsoid.coverage_bound().into()),
        }
    }

    /// Rebuilds the ellipsoid; the coverage bound is recomputed.
    pub fn to_ellipsoid(&self) -> Result<ConfidenceEllipsoid, CoreError> {
        let dim = self.dim;
        if self.center.len() != dim {
            return Err(CoreError::ShapeMismatch {
                expected: dim,
                actual: self.center.len(),
            });
        }
        if self.lower.len() != dim * dim {
            return Err(CoreError::ShapeMismatch {
                expected: dim * dim,
                actual: self.lower.len(),
            });
        }
        ConfidenceEllipsoid::from_parts(
            DVector::from_iterator(dim, self.center.iter().map(|v| v.0)),
            DMatrix::from_row_iterator(dim, dim, self.lower.iter().map(|v| v.0)),
            self.radius_sq.0,
            self.source_count,
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ContainsRecord {
    pub schema_version: u32,
    pub command: &'static str,
    pub index: u64,
    pub line: u64,
    pub distance_sq: F17,
    pub inside: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationRecord {
    pub schema_version: u32,
    pub command: &'static str,
    pub family: &'static str,
    pub spec: Value,
    pub dim: usize,
    pub count: u64,
    pub lambda_sq: String,
    pub trials: u64,
    pub seed: u64,
    pub events: u64,
    pub rejected: u64,
    pub empirical_frequency: F17,
    pub bound: BoundField,
    pub mc_stderr: F17,
    pub slack: F17,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRecord {
    pub schema_version: u32,
    pub command: &'static str,
    pub dim: usize,
    pub lambda_sq: String,
    pub count: u64,
    pub bound: BoundField,
    pub limit: BoundField,
    pub gap: F17,
    pub gap_rational: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorRecord {
    pub schema_version: u32,
    pub error: ErrorBody,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorBody {
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<u64>,
}

/// Writes records in one format. JSON is one object per line; CSV writes the
/// header before the first record; human is `key=value` pairs.
pub struct Emitter<W: Write> {
    format: OutputFormat,
    out: W,
    header_written: bool,
}

impl<W: Write> Emitter<W> {
    pub fn new(format: OutputFormat, out: W) -> Self {
        Emitter {
            format,
            out,
            header_written: false,
        }
    }

    pub fn emit<T: Serialize>(&mut self, record: &T) -> io::Result<()> {
        let value = serde_json::to_value(record).map_err(io::Error::other)?;
        match self.format {
            OutputFormat::Json => {
                serde_json::to_writer(&mut self.out, &value).map_err(io::Error::other)?;
                writeln!(self.out)?;
            }
            OutputFormat::Csv => {
                let cells = flatten(&value);
                let mut w = csv::Writer::from_writer(&mut self.out);
                if !self.header_written {
                    w.write_record(cells.iter().map(|(k, _)| k.as_str()))?;
                    self.header_written = true;
                }
                w.write_record(cells.iter().map(|(_, v)| v.as_str()))?;
                w.flush()?;
            }
            OutputFormat::Human => {
                let line: Vec<String> = flatten(&value)
                    .into_iter()
                    .filter(|(k, v)| k != "schema_version" && !v.is_empty())
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect();
                writeln!(self.out, "{}", line.join(" "))?;
            }
        }
        self.out.flush()
    }
}

/// Nested objects become dotted keys; arrays stay JSON text.
fn flatten(value: &Value) -> Vec<(String, String)> {
    fn walk(prefix: &str, value: &Value, out: &mut Vec<(String, String)>) {
        match value {
            Value::Object(map) => {
                for (k, v) in map {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, v, out);
                }
            }
            Value::Null => out.push((prefix.into(), String::new())),
            Value::String(s) => out.push((prefix.into(), s.clone())),
            other => out.push((prefix.into(), other.to_string())),
        }
    }
    let mut out = Vec::new();
    walk("", value, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_text() {
        for x in [0.1, 1.0 / 3.0, 24.0 / 101.0, 1e-300, 6.02214076e23, -2.5, f64::MIN_POSITIVE] {
            let text = serde_json::to_string(&F17(x)).unwrap();
            let back: F17 = serde_json::from_str(&text).unwrap();
            assert_eq!(back.0.to_bits(), x.to_bits(), "{text}");
        }
        assert_eq!(serde_json::to_string(&F17(0.5)).unwrap(), "5.0000000000000000e-1");
        assert_eq!(serde_json::to_string(&F17(f64::NAN)).unwrap(), "null");
    }

    #[test]
    fn csv_flattens_nested_fields() {
        let record = BoundRecord {
            schema_version: 1,
            command: "bound",
            dim: 2,
            count: 100,
            lambda_sq: "9".into(),
            numeric_mode: "exact",
            bound: BoundField {
                formula: "empirical",
                exact: true,
                value: F17(24.0 / 101.0),
                rational: Some("24/101".into()),
            },
        };
        let mut buf = Vec::new();
        let mut e = Emitter::new(OutputFormat::Csv, &mut buf);
        e.emit(&record).unwrap();
        e.emit(&record).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "schema_version,command,dim,count,lambda_sq,numeric_mode,formula,exact,value,rational");
        assert!(lines[1].ends_with(",24/101"));
    }
}

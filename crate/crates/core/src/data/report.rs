//! Score, report and benchmark files in CSV and JSON.
//!
//! Floats are written with 17 significant digits (`{:.16e}`), which is
//! enough to read back the identical `f64`. Negative zero is written as
//! zero.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ablation::AblationReport;
use crate::attribution::AttributionResult;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::InvalidArgument(format!(
                "unknown format '{other}' (expected csv or json)"
            ))),
        }
    }
}

/// Renders `v` so that parsing the text gives back the same bits, except
/// that `-0.0` becomes `0.0`.
pub fn format_float(v: f64) -> String {
    if v == 0.0 {
        "0.0000000000000000e0".to_string()
    } else if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

fn parse_float(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("not a number: '{s}'")))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("not an index: '{s}'")))
}

/// Serde adapter writing finite floats as raw 17-digit JSON numbers and
/// non-finite ones as strings.
mod float17 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use serde_json::value::RawValue;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        let text = super::format_float(*v);
        if v.is_finite() {
            RawValue::from_string(text)
                .map_err(serde::ser::Error::custom)?
                .serialize(s)
        } else {
            s.serialize_str(&text)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// One neuron's score for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub example_id: usize,
    pub layer: String,
    pub neuron_flat_index: usize,
    pub method: String,
    pub class: usize,
    #[serde(with = "float17")]
    pub score: f64,
    /// Σ scores − Δtarget for the (example, method, class) group.
    #[serde(with = "float17")]
    pub completeness_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub example_id: usize,
    pub layer: String,
    pub method: String,
    #[serde(with = "float17")]
    pub predicted_delta: f64,
    #[serde(with = "float17")]
    pub actual_delta: f64,
    #[serde(with = "float17")]
    pub abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: String,
    pub steps: usize,
    pub examples: usize,
    pub forward_passes: usize,
    pub gradient_passes: usize,
    pub multiplier_passes: usize,
    #[serde(with = "float17")]
    pub wall_time_secs: f64,
}

const SCORE_HEADER: [&str; 7] = [
    "example_id",
    "layer",
    "neuron_flat_index",
    "method",
    "class",
    "score",
    "completeness_residual",
];
const REPORT_HEADER: [&str; 6] = [
    "example_id",
    "layer",
    "method",
    "predicted_delta",
    "actual_delta",
    "abs_error",
];
const BENCH_HEADER: [&str; 7] = [
    "method",
    "steps",
    "examples",
    "forward_passes",
    "gradient_passes",
    "multiplier_passes",
    "wall_time_secs",
];

/// Flattens one attribution result into rows labelled with `method`.
pub fn score_rows(
    example_id: usize,
    method: &str,
    result: &AttributionResult,
) -> Result<Vec<ScoreRow>> {
    let class = result
        .class
        .ok_or_else(|| Error::InvalidArgument("score rows need a class target".into()))?;
    Ok(result
        .scores
        .data()
        .iter()
        .enumerate()
        .map(|(i, &score)| ScoreRow {
            example_id,
            layer: result.layer.clone(),
            neuron_flat_index: i,
            method: method.to_string(),
            class,
            score,
            completeness_residual: result.completeness_residual,
        })
        .collect())
}

pub fn report_rows(report: &AblationReport) -> Vec<ReportRow> {
    report
        .records
        .iter()
        .flat_map(|r| {
            r.outcomes.iter().map(move |o| ReportRow {
                example_id: r.example_id,
                layer: report.spec.layer.clone(),
                method: o.method.clone(),
                predicted_delta: o.predicted_delta,
                actual_delta: r.actual_delta,
                abs_error: o.abs_error,
            })
        })
        .collect()
}

/// Writes next to `path` and renames into place, so readers never see a
/// partial file.
pub fn write_file_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let dir = dir.unwrap_or_else(|| Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.partial", name.to_string_lossy()));
    let result = fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(bytes).and_then(|_| f.sync_all()))
        .and_then(|_| fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

fn csv_bytes<const N: usize>(
    header: [&str; N],
    rows: impl Iterator<Item = [String; N]>,
) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner()
        .map_err(|e| Error::InvalidArgument(format!("csv: {e}")))
}

fn csv_records<const N: usize>(path: &Path, header: [&str; N]) -> Result<Vec<csv::StringRecord>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes.as_slice());
    let csv_err = |e: csv::Error| Error::InvalidArgument(format!("{}: {e}", path.display()));
    let found = r.headers().map_err(csv_err)?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::InvalidArgument(format!(
            "{}: expected columns {:?}, found {:?}",
            path.display(),
            header,
            found.iter().collect::<Vec<_>>()
        )));
    }
    r.records().map(|rec| rec.map_err(csv_err)).collect()
}

fn json_bytes<T: Serialize>(rows: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(rows)?;
    out.push(b'\n');
    Ok(out)
}

fn json_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub fn write_scores(rows: &[ScoreRow], path: impl AsRef<Path>, format: Format) -> Result<()> {
    let bytes = match format {
        Format::Json => json_bytes(&rows)?,
        Format::Csv => csv_bytes(
            SCORE_HEADER,
            rows.iter().map(|r| {
                [
                    r.example_id.to_string(),
                    r.layer.clone(),
                    r.neuron_flat_index.to_string(),
                    r.method.clone(),
                    r.class.to_string(),
                    format_float(r.score),
                    format_float(r.completeness_residual),
                ]
            }),
        )?,
    };
    write_file_atomic(path.as_ref(), &bytes)
}

pub fn read_scores(path: impl AsRef<Path>, format: Format) -> Result<Vec<ScoreRow>> {
    let path = path.as_ref();
    match format {
        Format::Json => json_rows(path),
        Format::Csv => csv_records(path, SCORE_HEADER)?
            .iter()
            .map(|r| {
                Ok(ScoreRow {
                    example_id: parse_usize(&r[0])?,
                    layer: r[1].to_string(),
                    neuron_flat_index: parse_usize(&r[2])?,
                    method: r[3].to_string(),
                    class: parse_usize(&r[4])?,
                    score: parse_float(&r[5])?,
                    completeness_residual: parse_float(&r[6])?,
                })
            })
            .collect(),
    }
}

pub fn write_report(rows: &[ReportRow], path: impl AsRef<Path>, format: Format) -> Result<()> {
    let bytes = match format {
        Format::Json => json_bytes(&rows)?,
        Format::Csv => csv_bytes(
            REPORT_HEADER,
            rows.iter().map(|r| {
                [
                    r.example_id.to_string(),
                    r.layer.clone(),
                    r.method.clone(),
                    format_float(r.predicted_delta),
                    format_float(r.actual_delta),
                    format_float(r.abs_error),
                ]
            }),
        )?,
    };
    write_file_atomic(path.as_ref(), &bytes)
}

pub fn read_report(path: impl AsRef<Path>, format: Format) -> Result<Vec<ReportRow>> {
    let path = path.as_ref();
    match format {
        Format::Json => json_rows(path),
        Format::Csv => csv_records(path, REPORT_HEADER)?
            .iter()
            .map(|r| {
                Ok(ReportRow {
                    example_id: parse_usize(&r[0])?,
                    layer: r[1].to_string(),
                    method: r[2].to_string(),
                    predicted_delta: parse_float(&r[3])?,
                    actual_delta: parse_float(&r[4])?,
                    abs_error: parse_float(&r[5])?,
                })
            })
            .collect(),
    }
}

pub fn write_bench(rows: &[BenchRow], path: impl AsRef<Path>) -> Result<()> {
    let bytes = csv_bytes(
        BENCH_HEADER,
        rows.iter().map(|r| {
            [
                r.method.clone(),
                r.steps.to_string(),
                r.examples.to_string(),
                r.forward_passes.to_string(),
                r.gradient_passes.to_string(),
                r.multiplier_passes.to_string(),
                format_float(r.wall_time_secs),
            ]
        }),
    )?;
    write_file_atomic(path.as_ref(), &bytes)
}

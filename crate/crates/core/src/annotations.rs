//! Annotation and detection tables (CSV with header rows).

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::classify::Decision;
use crate::error::{Error, Result};

pub const ANNOTATION_HEADER: [&str; 4] = ["recording", "start_s", "end_s", "label"];
pub const DETECTION_HEADER: [&str; 5] = ["recording", "start_s", "end_s", "score", "decision"];

/// One labelled call in a recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub recording: PathBuf,
    pub start_s: f64,
    pub end_s: f64,
    pub label: String,
}

impl Annotation {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// One classified event in a recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub recording: String,
    pub start_s: f64,
    pub end_s: f64,
    pub score: f64,
    pub decision: Decision,
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
}

fn check_header(path: &Path, rdr: &mut csv::Reader<&[u8]>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers().map_err(|e| Error::Annotation {
        path: path.to_path_buf(),
        line: 1,
        message: e.to_string(),
    })?;
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(Error::Annotation {
            path: path.to_path_buf(),
            line: 1,
            message: format!("header {:?}, expected {:?}", got.join(","), expected.join(",")),
        });
    }
    Ok(())
}

fn field_f64(rec: &csv::StringRecord, i: usize, name: &str) -> std::result::Result<f64, String> {
    let raw = rec.get(i).ok_or_else(|| format!("missing {name}"))?;
    let v: f64 = raw.parse().map_err(|_| format!("{name} {raw:?} is not a number"))?;
    if !v.is_finite() {
        return Err(format!("{name} is not finite"));
    }
    Ok(v)
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

/// Parses an annotation table; `path` is only used in messages.
///
/// Exact duplicate rows are dropped with a warning. A table with no rows is
/// a usage error.
pub fn parse_annotations(text: &str, path: &Path) -> Result<Vec<Annotation>> {
    let mut rdr = reader(text);
    check_header(path, &mut rdr, &ANNOTATION_HEADER)?;
    let mut out: Vec<Annotation> = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Annotation {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = line_of(&rec);
        let row_err = |message: String| Error::Annotation {
            path: path.to_path_buf(),
            line,
            message,
        };
        let recording = rec.get(0).unwrap_or("");
        let label = rec.get(3).unwrap_or("");
        if recording.is_empty() {
            return Err(row_err("empty recording path".into()));
        }
        if label.is_empty() {
            return Err(row_err("empty label".into()));
        }
        let start_s = field_f64(&rec, 1, "start_s").map_err(row_err)?;
        let end_s = field_f64(&rec, 2, "end_s").map_err(row_err)?;
        if start_s < 0.0 {
            return Err(row_err(format!("start_s {start_s} is negative")));
        }
        if end_s <= start_s {
            return Err(row_err(format!("end_s {end_s} is not after start_s {start_s}")));
        }
        let key = (
            recording.to_string(),
            start_s.to_bits(),
            end_s.to_bits(),
            label.to_string(),
        );
        if !seen.insert(key) {
            warn!("{}:{line}: duplicate annotation dropped", path.display());
            continue;
        }
        out.push(Annotation {
            recording: PathBuf::from(recording),
            start_s,
            end_s,
            label: label.to_string(),
        });
    }
    if out.is_empty() {
        return Err(Error::Usage(format!("{}: no annotation rows", path.display())));
    }
    Ok(out)
}

pub fn read_annotations(path: &Path) -> Result<Vec<Annotation>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_annotations(&text, path)
}

/// Distinct recordings in first-appearance order, resolved against
/// `data_root`; fails listing every missing file.
pub fn resolve_recordings(annotations: &[Annotation], data_root: &Path) -> Result<Vec<PathBuf>> {
    let mut seen = HashSet::new();
    let mut paths = Vec::new();
    for a in annotations {
        if seen.insert(a.recording.clone()) {
            paths.push(data_root.join(&a.recording));
        }
    }
    let missing: Vec<PathBuf> = paths.iter().filter(|p| !p.is_file()).cloned().collect();
    if !missing.is_empty() {
        return Err(Error::MissingFiles(missing));
    }
    Ok(paths)
}

pub fn write_annotations(annotations: &[Annotation]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let ser = |e: csv::Error| Error::Data(format!("writing CSV: {e}"));
    w.write_record(ANNOTATION_HEADER).map_err(ser)?;
    for a in annotations {
        w.write_record([
            a.recording.to_string_lossy().as_ref(),
            &format_time(a.start_s),
            &format_time(a.end_s),
            &a.label,
        ])
        .map_err(ser)?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Data(format!("writing CSV: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
}

fn format_time(t: f64) -> String {
    format!("{t:.3}")
}

pub fn write_detections(detections: &[Detection]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let ser = |e: csv::Error| Error::Data(format!("writing CSV: {e}"));
    w.write_record(DETECTION_HEADER).map_err(ser)?;
    for d in detections {
        w.write_record([
            d.recording.as_str(),
            &format_time(d.start_s),
            &format_time(d.end_s),
            &format!("{:.6}", d.score),
            d.decision.as_str(),
        ])
        .map_err(ser)?;
    }
    finish(w)
}

pub fn parse_detections(text: &str, path: &Path) -> Result<Vec<Detection>> {
    let mut rdr = reader(text);
    check_header(path, &mut rdr, &DETECTION_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Annotation {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = line_of(&rec);
        let row_err = |message: String| Error::Annotation {
            path: path.to_path_buf(),
            line,
            message,
        };
        let start_s = field_f64(&rec, 1, "start_s").map_err(row_err)?;
        let end_s = field_f64(&rec, 2, "end_s").map_err(row_err)?;
        if end_s <= start_s {
            return Err(row_err(format!("end_s {end_s} is not after start_s {start_s}")));
        }
        let score = field_f64(&rec, 3, "score").map_err(row_err)?;
        let decision: Decision = rec
            .get(4)
            .unwrap_or("")
            .parse()
            .map_err(|e: Error| row_err(e.to_string()))?;
        out.push(Detection {
            recording: rec.get(0).unwrap_or("").to_string(),
            start_s,
            end_s,
            score,
            decision,
        });
    }
    Ok(out)
}

pub fn read_detections(path: &Path) -> Result<Vec<Detection>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_detections(&text, path)
}

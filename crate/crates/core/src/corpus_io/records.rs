use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::labels::{normalize_label, LabelDictionary};
use crate::error::{Error, Result};

/// One request as it arrives from the source system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub id: String,
    pub timestamp: String,
    pub categories: [Option<String>; 4],
    pub request_text: String,
    pub department_text: Option<String>,
    /// Set when the source system marked the record as not available.
    pub invalid: bool,
}

/// A record that survived filtering, with its resolved label index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidRecord {
    pub record: RawRecord,
    pub canonical_label: usize,
}

/// Counts of records removed by [`filter_valid`], one bucket per reason.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropStats {
    pub invalid_flag: usize,
    pub missing_dept: usize,
    pub unmapped: usize,
}

impl DropStats {
    pub fn total(&self) -> usize {
        self.invalid_flag + self.missing_dept + self.unmapped
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordFormat {
    Jsonl,
    Csv,
}

impl FromStr for RecordFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(RecordFormat::Jsonl),
            "csv" => Ok(RecordFormat::Csv),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

/// Wire form shared by the JSONL and CSV readers.
#[derive(Debug, Serialize, Deserialize)]
struct WireRecord {
    id: String,
    ts: String,
    cat1: Option<String>,
    cat2: Option<String>,
    cat3: Option<String>,
    cat4: Option<String>,
    request: String,
    department: Option<String>,
    #[serde(default)]
    invalid: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<usize>,
}

fn non_empty(s: Option<String>) -> Option<String> {
    s.filter(|v| !v.is_empty())
}

impl WireRecord {
    fn into_raw(self, row: usize) -> Result<RawRecord> {
        if self.id.is_empty() {
            return Err(Error::MalformedRow {
                row,
                message: "empty id".into(),
            });
        }
        Ok(RawRecord {
            id: self.id,
            timestamp: self.ts,
            categories: [
                non_empty(self.cat1),
                non_empty(self.cat2),
                non_empty(self.cat3),
                non_empty(self.cat4),
            ],
            request_text: self.request,
            department_text: self.department,
            invalid: self.invalid.unwrap_or(false),
        })
    }

    fn from_raw(r: &RawRecord, label: Option<usize>) -> Self {
        let [c1, c2, c3, c4] = r.categories.clone();
        WireRecord {
            id: r.id.clone(),
            ts: r.timestamp.clone(),
            cat1: c1,
            cat2: c2,
            cat3: c3,
            cat4: c4,
            request: r.request_text.clone(),
            department: r.department_text.clone(),
            invalid: Some(r.invalid),
            label,
        }
    }
}

/// Read records from `path`. Rows are numbered from 1 in error messages.
pub fn load_records(path: &Path, format: RecordFormat) -> Result<Vec<RawRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        RecordFormat::Jsonl => read_jsonl(BufReader::new(file), path)?
            .into_iter()
            .map(|(row, w)| w.into_raw(row))
            .collect(),
        RecordFormat::Csv => read_csv(file)?
            .into_iter()
            .map(|(row, w)| w.into_raw(row))
            .collect(),
    }
}

fn read_jsonl<R: BufRead>(reader: R, path: &Path) -> Result<Vec<(usize, WireRecord)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let row = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: WireRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        out.push((row, wire));
    }
    Ok(out)
}

fn read_csv<R: std::io::Read>(reader: R) -> Result<Vec<(usize, WireRecord)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<WireRecord>().enumerate() {
        let row = i + 1;
        let wire = rec.map_err(|e| Error::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        out.push((row, wire));
    }
    Ok(out)
}

pub fn write_raw_records(path: &Path, records: &[RawRecord]) -> Result<()> {
    write_wire(path, records.iter().map(|r| WireRecord::from_raw(r, None)))
}

/// Valid records are written as JSONL with an extra `label` field.
pub fn write_valid_records(path: &Path, records: &[ValidRecord]) -> Result<()> {
    write_wire(
        path,
        records
            .iter()
            .map(|v| WireRecord::from_raw(&v.record, Some(v.canonical_label))),
    )
}

fn write_wire(path: &Path, rows: impl Iterator<Item = WireRecord>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, &row)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_valid_records(path: &Path) -> Result<Vec<ValidRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_jsonl(BufReader::new(file), path)?
        .into_iter()
        .map(|(row, w)| {
            let label = w.label.ok_or_else(|| Error::MalformedRow {
                row,
                message: "missing field `label`".into(),
            })?;
            Ok(ValidRecord {
                record: w.into_raw(row)?,
                canonical_label: label,
            })
        })
        .collect()
}

/// Drop invalid-flagged records, records without a department, and records
/// whose department does not resolve to a canonical label.
pub fn filter_valid(records: &[RawRecord], dict: &LabelDictionary) -> (Vec<ValidRecord>, DropStats) {
    let mut stats = DropStats::default();
    let mut valid = Vec::with_capacity(records.len());
    for r in records {
        if r.invalid {
            stats.invalid_flag += 1;
            continue;
        }
        let dept = match r.department_text.as_deref().map(str::trim) {
            Some(d) if !d.is_empty() => d,
            _ => {
                stats.missing_dept += 1;
                continue;
            }
        };
        match normalize_label(dept, dict) {
            Some(label) => valid.push(ValidRecord {
                record: r.clone(),
                canonical_label: label,
            }),
            None => stats.unmapped += 1,
        }
    }
    (valid, stats)
}

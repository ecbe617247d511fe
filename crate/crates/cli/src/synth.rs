//! Seeded synthetic corpora in the raw input format, for smoke runs and
//! demos.

use std::path::Path;

use hybridclf::corpus_io::{generate_synthetic, write_raw_records, RawRecord, SyntheticSpec};

use crate::error::CliError;

/// Writes a raw JSONL corpus and its label dictionary; returns the number
/// of records.
pub fn write_synthetic(spec: &SyntheticSpec, corpus: &Path, dictionary: &Path) -> Result<usize, CliError> {
    let (records, dict) = generate_synthetic(spec)?;
    for p in [corpus, dictionary] {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| hybridclf::Error::io(dir, e))?;
        }
    }
    let raw: Vec<RawRecord> = records.into_iter().map(|r| r.record).collect();
    write_raw_records(corpus, &raw)?;
    dict.save(dictionary)?;
    Ok(raw.len())
}

pub fn load_spec(path: Option<&Path>) -> Result<SyntheticSpec, CliError> {
    match path {
        None => Ok(SyntheticSpec::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| hybridclf::Error::io(p, e))?;
            toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))
        }
    }
}

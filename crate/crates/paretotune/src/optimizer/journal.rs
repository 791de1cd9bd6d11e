//! Append-only session journal: line-delimited JSON records, fsync'd per
//! batch.
//!
//! Record order is deterministic given a deterministic evaluator: one
//! header, then per batch its sample records in canonical configuration
//! order followed by an iteration record, and finally a status record.
//! A truncated trailing line is treated as a crash remnant and ignored on
//! load; corruption anywhere earlier is an error naming the last record
//! that still parsed.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;

use super::{SampleSource, SessionOptions, SessionStatus};

pub const JOURNAL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("journal i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("journal corrupt at line {line}: {reason}; last valid record: {last_valid}")]
    Corrupt { line: usize, reason: String, last_valid: String },
    #[error("journal is empty or does not start with a header record")]
    MissingHeader,
    #[error("inconsistent journal: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    Header(HeaderRecord),
    Sample(SampleRecord),
    Iteration(IterationRecord),
    Status(StatusRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeaderRecord {
    pub version: u32,
    /// Space-definition document, re-parseable by the space module.
    pub space: Json,
    pub options: SessionOptions,
    pub objectives: Vec<String>,
    pub evaluator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub config: BTreeMap<String, Json>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub source: SampleSource,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: u32,
    pub predicted_front_size: u64,
    pub new_samples: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measured_front_hypervolume: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusRecord {
    pub status: SessionStatus,
}

fn record_name(record: &Record) -> &'static str {
    match record {
        Record::Header(_) => "header",
        Record::Sample(_) => "sample",
        Record::Iteration(_) => "iteration",
        Record::Status(_) => "status",
    }
}

/// Appending writer. `create` refuses to overwrite an existing journal;
/// `append` continues one.
pub struct JournalWriter {
    out: BufWriter<File>,
}

impl JournalWriter {
    pub fn create(path: &Path) -> Result<Self, JournalError> {
        let file = OpenOptions::new().write(true).create_new(true).open(path)?;
        Ok(JournalWriter { out: BufWriter::new(file) })
    }

    pub fn append(path: &Path) -> Result<Self, JournalError> {
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(JournalWriter { out: BufWriter::new(file) })
    }

    pub fn write(&mut self, record: &Record) -> Result<(), JournalError> {
        let line = serde_json::to_string(record).expect("records serialise");
        self.out.write_all(line.as_bytes())?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    /// Flush and fsync; called once per batch.
    pub fn sync(&mut self) -> Result<(), JournalError> {
        self.out.flush()?;
        self.out.get_ref().sync_data()?;
        Ok(())
    }
}

#[derive(Debug)]
pub struct LoadedJournal {
    pub header: HeaderRecord,
    /// Every record after the header.
    pub records: Vec<Record>,
    /// False when a trailing partial line was dropped.
    pub clean: bool,
}

pub fn read_journal(path: &Path) -> Result<LoadedJournal, JournalError> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    let lines: Vec<&str> = text.lines().collect();

    let mut records: Vec<Record> = Vec::new();
    let mut clean = true;
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Record>(line) {
            Ok(record) => records.push(record),
            Err(e) => {
                let is_last = lines[i + 1..].iter().all(|rest| rest.trim().is_empty());
                if is_last {
                    clean = false;
                    break;
                }
                let last_valid = records
                    .last()
                    .map(|r| format!("{} (#{})", record_name(r), records.len()))
                    .unwrap_or_else(|| "none".to_string());
                return Err(JournalError::Corrupt {
                    line: i + 1,
                    reason: e.to_string(),
                    last_valid,
                });
            }
        }
    }
    if records.is_empty() {
        return Err(JournalError::MissingHeader);
    }
    let Record::Header(header) = records.remove(0) else {
        return Err(JournalError::MissingHeader);
    };
    if header.version != JOURNAL_VERSION {
        return Err(JournalError::Inconsistent(format!(
            "unsupported journal version {}",
            header.version
        )));
    }
    for record in &records {
        if matches!(record, Record::Header(_)) {
            return Err(JournalError::Inconsistent("second header record".to_string()));
        }
    }
    Ok(LoadedJournal { header, records, clean })
}

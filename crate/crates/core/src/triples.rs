//! Event-triple input files.
//!
//! Two formats are accepted, chosen by file extension:
//! - delimited text (`.csv`, or `.tsv` for tab-separated) with a header naming
//!   the columns `id,x,y,z,pool` in any order;
//! - JSON lines (`.jsonl`, `.json`), one `{"id","x","y","z","pool"}` object per line.
//!
//! `pool` is `base` or `opposite`.

use std::collections::HashSet;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::causal::{EventTriple, Polarity};

#[derive(Debug, Error)]
pub enum TripleError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: duplicate triple id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// A validated triple together with the structure pool it is drawn for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PooledTriple {
    pub triple: EventTriple,
    pub pool: Polarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TripleFormat {
    Delimited(u8),
    JsonLines,
}

impl TripleFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => Self::JsonLines,
            Some("tsv") => Self::Delimited(b'\t'),
            _ => Self::Delimited(b','),
        }
    }
}

pub fn load_triples(path: &Path) -> Result<Vec<PooledTriple>, TripleError> {
    let text = std::fs::read_to_string(path).map_err(|source| TripleError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_triples(&text, TripleFormat::from_path(path))
}

pub fn parse_triples(text: &str, format: TripleFormat) -> Result<Vec<PooledTriple>, TripleError> {
    let rows = match format {
        TripleFormat::JsonLines => parse_jsonl(text)?,
        TripleFormat::Delimited(delim) => parse_delimited(text, delim)?,
    };
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for (line, row) in rows {
        let pool: Polarity = row.pool.trim().parse().map_err(|_| TripleError::Parse {
            line,
            reason: format!("pool must be base or opposite, got {:?}", row.pool),
        })?;
        let triple = EventTriple::new(
            row.id.trim(),
            row.x.trim(),
            row.y.trim(),
            row.z.trim(),
        )
        .map_err(|e| TripleError::Parse {
            line,
            reason: e.to_string(),
        })?;
        if !seen.insert(triple.id.clone()) {
            return Err(TripleError::DuplicateId {
                line,
                id: triple.id,
            });
        }
        out.push(PooledTriple { triple, pool });
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct RawRow {
    id: String,
    x: String,
    y: String,
    z: String,
    pool: String,
}

fn parse_jsonl(text: &str) -> Result<Vec<(usize, RawRow)>, TripleError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str::<RawRow>(l)
                .map(|r| (i + 1, r))
                .map_err(|e| TripleError::Parse {
                    line: i + 1,
                    reason: e.to_string(),
                })
        })
        .collect()
}

const COLUMNS: [&str; 5] = ["id", "x", "y", "z", "pool"];

fn parse_delimited(text: &str, delim: u8) -> Result<Vec<(usize, RawRow)>, TripleError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delim)
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();

    let header = match records.next() {
        None => return Ok(Vec::new()),
        Some(h) => h.map_err(|e| csv_error(e, 1))?,
    };
    let mut index = [0usize; 5];
    for (slot, name) in index.iter_mut().zip(COLUMNS) {
        *slot = header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| TripleError::Parse {
                line: 1,
                reason: format!("header is missing column {name:?}"),
            })?;
    }

    let mut rows = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| csv_error(e, 0))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        let field = |col: usize| {
            rec.get(index[col])
                .map(str::to_string)
                .ok_or_else(|| TripleError::Parse {
                    line,
                    reason: format!(
                        "missing field {:?} (expected {} fields, found {})",
                        COLUMNS[col],
                        header.len(),
                        rec.len()
                    ),
                })
        };
        rows.push((
            line,
            RawRow {
                id: field(0)?,
                x: field(1)?,
                y: field(2)?,
                z: field(3)?,
                pool: field(4)?,
            },
        ));
    }
    Ok(rows)
}

fn csv_error(e: csv::Error, fallback_line: usize) -> TripleError {
    let line = e
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback_line);
    TripleError::Parse {
        line,
        reason: e.to_string(),
    }
}

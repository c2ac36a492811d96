//! File ingestion for JSONL and CSV corpora.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

use super::{Corpus, Example};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IngestFormat {
    Jsonl,
    Csv,
}

/// Maps source field names onto the corpus schema. When `labels` is given it
/// fixes the label-string -> class-index map; otherwise labels are collected
/// and indexed in sorted order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestSchema {
    pub text_field: String,
    pub label_field: String,
    pub domain_field: String,
    #[serde(default)]
    pub labels: Option<Vec<String>>,
}

impl Default for IngestSchema {
    fn default() -> Self {
        IngestSchema {
            text_field: "text".into(),
            label_field: "label".into(),
            domain_field: "domain".into(),
            labels: None,
        }
    }
}

struct RawRow {
    text: String,
    label: Option<String>,
    domain: String,
    line: usize,
}

/// Reads a corpus from disk preserving file order. Unlabeled rows are kept
/// with `label = None`.
pub fn ingest(path: &Path, format: IngestFormat, schema: &IngestSchema) -> Result<Corpus> {
    let raw = match format {
        IngestFormat::Jsonl => read_jsonl(path, schema)?,
        IngestFormat::Csv => read_csv(path, schema)?,
    };

    let label_names: Vec<String> = match &schema.labels {
        Some(names) => names.clone(),
        None => {
            let mut seen: Vec<String> = raw
                .iter()
                .filter_map(|r| r.label.clone())
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            seen.sort();
            seen
        }
    };
    let label_map: BTreeMap<&str, usize> = label_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();

    let mut examples = Vec::with_capacity(raw.len());
    for row in raw {
        let label = match row.label {
            Some(ref s) => Some(*label_map.get(s.as_str()).ok_or_else(|| Error::UnknownLabel {
                label: s.clone(),
                line: row.line,
                known: label_names.clone(),
            })?),
            None => None,
        };
        if row.text.is_empty() {
            return Err(Error::MalformedRow {
                line: row.line,
                message: "empty text".into(),
            });
        }
        examples.push(Example {
            text: row.text,
            label,
            domain: row.domain,
        });
    }
    Corpus::new(examples, label_names.len(), label_names)
}

fn read_jsonl(path: &Path, schema: &IngestSchema) -> Result<Vec<RawRow>> {
    let file = File::open(path)?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(&line).map_err(|e| Error::MalformedRow {
            line: line_no,
            message: e.to_string(),
        })?;
        let text = v
            .get(&schema.text_field)
            .and_then(Value::as_str)
            .ok_or_else(|| Error::MalformedRow {
                line: line_no,
                message: format!("missing or non-string field {:?}", schema.text_field),
            })?
            .to_string();
        let label = match v.get(&schema.label_field) {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) if s.is_empty() => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(other) => {
                return Err(Error::MalformedRow {
                    line: line_no,
                    message: format!("label must be string or null, got {other}"),
                })
            }
        };
        let domain = v
            .get(&schema.domain_field)
            .and_then(Value::as_str)
            .unwrap_or("default")
            .to_string();
        rows.push(RawRow {
            text,
            label,
            domain,
            line: line_no,
        });
    }
    Ok(rows)
}

fn read_csv(path: &Path, schema: &IngestSchema) -> Result<Vec<RawRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let text_col = col(&schema.text_field).ok_or_else(|| Error::Config(format!(
        "CSV header has no column {:?}",
        schema.text_field
    )))?;
    let label_col = col(&schema.label_field);
    let domain_col = col(&schema.domain_field);

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line_no = i + 2; // header is line 1
        let record = record.map_err(|e| Error::MalformedRow {
            line: line_no,
            message: e.to_string(),
        })?;
        let text = record
            .get(text_col)
            .ok_or_else(|| Error::MalformedRow {
                line: line_no,
                message: "missing text cell".into(),
            })?
            .to_string();
        let label = label_col
            .and_then(|c| record.get(c))
            .filter(|s| !s.is_empty())
            .map(|s| s.to_string());
        let domain = domain_col
            .and_then(|c| record.get(c))
            .filter(|s| !s.is_empty())
            .unwrap_or("default")
            .to_string();
        rows.push(RawRow {
            text,
            label,
            domain,
            line: line_no,
        });
    }
    Ok(rows)
}

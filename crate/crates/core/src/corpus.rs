//! Benchmark items and JSONL reading/writing.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// One text-to-SQL example. Unknown keys are carried through untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkItem {
    #[serde(alias = "question_id")]
    pub item_id: i64,
    pub db_id: String,
    pub question: String,
    #[serde(default)]
    pub evidence: String,
    #[serde(rename = "SQL")]
    pub sql: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub db_id_tr: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub question_tr: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub evidence_tr: Option<String>,
    #[serde(rename = "SQL_tr", skip_serializing_if = "Option::is_none", default)]
    pub sql_tr: Option<String>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl BenchmarkItem {
    pub fn new(item_id: i64, db_id: &str, question: &str, evidence: &str, sql: &str) -> Self {
        Self {
            item_id,
            db_id: db_id.into(),
            question: question.into(),
            evidence: evidence.into(),
            sql: sql.into(),
            db_id_tr: None,
            question_tr: None,
            evidence_tr: None,
            sql_tr: None,
            extra: Map::new(),
        }
    }

    /// The localized view of the item: db id, question, evidence and SQL on
    /// the target side, falling back to the source where unset.
    pub fn target_side(&self) -> BenchmarkItem {
        BenchmarkItem::new(
            self.item_id,
            self.db_id_tr.as_deref().unwrap_or(&self.db_id),
            self.question_tr.as_deref().unwrap_or(&self.question),
            self.evidence_tr.as_deref().unwrap_or(&self.evidence),
            self.sql_tr.as_deref().unwrap_or(&self.sql),
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate item_id {0}")]
    DuplicateId(i64),
}

/// Reads a JSONL file; blank lines are skipped.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let io = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Reads a corpus from JSONL, or from a JSON array when the file starts
/// with `[`. Item ids must be unique.
pub fn read_corpus(path: &Path) -> Result<Vec<BenchmarkItem>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let items: Vec<BenchmarkItem> = if text.trim_start().starts_with('[') {
        serde_json::from_str(&text).map_err(|e| CorpusError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?
    } else {
        read_jsonl(path)?
    };
    let mut seen = std::collections::HashSet::new();
    for item in &items {
        if !seen.insert(item.item_id) {
            return Err(CorpusError::DuplicateId(item.item_id));
        }
    }
    Ok(items)
}

pub fn write_jsonl_to<T: Serialize, W: Write>(mut out: W, rows: &[T]) -> std::io::Result<()> {
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Writes rows atomically: to a sibling temp file that is then renamed.
pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CorpusError> {
    let mut buf = Vec::new();
    write_jsonl_to(&mut buf, rows).expect("writing to memory");
    write_atomic(path, &buf)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CorpusError> {
    let io = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let tmp = path.with_extension("tmp~");
    std::fs::write(&tmp, bytes).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

/// Appends one JSON line to a log file, creating it if needed.
pub fn append_jsonl<T: Serialize>(path: &Path, row: &T) -> Result<(), CorpusError> {
    let io = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io)?;
    let mut line = serde_json::to_vec(row).expect("serializable row");
    line.push(b'\n');
    f.write_all(&line).map_err(io)
}

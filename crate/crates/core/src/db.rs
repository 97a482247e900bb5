//! Single-file JSON database of sorry records.
//!
//! ```json
//! {"name": "...", "cutoff": "2026-01-01T00:00:00Z", "sorries": [ ... ],
//!  "categories": {"<remote>": "Library"}}
//! ```
//!
//! `categories` is optional. Files are written with sorted keys, two-space
//! indentation and a trailing newline, via a temp file renamed into place.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::model::{timestamp, validate_record, DatasetSnapshot, RepoCategory, SorryRecord};

#[derive(Debug, thiserror::Error)]
pub enum DbError {
    #[error("record {index}: {message}")]
    SchemaViolation { index: usize, message: String },
    #[error("malformed database: {0}")]
    Malformed(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Database {
    pub path: PathBuf,
    pub snapshot: DatasetSnapshot,
}

#[derive(Serialize, Deserialize)]
struct Header {
    name: String,
    #[serde(with = "timestamp")]
    cutoff: DateTime<Utc>,
    #[serde(default)]
    categories: BTreeMap<String, RepoCategory>,
}

/// Parses and validates a database document, failing on the first bad record.
pub fn parse_database(text: &str) -> Result<DatasetSnapshot, DbError> {
    let mut doc: Value = serde_json::from_str(text).map_err(|e| DbError::Malformed(e.to_string()))?;
    let sorries = match doc.as_object_mut().and_then(|o| o.remove("sorries")) {
        Some(Value::Array(items)) => items,
        _ => return Err(DbError::Malformed("missing \"sorries\" list".into())),
    };
    let header: Header = serde_json::from_value(doc).map_err(|e| DbError::Malformed(e.to_string()))?;
    let mut records = Vec::with_capacity(sorries.len());
    let mut ids = std::collections::HashSet::new();
    for (index, item) in sorries.into_iter().enumerate() {
        let record: SorryRecord =
            serde_json::from_value(item).map_err(|e| DbError::SchemaViolation { index, message: e.to_string() })?;
        if let Some(message) = validate_record(&record).into_iter().next() {
            return Err(DbError::SchemaViolation { index, message });
        }
        if record.metadata.inclusion_date > header.cutoff {
            return Err(DbError::SchemaViolation {
                index,
                message: "metadata: inclusion_date after snapshot cutoff".into(),
            });
        }
        if !ids.insert(record.id.clone()) {
            return Err(DbError::SchemaViolation {
                index,
                message: format!("id: duplicate {}", record.id),
            });
        }
        records.push(record);
    }
    Ok(DatasetSnapshot::new(header.name, header.cutoff, records, header.categories))
}

/// Canonical document text for `snapshot`.
pub fn to_canonical_json(snapshot: &DatasetSnapshot) -> String {
    let mut doc = serde_json::json!({
        "name": snapshot.name,
        "cutoff": timestamp::format(&snapshot.cutoff),
        "sorries": snapshot.records,
    });
    if !snapshot.categories.is_empty() {
        doc["categories"] = serde_json::to_value(&snapshot.categories).expect("categories serialize");
    }
    // Round-trip through Value so every object's keys come out sorted.
    let doc: Value = serde_json::from_str(&doc.to_string()).expect("document re-parses");
    let mut text = serde_json::to_string_pretty(&doc).expect("document serializes");
    text.push('\n');
    text
}

pub fn load_database(path: &Path) -> Result<Database, DbError> {
    let text = std::fs::read_to_string(path).map_err(|source| DbError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(Database {
        path: path.to_path_buf(),
        snapshot: parse_database(&text)?,
    })
}

/// Writes atomically while holding an advisory lock on `<path>.lock`.
pub fn save_database(db: &Database) -> Result<(), DbError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| DbError::Io { path, source }
    };
    let parent = match db.path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut lock_name = db.path.file_name().unwrap_or_default().to_os_string();
    lock_name.push(".lock");
    let lock_path = parent.join(lock_name);
    let lock = File::create(&lock_path).map_err(io(&lock_path))?;
    lock.lock().map_err(io(&lock_path))?;

    let mut tmp = tempfile::NamedTempFile::new_in(&parent).map_err(io(&parent))?;
    tmp.write_all(to_canonical_json(&db.snapshot).as_bytes())
        .map_err(io(tmp.path()))?;
    tmp.as_file().sync_all().map_err(io(tmp.path()))?;
    tmp.persist(&db.path).map_err(|e| DbError::Io {
        path: db.path.clone(),
        source: e.error,
    })?;
    drop(lock);
    Ok(())
}

//! JSONL persistence: one record per line, UTF-8, with a `schema` field
//! stamped on every line so files are self-describing.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

/// Schema tag written on every line of every JSONL artifact.
pub const SCHEMA_VERSION: &str = "libeval/1";

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("i/o error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: invalid JSON")]
    Json {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}:{line}: unsupported schema {found:?} (expected {expected:?})")]
    SchemaMismatch {
        path: String,
        line: usize,
        found: String,
        expected: String,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> JsonlError {
    JsonlError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Write items as JSONL, one object per line, each stamped with
/// `"schema": "libeval/1"`. Parent directories are created as needed.
pub fn write_jsonl<T, I>(path: &Path, items: I) -> Result<usize, JsonlError>
where
    T: Serialize,
    I: IntoIterator<Item = T>,
{
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| io_err(path, e))?;
        }
    }
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    let mut n = 0usize;
    for item in items {
        let mut value = serde_json::to_value(&item).map_err(|e| JsonlError::Json {
            path: path.display().to_string(),
            line: n + 1,
            source: e,
        })?;
        if let serde_json::Value::Object(ref mut map) = value {
            map.insert(
                "schema".to_string(),
                serde_json::Value::String(SCHEMA_VERSION.to_string()),
            );
        }
        serde_json::to_writer(&mut out, &value).map_err(|e| JsonlError::Json {
            path: path.display().to_string(),
            line: n + 1,
            source: e,
        })?;
        out.write_all(b"\n").map_err(|e| io_err(path, e))?;
        n += 1;
    }
    out.flush().map_err(|e| io_err(path, e))?;
    Ok(n)
}

/// Read a JSONL file written by [`write_jsonl`]. Lines may omit the schema
/// field; a present-but-different schema is an error. Blank lines are
/// ignored.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut items = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| JsonlError::Json {
                path: path.display().to_string(),
                line: idx + 1,
                source: e,
            })?;
        if let serde_json::Value::Object(ref mut map) = value {
            if let Some(serde_json::Value::String(found)) = map.remove("schema") {
                if found != SCHEMA_VERSION {
                    return Err(JsonlError::SchemaMismatch {
                        path: path.display().to_string(),
                        line: idx + 1,
                        found,
                        expected: SCHEMA_VERSION.to_string(),
                    });
                }
            }
        }
        let item: T = serde_json::from_value(value).map_err(|e| JsonlError::Json {
            path: path.display().to_string(),
            line: idx + 1,
            source: e,
        })?;
        items.push(item);
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Row {
        k: String,
        v: u32,
    }

    #[test]
    fn roundtrip_stamps_and_strips_schema() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.jsonl");
        let rows = vec![
            Row {
                k: "a".into(),
                v: 1,
            },
            Row {
                k: "b".into(),
                v: 2,
            },
        ];
        write_jsonl(&path, &rows).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        for line in text.lines() {
            assert!(line.contains("\"schema\":\"libeval/1\""), "line: {line}");
        }
        let back: Vec<Row> = read_jsonl(&path).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn rejects_unknown_schema_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.jsonl");
        std::fs::write(&path, "{\"schema\":\"libeval/9\",\"k\":\"a\",\"v\":1}\n").unwrap();
        let err = read_jsonl::<Row>(&path).unwrap_err();
        assert!(matches!(err, JsonlError::SchemaMismatch { .. }));
    }

    #[test]
    fn accepts_lines_without_schema_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.jsonl");
        std::fs::write(&path, "{\"k\":\"a\",\"v\":1}\n\n").unwrap();
        let back: Vec<Row> = read_jsonl(&path).unwrap();
        assert_eq!(back.len(), 1);
    }
}

//! Result tables and atomic artifact writes.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// Version of every JSON summary written by the CLI.
pub const SCHEMA_VERSION: u32 = 1;

/// A CSV table with a fixed column order.
pub struct Table {
    pub headers: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: &[&'static str]) -> Self {
        Table { headers: headers.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        Ok(w.into_inner().map_err(|e| anyhow::anyhow!("{}", e.error()))?)
    }
}

/// `{"schema_version": 1, ...}` as pretty JSON with a trailing newline.
pub fn json_summary<T: Serialize>(kind: &str, body: &T) -> Result<Vec<u8>> {
    let mut value = serde_json::json!({ "schema_version": SCHEMA_VERSION, "kind": kind });
    let body = serde_json::to_value(body)?;
    if let (Some(obj), serde_json::Value::Object(extra)) = (value.as_object_mut(), body) {
        obj.extend(extra);
    }
    let mut bytes = serde_json::to_vec_pretty(&value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Artifacts gathered in memory and written together once every computation
/// has succeeded. Each file goes through a temporary file in the target
/// directory and is renamed into place.
#[derive(Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn write(self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        let mut staged = Vec::new();
        for (name, bytes) in &self.files {
            let mut tmp = tempfile::NamedTempFile::new_in(dir)
                .with_context(|| format!("cannot create a temporary file in {}", dir.display()))?;
            std::io::Write::write_all(&mut tmp, bytes).with_context(|| format!("cannot write {}", dir.join(name).display()))?;
            staged.push((tmp, dir.join(name)));
        }
        let mut written = Vec::new();
        for (tmp, target) in staged {
            tmp.persist(&target).with_context(|| format!("cannot write {}", target.display()))?;
            written.push(target);
        }
        Ok(written)
    }
}

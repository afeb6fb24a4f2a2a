//! Append-only JSONL result store.
//!
//! Each record is written as one complete line followed by a flush. On load,
//! a malformed final line without a trailing newline is treated as an
//! interrupted write and dropped; malformed lines anywhere else are errors.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::trainer::RunRecord;

#[derive(Debug, Default)]
pub struct ResultStore {
    records: IndexMap<String, RunRecord>,
    sink: Option<(PathBuf, File)>,
}

impl ResultStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Read every record in `path`. An empty file is an empty store.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let (records, _) = parse(&text, path)?;
        Ok(Self {
            records,
            sink: None,
        })
    }

    /// Load `path` if it exists (creating it otherwise) and append new
    /// records to it.
    pub fn open(path: &Path) -> Result<Self> {
        let (records, valid_len) = if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse(&text, path)?
        } else {
            (IndexMap::new(), 0)
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        // Drop a torn trailing line so the next append starts cleanly.
        let on_disk = file.metadata().map_err(|e| Error::io(path, e))?.len();
        if on_disk != valid_len as u64 {
            file.set_len(valid_len as u64)
                .map_err(|e| Error::io(path, e))?;
        }
        Ok(Self {
            records,
            sink: Some((path.to_path_buf(), file)),
        })
    }

    pub fn contains(&self, key: &str) -> bool {
        self.records.contains_key(key)
    }

    pub fn get(&self, key: &str) -> Option<&RunRecord> {
        self.records.get(key)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &RunRecord> {
        self.records.values()
    }

    pub fn keys(&self) -> impl Iterator<Item = &String> {
        self.records.keys()
    }

    pub fn into_records(self) -> Vec<RunRecord> {
        self.records.into_values().collect()
    }

    pub fn append(&mut self, record: RunRecord) -> Result<()> {
        let key = record.key();
        if self.records.contains_key(&key) {
            return Err(Error::DuplicateKey(key));
        }
        if let Some((path, file)) = &mut self.sink {
            let mut line = serde_json::to_string(&record)?;
            line.push('\n');
            file.write_all(line.as_bytes())
                .map_err(|e| Error::io(&*path, e))?;
            file.flush().map_err(|e| Error::io(&*path, e))?;
        }
        self.records.insert(key, record);
        Ok(())
    }
}

/// Parsed records and the byte length of the well-formed prefix.
fn parse(text: &str, path: &Path) -> Result<(IndexMap<String, RunRecord>, usize)> {
    let mut records = IndexMap::new();
    let mut offset = 0usize;
    let mut valid_len = 0usize;
    for (i, raw) in text.split_inclusive('\n').enumerate() {
        offset += raw.len();
        let terminated = raw.ends_with('\n');
        let line = raw.trim();
        if line.is_empty() {
            valid_len = offset;
            continue;
        }
        match serde_json::from_str::<RunRecord>(line) {
            Ok(record) => {
                let key = record.key();
                if records.insert(key.clone(), record).is_some() {
                    return Err(Error::DuplicateKey(format!("{key} (line {})", i + 1)));
                }
                valid_len = offset;
            }
            Err(_) if !terminated => {
                log::warn!(
                    "{}: dropping incomplete final line {}",
                    path.display(),
                    i + 1
                );
            }
            Err(e) => {
                return Err(Error::Parse {
                    context: path.display().to_string(),
                    row: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok((records, valid_len))
}

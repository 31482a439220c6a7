//! Report files: CSV tables, key-value reports and atomic commits.

use std::io::Write;
use std::path::Path;

use tempfile::NamedTempFile;

use crate::CliError;

/// Named outputs of a pipeline, held in memory until the run succeeds.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    /// Writes every file to a temporary sibling first and renames only once
    /// all of them are on disk.
    pub fn commit(self, dir: &Path) -> Result<(), CliError> {
        let io = |what: &str, e: std::io::Error| CliError::Runtime(format!("{what}: {e}"));
        std::fs::create_dir_all(dir).map_err(|e| io(&dir.display().to_string(), e))?;
        let mut staged = Vec::with_capacity(self.files.len());
        for (name, bytes) in self.files {
            let mut tmp = NamedTempFile::new_in(dir).map_err(|e| io("temporary file", e))?;
            tmp.write_all(&bytes).map_err(|e| io(&name, e))?;
            tmp.flush().map_err(|e| io(&name, e))?;
            staged.push((name, tmp));
        }
        for (name, tmp) in staged {
            tmp.persist(dir.join(&name)).map_err(|e| io(&name, e.error))?;
        }
        Ok(())
    }
}

/// CSV table with a header row; numbers use the shortest round-trip form.
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header).expect("writing to memory");
        Table { writer }
    }

    pub fn row(&mut self, values: &[f64]) {
        self.writer
            .write_record(values.iter().map(|v| v.to_string()))
            .expect("writing to memory");
    }

    pub fn text_row(&mut self, values: &[String]) {
        self.writer.write_record(values).expect("writing to memory");
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.writer.into_inner().expect("flushing to memory")
    }
}

/// `key = value` lines.
#[derive(Debug, Default)]
pub struct KeyValues {
    text: String,
}

impl KeyValues {
    pub fn put(&mut self, key: &str, value: impl std::fmt::Display) {
        self.text.push_str(&format!("{key} = {value}\n"));
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.text.into_bytes()
    }
}

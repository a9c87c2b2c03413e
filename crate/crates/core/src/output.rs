//! Result files: CSV tables, JSON documents, JSON-lines traces and the run manifest.

use crate::config::ExperimentConfig;
use crate::error::Result;
use serde::Serialize;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn write_json_lines<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    seed: u64,
    created_unix_s: u64,
    files: &'a [String],
    config: &'a ExperimentConfig,
}

/// Output directory of one run. Every file written through it is listed in
/// the manifest; `config.toml` holds the resolved config and can be fed
/// back with `--config` to reproduce the run.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(OutputDir { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.root.join(name)
    }

    pub fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<PathBuf> {
        let p = self.path(name);
        write_csv(&p, rows)?;
        Ok(p)
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let p = self.path(name);
        write_json(&p, value)?;
        Ok(p)
    }

    pub fn json_lines<T: Serialize>(&mut self, name: &str, records: &[T]) -> Result<PathBuf> {
        let p = self.path(name);
        write_json_lines(&p, records)?;
        Ok(p)
    }

    /// Writes `config.toml` and `manifest.json`.
    pub fn finish(mut self, command: &str, config: &ExperimentConfig) -> Result<()> {
        fs::write(self.path("config.toml"), config.to_toml_string()?)?;
        let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let manifest = Manifest { command, seed: config.seed, created_unix_s: created, files: &self.files, config };
        write_json(&self.root.join("manifest.json"), &manifest)
    }
}

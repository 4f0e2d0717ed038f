//! Artifact directory: CSV/JSON writers and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use ultrawide_core::io::fmt_real;

use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
    stages: Vec<Stage>,
    seeds: Vec<u64>,
    started: Instant,
    stage_started: Instant,
}

#[derive(Debug, Serialize)]
struct Stage {
    name: String,
    seconds: f64,
}

#[derive(Debug, Serialize)]
struct FileEntry {
    name: String,
    bytes: u64,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    config: serde_json::Value,
    version: &'a str,
    threads: usize,
    wall_seconds: f64,
    stages: &'a [Stage],
    seeds: &'a [u64],
    files: Vec<FileEntry>,
}

/// A real cell in the CSV contract.
pub fn real(x: f64) -> String {
    fmt_real(x)
}

pub fn opt_real(x: Option<f64>) -> String {
    x.map_or_else(String::new, fmt_real)
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root)?;
        let now = Instant::now();
        Ok(Self {
            root: root.to_owned(),
            files: Vec::new(),
            stages: Vec::new(),
            seeds: Vec::new(),
            started: now,
            stage_started: now,
        })
    }

    /// Closes the current timing stage under `name`.
    pub fn stage(&mut self, name: &str) {
        let now = Instant::now();
        self.stages.push(Stage {
            name: name.to_owned(),
            seconds: (now - self.stage_started).as_secs_f64(),
        });
        self.stage_started = now;
    }

    pub fn seeds(&mut self, seeds: impl IntoIterator<Item = u64>) {
        self.seeds.extend(seeds);
    }

    fn register(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_owned());
        }
        self.root.join(name)
    }

    pub fn csv<R, I>(&mut self, name: &str, header: &str, rows: R) -> Result<(), CliError>
    where
        R: IntoIterator<Item = I>,
        I: IntoIterator<Item = String>,
    {
        let path = self.register(name);
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)?;
        w.write_record(header.split(','))?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let path = self.register(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    /// Writes `manifest.json` listing every artifact with its size.
    pub fn finish(mut self, config: serde_json::Value) -> Result<PathBuf, CliError> {
        self.stage("write");
        let mut files = Vec::with_capacity(self.files.len());
        for name in &self.files {
            files.push(FileEntry {
                name: name.clone(),
                bytes: fs::metadata(self.root.join(name))?.len(),
            });
        }
        let manifest = Manifest {
            config,
            version: env!("CARGO_PKG_VERSION"),
            threads: rayon::current_num_threads(),
            wall_seconds: self.started.elapsed().as_secs_f64(),
            stages: &self.stages,
            seeds: &self.seeds,
            files,
        };
        let path = self.root.join(MANIFEST);
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }
}

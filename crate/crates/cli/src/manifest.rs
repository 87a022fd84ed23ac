//! Run manifest: what was run, with which config, and a content hash for
//! every file written.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub rte_core_version: &'static str,
    pub rte_cli_version: &'static str,
    pub config_sha256: String,
    pub seed: u64,
    pub threads: usize,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects output files and stage timings for one command.
pub struct Run {
    pub dir: PathBuf,
    command: String,
    config_sha256: String,
    seed: u64,
    files: Vec<PathBuf>,
    timings: BTreeMap<String, f64>,
}

impl Run {
    /// Creates the output directory and writes the effective config into it.
    pub fn start(command: &str, cfg: &ExperimentConfig) -> Result<Run> {
        let dir = cfg.output_dir.clone();
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let text = serde_json::to_string_pretty(cfg)?;
        let mut run = Run {
            dir,
            command: command.to_string(),
            config_sha256: sha256_hex(text.as_bytes()),
            seed: cfg.seed,
            files: Vec::new(),
            timings: BTreeMap::new(),
        };
        let path = run.path("config.json");
        fs::write(&path, text)?;
        run.add(path);
        Ok(run)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn add(&mut self, path: PathBuf) {
        self.files.push(path);
    }

    pub fn add_all(&mut self, paths: Vec<PathBuf>) {
        self.files.extend(paths);
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.add(path);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, serde_json::to_string_pretty(value)?)
    }

    pub fn record(&mut self, stage: &str, seconds: f64) {
        self.timings.insert(stage.to_string(), seconds);
    }

    /// Runs `f` and records its duration under `stage`.
    pub fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.timings.insert(stage.to_string(), t.elapsed().as_secs_f64());
        out
    }

    /// Hashes every recorded file and writes `manifest.json`.
    pub fn finish(self) -> Result<PathBuf> {
        let mut files = Vec::with_capacity(self.files.len());
        for p in &self.files {
            let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            files.push(FileEntry { path: relative(&self.dir, p), sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 });
        }
        files.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            command: self.command,
            rte_core_version: rte_core::VERSION,
            rte_cli_version: env!("CARGO_PKG_VERSION"),
            config_sha256: self.config_sha256,
            seed: self.seed,
            threads: rayon::current_num_threads(),
            timings: self.timings,
            files,
        };
        let path = self.dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(path)
    }
}

fn relative(dir: &Path, p: &Path) -> String {
    p.strip_prefix(dir).unwrap_or(p).to_string_lossy().into_owned()
}

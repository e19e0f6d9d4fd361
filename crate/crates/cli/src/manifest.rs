use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use serde_json::Value;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub subcommand: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub code_version: String,
    pub started_at: String,
    pub finished_at: String,
    pub wall_time_secs: f64,
    pub threads: usize,
    pub outputs: Vec<PathBuf>,
}

/// Collects output paths while a subcommand runs.
pub struct Recorder {
    out: PathBuf,
    subcommand: String,
    started_at: String,
    clock: Instant,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    pub fn start(out: &Path, subcommand: impl Into<String>) -> Result<Self> {
        std::fs::create_dir_all(out)
            .with_context(|| format!("cannot create output directory {}", out.display()))?;
        Ok(Self {
            out: out.to_path_buf(),
            subcommand: subcommand.into(),
            started_at: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
            clock: Instant::now(),
            outputs: Vec::new(),
        })
    }

    /// Write `name` in the output directory with `f`, and record it.
    pub fn write(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> Result<()>,
    ) -> Result<PathBuf> {
        let path = self.out.join(name);
        let file = std::fs::File::create(&path)
            .with_context(|| format!("cannot write {}", path.display()))?;
        let mut w = std::io::BufWriter::new(file);
        f(&mut w)?;
        std::io::Write::flush(&mut w)?;
        self.outputs.push(path.clone());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            std::io::Write::write_all(w, b"\n")?;
            Ok(())
        })
    }

    pub fn finish<C: Serialize>(self, config: &C, seed: Option<u64>) -> Result<PathBuf> {
        let path = self.out.join(MANIFEST_FILE);
        let manifest = RunManifest {
            schema_version: SCHEMA_VERSION,
            subcommand: self.subcommand,
            config: serde_json::to_value(config)?,
            seed,
            code_version: env!("CARGO_PKG_VERSION").into(),
            started_at: self.started_at,
            finished_at: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
            wall_time_secs: self.clock.elapsed().as_secs_f64(),
            threads: rayon::current_num_threads(),
            outputs: self.outputs,
        };
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }
}

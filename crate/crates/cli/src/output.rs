//! Output files and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

/// Collects the files written by one command and records them in
/// `manifest.json`.
pub struct RunOutput {
    dir: PathBuf,
    command: String,
    seed: Option<u64>,
    started: String,
    files: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    schema_version: u32,
    command: &'a str,
    code_version: &'a str,
    seed: Option<u64>,
    started: &'a str,
    finished: String,
    config: &'a C,
    outputs: &'a [String],
}

impl RunOutput {
    pub fn create(dir: &Path, command: &str, seed: Option<u64>) -> CliResult<Self> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            seed,
            started: now(),
            files: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    pub fn csv<T: Serialize>(
        &mut self,
        name: &str,
        rows: impl IntoIterator<Item = T>,
    ) -> CliResult<()> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path)?;
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()
            .map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value)?;
        self.text(name, &(text + "\n"))
    }

    pub fn text(&mut self, name: &str, body: &str) -> CliResult<()> {
        let path = self.path(name);
        fs::write(&path, body).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
    }

    /// Writes `config.resolved.json` and `manifest.json`.
    pub fn finish<C: Serialize>(mut self, config: &C) -> CliResult<PathBuf> {
        self.json("config.resolved.json", config)?;
        self.files.push("manifest.json".to_string());
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            command: &self.command,
            code_version: env!("CARGO_PKG_VERSION"),
            seed: self.seed,
            started: &self.started,
            finished: now(),
            config,
            outputs: &self.files,
        };
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        fs::write(&path, text)
            .map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
        Ok(path)
    }
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use d2v_core::trainer::json_hash;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    /// SHA-256 of the compact JSON of `config`.
    pub config_hash: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub toolkit_version: String,
    pub duration_secs: f64,
}

/// Output directory of one command. Tracks written files for the manifest.
pub struct OutDir {
    root: PathBuf,
    outputs: Vec<PathBuf>,
    started: Instant,
}

impl OutDir {
    pub fn prepare(root: &Path, force: bool) -> CliResult<Self> {
        if root.exists() {
            if !root.is_dir() {
                return Err(CliError::Usage(format!(
                    "{} exists and is not a directory",
                    root.display()
                )));
            }
            let occupied = fs::read_dir(root)?.next().is_some();
            if occupied && !force {
                return Err(CliError::Usage(format!(
                    "output directory {} is not empty; pass --force to overwrite",
                    root.display()
                )));
            }
        } else {
            fs::create_dir_all(root)?;
        }
        Ok(Self {
            root: root.to_path_buf(),
            outputs: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> CliResult<PathBuf> {
        let path = self.root.join(name);
        fs::write(&path, bytes)?;
        self.outputs.push(path.clone());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    /// Writes `manifest.json` last so it lists every other output.
    pub fn finish<C: Serialize>(
        self,
        command: &str,
        argv: &[String],
        config: &C,
        seed: Option<u64>,
        inputs: Vec<PathBuf>,
    ) -> CliResult<RunManifest> {
        let manifest = RunManifest {
            command: command.to_string(),
            argv: argv.to_vec(),
            config_hash: json_hash(config),
            config: serde_json::to_value(config)?,
            seed,
            inputs,
            outputs: self.outputs,
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            duration_secs: self.started.elapsed().as_secs_f64(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(self.root.join(MANIFEST_FILE), text)?;
        Ok(manifest)
    }
}

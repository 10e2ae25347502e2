//! Run directories: written under `<out>.partial`, renamed on success.

use std::path::{Path, PathBuf};

use crate::config::{CliError, CliResult, Settings};

pub fn version() -> String {
    format!("{} ({})", env!("CARGO_PKG_VERSION"), fracsde::experiments::BUILD_DESCRIBE)
}

pub struct RunDir {
    target: PathBuf,
    partial: PathBuf,
    outputs: Vec<String>,
}

impl RunDir {
    pub fn create(out: &str) -> CliResult<Self> {
        let target = PathBuf::from(out);
        let mut name = target
            .file_name()
            .ok_or_else(|| CliError::Config(format!("invalid output directory `{out}`")))?
            .to_os_string();
        name.push(".partial");
        let partial = target.with_file_name(name);
        if target.exists() {
            return Err(CliError::Config(format!("output directory `{out}` already exists")));
        }
        if partial.exists() {
            return Err(CliError::Config(format!(
                "`{}` is left over from an earlier run; remove it first",
                partial.display()
            )));
        }
        std::fs::create_dir_all(&partial)?;
        Ok(RunDir { target, partial, outputs: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.partial
    }

    /// Path of an output file, recorded for the manifest.
    pub fn file(&mut self, name: &str) -> PathBuf {
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
        self.partial.join(name)
    }

    pub fn record(&mut self, path: &Path) {
        if let Ok(rel) = path.strip_prefix(&self.partial) {
            let rel = rel.to_string_lossy().into_owned();
            if !self.outputs.contains(&rel) {
                self.outputs.push(rel);
            }
        }
    }

    /// Writes `manifest.json` and moves the directory into place.
    pub fn finish(self, command: &str, settings: &Settings, seed: u64, extra: serde_json::Value) -> CliResult<PathBuf> {
        let manifest = serde_json::json!({
            "command": command,
            "seed": seed,
            "version": version(),
            "config": settings.to_json(),
            "outputs": self.outputs,
            "result": extra,
        });
        std::fs::write(self.partial.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        self.rename()
    }

    /// Moves the directory into place without writing a manifest (for
    /// outputs that carry their own).
    pub fn rename(self) -> CliResult<PathBuf> {
        std::fs::rename(&self.partial, &self.target)?;
        Ok(self.target)
    }
}

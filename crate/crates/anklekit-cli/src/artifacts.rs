//! Output plumbing shared by every subcommand: exit-code carrying errors,
//! config loading, and an artifact writer that hashes everything it writes
//! and records it in `manifest.json`.

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Process exit code for configuration or validation problems.
pub const EXIT_CONFIG: i32 = 2;
/// Process exit code for runtime or numeric failures.
pub const EXIT_RUNTIME: i32 = 3;

/// An error destined for the error-JSON printer in `main`.
#[derive(Debug)]
pub struct CliError {
    pub exit_code: i32,
    pub message: String,
    /// File the error is about, when there is one.
    pub path: Option<String>,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { exit_code: EXIT_CONFIG, message: message.into(), path: None }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self { exit_code: EXIT_RUNTIME, message: message.into(), path: None }
    }

    pub fn with_path(mut self, path: &Path) -> Self {
        self.path = Some(path.display().to_string());
        self
    }
}

/// Maps a module error into a validation failure (exit 2).
pub fn config_err(err: impl std::fmt::Display) -> CliError {
    CliError::config(err.to_string())
}

/// Maps a module error into a runtime failure (exit 3).
pub fn runtime_err(err: impl std::fmt::Display) -> CliError {
    CliError::runtime(err.to_string())
}

/// Reads and parses a JSON config file, or falls back to `T::default()`
/// when no path is given. Both failure modes are config errors that name
/// the offending file.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("reading config: {e}")).with_path(path))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("parsing config: {e}")).with_path(path))
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Hash of the resolved configuration that actually drove the run (after
/// flag overrides), so identical effective inputs give identical manifests
/// regardless of how they were spelled.
pub fn config_hash<T: Serialize>(resolved: &T) -> Result<String, CliError> {
    let bytes = serde_json::to_vec(resolved)
        .map_err(|e| CliError::runtime(format!("serializing config: {e}")))?;
    Ok(sha256_hex(&bytes))
}

struct Entry {
    file: String,
    sha256: String,
    bytes: u64,
}

/// Collects output files for one run. All writes funnel through here (one
/// writer), every file is hashed, and [`Artifacts::finish`] seals the run
/// with a `manifest.json` carrying no timestamps: reruns of the same config
/// and version produce byte-identical manifests.
pub struct Artifacts {
    dir: PathBuf,
    entries: Vec<Entry>,
    written: Vec<PathBuf>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::config(format!("creating output directory: {e}")).with_path(dir))?;
        Ok(Self { dir: dir.to_path_buf(), entries: Vec::new(), written: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn record(&mut self, name: &str, bytes: &[u8]) {
        self.entries.push(Entry {
            file: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        self.written.push(self.dir.join(name));
    }

    /// Write text or bytes directly.
    pub fn write(&mut self, name: &str, content: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, content.as_ref())
            .map_err(|e| CliError::runtime(format!("writing output: {e}")).with_path(&path))?;
        self.record(name, content.as_ref());
        Ok(path)
    }

    /// Serialize a value as pretty JSON and write it.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::runtime(format!("serializing {name}: {e}")))?;
        text.push('\n');
        self.write(name, text)
    }

    /// Let a callback write the file (STL and PNG writers take paths), then
    /// read it back for hashing.
    pub fn write_via(
        &mut self,
        name: &str,
        writer: impl FnOnce(&Path) -> Result<(), CliError>,
    ) -> Result<PathBuf, CliError> {
        writer(&self.dir.join(name))?;
        self.register(name)
    }

    /// Adopt a file that a library exporter already wrote into this run's
    /// directory, reading it back for hashing.
    pub fn register(&mut self, name: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        let bytes = std::fs::read(&path)
            .map_err(|e| CliError::runtime(format!("reading back output: {e}")).with_path(&path))?;
        self.record(name, &bytes);
        Ok(path)
    }

    /// Write `manifest.json` and return every path produced by the run,
    /// manifest last.
    pub fn finish(mut self, subcommand: &str, config_sha256: &str) -> Result<Vec<PathBuf>, CliError> {
        self.entries.sort_by(|a, b| a.file.cmp(&b.file));
        let manifest = serde_json::json!({
            "tool": "anklekit",
            "tool_version": env!("CARGO_PKG_VERSION"),
            "subcommand": subcommand,
            "config_sha256": config_sha256,
            "outputs": self.entries.iter().map(|e| {
                serde_json::json!({ "file": e.file, "sha256": e.sha256, "bytes": e.bytes })
            }).collect::<Vec<_>>(),
        });
        let path = self.dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::runtime(format!("serializing manifest: {e}")))?;
        text.push('\n');
        std::fs::write(&path, text)
            .map_err(|e| CliError::runtime(format!("writing manifest: {e}")).with_path(&path))?;
        let mut written = std::mem::take(&mut self.written);
        written.push(path);
        Ok(written)
    }
}

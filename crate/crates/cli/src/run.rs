//! Run manifests and crash-safe output files.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// Every flag after defaults and environment fallbacks are applied.
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
    pub version: String,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(
        command: &str,
        config: &impl Serialize,
        seed: Option<u64>,
        inputs: &[&Path],
    ) -> Result<Self, CliError> {
        Ok(RunManifest {
            command: command.to_string(),
            config: serde_json::to_value(config).map_err(|e| CliError::Config(e.to_string()))?,
            seed,
            inputs: inputs
                .iter()
                .map(|p| digest_file(p))
                .collect::<Result<_, _>>()?,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_atomic(path, text.as_bytes())?;
        log::info!("manifest: {}", path.display());
        Ok(())
    }
}

pub fn digest_file(path: &Path) -> Result<InputDigest, CliError> {
    let mut file = File::open(path).map_err(|e| CliError::io(path.display(), e))?;
    let mut hasher = Sha256::new();
    let bytes = io::copy(&mut file, &mut hasher).map_err(|e| CliError::io(path.display(), e))?;
    Ok(InputDigest {
        path: path.to_path_buf(),
        sha256: hex::encode(hasher.finalize()),
        bytes,
    })
}

/// `<out>.manifest.json` next to the primary output.
pub fn default_manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// Fails with a config error naming the first input that is not a readable file.
pub fn require_inputs(paths: &[&Path]) -> Result<(), CliError> {
    for p in paths {
        if !p.is_file() {
            return Err(CliError::Config(format!(
                "input {} does not exist or is not a file",
                p.display()
            )));
        }
    }
    Ok(())
}

/// Fails with a config error when an output's directory does not exist.
pub fn require_output_dirs(paths: &[&Path]) -> Result<(), CliError> {
    for p in paths {
        let dir = parent_dir(p);
        if !dir.is_dir() {
            return Err(CliError::Config(format!(
                "output directory {} does not exist",
                dir.display()
            )));
        }
    }
    Ok(())
}

fn parent_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

/// Writes to a temporary file in the destination directory and renames it into
/// place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic_with(path, |w| w.write_all(bytes))
}

pub fn write_atomic_with(
    path: &Path,
    fill: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> Result<(), CliError> {
    let fail = |e: io::Error| CliError::io(format!("writing {}", path.display()), e);
    let mut tmp = tempfile::NamedTempFile::new_in(parent_dir(path)).map_err(fail)?;
    {
        let mut w = io::BufWriter::new(tmp.as_file_mut());
        fill(&mut w).map_err(fail)?;
        w.flush().map_err(fail)?;
    }
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

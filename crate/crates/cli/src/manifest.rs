//! Reproducibility metadata: every subcommand writes its outputs atomically and
//! drops a manifest next to them recording the seed, a fingerprint of the
//! config, and fingerprints of all inputs and outputs.

use serde::Serialize;
use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

/// FNV-1a 64-bit content fingerprint, hex encoded. Not cryptographic; it only
/// needs to distinguish artifact revisions.
pub fn fingerprint(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

pub fn fingerprint_file(path: &Path) -> io::Result<String> {
    Ok(fingerprint(&fs::read(path)?))
}

/// Writes via a temp file in the same directory plus rename, so a crash never
/// leaves a half-written artifact behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "artifact".to_string());
    let tmp: PathBuf = dir.join(format!(".tmp.{}.{}", std::process::id(), file_name));
    fs::write(&tmp, bytes)?;
    match fs::rename(&tmp, path) {
        Ok(()) => Ok(()),
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

/// Versions of the artifact formats this binary reads and writes.
#[derive(Debug, Clone, Serialize)]
pub struct ArtifactVersions {
    pub dataset_csv: u32,
    pub pool_jsonl: u32,
    pub conversion_model: u32,
    pub policy: u32,
    pub trace_csv: u32,
}

impl Default for ArtifactVersions {
    fn default() -> Self {
        ArtifactVersions {
            dataset_csv: 1,
            pool_jsonl: 1,
            conversion_model: 1,
            policy: 1,
            trace_csv: 1,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub tool_version: &'static str,
    pub seed: u64,
    pub config_fingerprint: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub artifact_versions: ArtifactVersions,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config_text: &str) -> Self {
        Manifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION"),
            seed,
            config_fingerprint: fingerprint(config_text.as_bytes()),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            artifact_versions: ArtifactVersions::default(),
        }
    }

    pub fn record_input(&mut self, path: &Path) -> io::Result<()> {
        self.inputs
            .insert(path.display().to_string(), fingerprint_file(path)?);
        Ok(())
    }

    pub fn record_output(&mut self, path: &Path, bytes: &[u8]) {
        self.outputs
            .insert(path.display().to_string(), fingerprint(bytes));
    }

    /// Writes `<command>.manifest.json` into `out_dir` and echoes it to stdout.
    pub fn finish(&self, out_dir: &Path) -> io::Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        let path = out_dir.join(format!("{}.manifest.json", self.command));
        write_atomic(&path, json.as_bytes())?;
        println!("{json}");
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_is_stable_and_sensitive() {
        assert_eq!(fingerprint(b"hello"), fingerprint(b"hello"));
        assert_ne!(fingerprint(b"hello"), fingerprint(b"hellp"));
        assert_eq!(fingerprint(b"").len(), 16);
    }

    #[test]
    fn write_atomic_leaves_no_temp_files() {
        let dir = std::env::temp_dir().join(format!("pricelab-test-{}", std::process::id()));
        let path = dir.join("artifact.txt");
        write_atomic(&path, b"payload").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"payload");
        let leftovers: Vec<_> = fs::read_dir(&dir)
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().starts_with(".tmp."))
            .collect();
        assert!(leftovers.is_empty());
        let _ = fs::remove_dir_all(&dir);
    }
}

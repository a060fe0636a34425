//! The work directory: atomic artifact writes and the run manifest that
//! records, per stage, a fingerprint of its inputs and the hash of every
//! output.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";
const MANIFEST_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub fingerprint: String,
    pub seed: u64,
    /// The configuration the stage ran with.
    pub config: serde_json::Value,
    /// Output path (relative to the work dir) to SHA-256.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub stages: BTreeMap<String, StageRecord>,
}

impl Default for Manifest {
    fn default() -> Self {
        Manifest { version: MANIFEST_VERSION, stages: BTreeMap::new() }
    }
}

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

#[derive(Clone, Debug)]
pub struct WorkDir {
    pub root: PathBuf,
}

impl WorkDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        WorkDir { root: root.into() }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn load_manifest(&self) -> CliResult<Manifest> {
        let p = self.path(MANIFEST);
        if !p.exists() {
            return Ok(Manifest::default());
        }
        let text = std::fs::read_to_string(&p).map_err(|e| CliError::Integrity(format!("{}: {e}", p.display())))?;
        let m: Manifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Integrity(format!("{} is not a valid manifest: {e}", p.display())))?;
        if m.version != MANIFEST_VERSION {
            return Err(CliError::Integrity(format!("manifest version {} is not supported", m.version)));
        }
        Ok(m)
    }

    pub fn save_manifest(&self, m: &Manifest) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(m).expect("manifest serializes");
        text.push('\n');
        write_atomic(&self.path(MANIFEST), text.as_bytes())
            .map_err(|e| CliError::stage("manifest", anyhow::anyhow!("writing manifest: {e}")))
    }

    /// Reads an artifact and checks it against the recorded hash.
    pub fn read_verified(&self, record: &StageRecord, rel: &str) -> CliResult<Vec<u8>> {
        let expected = record
            .outputs
            .get(rel)
            .ok_or_else(|| CliError::Integrity(format!("{rel} is not recorded in the manifest")))?;
        let bytes = std::fs::read(self.path(rel)).map_err(|e| CliError::Integrity(format!("{rel}: {e}")))?;
        let actual = sha256_hex(&bytes);
        if &actual != expected {
            return Err(CliError::Integrity(format!("{rel} hash mismatch (manifest {expected}, file {actual})")));
        }
        Ok(bytes)
    }

    pub fn verify_all(&self, record: &StageRecord) -> CliResult<()> {
        for rel in record.outputs.keys() {
            self.read_verified(record, rel)?;
        }
        Ok(())
    }
}

/// Collects a running stage's outputs.
pub struct Outputs<'a> {
    dir: &'a WorkDir,
    pub hashes: BTreeMap<String, String>,
}

impl<'a> Outputs<'a> {
    pub fn new(dir: &'a WorkDir) -> Self {
        Outputs { dir, hashes: BTreeMap::new() }
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> anyhow::Result<()> {
        let path = self.dir.path(rel);
        write_atomic(&path, bytes).map_err(|e| anyhow::anyhow!("writing {}: {e}", path.display()))?;
        self.hashes.insert(rel.to_owned(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_with(&mut self, rel: &str, f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> anyhow::Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(rel, &buf)
    }
}

/// Hash over the stage name, its configuration, seed and upstream output hashes.
pub fn fingerprint(stage: &str, config: &serde_json::Value, seed: u64, upstream: &[&StageRecord]) -> String {
    let mut h = Sha256::new();
    h.update(stage.as_bytes());
    h.update([0]);
    h.update(serde_json::to_string(config).expect("config serializes").as_bytes());
    h.update(seed.to_le_bytes());
    for r in upstream {
        for (k, v) in &r.outputs {
            h.update(k.as_bytes());
            h.update([0]);
            h.update(v.as_bytes());
        }
    }
    hex::encode(h.finalize())
}

//! Run manifests: everything needed to repeat a run and check that it
//! reproduced the same bytes.

use std::path::{Path, PathBuf};

use medentropy::corpus::fnv1a;
use medentropy::seq2seq::hex;
use medentropy::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::commands::Command;
use crate::config::RunConfig;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: PathBuf,
    /// Hex FNV-1a of the file bytes.
    pub fingerprint: String,
}

impl FileRecord {
    pub fn of(path: &Path, bytes: &[u8]) -> Self {
        FileRecord {
            path: path.to_path_buf(),
            fingerprint: hex(fnv1a(bytes)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub tool_version: String,
    pub command: Command,
    pub config: RunConfig,
    pub seed: u64,
    /// Fingerprint of the corpus read (or, for `synth`, written).
    pub corpus_fingerprint: Option<String>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
}

/// `<output>.manifest.json`
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let m: Manifest = serde_json::from_str(&text)?;
        if m.manifest_version != MANIFEST_VERSION {
            return Err(Error::Invalid(format!(
                "unsupported manifest_version {}",
                m.manifest_version
            )));
        }
        Ok(m)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }
}

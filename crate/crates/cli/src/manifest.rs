use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tod_core::Result;

use crate::config::RunConfig;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

impl InputFile {
    pub fn read(path: &Path) -> Result<Self> {
        Ok(InputFile {
            path: path.display().to_string(),
            sha256: sha256_hex(&fs::read(path)?),
        })
    }
}

/// What a command was asked to do. Its hash identifies the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Command-specific selectors (date, plan file, ...), in a fixed order.
    pub arguments: Vec<(String, String)>,
    pub inputs: Vec<InputFile>,
    pub seed: u64,
    pub config: RunConfig,
    pub out_dir: String,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig, out_dir: &Path) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            arguments: Vec::new(),
            inputs: Vec::new(),
            seed: config.synth.seed,
            config: config.clone(),
            out_dir: out_dir.display().to_string(),
        }
    }

    /// SHA-256 of the compact JSON encoding. Struct fields serialize in
    /// declaration order, so the encoding is canonical.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("manifest serializes"))
    }
}

/// A JSON artifact tagged with the manifest that produced it.
#[derive(Serialize)]
pub struct Stamped<'a, T: Serialize> {
    pub manifest: &'a str,
    #[serde(flatten)]
    pub body: &'a T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Serialize)]
struct ManifestRecord<'a> {
    manifest_sha256: &'a str,
    manifest: &'a RunManifest,
    artifacts: &'a [Artifact],
}

/// Collects the files a command writes and records them next to the
/// manifest.
pub struct ArtifactWriter {
    out_dir: PathBuf,
    manifest: RunManifest,
    hash: String,
    artifacts: Vec<Artifact>,
}

impl ArtifactWriter {
    pub fn new(manifest: RunManifest) -> Result<Self> {
        let out_dir = PathBuf::from(&manifest.out_dir);
        fs::create_dir_all(&out_dir)?;
        let hash = manifest.hash();
        Ok(ArtifactWriter {
            out_dir,
            manifest,
            hash,
            artifacts: Vec::new(),
        })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.out_dir.join(name);
        fs::write(&path, bytes)?;
        self.artifacts.push(Artifact {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, body: &T) -> Result<PathBuf> {
        let mut bytes = serde_json::to_vec_pretty(&Stamped {
            manifest: &self.hash,
            body,
        })?;
        bytes.push(b'\n');
        self.write_bytes(name, &bytes)
    }

    /// Writes `<command>.manifest.json` and returns the artifact list.
    pub fn finish(self) -> Result<Vec<Artifact>> {
        let record = ManifestRecord {
            manifest_sha256: &self.hash,
            manifest: &self.manifest,
            artifacts: &self.artifacts,
        };
        let mut bytes = serde_json::to_vec_pretty(&record)?;
        bytes.push(b'\n');
        fs::write(
            self.out_dir
                .join(format!("{}.manifest.json", self.manifest.command)),
            bytes,
        )?;
        Ok(self.artifacts)
    }
}
